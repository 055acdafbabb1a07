//! Run configuration files.
//!
//! A TOML file holds one section per command. Sections that can run several
//! times are arrays (`[[scan]]`); `fisher` and `calibrate` are single tables.
//! Every frequency is a string with a unit (`"25.5 kHz"`), every duration
//! too (`"2 ms"`); unknown keys are rejected.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::calibration::CalibrationConfig;
use crate::error::{Error, Result};
use crate::estimation::{FixedParams, LineshapeParams, ProtocolConfig};
use crate::scan::{check_seed, AxisParam, ScanConfig, UncorrelatedDifferenceConfig};
use crate::units;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NutateConfig {
    /// A scan whose only axis is `pulse_time`.
    pub scan: ScanConfig,
    /// Also locate the π-time of a full-drive model.
    #[serde(default = "yes")]
    pub locate_pi_time: bool,
    /// An externally quoted π-time to compare with.
    #[serde(with = "units::duration_opt", default)]
    pub reference_pi_time: Option<f64>,
}

fn yes() -> bool {
    true
}

fn one() -> f64 {
    1.0
}

/// A lineshape fit. The data come from exactly one of `scan`, `difference`
/// (generated first) or `dataset` (read from disk).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    #[serde(default)]
    pub name: Option<String>,
    /// Outcome label to fit, e.g. `"uu"`.
    pub target: String,
    #[serde(default)]
    pub scan: Option<ScanConfig>,
    #[serde(default)]
    pub difference: Option<UncorrelatedDifferenceConfig>,
    #[serde(default)]
    pub dataset: Option<PathBuf>,
    /// Pulse time; defaults to the one used to generate the data.
    #[serde(with = "units::duration_opt", default)]
    pub pulse_time: Option<f64>,
    /// Starting point; defaults to a guess from the data.
    #[serde(default)]
    pub init: Option<LineshapeParams>,
    #[serde(default)]
    pub fixed: FixedParams,
    /// Narrowing factor of the guessed starting point.
    #[serde(default = "one")]
    pub alpha_start: f64,
}

impl FitConfig {
    fn validate(&self) -> Result<()> {
        let sources = [
            self.scan.is_some(),
            self.difference.is_some(),
            self.dataset.is_some(),
        ];
        if sources.iter().filter(|&&s| s).count() != 1 {
            return Err(Error::Config(
                "a fit needs exactly one of scan, difference or dataset".into(),
            ));
        }
        if let Some(s) = &self.scan {
            s.validate()?;
            if s.axis2.is_some() || s.axis1.param == AxisParam::PulseTime {
                return Err(Error::Config("fits need a one-axis frequency scan".into()));
            }
        }
        if !(self.alpha_start > 0.0) {
            return Err(Error::Config("alpha_start must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Overrides every section's seed.
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub threads: Option<usize>,
    #[serde(default)]
    pub nutate: Vec<NutateConfig>,
    #[serde(default)]
    pub scan: Vec<ScanConfig>,
    /// Averaged single-ion spectra of the frequency difference.
    #[serde(default)]
    pub difference: Vec<UncorrelatedDifferenceConfig>,
    #[serde(default)]
    pub scan2d: Vec<ScanConfig>,
    #[serde(default)]
    pub fit: Vec<FitConfig>,
    #[serde(default)]
    pub fisher: Option<ProtocolConfig>,
    #[serde(default)]
    pub calibrate: Option<CalibrationConfig>,
}

/// Command-line overrides.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub shots: Option<u64>,
    pub threads: Option<usize>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(s) = self.seed {
            check_seed(s)?;
        }
        if self.threads == Some(0) {
            return Err(Error::Config("threads must be >= 1".into()));
        }
        for n in &self.nutate {
            n.scan.validate()?;
            if n.scan.axis2.is_some() || n.scan.axis1.param != AxisParam::PulseTime {
                return Err(Error::Config(
                    "nutate needs a single pulse_time axis".into(),
                ));
            }
        }
        for s in &self.scan {
            s.validate()?;
            if s.axis2.is_some() {
                return Err(Error::Config(
                    "[[scan]] takes one axis; use [[scan2d]]".into(),
                ));
            }
        }
        for s in &self.scan2d {
            s.validate()?;
            if s.axis2.is_none() {
                return Err(Error::Config("[[scan2d]] needs axis2".into()));
            }
        }
        for f in &self.fit {
            f.validate()?;
        }
        for d in &self.difference {
            check_seed(d.seed)?;
        }
        if let Some(f) = &self.fisher {
            check_seed(f.seed)?;
        }
        if let Some(c) = &self.calibrate {
            check_seed(c.seed)?;
        }
        Ok(())
    }

    /// Applies command-line overrides to every section.
    pub fn apply(&mut self, o: Overrides) -> Result<()> {
        let seed = o.seed.or(self.seed);
        if o.threads.is_some() {
            self.threads = o.threads;
        }
        self.seed = seed;
        let scans = self
            .nutate
            .iter_mut()
            .map(|n| &mut n.scan)
            .chain(self.scan.iter_mut())
            .chain(self.scan2d.iter_mut())
            .chain(self.fit.iter_mut().filter_map(|f| f.scan.as_mut()));
        for s in scans {
            if let Some(v) = seed {
                s.seed = v;
            }
            if let Some(v) = o.shots {
                s.shots = v;
            }
        }
        let diffs = self
            .difference
            .iter_mut()
            .chain(self.fit.iter_mut().filter_map(|f| f.difference.as_mut()));
        for d in diffs {
            if let Some(v) = seed {
                d.seed = v;
            }
            if let Some(v) = o.shots {
                d.shots = v;
            }
        }
        if let Some(f) = &mut self.fisher {
            if let Some(v) = seed {
                f.seed = v;
            }
            if let Some(v) = o.shots {
                f.shots_per_point = v;
            }
        }
        if let Some(c) = &mut self.calibrate {
            if let Some(v) = seed {
                c.seed = v;
            }
            if let Some(v) = o.shots {
                c.shots = v;
            }
        }
        self.validate()
    }

    /// The normalized configuration with every default written out.
    pub fn echo(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("cannot echo configuration: {e}")))
    }
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = fs::read_to_string(path)?;
    RunConfig::parse(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}
