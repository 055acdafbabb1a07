//! Spectrum generation: one- and two-axis parameter sweeps over the spin
//! models, with quasi-static parameter noise and projection-noise sampling.
//!
//! Scan coordinates are lab quantities. `delta1` is the laser detuning from
//! the mean transition frequency, `delta2` is half the frequency difference
//! `ω₀¹ − ω₀²`. A light shift `Δ` on one ion moves the mean down by `|Δ|/2`
//! and `delta2` by `±Δ/2`; a positive value shifts ion 1, a negative value
//! shifts ion 2.

use std::f64::consts::TAU;

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hamiltonian::{
    correlated_n_spin, ising_two_spin, single_spin_rabi, CouplingAxis, IsingParams, NSpinParams,
};
use crate::ms::{self, MsDriveParams, MsHamiltonian};
use crate::quantum::{basis_index, basis_label, populations, propagate_static, StateVector};
use crate::units::{self, Dimension, Quantity};

/// Which ion a single-spin pulse addresses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Ion {
    #[default]
    First,
    Second,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Model {
    /// Two-spin Ising model with coupling `omega`.
    EffectiveIsing {
        #[serde(with = "units::freq")]
        omega: f64,
    },
    /// Bichromatic drive with one motional mode. The scan overwrites the
    /// drive's `delta` and `carrier_offsets`.
    FullMs {
        drive: MsDriveParams,
        #[serde(default = "default_tol")]
        tol: f64,
    },
    /// One addressed ion driven with `Ω σy + (Δ/2) σz`.
    SingleSpin {
        #[serde(with = "units::freq")]
        omega: f64,
        #[serde(default)]
        ion: Ion,
    },
    /// `N` spins with an `N`-body coupling; every spin sees the common detuning.
    NSpin {
        #[serde(with = "units::freq")]
        omega: f64,
        n: usize,
        #[serde(default)]
        axis: CouplingAxis,
    },
}

fn default_tol() -> f64 {
    ms::DEFAULT_TOL
}

impl Model {
    pub fn n_spins(&self) -> usize {
        match self {
            Model::EffectiveIsing { .. } | Model::FullMs { .. } => 2,
            Model::SingleSpin { .. } => 1,
            Model::NSpin { n, .. } => *n,
        }
    }

    fn coupling(&self) -> f64 {
        match self {
            Model::EffectiveIsing { omega }
            | Model::SingleSpin { omega, .. }
            | Model::NSpin { omega, .. } => *omega,
            Model::FullMs { drive, .. } => ms::effective_params(drive).omega,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AxisParam {
    Delta1,
    Delta2,
    LightShift,
    LaserOffset,
    PulseTime,
}

impl AxisParam {
    pub fn column(self) -> &'static str {
        match self {
            AxisParam::Delta1 => "delta1_hz",
            AxisParam::Delta2 => "delta2_hz",
            AxisParam::LightShift => "light_shift_hz",
            AxisParam::LaserOffset => "laser_offset_hz",
            AxisParam::PulseTime => "pulse_time_s",
        }
    }

    pub fn from_column(name: &str) -> Option<Self> {
        [
            Self::Delta1,
            Self::Delta2,
            Self::LightShift,
            Self::LaserOffset,
            Self::PulseTime,
        ]
        .into_iter()
        .find(|a| a.column() == name)
    }

    pub fn dimension(self) -> Dimension {
        match self {
            AxisParam::PulseTime => Dimension::Time,
            _ => Dimension::Frequency,
        }
    }

    /// Internal value to the dataset column unit (Hz or s).
    pub fn to_column_unit(self, v: f64) -> f64 {
        match self.dimension() {
            Dimension::Frequency => v / TAU,
            Dimension::Time => v,
        }
    }

    pub fn from_column_unit(self, v: f64) -> f64 {
        match self.dimension() {
            Dimension::Frequency => v * TAU,
            Dimension::Time => v,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisSpec {
    pub param: AxisParam,
    pub start: Quantity,
    pub stop: Quantity,
    pub points: usize,
}

impl AxisSpec {
    pub fn new(param: AxisParam, start: f64, stop: f64, points: usize) -> Self {
        let q = |v| Quantity {
            value: v,
            dimension: param.dimension(),
        };
        Self {
            param,
            start: q(start),
            stop: q(stop),
            points,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.points < 2 {
            return Err(Error::Config(format!(
                "axis {:?} needs at least 2 points",
                self.param
            )));
        }
        self.start.expect(self.param.dimension())?;
        self.stop.expect(self.param.dimension())?;
        Ok(())
    }

    /// Grid values in internal units.
    pub fn values(&self) -> Vec<f64> {
        let (a, b) = (self.start.value, self.stop.value);
        let n = self.points;
        (0..n)
            .map(|k| a + (b - a) * k as f64 / (n - 1) as f64)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseModel {
    /// Std-dev of the common detuning added to `delta1` (rad/s).
    #[serde(with = "units::freq", default)]
    pub sigma_common: f64,
    /// Std-dev of the differential detuning added to `delta2` (rad/s).
    #[serde(with = "units::freq", default)]
    pub sigma_diff: f64,
    /// Relative std-dev of the drive amplitude (the model's coupling, or Ω̃).
    #[serde(default)]
    pub sigma_rabi_rel: f64,
    /// Draws averaged per point when exact probabilities are requested.
    #[serde(default = "default_draws")]
    pub draws: usize,
}

fn default_draws() -> usize {
    200
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self {
            sigma_common: 0.0,
            sigma_diff: 0.0,
            sigma_rabi_rel: 0.0,
            draws: default_draws(),
        }
    }
}

impl NoiseModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_common >= 0.0 && self.sigma_diff >= 0.0 && self.sigma_rabi_rel >= 0.0) {
            return Err(Error::Config(
                "noise standard deviations must be >= 0".into(),
            ));
        }
        if self.draws == 0 {
            return Err(Error::Config("noise draws must be >= 1".into()));
        }
        Ok(())
    }

    pub fn is_silent(&self) -> bool {
        self.sigma_common == 0.0 && self.sigma_diff == 0.0 && self.sigma_rabi_rel == 0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanConfig {
    pub model: Model,
    pub initial_state: String,
    /// Pulse duration; `None` selects the model's π-time.
    #[serde(with = "units::duration_opt", default)]
    pub pulse_time: Option<f64>,
    /// Base common detuning (rad/s) to which axis values are added.
    #[serde(with = "units::freq", default)]
    pub delta1: f64,
    /// Base differential detuning (rad/s).
    #[serde(with = "units::freq", default)]
    pub delta2: f64,
    /// Zero-shift frequency difference `ω₀¹ − ω₀²` (rad/s); adds half to `delta2`.
    #[serde(with = "units::freq", default)]
    pub baseline_diff: f64,
    pub axis1: AxisSpec,
    #[serde(default)]
    pub axis2: Option<AxisSpec>,
    #[serde(default)]
    pub shots: u64,
    #[serde(default)]
    pub noise: Option<NoiseModel>,
    #[serde(default)]
    pub seed: u64,
}

impl ScanConfig {
    pub fn new(model: Model, initial_state: &str, axis1: AxisSpec) -> Self {
        Self {
            model,
            initial_state: initial_state.to_owned(),
            pulse_time: None,
            delta1: 0.0,
            delta2: 0.0,
            baseline_diff: 0.0,
            axis1,
            axis2: None,
            shots: 0,
            noise: None,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_seed(self.seed)?;
        self.axis1.validate()?;
        if let Some(a) = &self.axis2 {
            a.validate()?;
        }
        if let Some(n) = &self.noise {
            n.validate()?;
        }
        let n = self.model.n_spins();
        if self.initial_state.len() != n {
            return Err(Error::Config(format!(
                "initial_state {:?} does not match a {n}-spin model",
                self.initial_state
            )));
        }
        basis_index(&self.initial_state)?;
        match &self.model {
            Model::FullMs { drive, tol } => {
                drive.validate()?;
                if !(*tol > 0.0) {
                    return Err(Error::Config("integration tolerance must be > 0".into()));
                }
            }
            Model::NSpin { n, .. } if *n < 2 => {
                return Err(Error::Config("n_spin model needs n >= 2".into()));
            }
            _ => {}
        }
        if !(self.model.coupling() > 0.0) {
            return Err(Error::Config("model coupling must be > 0".into()));
        }
        if let Some(t) = self.pulse_time {
            if !(t >= 0.0) {
                return Err(Error::Config("pulse_time must be >= 0".into()));
            }
        }
        Ok(())
    }

    fn axes(&self) -> Vec<&AxisSpec> {
        std::iter::once(&self.axis1)
            .chain(self.axis2.as_ref())
            .collect()
    }
}

/// Seeds are stored as TOML integers in dataset metadata.
pub fn check_seed(seed: u64) -> Result<()> {
    if seed > i64::MAX as u64 {
        return Err(Error::Config(format!("seed {seed} exceeds {}", i64::MAX)));
    }
    Ok(())
}

/// Normalized configuration as a TOML table.
pub fn config_table<T: Serialize>(cfg: &T) -> Result<toml::Table> {
    toml::Table::try_from(cfg)
        .map_err(|e| Error::Config(format!("cannot record configuration: {e}")))
}

/// Changes of `(delta1, delta2)` caused by a light shift `v` on one ion:
/// positive `v` shifts ion 1, negative `v` shifts ion 2 by `|v|`.
pub fn light_shift_detunings(v: f64) -> (f64, f64) {
    (-0.5 * v.abs(), 0.5 * v)
}

impl ScanConfig {
    /// Adds a fixed light shift to the base detunings.
    pub fn with_light_shift(mut self, v: f64) -> Self {
        let (d1, d2) = light_shift_detunings(v);
        self.delta1 += d1;
        self.delta2 += d2;
        self
    }
}

/// Flips every spin of a basis label.
pub fn flip_label(label: &str) -> String {
    label
        .chars()
        .map(|c| if c == 'u' { 'd' } else { 'u' })
        .collect()
}

/// The model's π-time for the given initial state. Effective models use
/// `π/(2Ω)`; the full drive is integrated to locate the first full flip.
pub fn default_pulse_time(model: &Model, initial_state: &str) -> Result<f64> {
    match model {
        Model::FullMs { drive, tol } => {
            let d = drive.clone().with_lab_detunings(0.0, 0.0);
            Ok(ms::locate_pi_time(&d, initial_state, &flip_label(initial_state), *tol)?.tau)
        }
        other => Ok(ms::pi_time(other.coupling())),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PointData {
    Probabilities(Vec<f64>),
    Counts { counts: Vec<u64>, shots: u64 },
}

impl PointData {
    /// Probabilities, or observed frequencies for sampled data.
    pub fn frequencies(&self) -> Vec<f64> {
        match self {
            PointData::Probabilities(p) => p.clone(),
            PointData::Counts { counts, shots } => {
                counts.iter().map(|&k| k as f64 / *shots as f64).collect()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataPoint {
    /// Coordinates in column units (Hz, or s for pulse times).
    pub coords: Vec<f64>,
    pub data: PointData,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Metadata {
    pub generator: String,
    pub code_version: String,
    pub seed: u64,
    /// Normalized configuration that produced the dataset.
    pub config: toml::Table,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumDataset {
    /// Axis column names, e.g. `delta1_hz`.
    pub axes: Vec<String>,
    /// Outcome labels in column order, `dd…d` first.
    pub outcomes: Vec<String>,
    pub points: Vec<DataPoint>,
    pub metadata: Metadata,
}

impl SpectrumDataset {
    pub fn outcome_labels(n_spins: usize) -> Vec<String> {
        (0..1usize << n_spins)
            .rev()
            .map(|k| basis_label(k, n_spins))
            .collect()
    }

    pub fn outcome_column(&self, label: &str) -> Result<usize> {
        self.outcomes
            .iter()
            .position(|o| o == label)
            .ok_or_else(|| Error::InvalidLabel(label.to_owned()))
    }

    pub fn is_sampled(&self) -> bool {
        self.points
            .first()
            .is_some_and(|p| matches!(p.data, PointData::Counts { .. }))
    }

    /// Coordinates along one axis in column units.
    pub fn axis_values(&self, axis: usize) -> Vec<f64> {
        self.points.iter().map(|p| p.coords[axis]).collect()
    }

    /// Per-point probability (or observed frequency) of one outcome.
    pub fn series(&self, label: &str) -> Result<Vec<f64>> {
        let k = self.outcome_column(label)?;
        Ok(self
            .points
            .iter()
            .map(|p| p.data.frequencies()[k])
            .collect())
    }

    /// Checks the population simplex or count totals at every point.
    pub fn validate(&self) -> Result<()> {
        for (i, p) in self.points.iter().enumerate() {
            if p.coords.len() != self.axes.len() {
                return Err(Error::Dataset(format!(
                    "point {i}: {} coordinates for {} axes",
                    p.coords.len(),
                    self.axes.len()
                )));
            }
            match &p.data {
                PointData::Probabilities(v) => {
                    if v.len() != self.outcomes.len() {
                        return Err(Error::Dataset(format!(
                            "point {i}: wrong number of probabilities"
                        )));
                    }
                    let sum: f64 = v.iter().sum();
                    if v.iter().any(|x| !(-1e-12..=1.0 + 1e-12).contains(x))
                        || (sum - 1.0).abs() > 1e-9
                    {
                        return Err(Error::Dataset(format!(
                            "point {i}: probabilities sum to {sum}"
                        )));
                    }
                }
                PointData::Counts { counts, shots } => {
                    if counts.len() != self.outcomes.len() {
                        return Err(Error::Dataset(format!("point {i}: wrong number of counts")));
                    }
                    let sum: u64 = counts.iter().sum();
                    if sum != *shots {
                        return Err(Error::Dataset(format!(
                            "point {i}: counts sum to {sum}, shots = {shots}"
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Physical parameters of one evolution.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Setting {
    delta1: f64,
    delta2: f64,
    tau: f64,
    rabi_scale: f64,
}

fn evolve(model: &Model, init: &str, s: &Setting) -> Result<Vec<f64>> {
    let psi_spins = || StateVector::spins(init);
    let out = match model {
        Model::EffectiveIsing { omega } => {
            let h = ising_two_spin(&IsingParams::from_lab(
                omega * s.rabi_scale,
                s.delta1,
                s.delta2,
            )?);
            propagate_static(&h, &psi_spins()?, s.tau)?
        }
        Model::SingleSpin { omega, ion } => {
            let detuning = match ion {
                Ion::First => s.delta1 - s.delta2,
                Ion::Second => s.delta1 + s.delta2,
            };
            let h = single_spin_rabi(omega * s.rabi_scale, 0.5 * detuning);
            propagate_static(&h, &psi_spins()?, s.tau)?
        }
        Model::NSpin { omega, n, axis } => {
            let h = correlated_n_spin(&NSpinParams::uniform(
                omega * s.rabi_scale,
                0.5 * s.delta1,
                *n,
                *axis,
            )?)?;
            propagate_static(&h, &psi_spins()?, s.tau)?
        }
        Model::FullMs { drive, tol } => {
            let mut d = drive.clone().with_lab_detunings(s.delta1, s.delta2);
            d.omega_carrier *= s.rabi_scale;
            let h = MsHamiltonian::new(&d)?;
            ms::propagate_time_dependent(&h, &d.initial_state(init)?, s.tau, *tol)?
        }
    };
    Ok(populations(&out, None))
}

/// Internal basis order (`uu…u` first) to dataset order (`dd…d` first).
fn to_dataset_order(p: Vec<f64>) -> Vec<f64> {
    p.into_iter().rev().collect()
}

/// Binomial projection-noise draw.
pub fn sample_counts<R: Rng + ?Sized>(p: f64, shots: u64, rng: &mut R) -> u64 {
    let p = p.clamp(0.0, 1.0);
    Binomial::new(shots, p)
        .expect("probability clamped to [0, 1]")
        .sample(rng)
}

/// Multinomial draw as a chain of conditional binomials.
pub fn sample_multinomial<R: Rng + ?Sized>(probs: &[f64], shots: u64, rng: &mut R) -> Vec<u64> {
    let mut left = shots;
    let mut mass = 1.0;
    let mut out = Vec::with_capacity(probs.len());
    for (i, &p) in probs.iter().enumerate() {
        if i + 1 == probs.len() {
            out.push(left);
            break;
        }
        let p = p.max(0.0);
        let k = if mass > 0.0 && left > 0 {
            sample_counts((p / mass).min(1.0), left, rng)
        } else {
            0
        };
        out.push(k);
        left -= k;
        mass -= p;
    }
    out
}

fn categorical<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (k, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return k;
        }
    }
    probs.len() - 1
}

/// RNG stream for one grid point.
pub fn point_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

struct Drawer {
    common: Normal<f64>,
    diff: Normal<f64>,
    rabi: Normal<f64>,
}

impl Drawer {
    fn new(n: &NoiseModel) -> Self {
        Self {
            common: Normal::new(0.0, n.sigma_common).expect("validated"),
            diff: Normal::new(0.0, n.sigma_diff).expect("validated"),
            rabi: Normal::new(0.0, n.sigma_rabi_rel).expect("validated"),
        }
    }

    fn perturb<R: Rng + ?Sized>(&self, s: &Setting, rng: &mut R) -> Setting {
        Setting {
            delta1: s.delta1 + self.common.sample(rng),
            delta2: s.delta2 + self.diff.sample(rng),
            tau: s.tau,
            rabi_scale: (s.rabi_scale * (1.0 + self.rabi.sample(rng))).max(0.0),
        }
    }
}

fn setting_for(cfg: &ScanConfig, tau_default: f64, coords: &[(AxisParam, f64)]) -> Setting {
    let mut s = Setting {
        delta1: cfg.delta1,
        delta2: cfg.delta2 + 0.5 * cfg.baseline_diff,
        tau: cfg.pulse_time.unwrap_or(tau_default),
        rabi_scale: 1.0,
    };
    for &(param, v) in coords {
        match param {
            AxisParam::Delta1 | AxisParam::LaserOffset => s.delta1 += v,
            AxisParam::Delta2 => s.delta2 += v,
            AxisParam::LightShift => {
                let (d1, d2) = light_shift_detunings(v);
                s.delta1 += d1;
                s.delta2 += d2;
            }
            AxisParam::PulseTime => s.tau = v,
        }
    }
    s
}

fn point_data(cfg: &ScanConfig, s: &Setting, index: usize) -> Result<PointData> {
    let init = cfg.initial_state.as_str();
    let noise = cfg.noise.as_ref().filter(|n| !n.is_silent());
    let mut rng = point_rng(cfg.seed, index);
    match (noise, cfg.shots) {
        (None, 0) => Ok(PointData::Probabilities(to_dataset_order(evolve(
            &cfg.model, init, s,
        )?))),
        (None, shots) => {
            let p = to_dataset_order(evolve(&cfg.model, init, s)?);
            Ok(PointData::Counts {
                counts: sample_multinomial(&p, shots, &mut rng),
                shots,
            })
        }
        (Some(n), 0) => {
            let drawer = Drawer::new(n);
            let mut acc = vec![0.0; 1 << cfg.model.n_spins()];
            for _ in 0..n.draws {
                let p = evolve(&cfg.model, init, &drawer.perturb(s, &mut rng))?;
                acc.iter_mut().zip(p).for_each(|(a, x)| *a += x);
            }
            let m = n.draws as f64;
            Ok(PointData::Probabilities(to_dataset_order(
                acc.into_iter().map(|a| a / m).collect(),
            )))
        }
        (Some(n), shots) => {
            let drawer = Drawer::new(n);
            let mut counts = vec![0u64; 1 << cfg.model.n_spins()];
            for _ in 0..shots {
                let p = to_dataset_order(evolve(&cfg.model, init, &drawer.perturb(s, &mut rng))?);
                counts[categorical(&p, &mut rng)] += 1;
            }
            Ok(PointData::Counts { counts, shots })
        }
    }
}

fn metadata(cfg: &ScanConfig, generator: &str) -> Result<Metadata> {
    Ok(Metadata {
        generator: generator.to_owned(),
        code_version: env!("CARGO_PKG_VERSION").to_owned(),
        seed: cfg.seed,
        config: config_table(cfg)?,
    })
}

/// Runs a one- or two-axis scan. Points are ordered with the second axis
/// varying fastest.
pub fn run_scan(cfg: &ScanConfig) -> Result<SpectrumDataset> {
    cfg.validate()?;
    let axes = cfg.axes();
    let grid: Vec<Vec<(AxisParam, f64)>> = match axes.as_slice() {
        [a] => a.values().into_iter().map(|v| vec![(a.param, v)]).collect(),
        [a, b] => {
            let bv = b.values();
            a.values()
                .into_iter()
                .flat_map(|x| bv.iter().map(move |&y| vec![(a.param, x), (b.param, y)]))
                .collect()
        }
        _ => unreachable!("one or two axes"),
    };
    let needs_default =
        cfg.pulse_time.is_none() && axes.iter().all(|a| a.param != AxisParam::PulseTime);
    let tau_default = if needs_default {
        default_pulse_time(&cfg.model, &cfg.initial_state)?
    } else {
        0.0
    };
    if matches!(cfg.model, Model::FullMs { .. })
        && cfg.noise.as_ref().is_some_and(|n| !n.is_silent())
    {
        warn!("noisy full-drive scans integrate once per draw and are slow");
    }

    let fast_nutation = axes.len() == 1
        && axes[0].param == AxisParam::PulseTime
        && matches!(cfg.model, Model::FullMs { .. })
        && cfg.noise.as_ref().is_none_or(|n| n.is_silent());
    let data: Vec<PointData> = if fast_nutation {
        full_ms_nutation(cfg, &grid)?
    } else {
        grid.par_iter()
            .enumerate()
            .map(|(i, coords)| point_data(cfg, &setting_for(cfg, tau_default, coords), i))
            .collect::<Result<_>>()?
    };

    let points = grid
        .iter()
        .zip(data)
        .map(|(coords, data)| DataPoint {
            coords: coords.iter().map(|&(p, v)| p.to_column_unit(v)).collect(),
            data,
        })
        .collect();
    Ok(SpectrumDataset {
        axes: axes.iter().map(|a| a.param.column().to_owned()).collect(),
        outcomes: SpectrumDataset::outcome_labels(cfg.model.n_spins()),
        points,
        metadata: metadata(
            cfg,
            if cfg.axis2.is_some() {
                "run_2d_scan"
            } else {
                "run_scan"
            },
        )?,
    })
}

/// A single integration sampled at every pulse time.
fn full_ms_nutation(cfg: &ScanConfig, grid: &[Vec<(AxisParam, f64)>]) -> Result<Vec<PointData>> {
    let Model::FullMs { drive, tol } = &cfg.model else {
        unreachable!()
    };
    let base = setting_for(cfg, 0.0, &[]);
    let d = drive.clone().with_lab_detunings(base.delta1, base.delta2);
    let h = MsHamiltonian::new(&d)?;
    let mut times: Vec<(usize, f64)> = grid.iter().map(|c| c[0].1).enumerate().collect();
    times.sort_by(|a, b| a.1.total_cmp(&b.1));
    let sorted: Vec<f64> = times.iter().map(|t| t.1).collect();
    let (states, stats) =
        ms::propagate_times(&h, &d.initial_state(&cfg.initial_state)?, &sorted, *tol)?;
    log::info!(
        "nutation: {} steps, norm drift {:.2e}",
        stats.steps,
        stats.norm_drift
    );
    let mut out = vec![None; grid.len()];
    for ((i, _), s) in times.iter().zip(states) {
        let p = to_dataset_order(populations(&s, None));
        out[*i] = Some(if cfg.shots == 0 {
            PointData::Probabilities(p)
        } else {
            PointData::Counts {
                counts: sample_multinomial(&p, cfg.shots, &mut point_rng(cfg.seed, *i)),
                shots: cfg.shots,
            }
        });
    }
    Ok(out
        .into_iter()
        .map(|p| p.expect("every time visited"))
        .collect())
}

pub fn run_2d_scan(cfg: &ScanConfig) -> Result<SpectrumDataset> {
    if cfg.axis2.is_none() {
        return Err(Error::Config("two-axis scan requires axis2".into()));
    }
    run_scan(cfg)
}

/// Average single-ion excitation when a global π pulse at the mean frequency
/// drives two ions whose frequency difference is `2·delta2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UncorrelatedDifferenceConfig {
    #[serde(with = "units::freq")]
    pub omega: f64,
    /// `delta2` values (rad/s).
    #[serde(with = "units::freq_vec")]
    pub shifts: Vec<f64>,
    #[serde(with = "units::duration_opt", default)]
    pub pulse_time: Option<f64>,
    #[serde(default)]
    pub shots: u64,
    #[serde(default)]
    pub seed: u64,
}

pub fn protocol_uncorrelated_difference(
    cfg: &UncorrelatedDifferenceConfig,
) -> Result<SpectrumDataset> {
    if !(cfg.omega > 0.0) {
        return Err(Error::Config("omega must be > 0".into()));
    }
    check_seed(cfg.seed)?;
    let tau = cfg.pulse_time.unwrap_or_else(|| ms::pi_time(cfg.omega));
    let points = cfg
        .shifts
        .par_iter()
        .enumerate()
        .map(|(i, &d2)| {
            let excitation = |ion| -> Result<f64> {
                let m = Model::SingleSpin {
                    omega: cfg.omega,
                    ion,
                };
                let s = Setting {
                    delta1: 0.0,
                    delta2: d2,
                    tau,
                    rabi_scale: 1.0,
                };
                Ok(evolve(&m, "d", &s)?[0])
            };
            let p1 = excitation(Ion::First)?;
            let p2 = excitation(Ion::Second)?;
            let data = if cfg.shots == 0 {
                let up = 0.5 * (p1 + p2);
                PointData::Probabilities(vec![1.0 - up, up])
            } else {
                let mut rng = point_rng(cfg.seed, i);
                let k =
                    sample_counts(p1, cfg.shots, &mut rng) + sample_counts(p2, cfg.shots, &mut rng);
                let shots = 2 * cfg.shots;
                PointData::Counts {
                    counts: vec![shots - k, k],
                    shots,
                }
            };
            Ok(DataPoint {
                coords: vec![AxisParam::Delta2.to_column_unit(d2)],
                data,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SpectrumDataset {
        axes: vec![AxisParam::Delta2.column().to_owned()],
        outcomes: SpectrumDataset::outcome_labels(1),
        points,
        metadata: Metadata {
            generator: "protocol_uncorrelated_difference".into(),
            code_version: env!("CARGO_PKG_VERSION").into(),
            seed: cfg.seed,
            config: config_table(cfg)?,
        },
    })
}

/// Resonance position along `along` for each value of the other axis of a
/// two-axis dataset: the grid maximum of `label`, refined by a parabola
/// through its neighbours. Returns `(other coordinate, position)` pairs in
/// column units.
pub fn resonance_locus(ds: &SpectrumDataset, label: &str, along: usize) -> Result<Vec<(f64, f64)>> {
    if ds.axes.len() != 2 || along > 1 {
        return Err(Error::Dataset(
            "resonance locus needs a two-axis dataset".into(),
        ));
    }
    let other = 1 - along;
    let y = ds.series(label)?;
    let mut keys: Vec<f64> = ds.axis_values(other);
    keys.sort_by(f64::total_cmp);
    keys.dedup();
    let mut out = Vec::with_capacity(keys.len());
    for key in keys {
        let mut line: Vec<(f64, f64)> = ds
            .points
            .iter()
            .zip(&y)
            .filter(|(p, _)| p.coords[other] == key)
            .map(|(p, &v)| (p.coords[along], v))
            .collect();
        line.sort_by(|a, b| a.0.total_cmp(&b.0));
        let k = line
            .iter()
            .enumerate()
            .max_by(|a, b| a.1 .1.total_cmp(&b.1 .1))
            .map(|(k, _)| k)
            .ok_or_else(|| Error::Dataset("empty scan line".into()))?;
        let pos = if k > 0 && k + 1 < line.len() {
            let (x0, y0) = line[k - 1];
            let (x1, y1) = line[k];
            let (_, y2) = line[k + 1];
            let h = x1 - x0;
            let denom = y0 - 2.0 * y1 + y2;
            if denom.abs() > 0.0 {
                x1 + 0.5 * h * (y0 - y2) / denom
            } else {
                x1
            }
        } else {
            line[k].0
        };
        out.push((key, pos));
    }
    Ok(out)
}
