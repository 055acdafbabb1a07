//! Light-shift calibration: single-ion spectra of both ions with one ion
//! light-shifted, the resulting mean and difference frequencies against beam
//! power, and the cross-check against the correlated resonance.

use log::warn;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::{fit_lineshape, FitResult, FixedParams, LineshapeParams};
use crate::ms::pi_time;
use crate::scan::{run_scan, AxisParam, AxisSpec, Ion, Model, ScanConfig};
use crate::units::{self, hz, to_hz};

/// Ratio `|δ_ls|/Ω_ls` below which the shift formula is flagged.
pub const VALIDITY_RATIO: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LightShiftParams {
    /// Addressing-beam Rabi frequency at unit power.
    #[serde(with = "units::freq")]
    pub omega_ls: f64,
    #[serde(with = "units::freq")]
    pub delta_ls: f64,
    /// `Ω_ls² = power_scale · power`, in (rad/s)² per power unit. Defaults to `omega_ls²`.
    #[serde(default)]
    pub power_scale: Option<f64>,
    /// Multiplies `Ω_ls²/δ_ls`; 1 by default, 1/4 for the two-level AC Stark shift.
    #[serde(default = "one")]
    pub prefactor: f64,
}

fn one() -> f64 {
    1.0
}

impl LightShiftParams {
    pub fn new(omega_ls: f64, delta_ls: f64) -> Self {
        Self {
            omega_ls,
            delta_ls,
            power_scale: None,
            prefactor: 1.0,
        }
    }

    fn power_scale(&self) -> f64 {
        self.power_scale.unwrap_or(self.omega_ls * self.omega_ls)
    }

    /// Shift at a beam power, in rad/s.
    pub fn at_power(&self, power: f64) -> f64 {
        self.prefactor * self.power_scale() * power / self.delta_ls
    }
}

/// `prefactor · Ω_ls² / δ_ls` (rad/s).
pub fn light_shift(p: &LightShiftParams) -> Result<f64> {
    if p.delta_ls == 0.0 || !p.delta_ls.is_finite() {
        return Err(Error::InvalidParameter(
            "light-shift detuning must be finite and non-zero".into(),
        ));
    }
    if p.omega_ls > 0.0 && p.delta_ls.abs() < VALIDITY_RATIO * p.omega_ls {
        warn!(
            "light-shift beam detuning is only {:.1}x its Rabi frequency",
            p.delta_ls.abs() / p.omega_ls
        );
    }
    Ok(p.prefactor * p.omega_ls * p.omega_ls / p.delta_ls)
}

/// Mean and difference of the two ion frequencies, rad/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IonFrequencies {
    pub f1: f64,
    pub f2: f64,
    pub f_mean: f64,
    pub f_diff: f64,
    pub err_mean: f64,
    pub err_diff: f64,
}

fn centre(fit: &FitResult) -> Result<(f64, f64)> {
    if !fit.converged {
        return Err(Error::NonConvergence(
            "single-ion lineshape fit did not converge".into(),
        ));
    }
    Ok((fit.params.delta0, fit.std_errors.map_or(0.0, |e| e.delta0)))
}

/// Fits each single-ion spectrum with the narrowing factor fixed to 1 and
/// combines the centres into `((f₁+f₂)/2, f₁−f₂)`.
pub fn extract_frequencies(
    spec1: &crate::scan::SpectrumDataset,
    spec2: &crate::scan::SpectrumDataset,
    tau: f64,
) -> Result<IonFrequencies> {
    let fixed = FixedParams {
        alpha: true,
        ..FixedParams::default()
    };
    let fit = |ds: &crate::scan::SpectrumDataset| -> Result<(f64, f64)> {
        let data = crate::estimation::FitData::from_dataset(ds, "u")?;
        let init = data.initial_guess(tau, 1.0);
        centre(&fit_lineshape(
            ds,
            "u",
            &LineshapeParams { alpha: 1.0, ..init },
            fixed,
        )?)
    };
    let (f1, e1) = fit(spec1)?;
    let (f2, e2) = fit(spec2)?;
    let e = (e1 * e1 + e2 * e2).sqrt();
    Ok(IonFrequencies {
        f1,
        f2,
        f_mean: 0.5 * (f1 + f2),
        f_diff: f1 - f2,
        err_mean: 0.5 * e,
        err_diff: e,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationConfig {
    /// Single-ion coupling of the spectroscopy pulse.
    #[serde(with = "units::freq")]
    pub omega: f64,
    pub light_shift: LightShiftParams,
    /// Beam powers, in the units of `power_scale`.
    pub powers: Vec<f64>,
    #[serde(default = "both_ions")]
    pub ions: Vec<Ion>,
    /// Zero-power frequency difference `ω₀¹ − ω₀²`.
    #[serde(with = "units::freq", default)]
    pub baseline_diff: f64,
    /// Half-span of the single-ion and correlated scans.
    #[serde(with = "units::freq", default = "default_span")]
    pub span: f64,
    #[serde(default = "default_points")]
    pub points: usize,
    #[serde(default)]
    pub shots: u64,
    #[serde(default)]
    pub seed: u64,
    /// Also measure the correlated resonance at every power.
    #[serde(default = "yes")]
    pub check_mean_shift: bool,
}

fn both_ions() -> Vec<Ion> {
    vec![Ion::First, Ion::Second]
}

fn default_span() -> f64 {
    hz(1200.0)
}

fn default_points() -> usize {
    81
}

fn yes() -> bool {
    true
}

impl CalibrationConfig {
    pub fn new(omega: f64, light_shift: LightShiftParams, powers: Vec<f64>) -> Self {
        Self {
            omega,
            light_shift,
            powers,
            ions: both_ions(),
            baseline_diff: 0.0,
            span: default_span(),
            points: default_points(),
            shots: 0,
            seed: 0,
            check_mean_shift: true,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.omega > 0.0) {
            return Err(Error::Config("omega must be > 0".into()));
        }
        if self.powers.len() < 2 || self.powers.iter().any(|p| !(*p >= 0.0)) {
            return Err(Error::Config(
                "need at least two non-negative powers".into(),
            ));
        }
        if self.ions.is_empty() {
            return Err(Error::Config("no ion selected".into()));
        }
        if self.points < 5 || !(self.span > 0.0) {
            return Err(Error::Config(
                "scans need >= 5 points and a positive span".into(),
            ));
        }
        light_shift(&self.light_shift).map(|_| ())
    }

    fn signed_shift(&self, ion: Ion, power: f64) -> f64 {
        let v = self.light_shift.at_power(power);
        match ion {
            Ion::First => v,
            Ion::Second => -v,
        }
    }

    fn seed_for(&self, branch: usize, point: usize, role: u64) -> u64 {
        self.seed ^ ((branch as u64) << 48) ^ ((point as u64) << 8) ^ role
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_err: f64,
    pub intercept_err: f64,
    pub r_squared: f64,
    pub residuals: Vec<f64>,
}

/// Weighted straight-line fit; unweighted when any error is zero.
pub fn linear_fit(x: &[f64], y: &[f64], err: &[f64]) -> Result<LinearFit> {
    if x.len() < 2 || x.len() != y.len() || y.len() != err.len() {
        return Err(Error::InvalidParameter(
            "linear fit needs matching arrays of >= 2 points".into(),
        ));
    }
    let weighted = err.iter().all(|&e| e > 0.0);
    let w: Vec<f64> = err
        .iter()
        .map(|&e| if weighted { 1.0 / (e * e) } else { 1.0 })
        .collect();
    let (sw, sx, sy) = (w.iter().sum::<f64>(), dot(&w, x), dot(&w, y));
    let sxx: f64 = w.iter().zip(x).map(|(w, x)| w * x * x).sum();
    let sxy: f64 = w.iter().zip(x).zip(y).map(|((w, x), y)| w * x * y).sum();
    let det = sw * sxx - sx * sx;
    if det.abs() <= f64::EPSILON * sw * sxx {
        return Err(Error::DegenerateData(
            "linear fit needs at least two distinct x values".into(),
        ));
    }
    let slope = (sw * sxy - sx * sy) / det;
    let intercept = (sxx * sy - sx * sxy) / det;
    let residuals: Vec<f64> = x
        .iter()
        .zip(y)
        .map(|(x, y)| y - intercept - slope * x)
        .collect();
    let ybar = sy / sw;
    let ss_res: f64 = w.iter().zip(&residuals).map(|(w, r)| w * r * r).sum();
    let ss_tot: f64 = w.iter().zip(y).map(|(w, y)| w * (y - ybar).powi(2)).sum();
    let r_squared = if ss_tot > 0.0 {
        1.0 - ss_res / ss_tot
    } else {
        1.0
    };
    let scale = if weighted {
        1.0
    } else {
        ss_res / (x.len().saturating_sub(2).max(1)) as f64
    };
    Ok(LinearFit {
        slope,
        intercept,
        slope_err: (scale * sw / det).sqrt(),
        intercept_err: (scale * sxx / det).sqrt(),
        r_squared,
        residuals,
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(a, b)| a * b).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationPoint {
    pub power: f64,
    pub injected_shift_hz: f64,
    pub f1_hz: f64,
    pub f2_hz: f64,
    pub f_mean_hz: f64,
    pub f_diff_hz: f64,
    pub err_mean_hz: f64,
    pub err_diff_hz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanShiftCheck {
    pub power: f64,
    /// Correlated-resonance displacement from zero power.
    pub correlated_shift_hz: f64,
    pub correlated_err_hz: f64,
    /// Calibrated `f_mean − f_mean(0)`.
    pub calibrated_shift_hz: f64,
    pub calibrated_err_hz: f64,
    /// Difference in units of the combined error.
    pub z: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationBranch {
    pub shifted_ion: Ion,
    pub points: Vec<CalibrationPoint>,
    /// `f_diff` (Hz) against power.
    pub diff_fit: LinearFit,
    /// `f_mean` (Hz) against power.
    pub mean_fit: LinearFit,
    pub mean_shift_check: Vec<MeanShiftCheck>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationCurve {
    pub branches: Vec<CalibrationBranch>,
    /// Zero-power frequency difference from a fit with a shared intercept.
    pub baseline_diff_hz: f64,
    pub baseline_err_hz: f64,
    /// Ratio of the difference slopes of the two branches, when both exist.
    pub slope_ratio: Option<f64>,
}

impl CalibrationCurve {
    pub fn worst_mean_shift_z(&self) -> f64 {
        self.branches
            .iter()
            .flat_map(|b| b.mean_shift_check.iter().map(|c| c.z.abs()))
            .fold(0.0, f64::max)
    }
}

fn single_ion_scan(
    cfg: &CalibrationConfig,
    ion: Ion,
    shift: f64,
    seed: u64,
) -> Result<crate::scan::SpectrumDataset> {
    let mut sc = ScanConfig::new(
        Model::SingleSpin {
            omega: cfg.omega,
            ion,
        },
        "d",
        AxisSpec::new(AxisParam::Delta1, -cfg.span, cfg.span, cfg.points),
    )
    .with_light_shift(shift);
    sc.baseline_diff = cfg.baseline_diff;
    sc.shots = cfg.shots;
    sc.seed = seed;
    run_scan(&sc)
}

fn correlated_centre(cfg: &CalibrationConfig, shift: f64, seed: u64) -> Result<(f64, f64)> {
    let mut sc = ScanConfig::new(
        Model::EffectiveIsing { omega: cfg.omega },
        "dd",
        AxisSpec::new(
            AxisParam::Delta1,
            -0.5 * cfg.span,
            0.5 * cfg.span,
            cfg.points,
        ),
    )
    .with_light_shift(shift);
    sc.baseline_diff = cfg.baseline_diff;
    sc.shots = cfg.shots;
    sc.seed = seed;
    let ds = run_scan(&sc)?;
    let data = crate::estimation::FitData::from_dataset(&ds, "uu")?;
    let init = LineshapeParams {
        alpha: 2.0,
        ..data.initial_guess(pi_time(cfg.omega), 2.0)
    };
    centre(&fit_lineshape(&ds, "uu", &init, FixedParams::default())?)
}

/// Runs the calibration for every configured ion and power.
pub fn build_calibration(cfg: &CalibrationConfig) -> Result<CalibrationCurve> {
    cfg.validate()?;
    let tau = pi_time(cfg.omega);
    let branches: Vec<CalibrationBranch> = cfg
        .ions
        .iter()
        .enumerate()
        .map(|(b, &ion)| build_branch(cfg, b, ion, tau))
        .collect::<Result<_>>()?;

    // shared intercept, one slope per branch
    let nb = branches.len();
    let rows: Vec<(usize, f64, f64, f64)> = branches
        .iter()
        .enumerate()
        .flat_map(|(b, br)| {
            br.points
                .iter()
                .map(move |p| (b, p.power, p.f_diff_hz, p.err_diff_hz))
        })
        .collect();
    let weighted = rows.iter().all(|r| r.3 > 0.0);
    let mut a = DMatrix::zeros(rows.len(), nb + 1);
    let mut y = DVector::zeros(rows.len());
    for (i, &(b, x, v, e)) in rows.iter().enumerate() {
        let w = if weighted { 1.0 / e } else { 1.0 };
        a[(i, 0)] = w;
        a[(i, b + 1)] = w * x;
        y[i] = w * v;
    }
    let ata = a.transpose() * &a;
    let chol = ata
        .clone()
        .cholesky()
        .ok_or_else(|| Error::DegenerateData("calibration design matrix is singular".into()))?;
    let beta = chol.solve(&(a.transpose() * &y));
    let cov = chol.inverse();
    let scale = if weighted {
        1.0
    } else {
        let r = &y - &a * &beta;
        r.norm_squared() / (rows.len().saturating_sub(nb + 1).max(1)) as f64
    };
    let slope_ratio = (nb == 2).then(|| branches[0].diff_fit.slope / branches[1].diff_fit.slope);
    Ok(CalibrationCurve {
        baseline_diff_hz: beta[0],
        baseline_err_hz: (scale * cov[(0, 0)]).sqrt(),
        slope_ratio,
        branches,
    })
}

fn build_branch(
    cfg: &CalibrationConfig,
    b: usize,
    ion: Ion,
    tau: f64,
) -> Result<CalibrationBranch> {
    let measured: Vec<(CalibrationPoint, Option<(f64, f64)>)> = cfg
        .powers
        .par_iter()
        .enumerate()
        .map(|(i, &power)| {
            let shift = cfg.signed_shift(ion, power);
            let s1 = single_ion_scan(cfg, Ion::First, shift, cfg.seed_for(b, i, 1))?;
            let s2 = single_ion_scan(cfg, Ion::Second, shift, cfg.seed_for(b, i, 2))?;
            let f = extract_frequencies(&s1, &s2, tau)?;
            let corr = if cfg.check_mean_shift {
                Some(correlated_centre(cfg, shift, cfg.seed_for(b, i, 3))?)
            } else {
                None
            };
            let point = CalibrationPoint {
                power,
                injected_shift_hz: to_hz(cfg.light_shift.at_power(power)),
                f1_hz: to_hz(f.f1),
                f2_hz: to_hz(f.f2),
                f_mean_hz: to_hz(f.f_mean),
                f_diff_hz: to_hz(f.f_diff),
                err_mean_hz: to_hz(f.err_mean),
                err_diff_hz: to_hz(f.err_diff),
            };
            Ok((point, corr))
        })
        .collect::<Result<_>>()?;
    let points: Vec<CalibrationPoint> = measured.iter().map(|m| m.0.clone()).collect();
    let x: Vec<f64> = points.iter().map(|p| p.power).collect();
    let col = |f: fn(&CalibrationPoint) -> f64| points.iter().map(f).collect::<Vec<f64>>();
    let diff_fit = linear_fit(&x, &col(|p| p.f_diff_hz), &col(|p| p.err_diff_hz))?;
    let mean_fit = linear_fit(&x, &col(|p| p.f_mean_hz), &col(|p| p.err_mean_hz))?;

    let mut mean_shift_check = Vec::new();
    if cfg.check_mean_shift {
        let k0 = x
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .map(|(k, _)| k)
            .expect("at least two powers");
        let (c0, ce0) = measured[k0].1.expect("checked");
        let (m0, me0) = (points[k0].f_mean_hz, points[k0].err_mean_hz);
        for (k, (p, c)) in measured.iter().enumerate() {
            if k == k0 {
                continue;
            }
            let (c, ce) = c.expect("checked");
            let corr = to_hz(c - c0);
            let corr_err = to_hz((ce * ce + ce0 * ce0).sqrt());
            let cal = p.f_mean_hz - m0;
            let cal_err = (p.err_mean_hz.powi(2) + me0 * me0).sqrt();
            let combined = (corr_err * corr_err + cal_err * cal_err).sqrt();
            let diff = corr - cal;
            let z = if combined > 0.0 {
                diff / combined
            } else if diff.abs() < 1e-9 {
                0.0
            } else {
                f64::INFINITY
            };
            mean_shift_check.push(MeanShiftCheck {
                power: p.power,
                correlated_shift_hz: corr,
                correlated_err_hz: corr_err,
                calibrated_shift_hz: cal,
                calibrated_err_hz: cal_err,
                z,
            });
        }
    }
    Ok(CalibrationBranch {
        shifted_ion: ion,
        points,
        diff_fit,
        mean_fit,
        mean_shift_check,
    })
}
