//! Shot-noise Fisher information of the lineshape and the comparison of
//! correlated and uncorrelated spectroscopy protocols at equal shot budget.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::fit::{fit_points, FitData, FixedParams, Observations};
use super::lineshape::{
    lineshape, lineshape_slope, map_hamiltonian_to_lineshape, LineshapeParams, SpectrumKind,
};
use crate::error::{Error, Result};
use crate::scan::{
    point_rng, run_scan, sample_counts, AxisParam, AxisSpec, Ion, Model, ScanConfig,
};
use crate::units::{self, to_hz};

/// `(∂P/∂δ)² / (P(1−P))`; zero where `P` is exactly 0 or 1.
pub fn fisher_per_shot(p: &LineshapeParams, delta: f64) -> f64 {
    let v = lineshape(p, delta);
    let var = v * (1.0 - v);
    if var <= 0.0 {
        return 0.0;
    }
    lineshape_slope(p, delta).powi(2) / var
}

/// Fisher information of the probability that both of two independent,
/// identical spins are excited.
pub fn fisher_product(p: &LineshapeParams, delta: f64) -> f64 {
    let q = lineshape(p, delta);
    let v = q * q;
    let var = v * (1.0 - v);
    if var <= 0.0 {
        return 0.0;
    }
    (2.0 * q * lineshape_slope(p, delta)).powi(2) / var
}

/// Maximum of `f` over `δ0 + [0, reach·Ω/α]`: grid search refined by
/// golden-section. Returns `(δ, value)`.
pub fn maximize_over_detuning(
    p: &LineshapeParams,
    f: impl Fn(f64) -> f64,
    reach: f64,
) -> (f64, f64) {
    let span = reach * p.omega_line / p.alpha;
    let n = 4000;
    let h = span / n as f64;
    let (k, _) = (1..n)
        .map(|k| (k, f(p.delta0 + h * k as f64)))
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .expect("non-empty grid");
    let (mut a, mut b) = (p.delta0 + h * (k - 1) as f64, p.delta0 + h * (k + 1) as f64);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..80 {
        let c = b - g * (b - a);
        let d = a + g * (b - a);
        if f(c) > f(d) {
            b = d;
        } else {
            a = c;
        }
    }
    let x = 0.5 * (a + b);
    (x, f(x))
}

/// Full width at half maximum of the central lobe of `f`, which must peak at `center`.
fn fwhm(f: impl Fn(f64) -> f64, center: f64, scale: f64) -> f64 {
    let half = 0.5 * f(center);
    let mut hi = center;
    while f(hi) > half {
        hi += 0.01 * scale;
    }
    let mut lo = hi - 0.01 * scale;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > half {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    2.0 * (0.5 * (lo + hi) - center)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolConfig {
    /// Coupling of the two-spin and single-spin models.
    #[serde(with = "units::freq")]
    pub omega: f64,
    #[serde(default = "default_shots")]
    pub shots_per_point: u64,
    /// Scan points in units of `Ω_line/α`, so every protocol covers the same
    /// part of its own resonance.
    #[serde(default = "default_grid")]
    pub grid: Vec<f64>,
    #[serde(default = "default_replicas")]
    pub replicas: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_shots() -> u64 {
    10_000
}

fn default_grid() -> Vec<f64> {
    (0..21).map(|i| -2.0 + 0.2 * i as f64).collect()
}

fn default_replicas() -> usize {
    200
}

impl ProtocolConfig {
    pub fn new(omega: f64) -> Self {
        Self {
            omega,
            shots_per_point: default_shots(),
            grid: default_grid(),
            replicas: default_replicas(),
            seed: 0,
        }
    }
}

/// Frequency uncertainty for one shot (multiply by `1/√shots`), in Hz.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProtocolUncertainties {
    /// One ion.
    pub single_ion: f64,
    /// Two uncorrelated ions, both read out and analysed jointly.
    pub uncorrelated_pair: f64,
    /// Two uncorrelated ions, conditioned on both being excited.
    pub product: f64,
    /// Correlated rotation of the pair.
    pub correlated: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloSummary {
    pub shots_per_point: u64,
    pub replicas: usize,
    pub converged_fraction: f64,
    /// Mean fitted standard error of the centre, Hz.
    pub mean_std_error: ProtocolUncertainties,
    /// Spread of the fitted centres across replicas, Hz.
    pub empirical_std: ProtocolUncertainties,
    pub ratio_correlated_to_pair: f64,
    pub ratio_correlated_to_single: f64,
    pub empirical_ratio_correlated_to_pair: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolReport {
    /// Best single-point uncertainty per shot, Hz.
    pub fisher_per_shot: ProtocolUncertainties,
    pub optimal_detuning_hz: ProtocolUncertainties,
    pub ratio_correlated_to_pair: f64,
    pub ratio_correlated_to_single: f64,
    pub ratio_pair_to_single: f64,
    pub ratio_product_to_single: f64,
    /// Central-lobe widths, Hz.
    pub width_single_hz: f64,
    pub width_product_hz: f64,
    pub width_correlated_hz: f64,
    pub monte_carlo: Option<MonteCarloSummary>,
}

/// Optimal-point Fisher comparison of the four protocols.
pub fn fisher_comparison(omega: f64) -> Result<ProtocolReport> {
    if !(omega > 0.0) {
        return Err(Error::InvalidParameter("omega must be > 0".into()));
    }
    let (w1, a1) = map_hamiltonian_to_lineshape(omega, SpectrumKind::Single);
    let (w2, a2) = map_hamiltonian_to_lineshape(omega, SpectrumKind::Even);
    let single = LineshapeParams::pi_pulse(w1, a1);
    let corr = LineshapeParams::pi_pulse(w2, a2);
    let (d1, f1) = maximize_over_detuning(&single, |d| fisher_per_shot(&single, d), 3.0);
    let (dp, fp) = maximize_over_detuning(&single, |d| fisher_product(&single, d), 3.0);
    let (d2, f2) = maximize_over_detuning(&corr, |d| fisher_per_shot(&corr, d), 3.0);
    let sigma = |f: f64| to_hz(1.0 / f.sqrt());
    let u = ProtocolUncertainties {
        single_ion: sigma(f1),
        uncorrelated_pair: sigma(2.0 * f1),
        product: sigma(fp),
        correlated: sigma(f2),
    };
    let scale = w1 / a1;
    let width_single = fwhm(|d| lineshape(&single, d), 0.0, scale);
    let width_product = fwhm(|d| lineshape(&single, d).powi(2), 0.0, scale);
    let width_corr = fwhm(|d| lineshape(&corr, d), 0.0, scale);
    Ok(ProtocolReport {
        fisher_per_shot: u,
        optimal_detuning_hz: ProtocolUncertainties {
            single_ion: to_hz(d1),
            uncorrelated_pair: to_hz(d1),
            product: to_hz(dp),
            correlated: to_hz(d2),
        },
        ratio_correlated_to_pair: u.correlated / u.uncorrelated_pair,
        ratio_correlated_to_single: u.correlated / u.single_ion,
        ratio_pair_to_single: u.uncorrelated_pair / u.single_ion,
        ratio_product_to_single: u.product / u.single_ion,
        width_single_hz: to_hz(width_single),
        width_product_hz: to_hz(width_product),
        width_correlated_hz: to_hz(width_corr),
        monte_carlo: None,
    })
}

/// Fisher comparison plus a Monte Carlo check: every replica samples each
/// protocol's scan at `shots_per_point` shots per point (two readouts per
/// shot for the uncorrelated pair), fits the lineshape with the pulse time
/// known, and records the fitted centre and its standard error.
pub fn protocol_comparison(cfg: &ProtocolConfig) -> Result<ProtocolReport> {
    let mut report = fisher_comparison(cfg.omega)?;
    if cfg.replicas == 0 {
        return Ok(report);
    }
    if cfg.grid.len() < 5 || cfg.shots_per_point == 0 {
        return Err(Error::InvalidParameter(
            "Monte Carlo needs >= 5 grid points and shots > 0".into(),
        ));
    }
    let (w1, a1) = map_hamiltonian_to_lineshape(cfg.omega, SpectrumKind::Single);
    let (w2, a2) = map_hamiltonian_to_lineshape(cfg.omega, SpectrumKind::Even);
    let single_truth = LineshapeParams::pi_pulse(w1, a1);
    let corr_truth = LineshapeParams::pi_pulse(w2, a2);

    let probs =
        |model: Model, init: &str, label: &str, width: f64| -> Result<(Vec<f64>, Vec<f64>)> {
            let x: Vec<f64> = cfg.grid.iter().map(|g| g * width).collect();
            let mut sc =
                ScanConfig::new(model, init, AxisSpec::new(AxisParam::Delta1, x[0], x[1], 2));
            let mut p = Vec::with_capacity(x.len());
            for &d in &x {
                sc.delta1 = d;
                sc.axis1 = AxisSpec::new(AxisParam::Delta1, 0.0, 0.0, 2);
                p.push(run_scan(&sc)?.series(label)?[0]);
            }
            Ok((x, p))
        };
    let (x1, p1) = probs(
        Model::SingleSpin {
            omega: cfg.omega,
            ion: Ion::First,
        },
        "d",
        "u",
        w1 / a1,
    )?;
    let (x2, p2) = probs(
        Model::EffectiveIsing { omega: cfg.omega },
        "dd",
        "uu",
        w2 / a2,
    )?;
    let pprod: Vec<f64> = p1.iter().map(|q| q * q).collect();

    let n = cfg.shots_per_point;
    let fit = |x: &[f64],
               p: &[f64],
               trials: u64,
               truth: &LineshapeParams,
               n_spins: usize,
               seed: u64,
               stream: usize| {
        let mut rng = point_rng(seed, stream);
        let k = p
            .iter()
            .map(|&q| sample_counts(q, trials, &mut rng))
            .collect();
        let data = FitData {
            x: x.to_vec(),
            obs: Observations::Counts {
                k,
                n: vec![trials; x.len()],
            },
        };
        fit_points(&data, truth, FixedParams::default(), n_spins)
            .ok()
            .filter(|r| r.converged)
            .and_then(|r| r.std_errors.map(|se| (r.params.delta0, se.delta0)))
    };
    let rows: Vec<[Option<(f64, f64)>; 4]> = (0..cfg.replicas)
        .into_par_iter()
        .map(|r| {
            let base = 4 * r;
            [
                fit(&x1, &p1, n, &single_truth, 1, cfg.seed, base),
                fit(&x1, &p1, 2 * n, &single_truth, 1, cfg.seed, base + 1),
                fit(
                    &x1,
                    &pprod,
                    n,
                    &product_start(&single_truth),
                    2,
                    cfg.seed,
                    base + 2,
                ),
                fit(&x2, &p2, n, &corr_truth, 2, cfg.seed, base + 3),
            ]
        })
        .collect();

    let ok: Vec<&[Option<(f64, f64)>; 4]> = rows
        .iter()
        .filter(|r| r.iter().all(Option::is_some))
        .collect();
    if ok.len() < 2 {
        return Err(Error::NonConvergence(
            "too few Monte Carlo replicas converged".into(),
        ));
    }
    let stats = |j: usize| {
        let v: Vec<(f64, f64)> = ok.iter().map(|r| r[j].unwrap()).collect();
        let m = v.len() as f64;
        let mean_se = v.iter().map(|e| e.1).sum::<f64>() / m;
        let mean = v.iter().map(|e| e.0).sum::<f64>() / m;
        let sd = (v.iter().map(|e| (e.0 - mean).powi(2)).sum::<f64>() / (m - 1.0)).sqrt();
        (to_hz(mean_se), to_hz(sd))
    };
    let s: Vec<(f64, f64)> = (0..4).map(stats).collect();
    let pick = |f: fn(&(f64, f64)) -> f64| ProtocolUncertainties {
        single_ion: f(&s[0]),
        uncorrelated_pair: f(&s[1]),
        product: f(&s[2]),
        correlated: f(&s[3]),
    };
    let mean_se = pick(|e| e.0);
    let emp = pick(|e| e.1);
    report.monte_carlo = Some(MonteCarloSummary {
        shots_per_point: n,
        replicas: cfg.replicas,
        converged_fraction: ok.len() as f64 / cfg.replicas as f64,
        mean_std_error: mean_se,
        empirical_std: emp,
        ratio_correlated_to_pair: mean_se.correlated / mean_se.uncorrelated_pair,
        ratio_correlated_to_single: mean_se.correlated / mean_se.single_ion,
        empirical_ratio_correlated_to_pair: emp.correlated / emp.uncorrelated_pair,
    });
    Ok(report)
}

/// The both-excited spectrum is not itself a lineshape; it is fitted with a
/// free narrowing factor starting from the single-ion parameters.
fn product_start(single: &LineshapeParams) -> LineshapeParams {
    LineshapeParams {
        alpha: single.alpha * std::f64::consts::SQRT_2,
        ..*single
    }
}
