//! Invariant suite run by the `verify` command.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::estimation::{
    fisher_comparison, fit_points, lineshape, map_hamiltonian_to_lineshape, FitData, FixedParams,
    LineshapeParams, SpectrumKind,
};
use crate::hamiltonian::{
    correlated_n_spin, ising_two_spin, subspace_reduce, CouplingAxis, IsingParams, NSpinParams,
    Subspace,
};
use crate::io::{format_dataset, parse_dataset};
use crate::ms::{self, MsDriveParams, MsHamiltonian};
use crate::quantum::{basis_index, parity_expectation, populations, propagate_static, StateVector};
use crate::scan::{run_scan, AxisParam, AxisSpec, Ion, Model, NoiseModel, ScanConfig};
use crate::units::hz;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    /// Measured quantity compared against `threshold`.
    pub value: f64,
    pub threshold: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub checks: Vec<Check>,
    pub passed: bool,
}

const OMEGA: f64 = 2.0 * std::f64::consts::PI * 127.5;

fn below(name: &str, f: impl FnOnce() -> Result<f64>, threshold: f64) -> Check {
    let t = Instant::now();
    let value = f().unwrap_or(f64::INFINITY);
    Check {
        name: name.to_owned(),
        passed: value < threshold,
        value,
        threshold,
        seconds: t.elapsed().as_secs_f64(),
    }
}

fn random_ising(rng: &mut ChaCha8Rng) -> IsingParams {
    IsingParams::new(
        rng.random_range(0.0..3.0),
        rng.random_range(-3.0..3.0),
        rng.random_range(-3.0..3.0),
    )
    .expect("omega >= 0")
}

fn hermiticity() -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        worst = worst.max(ising_two_spin(&random_ising(&mut rng)).hermiticity_deviation());
    }
    let h = correlated_n_spin(&NSpinParams::uniform(1.0, 0.3, 4, CouplingAxis::Y)?)?;
    Ok(worst.max(h.hermiticity_deviation()))
}

fn parity_leakage() -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let h = ising_two_spin(&random_ising(&mut rng));
        subspace_reduce(&h, Subspace::Even)?;
        subspace_reduce(&h, Subspace::Odd)?;
        let psi = StateVector::superposition(&["uu", "dd"])?;
        let out = propagate_static(&h, &psi, rng.random_range(0.0..10.0))?;
        worst = worst.max((parity_expectation(&out) - 1.0).abs());
    }
    Ok(worst)
}

fn unitarity() -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let h = ising_two_spin(&random_ising(&mut rng));
        let out = propagate_static(&h, &StateVector::spins("du")?, rng.random_range(0.0..50.0))?;
        worst = worst.max((out.norm() - 1.0).abs());
    }
    Ok(worst)
}

/// Largest change of the flipped-state population when sweeping the
/// detuning the subspace should ignore.
fn subspace_invariance(init: &str, target: &str, swept: fn(f64) -> IsingParams) -> Result<f64> {
    let t = ms::pi_time(OMEGA);
    let k = basis_index(target)?;
    let reference = populations(
        &propagate_static(&ising_two_spin(&swept(0.0)), &StateVector::spins(init)?, t)?,
        None,
    );
    let mut worst: f64 = 0.0;
    for i in 0..41 {
        let x = hz(-1000.0 + 50.0 * i as f64);
        let p = populations(
            &propagate_static(&ising_two_spin(&swept(x)), &StateVector::spins(init)?, t)?,
            None,
        );
        worst = worst.max((p[k] - reference[k]).abs());
    }
    Ok(worst)
}

fn lineshape_round_trip() -> Result<f64> {
    let cases: Vec<(Model, &str, &str, AxisParam, SpectrumKind)> = vec![
        (
            Model::EffectiveIsing { omega: OMEGA },
            "dd",
            "uu",
            AxisParam::Delta1,
            SpectrumKind::Even,
        ),
        (
            Model::EffectiveIsing { omega: OMEGA },
            "du",
            "ud",
            AxisParam::Delta2,
            SpectrumKind::Odd,
        ),
        (
            Model::SingleSpin {
                omega: OMEGA,
                ion: Ion::First,
            },
            "d",
            "u",
            AxisParam::Delta1,
            SpectrumKind::Single,
        ),
        (
            Model::NSpin {
                omega: OMEGA,
                n: 3,
                axis: CouplingAxis::X,
            },
            "ddd",
            "uuu",
            AxisParam::Delta1,
            SpectrumKind::Register(3),
        ),
    ];
    let mut worst: f64 = 0.0;
    for (model, init, target, axis, kind) in cases {
        let ds = run_scan(&ScanConfig::new(
            model,
            init,
            AxisSpec::new(axis, hz(-800.0), hz(800.0), 41),
        ))?;
        let (w, a) = map_hamiltonian_to_lineshape(OMEGA, kind);
        let p = LineshapeParams::pi_pulse(w, a);
        let data = FitData::from_dataset(&ds, target)?;
        for (x, y) in data.x.iter().zip(data.frequencies()) {
            worst = worst.max((lineshape(&p, *x) - y).abs());
        }
    }
    Ok(worst)
}

fn fit_recovers_alpha() -> Result<f64> {
    let ds = run_scan(&ScanConfig::new(
        Model::EffectiveIsing { omega: OMEGA },
        "dd",
        AxisSpec::new(AxisParam::Delta1, hz(-600.0), hz(600.0), 41),
    ))?;
    let data = FitData::from_dataset(&ds, "uu")?;
    let r = fit_points(
        &data,
        &data.initial_guess(ms::pi_time(OMEGA), 1.0),
        FixedParams::default(),
        2,
    )?;
    Ok(if r.converged {
        (r.params.alpha - 2.0).abs()
    } else {
        f64::INFINITY
    })
}

fn reference_drive(ratio: f64, n_max: usize) -> MsDriveParams {
    MsDriveParams::with_coupling_ratio(hz(1e6), hz(25.5e3), 0.05, ratio, n_max)
}

/// Largest full-versus-effective population difference over one π-time.
fn full_model_convergence() -> Result<f64> {
    let d = reference_drive(10.0, 4);
    let eff = ising_two_spin(&ms::effective_params(&d));
    let h = MsHamiltonian::new(&d)?;
    let tau = ms::pi_time(ms::effective_params(&d).omega);
    let times: Vec<f64> = (1..=20).map(|k| tau * k as f64 / 20.0).collect();
    let (states, _) = ms::propagate_times(&h, &d.initial_state("dd")?, &times, ms::DEFAULT_TOL)?;
    let mut worst: f64 = 0.0;
    for (t, s) in times.iter().zip(states) {
        let full = populations(&s, Some(&[0, 1]));
        let e = populations(
            &propagate_static(&eff, &StateVector::spins("dd")?, *t)?,
            None,
        );
        worst = full
            .iter()
            .zip(&e)
            .map(|(a, b)| (a - b).abs())
            .fold(worst, f64::max);
    }
    Ok(worst)
}

fn integrator_norm() -> Result<f64> {
    let d = reference_drive(10.0, 4);
    let h = MsHamiltonian::new(&d)?;
    let (_, stats) = ms::propagate_times(&h, &d.initial_state("du")?, &[2e-3], ms::DEFAULT_TOL)?;
    Ok(stats.norm_drift / ms::DEFAULT_TOL)
}

fn truncation_convergence() -> Result<f64> {
    let run = |n_max| -> Result<Vec<f64>> {
        let d = reference_drive(10.0, n_max);
        let h = MsHamiltonian::new(&d)?;
        let s = ms::propagate_time_dependent(&h, &d.initial_state("dd")?, 1e-3, ms::DEFAULT_TOL)?;
        Ok(populations(&s, Some(&[0, 1])))
    };
    let (a, b) = (run(4)?, run(8)?);
    Ok(a.iter()
        .zip(&b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max))
}

fn determinism() -> Result<f64> {
    let mut cfg = ScanConfig::new(
        Model::EffectiveIsing { omega: OMEGA },
        "dd",
        AxisSpec::new(AxisParam::Delta1, hz(-600.0), hz(600.0), 21),
    );
    cfg.shots = 200;
    cfg.seed = 42;
    cfg.noise = Some(NoiseModel {
        sigma_common: hz(30.0),
        ..NoiseModel::default()
    });
    let run = |threads| -> Result<_> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| crate::Error::Config(e.to_string()))?;
        pool.install(|| run_scan(&cfg))
    };
    Ok(if run(1)? == run(4)? { 0.0 } else { 1.0 })
}

fn dataset_round_trip() -> Result<f64> {
    let mut cfg = ScanConfig::new(
        Model::EffectiveIsing { omega: OMEGA },
        "du",
        AxisSpec::new(AxisParam::Delta2, hz(-300.0), hz(300.0), 7),
    );
    let exact = run_scan(&cfg)?;
    cfg.shots = 50;
    let sampled = run_scan(&cfg)?;
    let mut bad = 0.0;
    for ds in [exact, sampled] {
        if parse_dataset(&format_dataset(&ds), ds.metadata.clone())? != ds {
            bad += 1.0;
        }
    }
    Ok(bad)
}

fn fisher_ratio() -> Result<f64> {
    let r = fisher_comparison(OMEGA)?;
    Ok(
        (r.ratio_correlated_to_pair - std::f64::consts::FRAC_1_SQRT_2)
            .abs()
            .max((r.ratio_correlated_to_single - 0.5).abs()),
    )
}

/// Runs every check. Takes a few seconds.
pub fn run_suite() -> VerifyReport {
    let even_sweep: fn(f64) -> IsingParams =
        |x| IsingParams::from_lab(OMEGA, 0.0, x).expect("valid");
    let odd_sweep: fn(f64) -> IsingParams =
        |x| IsingParams::from_lab(OMEGA, x, 0.0).expect("valid");
    let checks = vec![
        below("hamiltonians_hermitian", hermiticity, 1e-12),
        below("parity_conserved", parity_leakage, 1e-12),
        below("static_evolution_unitary", unitarity, 1e-12),
        below(
            "even_subspace_ignores_delta2",
            || subspace_invariance("dd", "uu", even_sweep),
            1e-12,
        ),
        below(
            "odd_subspace_ignores_delta1",
            || subspace_invariance("du", "ud", odd_sweep),
            1e-12,
        ),
        below("lineshape_round_trip", lineshape_round_trip, 1e-9),
        below("fit_recovers_alpha", fit_recovers_alpha, 1e-6),
        below("full_drive_matches_effective", full_model_convergence, 0.05),
        below("integrator_norm_drift_over_tol", integrator_norm, 10.0),
        below("fock_truncation_converged", truncation_convergence, 1e-4),
        below("scan_determinism_across_threads", determinism, 0.5),
        below("dataset_round_trip", dataset_round_trip, 0.5),
        below("fisher_ratios", fisher_ratio, 1e-6),
    ];
    let passed = checks.iter().all(|c| c.passed);
    VerifyReport { checks, passed }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_is_green() {
        let r = run_suite();
        for c in &r.checks {
            assert!(
                c.passed,
                "{} = {} (threshold {})",
                c.name, c.value, c.threshold
            );
        }
        assert!(r.passed);
    }
}
