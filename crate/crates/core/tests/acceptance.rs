//! End-to-end acceptance criteria. Prints one PASS/FAIL line per criterion
//! and exits non-zero if any fails.

use std::f64::consts::FRAC_1_SQRT_2;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use hlspec::calibration::build_calibration;
use hlspec::config::load_config;
use hlspec::estimation::{
    fit_lineshape, protocol_comparison, FitData, FitResult, FixedParams, LineshapeParams,
};
use hlspec::hamiltonian::{ising_two_spin, CouplingAxis};
use hlspec::io::{read_dataset, write_dataset};
use hlspec::ms::{self, pi_time_report, MsDriveParams, MsHamiltonian};
use hlspec::quantum::{basis_index, populations, propagate_static, StateVector};
use hlspec::scan::{
    resonance_locus, run_2d_scan, run_scan, AxisParam, AxisSpec, Ion, Model, NoiseModel,
    ScanConfig, SpectrumDataset,
};
use hlspec::units::{hz, to_hz};

type Outcome = Result<(bool, String), String>;

struct Criterion {
    id: u8,
    name: &'static str,
    tolerance: &'static str,
    budget: Duration,
    run: fn() -> Outcome,
}

const OMEGA_HZ: f64 = 127.5;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn fit_alpha(ds: &SpectrumDataset, target: &str, tau: f64) -> Result<FitResult, String> {
    let data = FitData::from_dataset(ds, target).map_err(|e| e.to_string())?;
    let init: LineshapeParams = data.initial_guess(tau, 1.0);
    let r = fit_lineshape(ds, target, &init, FixedParams::default()).map_err(|e| e.to_string())?;
    if !r.converged {
        return Err(format!("fit to {target} did not converge"));
    }
    Ok(r)
}

fn scan(
    model: Model,
    init: &str,
    param: AxisParam,
    span_hz: f64,
    points: usize,
) -> Result<SpectrumDataset, String> {
    run_scan(&ScanConfig::new(
        model,
        init,
        AxisSpec::new(param, hz(-span_hz), hz(span_hz), points),
    ))
    .map_err(|e| e.to_string())
}

fn narrowing_factor() -> Outcome {
    let omega = hz(OMEGA_HZ);
    let tau = ms::pi_time(omega);
    let eff = Model::EffectiveIsing { omega };
    let cases = [
        (
            scan(eff.clone(), "dd", AxisParam::Delta1, 1000.0, 41)?,
            "uu",
            2.0,
            "even",
        ),
        (
            scan(
                Model::SingleSpin {
                    omega,
                    ion: Ion::First,
                },
                "d",
                AxisParam::Delta1,
                1000.0,
                41,
            )?,
            "u",
            1.0,
            "single",
        ),
        (
            scan(eff.clone(), "du", AxisParam::Delta2, 1000.0, 41)?,
            "ud",
            2.0,
            "odd",
        ),
    ];
    let mut ok = true;
    let mut parts = Vec::new();
    for (ds, target, expected, label) in &cases {
        let a = fit_alpha(ds, target, tau)?.params.alpha;
        ok &= (a - expected).abs() < 1e-3;
        parts.push(format!("{label} alpha={a:.6}"));
    }
    let mut noisy = ScanConfig::new(
        eff,
        "dd",
        AxisSpec::new(AxisParam::Delta1, hz(-1000.0), hz(1000.0), 41),
    );
    noisy.noise = Some(NoiseModel {
        sigma_common: hz(40.0),
        sigma_rabi_rel: 0.05,
        ..NoiseModel::default()
    });
    let r = fit_alpha(&run_scan(&noisy).map_err(|e| e.to_string())?, "uu", tau)?;
    ok &= r.params.alpha < 2.0 && r.params.a < 1.0;
    parts.push(format!(
        "noisy alpha={:.4} A={:.4}",
        r.params.alpha, r.params.a
    ));
    Ok((ok, parts.join(", ")))
}

fn max_spread_along_axis2(ds: &SpectrumDataset, n2: usize) -> f64 {
    let mut worst: f64 = 0.0;
    for row in ds.points.chunks(n2) {
        let first = row[0].data.frequencies();
        for p in row {
            for (a, b) in p.data.frequencies().iter().zip(&first) {
                worst = worst.max((a - b).abs());
            }
        }
    }
    worst
}

fn subspace_invariance() -> Outcome {
    let model = Model::EffectiveIsing {
        omega: hz(OMEGA_HZ),
    };
    let grid = |fixed: AxisParam, swept: AxisParam, init: &str| -> Result<f64, String> {
        let mut cfg = ScanConfig::new(
            model.clone(),
            init,
            AxisSpec::new(fixed, hz(-1000.0), hz(1000.0), 21),
        );
        cfg.axis2 = Some(AxisSpec::new(swept, hz(-1000.0), hz(1000.0), 41));
        Ok(max_spread_along_axis2(
            &run_2d_scan(&cfg).map_err(|e| e.to_string())?,
            41,
        ))
    };
    let even = grid(AxisParam::Delta1, AxisParam::Delta2, "dd")?;
    let odd = grid(AxisParam::Delta2, AxisParam::Delta1, "du")?;
    let broad = scan(model, "du", AxisParam::Delta1, 20_000.0, 201)?;
    let flat = broad
        .series("ud")
        .map_err(|e| e.to_string())?
        .iter()
        .map(|p| (p - 1.0).abs())
        .fold(0.0, f64::max);
    Ok((
        even < 1e-12 && odd < 1e-12 && flat < 1e-12,
        format!("even vs delta2 {even:.1e}, odd vs delta1 {odd:.1e}, |P_ud - 1| over +-20 kHz {flat:.1e}"),
    ))
}

fn reference_drive(ratio: f64) -> MsDriveParams {
    MsDriveParams::with_coupling_ratio(hz(1e6), hz(25.5e3), 0.05, ratio, 5)
}

fn full_drive() -> Outcome {
    let d = reference_drive(10.0);
    let report = pi_time_report(&d, "dd", ms::DEFAULT_TOL, None).map_err(|e| e.to_string())?;
    let h = MsHamiltonian::new(&d).map_err(|e| e.to_string())?;
    let eff = ising_two_spin(&ms::effective_params(&d));
    let times: Vec<f64> = (1..=80)
        .map(|k| report.measured * k as f64 / 80.0)
        .collect();
    let psi0 = d.initial_state("dd").map_err(|e| e.to_string())?;
    let (states, _) =
        ms::propagate_times(&h, &psi0, &times, ms::DEFAULT_TOL).map_err(|e| e.to_string())?;
    let spins = StateVector::spins("dd").map_err(|e| e.to_string())?;
    let (ud, du) = (basis_index("ud").unwrap(), basis_index("du").unwrap());
    let (mut leak, mut dev): (f64, f64) = (0.0, 0.0);
    for (s, &t) in states.iter().zip(&times) {
        let full = populations(s, Some(&[0, 1]));
        let e = populations(
            &propagate_static(&eff, &spins, t).map_err(|e| e.to_string())?,
            None,
        );
        leak = leak.max(full[ud] + full[du]);
        dev = full
            .iter()
            .zip(&e)
            .map(|(a, b)| (a - b).abs())
            .fold(dev, f64::max);
    }

    let eps_hz = to_hz(d.epsilon);
    let mut band = 0.0_f64;
    for (lo, hi) in [(-0.98, -0.82), (0.82, 0.98)] {
        let axis = AxisSpec::new(AxisParam::Delta1, hz(lo * eps_hz), hz(hi * eps_hz), 9);
        let mut full = ScanConfig::new(
            Model::FullMs {
                drive: d.clone(),
                tol: ms::DEFAULT_TOL,
            },
            "dd",
            axis.clone(),
        );
        full.pulse_time = Some(report.measured);
        let mut effective = ScanConfig::new(
            Model::EffectiveIsing {
                omega: ms::effective_params(&d).omega,
            },
            "dd",
            axis,
        );
        effective.pulse_time = Some(report.measured);
        let (a, b) = (
            run_scan(&full).map_err(|e| e.to_string())?,
            run_scan(&effective).map_err(|e| e.to_string())?,
        );
        for (p, q) in a.points.iter().zip(&b.points) {
            for (x, y) in p.data.frequencies().iter().zip(q.data.frequencies()) {
                band = band.max((x - y).abs());
            }
        }
    }
    Ok((
        report.population >= 0.95 && leak < 0.05 && dev < 0.05 && band > 0.2,
        format!(
            "P_uu(tau_pi)={:.5}, leakage {leak:.4}, full-vs-effective {dev:.4}, discrepancy in |delta1|>0.8eps {band:.3}",
            report.population
        ),
    ))
}

fn pi_time_scaling() -> Outcome {
    let d = reference_drive(10.0);
    let r = pi_time_report(&d, "dd", ms::DEFAULT_TOL, Some(1.3e-3)).map_err(|e| e.to_string())?;
    let derived_ok = (r.two_photon_estimate - 980.4e-6).abs() < 1e-6;
    let mut invariants = Vec::new();
    for ratio in [8.0, 10.0, 12.0] {
        let d = reference_drive(ratio);
        let t = ms::locate_pi_time(&d, "dd", "uu", ms::DEFAULT_TOL)
            .map_err(|e| e.to_string())?
            .tau;
        invariants.push(t * (d.eta * d.omega_carrier).powi(2) / d.epsilon);
    }
    let (lo, hi) = invariants
        .iter()
        .fold((f64::INFINITY, 0.0_f64), |(l, h), &x| (l.min(x), h.max(x)));
    let spread = hi / lo - 1.0;
    Ok((
        derived_ok && spread < 0.05,
        format!(
            "measured {:.1} us, pi/(2*eta^2*Omega^2/eps) {:.1} us (prefactor {:.3}), quoted 1300 us (ratio {:.3}), \
             tau*(eta*Omega)^2/eps spread over eps/(eta*Omega) in {{8,10,12}} {:.2}%",
            r.measured * 1e6,
            r.two_photon_estimate * 1e6,
            r.prefactor,
            r.ratio_to_reference.unwrap_or(f64::NAN),
            spread * 100.0
        ),
    ))
}

fn resonance_loci() -> Outcome {
    let cfg = load_config(&configs().join("light_shift_map.toml")).map_err(|e| e.to_string())?;
    let mut ok = cfg.scan2d.len() == 2;
    let mut parts = Vec::new();
    for s in &cfg.scan2d {
        let Model::EffectiveIsing { omega } = s.model else {
            return Err("the light-shift map uses the effective model".into());
        };
        let tol = 0.05 * to_hz(omega);
        let ds = run_2d_scan(s).map_err(|e| e.to_string())?;
        ok &= s.shots == 0 && ds.points.len() == 441;
        match s.initial_state.as_str() {
            "du" => {
                let locus = resonance_locus(&ds, "ud", 0).map_err(|e| e.to_string())?;
                let worst = locus.iter().map(|&(_, v)| v.abs()).fold(0.0, f64::max);
                ok &= locus.len() == 21 && worst < tol;
                parts.push(format!("odd: max |light shift at delta2=0| {worst:.2e} Hz"));
            }
            "dd" => {
                let locus = resonance_locus(&ds, "uu", 1).map_err(|e| e.to_string())?;
                let n = locus.len();
                let asym = (0..n)
                    .map(|i| (locus[i].1 - locus[n - 1 - i].1).abs())
                    .fold(0.0, f64::max);
                let model = locus
                    .iter()
                    .map(|&(v, p)| (p - v.abs() / 2.0).abs())
                    .fold(0.0, f64::max);
                ok &= n == 21 && asym < tol;
                parts.push(format!(
                    "even: max asymmetry {asym:.2e} Hz, max offset from |shift|/2 {model:.2} Hz"
                ));
            }
            other => return Err(format!("unexpected initial state {other}")),
        }
    }
    Ok((ok, parts.join(", ")))
}

fn protocol_advantage() -> Outcome {
    let cfg =
        load_config(&configs().join("frequency_difference.toml")).map_err(|e| e.to_string())?;
    let pc = cfg
        .fisher
        .ok_or("frequency_difference.toml has no [fisher] section")?;
    if pc.shots_per_point != 10_000 || pc.replicas != 200 {
        return Err(
            "frequency_difference.toml must use 10^4 shots per point and 200 replicas".into(),
        );
    }
    let r = protocol_comparison(&pc).map_err(|e| e.to_string())?;
    let mc = r.monte_carlo.ok_or("no Monte Carlo summary")?;
    let pair = (r.ratio_correlated_to_pair / FRAC_1_SQRT_2 - 1.0).abs();
    let single = (r.ratio_correlated_to_single / 0.5 - 1.0).abs();
    let mc_pair = (mc.ratio_correlated_to_pair / r.ratio_correlated_to_pair - 1.0).abs();
    let mc_single = (mc.ratio_correlated_to_single / r.ratio_correlated_to_single - 1.0).abs();
    Ok((
        pair < 0.02 && single < 0.02 && mc_pair < 0.1 && mc_single < 0.1,
        format!(
            "Fisher corr/pair {:.4}, corr/single {:.4}; Monte Carlo corr/pair {:.4}, corr/single {:.4}",
            r.ratio_correlated_to_pair, r.ratio_correlated_to_single, mc.ratio_correlated_to_pair,
            mc.ratio_correlated_to_single
        ),
    ))
}

fn n_spin_scaling() -> Outcome {
    let omega = hz(OMEGA_HZ);
    let mut ok = true;
    let mut parts = Vec::new();
    for n in 2..=4 {
        let model = Model::NSpin {
            omega,
            n,
            axis: CouplingAxis::X,
        };
        let ds = scan(model, &"d".repeat(n), AxisParam::Delta1, 1000.0, 81)?;
        let a = fit_alpha(&ds, &"u".repeat(n), ms::pi_time(omega))?
            .params
            .alpha;
        ok &= (a / n as f64 - 1.0).abs() < 0.01;
        parts.push(format!("N={n} alpha={a:.5}"));
    }
    Ok((ok, parts.join(", ")))
}

fn calibration_pipeline() -> Outcome {
    let cfg =
        load_config(&configs().join("light_shift_calibration.toml")).map_err(|e| e.to_string())?;
    let cc = cfg
        .calibrate
        .ok_or("light_shift_calibration.toml has no [calibrate] section")?;
    let injected = to_hz(cc.baseline_diff);
    let c = build_calibration(&cc).map_err(|e| e.to_string())?;
    let baseline_ok = (c.baseline_diff_hz - injected).abs() < 3.0 * c.baseline_err_hz;
    if c.branches.len() != 2 {
        return Err("both ions must be shifted".into());
    }
    let (s1, s2) = (c.branches[0].diff_fit.slope, c.branches[1].diff_fit.slope);
    let flip = s1.signum() == -s2.signum() && s1 != 0.0;
    let z = c.worst_mean_shift_z();
    Ok((
        baseline_ok && flip && z < 3.0,
        format!(
            "baseline {:.2} +- {:.2} Hz (injected {injected} Hz), difference slopes {s1:.2} / {s2:.2} Hz per unit power, \
             worst mean-shift z {z:.2}",
            c.baseline_diff_hz, c.baseline_err_hz
        ),
    ))
}

fn hlspec(args: &[&str]) -> Result<std::process::Output, String> {
    Command::new(env!("CARGO_BIN_EXE_hlspec"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())
}

fn infrastructure() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut cfg = ScanConfig::new(
        Model::EffectiveIsing {
            omega: hz(OMEGA_HZ),
        },
        "dd",
        AxisSpec::new(AxisParam::Delta1, hz(-600.0), hz(600.0), 31),
    );
    let mut round_trip = true;
    for shots in [0, 250] {
        cfg.shots = shots;
        let ds = run_scan(&cfg).map_err(|e| e.to_string())?;
        let path = dir.path().join(format!("rt_{shots}.tsv"));
        write_dataset(&ds, &path).map_err(|e| e.to_string())?;
        round_trip &= read_dataset(&path).map_err(|e| e.to_string())? == ds;
    }

    let config = dir.path().join("noisy.toml");
    std::fs::write(
        &config,
        "[[scan]]\ninitial_state = \"dd\"\nshots = 300\nseed = 77\n\
         model = { kind = \"effective_ising\", omega = \"127.5 Hz\" }\n\
         noise = { sigma_common = \"30 Hz\", sigma_diff = \"10 Hz\" }\n\
         axis1 = { param = \"delta1\", start = \"-600 Hz\", stop = \"600 Hz\", points = 41 }\n",
    )
    .map_err(|e| e.to_string())?;
    let mut outputs = Vec::new();
    for threads in ["1", "4"] {
        let out = dir.path().join(format!("t{threads}"));
        let o = hlspec(&[
            "scan",
            "--config",
            config.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--threads",
            threads,
        ])?;
        if !o.status.success() {
            return Err(String::from_utf8_lossy(&o.stderr).into_owned());
        }
        outputs.push(std::fs::read(out.join("scan_0.tsv")).map_err(|e| e.to_string())?);
    }
    let deterministic = outputs[0] == outputs[1];

    let verify = hlspec(&[
        "verify",
        "--out",
        dir.path().join("verify").to_str().unwrap(),
    ])?;
    let stdout = String::from_utf8_lossy(&verify.stdout);
    let checks = stdout
        .lines()
        .filter(|l| l.starts_with("PASS") || l.starts_with("FAIL"))
        .count();
    let failed: Vec<&str> = stdout.lines().filter(|l| l.starts_with("FAIL")).collect();
    let green = verify.status.success() && failed.is_empty() && checks > 0;
    Ok((
        round_trip && deterministic && green,
        format!(
            "round trip {round_trip}, identical output at 1 and 4 threads {deterministic}, verify {}/{checks} green{}",
            checks - failed.len(),
            if failed.is_empty() { String::new() } else { format!(" ({})", failed.join("; ")) }
        ),
    ))
}

fn main() {
    let criteria = [
        Criterion {
            id: 1,
            name: "narrowing factor",
            tolerance: "|alpha - expected| < 1e-3",
            budget: Duration::from_secs(5),
            run: narrowing_factor,
        },
        Criterion {
            id: 2,
            name: "subspace invariance",
            tolerance: "max deviation < 1e-12",
            budget: Duration::from_secs(1),
            run: subspace_invariance,
        },
        Criterion {
            id: 3,
            name: "full drive consistency",
            tolerance: "P >= 0.95, leakage < 0.05, deviation < 0.05, discrepancy > 0.2",
            budget: Duration::from_secs(300),
            run: full_drive,
        },
        Criterion {
            id: 4,
            name: "pi-time calibration",
            tolerance: "scaling spread < 5%",
            budget: Duration::from_secs(300),
            run: pi_time_scaling,
        },
        Criterion {
            id: 5,
            name: "two-axis resonance loci",
            tolerance: "0.05 Omega",
            budget: Duration::from_secs(120),
            run: resonance_loci,
        },
        Criterion {
            id: 6,
            name: "correlated protocol advantage",
            tolerance: "Fisher 2%, Monte Carlo 10%",
            budget: Duration::from_secs(120),
            run: protocol_advantage,
        },
        Criterion {
            id: 7,
            name: "N-spin narrowing",
            tolerance: "|alpha/N - 1| < 1%",
            budget: Duration::from_secs(30),
            run: n_spin_scaling,
        },
        Criterion {
            id: 8,
            name: "light-shift calibration",
            tolerance: "3 combined standard errors",
            budget: Duration::from_secs(120),
            run: calibration_pipeline,
        },
        Criterion {
            id: 9,
            name: "infrastructure",
            tolerance: "exact",
            budget: Duration::from_secs(300),
            run: infrastructure,
        },
    ];
    let mut failures = 0;
    for c in &criteria {
        let t = Instant::now();
        let outcome = (c.run)();
        let elapsed = t.elapsed();
        let (passed, detail) = match outcome {
            Ok((ok, d)) => (ok && elapsed <= c.budget, d),
            Err(e) => (false, format!("error: {e}")),
        };
        let over = if elapsed > c.budget {
            " over budget"
        } else {
            ""
        };
        println!(
            "{} {}. {} [tol: {}] {:.2}s (budget {}s{over}) {}",
            if passed { "PASS" } else { "FAIL" },
            c.id,
            c.name,
            c.tolerance,
            elapsed.as_secs_f64(),
            c.budget.as_secs(),
            detail
        );
        if !passed {
            failures += 1;
        }
    }
    if failures > 0 {
        eprintln!("{failures} acceptance criteria failed");
        std::process::exit(1);
    }
}
