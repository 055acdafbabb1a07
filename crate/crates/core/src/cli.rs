//! Command-line front end.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use log::info;
use serde::Serialize;

use crate::calibration::build_calibration;
use crate::config::{load_config, FitConfig, Overrides, RunConfig};
use crate::error::{Error, Result};
use crate::estimation::fisher::fisher_product;
use crate::estimation::{
    fisher_per_shot, fit_lineshape, lineshape, map_hamiltonian_to_lineshape, protocol_comparison,
    FitData, FitResult, LineshapeParams, SpectrumKind,
};
use crate::io::{read_dataset, write_dataset, write_json, write_table};
use crate::ms::{self, pi_time_report};
use crate::scan::{
    default_pulse_time, flip_label, protocol_uncorrelated_difference, resonance_locus, run_2d_scan,
    run_scan, AxisParam, Model, ScanConfig, SpectrumDataset, UncorrelatedDifferenceConfig,
};
use crate::units::{hz, to_hz};
use crate::verify::run_suite;

#[derive(Debug, Parser)]
#[command(
    name = "hlspec",
    version,
    about = "Correlated two-ion Rabi spectroscopy simulator"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Seed for every section of the configuration.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Shots per point for every section of the configuration.
    #[arg(long, global = true)]
    pub shots: Option<u64>,
    /// Worker threads.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Population time traces (`[[nutate]]`).
    Nutate,
    /// One-axis spectra (`[[scan]]`, `[[difference]]`).
    Scan,
    /// Two-axis maps and their resonance loci (`[[scan2d]]`).
    Scan2d,
    /// Lineshape fits (`[[fit]]`, or `--data` with `--target`).
    Fit {
        /// Dataset to fit instead of the configured fits.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Outcome label to fit with `--data`.
        #[arg(long)]
        target: Option<String>,
    },
    /// Protocol comparison by Fisher information and Monte Carlo (`[fisher]`).
    Fisher,
    /// Light-shift calibration (`[calibrate]`).
    Calibrate,
    /// Runs the invariant suite; exits non-zero on any failure.
    Verify,
}

/// Parses `args` and runs the command. Returns the process exit status.
pub fn dispatch<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

fn needs_config(cli: &Cli) -> bool {
    !matches!(
        cli.command,
        Command::Verify | Command::Fit { data: Some(_), .. }
    )
}

/// Runs a parsed command. `Ok(false)` means the command ran but a check failed.
pub fn run(cli: &Cli) -> Result<bool> {
    let mut cfg = match &cli.config {
        Some(path) => load_config(path)?,
        None if needs_config(cli) => return Err(Error::Config("--config is required".into())),
        None => RunConfig::default(),
    };
    cfg.apply(Overrides {
        seed: cli.seed,
        shots: cli.shots,
        threads: cli.threads,
    })?;
    fs::create_dir_all(&cli.out)?;
    fs::write(cli.out.join("config.echo.toml"), cfg.echo()?)?;
    info!(
        "normalized configuration written to {}",
        cli.out.join("config.echo.toml").display()
    );

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads.unwrap_or(0))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| execute(cli, &cfg))
}

fn execute(cli: &Cli, cfg: &RunConfig) -> Result<bool> {
    let out = cli.out.as_path();
    match &cli.command {
        Command::Nutate => nutate(cfg, out),
        Command::Scan => scan(cfg, out),
        Command::Scan2d => scan2d(cfg, out),
        Command::Fit {
            data: Some(path),
            target,
        } => {
            let target = target
                .clone()
                .ok_or_else(|| Error::Config("--data needs --target".into()))?;
            let fc = FitConfig {
                name: Some(path.display().to_string()),
                target,
                scan: None,
                difference: None,
                dataset: Some(path.clone()),
                pulse_time: None,
                init: None,
                fixed: Default::default(),
                alpha_start: 1.0,
            };
            fit_one(&fc, 0, out)
        }
        Command::Fit { data: None, .. } => {
            require(!cfg.fit.is_empty(), "[[fit]]")?;
            for (i, f) in cfg.fit.iter().enumerate() {
                fit_one(f, i, out)?;
            }
            Ok(true)
        }
        Command::Fisher => fisher(cfg, out),
        Command::Calibrate => calibrate(cfg, out),
        Command::Verify => verify(out),
    }
}

fn require(present: bool, section: &str) -> Result<()> {
    if present {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "the configuration has no {section} section"
        )))
    }
}

fn announce(path: &Path) {
    println!("wrote {}", path.display());
}

fn save_dataset(ds: &SpectrumDataset, path: PathBuf) -> Result<()> {
    write_dataset(ds, &path)?;
    announce(&path);
    Ok(())
}

fn save_json<T: Serialize>(value: &T, path: PathBuf) -> Result<()> {
    write_json(value, &path)?;
    announce(&path);
    Ok(())
}

/// The same scan under the adiabatically eliminated model, for overlays.
fn effective_overlay(sc: &ScanConfig) -> Option<ScanConfig> {
    let Model::FullMs { drive, .. } = &sc.model else {
        return None;
    };
    let mut eff = sc.clone();
    eff.model = Model::EffectiveIsing {
        omega: ms::effective_params(drive).omega,
    };
    if eff.pulse_time.is_none() && sc.axis1.param != AxisParam::PulseTime {
        eff.pulse_time = default_pulse_time(&sc.model, &sc.initial_state).ok();
    }
    Some(eff)
}

fn nutate(cfg: &RunConfig, out: &Path) -> Result<bool> {
    require(!cfg.nutate.is_empty(), "[[nutate]]")?;
    for (i, n) in cfg.nutate.iter().enumerate() {
        save_dataset(&run_scan(&n.scan)?, out.join(format!("nutate_{i}.tsv")))?;
        if let Some(eff) = effective_overlay(&n.scan) {
            save_dataset(
                &run_scan(&eff)?,
                out.join(format!("nutate_{i}_effective.tsv")),
            )?;
        }
        if let (Model::FullMs { drive, tol }, true) = (&n.scan.model, n.locate_pi_time) {
            let d = drive
                .clone()
                .with_lab_detunings(n.scan.delta1, n.scan.delta2 + 0.5 * n.scan.baseline_diff);
            let r = pi_time_report(&d, &n.scan.initial_state, *tol, n.reference_pi_time)?;
            println!(
                "pi-time: measured {:.1} us (P = {:.4}), pi/(2*eta^2*Omega^2/eps) = {:.1} us, prefactor {:.3}",
                r.measured * 1e6,
                r.population,
                r.two_photon_estimate * 1e6,
                r.prefactor
            );
            if let (Some(reference), Some(ratio)) = (r.reference_estimate, r.ratio_to_reference) {
                println!(
                    "pi-time: reference {:.1} us, measured/reference {:.3}",
                    reference * 1e6,
                    ratio
                );
            }
            save_json(&r, out.join(format!("nutate_{i}_pi_time.json")))?;
        }
    }
    Ok(true)
}

fn scan(cfg: &RunConfig, out: &Path) -> Result<bool> {
    require(
        !cfg.scan.is_empty() || !cfg.difference.is_empty(),
        "[[scan]] or [[difference]]",
    )?;
    for (i, s) in cfg.scan.iter().enumerate() {
        save_dataset(&run_scan(s)?, out.join(format!("scan_{i}.tsv")))?;
        if let Some(eff) = effective_overlay(s) {
            save_dataset(
                &run_scan(&eff)?,
                out.join(format!("scan_{i}_effective.tsv")),
            )?;
        }
    }
    for (i, d) in cfg.difference.iter().enumerate() {
        save_dataset(
            &protocol_uncorrelated_difference(d)?,
            out.join(format!("difference_{i}.tsv")),
        )?;
    }
    Ok(true)
}

fn scan2d(cfg: &RunConfig, out: &Path) -> Result<bool> {
    require(!cfg.scan2d.is_empty(), "[[scan2d]]")?;
    for (i, s) in cfg.scan2d.iter().enumerate() {
        let ds = run_2d_scan(s)?;
        save_dataset(&ds, out.join(format!("scan2d_{i}.tsv")))?;
        let target = flip_label(&s.initial_state);
        for along in 0..2 {
            let locus = resonance_locus(&ds, &target, along)?;
            let rows: Vec<Vec<f64>> = locus.iter().map(|&(k, p)| vec![k, p]).collect();
            let path = out.join(format!("scan2d_{i}_locus_axis{}.tsv", along + 1));
            write_table(
                &path,
                &[
                    &ds.axes[1 - along],
                    &format!("resonance_{}", ds.axes[along]),
                ],
                &rows,
            )?;
            announce(&path);
        }
    }
    Ok(true)
}

#[derive(Serialize)]
struct FitOutput<'a> {
    name: Option<&'a str>,
    target: &'a str,
    axis: &'a str,
    result: &'a FitResult,
}

/// Pulse time used to produce a dataset, from its recorded configuration.
fn recorded_pulse_time(ds: &SpectrumDataset) -> Result<f64> {
    let table = ds.metadata.config.clone();
    match ds.metadata.generator.as_str() {
        "run_scan" => {
            let sc: ScanConfig = table
                .try_into()
                .map_err(|e| Error::Dataset(format!("recorded config: {e}")))?;
            match sc.pulse_time {
                Some(t) => Ok(t),
                None => default_pulse_time(&sc.model, &sc.initial_state),
            }
        }
        "protocol_uncorrelated_difference" => {
            let d: UncorrelatedDifferenceConfig = table
                .try_into()
                .map_err(|e| Error::Dataset(format!("recorded config: {e}")))?;
            Ok(d.pulse_time.unwrap_or_else(|| ms::pi_time(d.omega)))
        }
        _ => Err(Error::Config(
            "the dataset does not record its pulse time; set pulse_time".into(),
        )),
    }
}

fn fit_one(fc: &FitConfig, i: usize, out: &Path) -> Result<bool> {
    let (ds, generated) = if let Some(s) = &fc.scan {
        (run_scan(s)?, true)
    } else if let Some(d) = &fc.difference {
        (protocol_uncorrelated_difference(d)?, true)
    } else {
        let path = fc.dataset.as_ref().expect("validated source");
        (read_dataset(path)?, false)
    };
    if generated {
        save_dataset(&ds, out.join(format!("fit_{i}_data.tsv")))?;
    }
    let tau = match fc.pulse_time {
        Some(t) => t,
        None => recorded_pulse_time(&ds)?,
    };
    let data = FitData::from_dataset(&ds, &fc.target)?;
    let init = fc
        .init
        .unwrap_or_else(|| data.initial_guess(tau, fc.alpha_start));
    let r = fit_lineshape(&ds, &fc.target, &init, fc.fixed)?;
    let se = r.std_errors.map_or(f64::NAN, |e| e.alpha);
    println!(
        "fit {}: alpha = {:.4} +- {:.4}, A = {:.4}, centre = {:.3} Hz, converged = {}",
        fc.name.as_deref().unwrap_or(&i.to_string()),
        r.params.alpha,
        se,
        r.params.a,
        to_hz(r.params.delta0),
        r.converged
    );
    save_json(
        &FitOutput {
            name: fc.name.as_deref(),
            target: &fc.target,
            axis: &ds.axes[0],
            result: &r,
        },
        out.join(format!("fit_{i}.json")),
    )?;
    let observed = data.frequencies();
    let rows: Vec<Vec<f64>> = data
        .x
        .iter()
        .zip(&observed)
        .map(|(&x, &y)| vec![to_hz(x), y, lineshape(&r.params, x)])
        .collect();
    let path = out.join(format!("fit_{i}_curve.tsv"));
    write_table(&path, &[&ds.axes[0], "observed", "fitted"], &rows)?;
    announce(&path);
    Ok(true)
}

fn fisher(cfg: &RunConfig, out: &Path) -> Result<bool> {
    let pc = cfg
        .fisher
        .as_ref()
        .ok_or_else(|| Error::Config("the configuration has no [fisher] section".into()))?;
    let r = protocol_comparison(pc)?;
    println!(
        "fisher: correlated/uncorrelated-pair = {:.4}, correlated/single = {:.4}, product/single = {:.4}",
        r.ratio_correlated_to_pair, r.ratio_correlated_to_single, r.ratio_product_to_single
    );
    if let Some(mc) = &r.monte_carlo {
        println!(
            "monte carlo ({} replicas, {} shots/point): correlated/pair = {:.4}, correlated/single = {:.4}",
            mc.replicas, mc.shots_per_point, mc.ratio_correlated_to_pair, mc.ratio_correlated_to_single
        );
    }
    save_json(&r, out.join("fisher.json"))?;

    let (w1, a1) = map_hamiltonian_to_lineshape(pc.omega, SpectrumKind::Single);
    let (w2, a2) = map_hamiltonian_to_lineshape(pc.omega, SpectrumKind::Even);
    let single = LineshapeParams::pi_pulse(w1, a1);
    let corr = LineshapeParams::pi_pulse(w2, a2);
    let per_hz2 = hz(1.0).powi(2);
    let rows: Vec<Vec<f64>> = (0..=300)
        .map(|k| {
            let d = 2.0 * w1 * k as f64 / 300.0;
            vec![
                to_hz(d),
                lineshape(&single, d),
                lineshape(&single, d).powi(2),
                lineshape(&corr, d),
                per_hz2 * fisher_per_shot(&single, d),
                per_hz2 * 2.0 * fisher_per_shot(&single, d),
                per_hz2 * fisher_product(&single, d),
                per_hz2 * fisher_per_shot(&corr, d),
            ]
        })
        .collect();
    let path = out.join("fisher_curves.tsv");
    write_table(
        &path,
        &[
            "delta_hz",
            "p_single",
            "p_product",
            "p_correlated",
            "fisher_single_per_hz2",
            "fisher_pair_per_hz2",
            "fisher_product_per_hz2",
            "fisher_correlated_per_hz2",
        ],
        &rows,
    )?;
    announce(&path);
    Ok(true)
}

fn calibrate(cfg: &RunConfig, out: &Path) -> Result<bool> {
    let cc = cfg
        .calibrate
        .as_ref()
        .ok_or_else(|| Error::Config("the configuration has no [calibrate] section".into()))?;
    let c = build_calibration(cc)?;
    println!(
        "calibration: baseline difference = {:.2} +- {:.2} Hz, slope ratio = {}",
        c.baseline_diff_hz,
        c.baseline_err_hz,
        c.slope_ratio.map_or("n/a".into(), |r| format!("{r:.4}"))
    );
    save_json(&c, out.join("calibration.json"))?;
    let mut rows = Vec::new();
    for (b, br) in c.branches.iter().enumerate() {
        for p in &br.points {
            rows.push(vec![
                (b + 1) as f64,
                p.power,
                p.injected_shift_hz,
                p.f_mean_hz,
                p.err_mean_hz,
                p.f_diff_hz,
                p.err_diff_hz,
            ]);
        }
    }
    let path = out.join("calibration_points.tsv");
    write_table(
        &path,
        &[
            "branch",
            "power",
            "shift_hz",
            "f_mean_hz",
            "err_mean_hz",
            "f_diff_hz",
            "err_diff_hz",
        ],
        &rows,
    )?;
    announce(&path);
    Ok(true)
}

fn verify(out: &Path) -> Result<bool> {
    let r = run_suite();
    for c in &r.checks {
        println!(
            "{} {:<34} {:.3e} (< {:.1e}) {:.2}s",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.value,
            c.threshold,
            c.seconds
        );
    }
    save_json(&r, out.join("verify.json"))?;
    Ok(r.passed)
}
