use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use hlspec::config::load_config;
use hlspec::io::read_dataset;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn hlspec(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hlspec"))
        .args(args)
        .output()
        .unwrap()
}

#[test]
fn shipped_configs_load() {
    let mut n = 0;
    for entry in fs::read_dir(configs()).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            load_config(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            n += 1;
        }
    }
    assert_eq!(n, 6);
}

#[test]
fn unknown_subcommand_fails() {
    let o = hlspec(&["frobnicate"]);
    assert!(!o.status.success());
    assert!(!o.stderr.is_empty());
}

#[test]
fn missing_config_fails_with_diagnostic() {
    let dir = tempfile::tempdir().unwrap();
    let o = hlspec(&["scan", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("--config"));

    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "[[scan]]\ninitial_state = \"dd\"\nshots = -1\n").unwrap();
    let o = hlspec(&[
        "scan",
        "--config",
        bad.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn section_missing_from_config_fails() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("light_shift_map.toml");
    let o = hlspec(&[
        "calibrate",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("[calibrate]"));
}

#[test]
fn scan2d_writes_maps_loci_and_echo() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("light_shift_map.toml");
    let o = hlspec(&[
        "scan2d",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let ds = read_dataset(&dir.path().join("scan2d_0.tsv")).unwrap();
    assert_eq!(ds.points.len(), 441);
    assert_eq!(ds.axes, ["light_shift_hz", "laser_offset_hz"]);
    assert!(dir.path().join("scan2d_1_locus_axis1.tsv").exists());
    let echo = load_config(&dir.path().join("config.echo.toml")).unwrap();
    assert_eq!(echo, load_config(&cfg).unwrap());
}

#[test]
fn scan_then_fit_from_disk() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(
        &cfg,
        "[[scan]]\ninitial_state = \"dd\"\n\
         model = { kind = \"effective_ising\", omega = \"127.5 Hz\" }\n\
         axis1 = { param = \"delta1\", start = \"-1 kHz\", stop = \"1 kHz\", points = 41 }\n",
    )
    .unwrap();
    let out = dir.path().to_str().unwrap();
    let o = hlspec(&[
        "scan",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out,
        "--shots",
        "500",
        "--seed",
        "5",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let data = dir.path().join("scan_0.tsv");
    assert!(read_dataset(&data).unwrap().is_sampled());

    let o = hlspec(&[
        "fit",
        "--data",
        data.to_str().unwrap(),
        "--target",
        "uu",
        "--out",
        out,
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let fit: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("fit_0.json")).unwrap()).unwrap();
    let alpha = fit["result"]["params"]["alpha"].as_f64().unwrap();
    let se = fit["result"]["std_errors"]["alpha"].as_f64().unwrap();
    assert!((alpha - 2.0).abs() < 4.0 * se, "{alpha} +- {se}");
    assert!(dir.path().join("fit_0_curve.tsv").exists());
}

#[test]
fn fit_without_recorded_pulse_time_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("bare.tsv");
    fs::write(
        &data,
        "delta1_hz\tp_d\tp_u\n-100\t0.5\t0.5\n0\t0\t1\n100\t0.5\t0.5\n",
    )
    .unwrap();
    let o = hlspec(&[
        "fit",
        "--data",
        data.to_str().unwrap(),
        "--target",
        "u",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("pulse_time"));
}
