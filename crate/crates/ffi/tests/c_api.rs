use std::ffi::{CStr, CString};
use std::ptr;

use hlspec_ffi::*;

const SCAN: &str = r#"
initial_state = "dd"
model = { kind = "effective_ising", omega = "127.5 Hz" }
axis1 = { param = "delta1", start = "-1 kHz", stop = "1 kHz", points = 41 }
"#;

fn run(config: &str) -> (HlsStatus, *mut HlsDataset) {
    let c = CString::new(config).unwrap();
    let mut ds = ptr::null_mut();
    let status = unsafe { hls_scan_run(c.as_ptr(), &mut ds) };
    (status, ds)
}

#[test]
fn scan_fit_and_round_trip() {
    let (status, ds) = run(SCAN);
    assert_eq!(status, HlsStatus::Ok);
    let (mut points, mut axes, mut outcomes) = (0, 0, 0);
    assert_eq!(
        unsafe { hls_dataset_shape(ds, &mut points, &mut axes, &mut outcomes) },
        HlsStatus::Ok
    );
    assert_eq!((points, axes, outcomes), (41, 1, 4));

    let mut x = 0.0;
    assert_eq!(
        unsafe { hls_dataset_coord(ds, 0, 0, &mut x) },
        HlsStatus::Ok
    );
    assert!((x + 1000.0).abs() < 1e-9, "{x}");
    assert_eq!(
        unsafe { hls_dataset_coord(ds, 41, 0, &mut x) },
        HlsStatus::OutOfRange
    );
    let mut p = 0.0;
    assert_eq!(
        unsafe { hls_dataset_frequency(ds, 20, 3, &mut p) },
        HlsStatus::Ok
    );
    assert!((p - 1.0).abs() < 1e-12, "P_uu on resonance {p}");

    let target = CString::new("uu").unwrap();
    let mut fit = HlsFit::default();
    let tau = 1.0 / (4.0 * 127.5);
    assert_eq!(
        unsafe { hls_fit_lineshape(ds, target.as_ptr(), tau, 1.0, &mut fit) },
        HlsStatus::Ok
    );
    assert!(fit.converged);
    assert!((fit.alpha - 2.0).abs() < 1e-6, "{fit:?}");

    let dir = tempfile::tempdir().unwrap();
    let path = CString::new(dir.path().join("d.tsv").to_str().unwrap()).unwrap();
    assert_eq!(
        unsafe { hls_dataset_write(ds, path.as_ptr()) },
        HlsStatus::Ok
    );
    let mut back = ptr::null_mut();
    assert_eq!(
        unsafe { hls_dataset_read(path.as_ptr(), &mut back) },
        HlsStatus::Ok
    );
    let mut q = 0.0;
    assert_eq!(
        unsafe { hls_dataset_frequency(back, 20, 3, &mut q) },
        HlsStatus::Ok
    );
    assert_eq!(p, q);
    unsafe {
        hls_dataset_free(back);
        hls_dataset_free(ds);
    }
}

#[test]
fn bad_config_sets_error() {
    let (status, ds) = run("initial_state = \"dd\"\nbogus = 1\n");
    assert_eq!(status, HlsStatus::Config);
    assert!(ds.is_null());
    let msg = unsafe { CStr::from_ptr(hls_last_error()) }
        .to_string_lossy()
        .into_owned();
    assert!(msg.contains("bogus"), "{msg}");
}

#[test]
fn missing_file_is_io_error() {
    let path = CString::new("/nonexistent/d.tsv").unwrap();
    let mut ds = ptr::null_mut();
    assert_eq!(
        unsafe { hls_dataset_read(path.as_ptr(), &mut ds) },
        HlsStatus::Io
    );
}

#[test]
fn fisher_ratios_match_closed_form() {
    let (mut pair, mut single) = (0.0, 0.0);
    assert_eq!(
        unsafe { hls_fisher_ratios(127.5, &mut pair, &mut single) },
        HlsStatus::Ok
    );
    assert!((pair - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-6);
    assert!((single - 0.5).abs() < 1e-6);
}

#[test]
fn header_declares_the_interface() {
    let header =
        std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/hlspec.h")).unwrap();
    for name in [
        "hls_scan_run",
        "hls_dataset_free",
        "hls_fit_lineshape",
        "HLS_STATUS_OK",
        "HlsFit",
        "hls_last_error",
    ] {
        assert!(header.contains(name), "{name} missing from header");
    }
}
