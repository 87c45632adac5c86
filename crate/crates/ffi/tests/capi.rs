use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use alex_ffi::*;

const MIRROR: &str = r#"
seed = 1

[dataset]
kind = "synthetic"
n_buildings = 2
steps = 2
profile = { shape = "mirror_pair", amplitude = 1.0 }
battery = { capacity = 1.0, max_charge_power = 1.0, max_discharge_power = 1.0, charge_efficiency = 0.9, discharge_efficiency = 0.9 }

[solver]
n_quant = 2
"#;

fn write_config(dir: &Path, text: &str) -> CString {
    let path = dir.join("config.toml");
    std::fs::write(&path, text).unwrap();
    CString::new(path.to_str().unwrap()).unwrap()
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(alex_last_error()) }
        .to_string_lossy()
        .into_owned()
}

#[test]
fn mirror_pair_through_the_c_api() {
    let tmp = tempfile::tempdir().unwrap();
    let path = write_config(tmp.path(), MIRROR);
    unsafe {
        let mut config = ptr::null_mut();
        assert_eq!(alex_config_load(path.as_ptr(), &mut config), AlexStatus::Ok);
        let mut ds = ptr::null_mut();
        assert_eq!(alex_dataset_load(config, &mut ds), AlexStatus::Ok);
        let (mut buildings, mut steps) = (0, 0);
        assert_eq!(alex_dataset_shape(ds, &mut buildings, &mut steps), AlexStatus::Ok);
        assert_eq!((buildings, steps), (2, 2));

        let mut run = ptr::null_mut();
        assert_eq!(
            alex_run_scenario(config, ds, AlexScenario::Alex, &mut run),
            AlexStatus::Ok
        );
        let (mut converged, mut rounds) = (false, 0);
        assert_eq!(alex_run_convergence(run, &mut converged, &mut rounds), AlexStatus::Ok);
        assert!(converged);

        // The pair trades everything, so the community is balanced.
        let mut buf = [f64::NAN; 2];
        let mut written = 0;
        assert_eq!(
            alex_run_net_load(run, buf.as_mut_ptr(), 2, &mut written),
            AlexStatus::Ok
        );
        assert_eq!(written, 2);
        assert_eq!(buf, [0.0, 0.0]);
        assert_eq!(
            alex_run_net_load(run, buf.as_mut_ptr(), 1, &mut written),
            AlexStatus::BufferTooSmall
        );

        let mut m = AlexMetrics::default();
        assert_eq!(alex_run_metrics(run, &mut m), AlexStatus::Ok);
        assert_eq!(m.avg_daily_import, 0.0);
        assert!(m.daily_load_factor_complement.is_nan());

        let out = CString::new(tmp.path().join("run").to_str().unwrap()).unwrap();
        assert_eq!(alex_run_write(run, config, ds, out.as_ptr()), AlexStatus::Ok);
        assert!(tmp.path().join("run/manifest.json").exists());

        alex_run_free(run);
        alex_dataset_free(ds);
        alex_config_free(config);
    }
}

#[test]
fn errors_carry_status_and_message() {
    unsafe {
        let mut config = ptr::null_mut();
        assert_eq!(alex_config_load(ptr::null(), &mut config), AlexStatus::NullArgument);
        assert!(config.is_null());

        let missing = CString::new("/nonexistent/config.toml").unwrap();
        assert_eq!(alex_config_load(missing.as_ptr(), &mut config), AlexStatus::Io);
        assert!(last_error().contains("/nonexistent/config.toml"));

        let tmp = tempfile::tempdir().unwrap();
        let bad = write_config(tmp.path(), &MIRROR.replace("n_quant = 2", "n_quant = 1"));
        assert_eq!(alex_config_load(bad.as_ptr(), &mut config), AlexStatus::Config);
        assert!(last_error().contains("n_quant"));

        let mut m = AlexMetrics::default();
        assert_eq!(alex_run_metrics(ptr::null(), &mut m), AlexStatus::NullArgument);

        // Freeing null handles is a no-op.
        alex_run_free(ptr::null_mut());
        alex_dataset_free(ptr::null_mut());
        alex_config_free(ptr::null_mut());
    }
}

#[test]
fn version_matches_the_crate() {
    let v = unsafe { CStr::from_ptr(alex_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

/// Directory holding the shared library built alongside this test binary.
fn artifact_dir() -> PathBuf {
    let exe = std::env::current_exe().unwrap();
    exe.parent().and_then(Path::parent).unwrap().to_path_buf()
}

#[test]
fn c_program_links_against_the_generated_header() {
    let lib_dir = artifact_dir();
    if !lib_dir.join("libalex_ffi.so").exists() || Command::new("cc").arg("--version").output().is_err() {
        eprintln!("skipping: no C compiler or shared library in {}", lib_dir.display());
        return;
    }
    let crate_dir = Path::new(env!("CARGO_MANIFEST_DIR"));
    let tmp = tempfile::tempdir().unwrap();
    let exe = tmp.path().join("smoke");
    let status = Command::new("cc")
        .arg(crate_dir.join("tests/c/smoke.c"))
        .arg("-I")
        .arg(crate_dir.join("include"))
        .arg("-L")
        .arg(&lib_dir)
        .arg(format!("-Wl,-rpath,{}", lib_dir.display()))
        .args(["-lalex_ffi", "-lm", "-o"])
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success(), "C compilation failed");

    let config = write_config(tmp.path(), MIRROR);
    let out = Command::new(&exe)
        .arg(config.to_str().unwrap())
        .arg(tmp.path().join("run"))
        .output()
        .unwrap();
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "{stdout}{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout.contains("buildings=2 steps=2 converged=1"), "{stdout}");
}
