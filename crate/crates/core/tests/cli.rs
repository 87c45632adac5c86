mod common;

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use alex_core::config::DATASET_ENV;
use alex_core::ingest::read_canonical;
use alex_core::report::read_manifest;
use sha2::{Digest, Sha256};

fn alex(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_alex"))
        .args(args)
        .env_remove(DATASET_ENV)
        .output()
        .expect("spawn alex")
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "status {:?}\nstdout {}\nstderr {}",
        out.status,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn mirror_config() -> String {
    common::configs_dir().join("mirror_pair.toml").display().to_string()
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.display().to_string()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn mirror_run_trades_through_the_market() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("alex");
    let stdout = ok(&alex(&["run", "-c", &mirror_config(), "-s", "alex", "-o", s(&dir)]));
    assert!(stdout.starts_with("ALEX:"), "{stdout}");

    let manifest = read_manifest(&dir).unwrap();
    assert!(manifest.converged);
    assert!(manifest.final_distance < 0.01);
    for name in [
        "trace.csv",
        "metrics.json",
        "convergence.csv",
        "policies/b1.csv",
        "net_load_hourly.csv",
    ] {
        assert!(dir.join(name).is_file(), "{name} missing");
        assert!(manifest.files.contains_key(name), "{name} not hashed");
    }
    let config = fs::read(dir.join("config.toml")).unwrap();
    assert_eq!(manifest.config_sha256, hex::encode(Sha256::digest(&config)));

    let mut reader = csv::Reader::from_path(dir.join("trace.csv")).unwrap();
    let headers = reader.headers().unwrap().clone();
    let col = |name: &str| headers.iter().position(|h| h == name).unwrap();
    let rows: Vec<csv::StringRecord> = reader.records().map(Result::unwrap).collect();
    let row = rows
        .iter()
        .find(|r| &r[col("t")] == "0" && &r[col("building")] == "b1")
        .unwrap();
    let sold: f64 = row[col("market_sell_kwh")].parse().unwrap();
    assert!(sold > 0.5, "b1 sold {sold}");
    assert_eq!(row[col("grid_sell_kwh")].parse::<f64>().unwrap(), 0.0);
}

#[test]
fn comparing_a_run_with_itself_ties_everywhere() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for d in [&a, &b] {
        ok(&alex(&["run", "-c", &mirror_config(), "-s", "noderms", "-o", s(d)]));
    }
    let table = tmp.path().join("table.csv");
    let stdout = ok(&alex(&["compare", s(&a), s(&b), "-o", s(&table), "--strict"]));
    assert!(!stdout.contains("FAIL"), "{stdout}");

    let mut reader = csv::Reader::from_path(&table).unwrap();
    let mut rows = 0;
    for r in reader.records() {
        let r = r.unwrap();
        // key, label, value per run, then the best flags.
        assert_eq!(&r[2], &r[3], "{r:?}");
        if r[4].is_empty() {
            assert!(&r[0] == "daily_consumption" || &r[2] == "NaN", "{r:?}");
        } else {
            assert_eq!(r[4].split(';').count(), 2, "{r:?}");
        }
        rows += 1;
    }
    assert!(rows >= 10);
}

#[test]
fn comparing_different_horizons_fails() {
    let tmp = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(mirror_config()).unwrap();
    let longer = write_config(tmp.path(), "long.toml", &text.replace("steps = 2", "steps = 4"));
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    ok(&alex(&["run", "-c", &mirror_config(), "-s", "noderms", "-o", s(&a)]));
    ok(&alex(&["run", "-c", &longer, "-s", "noderms", "-o", s(&b)]));
    let out = alex(&["compare", s(&a), s(&b)]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("different calendars"));
}

#[test]
fn validate_reports_a_good_dataset() {
    let stdout = ok(&alex(&["validate", "-c", &mirror_config()]));
    assert!(stdout.contains("ok: 2 buildings, 2 steps"), "{stdout}");
}

#[test]
fn ingest_writes_a_loadable_canonical_dataset() {
    let tmp = tempfile::tempdir().unwrap();
    let out_dir = tmp.path().join("canonical");
    ok(&alex(&["ingest", "-c", &mirror_config(), "-o", s(&out_dir)]));
    let ds = read_canonical(&out_dir).unwrap();
    assert_eq!(ds.buildings.len(), 2);

    let config = write_config(
        tmp.path(),
        "canonical.toml",
        "[dataset]\nkind = \"canonical\"\npath = \"canonical\"\n\n[solver]\nn_quant = 2\n",
    );
    let stdout = ok(&alex(&["validate", "-c", &config]));
    assert!(stdout.contains("ok: 2 buildings"), "{stdout}");
}

#[test]
fn missing_dataset_path_is_an_error() {
    let tmp = tempfile::tempdir().unwrap();
    let unset = write_config(tmp.path(), "unset.toml", "[dataset]\nkind = \"citylearn\"\n");
    let out = alex(&["run", "-c", &unset, "-s", "noderms", "-o", s(&tmp.path().join("run"))]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains(DATASET_ENV));

    let absent = write_config(
        tmp.path(),
        "absent.toml",
        "[dataset]\nkind = \"citylearn\"\npath = \"nowhere\"\n",
    );
    let out = alex(&["validate", "-c", &absent]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));

    let out = alex(&["run", "-c", s(&tmp.path().join("no_such.toml"))]);
    assert!(!out.status.success());
}

#[test]
fn seed_override_changes_the_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("run");
    ok(&alex(&["run", "-c", &mirror_config(), "--seed", "9", "-o", s(&dir)]));
    assert_eq!(read_manifest(&dir).unwrap().seed, 9);
}
