//! Run directories and cross-run comparison.
//!
//! A run directory holds (schema version 1):
//!
//! ```text
//! manifest.json              config snapshot, seed, hashes, convergence flag
//! config.toml                the resolved config, re-parseable
//! convergence.csv            one row per best-response visit
//! policies/<id>.csv          t,soc_index,target_index,value
//! trace.csv                  per-step, per-building trace plus community rows
//! metrics.json               the metric report
//! metrics_daily.csv          per-day intermediates
//! metrics_monthly.csv        per-month intermediates
//! net_load_hourly.csv          hour-of-day community net load (group,mean,std)
//! soc_hourly.csv               hour-of-day mean state of charge
//! net_load_seasonal.csv season:hour community net load
//! soc_seasonal.csv      season:hour mean state of charge
//! cumulative_bill.csv   per-step cumulative bill across buildings
//! ```
//!
//! Nothing in the directory carries a timestamp, so identical inputs give
//! byte-identical files.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::domain::{Calendar, CommunityDataset};
use crate::equilibrium::{background_with, battery_models};
use crate::error::{Error, Result};
use crate::ingest::{file_stem, CANONICAL_SCHEMA_VERSION};
use crate::mdp::{build_mdp, MarketBackground, Scenario};
use crate::metrics::{
    compute_metrics, profile_series, write_daily_csv, write_monthly_csv, write_profile_csv, Grouping, MetricsReport,
    Quantity,
};
use crate::simulate::{read_trace_summary, run_scenario, ScenarioRun, TRACE_SCHEMA_VERSION};
use crate::solver::{evaluate_policy, write_policy_csv};

pub const RUN_SCHEMA_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const TRACE_FILE: &str = "trace.csv";

/// Values closer than this count as ties when ranking runs.
pub const TIE_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub trace_schema_version: u32,
    pub dataset_schema_version: u32,
    pub tool_version: String,
    pub scenario: Scenario,
    pub seed: u64,
    /// SHA-256 of `config.toml`.
    pub config_sha256: String,
    pub config: serde_json::Value,
    pub buildings: usize,
    pub steps: usize,
    pub converged: bool,
    pub rounds: usize,
    pub final_distance: f64,
    pub threshold: f64,
    /// SHA-256 of every other file in the directory, keyed by relative path.
    pub files: BTreeMap<String, String>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

/// Writes every file of a finished run into `dir` and returns the manifest.
pub fn write_run_dir(
    dir: &Path,
    config: &RunConfig,
    ds: &CommunityDataset,
    scenario: Scenario,
    run: &ScenarioRun,
) -> Result<Manifest> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written: Vec<&str> = Vec::new();
    let mut files = BTreeMap::new();

    let config_text = config.to_toml()?;
    let config_path = dir.join("config.toml");
    fs::write(&config_path, &config_text).map_err(|e| Error::io(&config_path, e))?;

    let emit = |name: &str, f: &dyn Fn(&mut BufWriter<File>) -> Result<()>| -> Result<()> {
        let path = dir.join(name);
        let mut w = create(&path)?;
        f(&mut w)?;
        w.flush().map_err(|e| Error::io(&path, e))
    };

    emit("convergence.csv", &|w| run.convergence.write_csv(w))?;
    written.push("convergence.csv");

    // Values are each policy's own returns against the final joint policy.
    let mdp_config = config.equilibrium_config().mdp;
    let models = battery_models(ds, mdp_config.n_quant)?;
    let mut policy_files = Vec::new();
    for (k, (b, policy)) in ds.buildings.iter().zip(&run.joint.policies).enumerate() {
        let background = match scenario {
            Scenario::Alex => background_with(ds, &models, &run.joint, k)?,
            _ => MarketBackground::zeros(ds.step_count()),
        };
        let mdp = build_mdp(b, Some(&background), scenario, &ds.tariff, &mdp_config)?;
        let values = evaluate_policy(&mdp, policy)?;
        let name = format!("policies/{}.csv", file_stem(&b.id));
        emit(&name, &|w| write_policy_csv(w, policy, &values))?;
        policy_files.push(name);
    }

    emit(TRACE_FILE, &|w| run.trace.write_csv(w))?;
    written.push(TRACE_FILE);

    let series = run.trace.community_net_load();
    let calendar = &run.trace.calendar;
    let metrics = compute_metrics(&series, calendar)?;
    emit("metrics.json", &|w| {
        serde_json::to_writer_pretty(&mut *w, &metrics)?;
        w.write_all(b"\n").map_err(|e| Error::io("metrics.json", e))
    })?;
    written.push("metrics.json");
    emit("metrics_daily.csv", &|w| write_daily_csv(w, &series, calendar))?;
    emit("metrics_monthly.csv", &|w| write_monthly_csv(w, &series, calendar))?;
    written.extend(["metrics_daily.csv", "metrics_monthly.csv"]);

    let figures = [
        ("net_load_hourly.csv", Grouping::HourOfDay, Quantity::NetLoad),
        ("soc_hourly.csv", Grouping::HourOfDay, Quantity::MeanSoc),
        ("net_load_seasonal.csv", Grouping::HourOfDaySeason, Quantity::NetLoad),
        ("soc_seasonal.csv", Grouping::HourOfDaySeason, Quantity::MeanSoc),
        ("cumulative_bill.csv", Grouping::Step, Quantity::CumulativeMeanBill),
    ];
    for (name, grouping, quantity) in figures {
        let rows = profile_series(&run.trace, grouping, quantity);
        emit(name, &|w| write_profile_csv(w, &rows))?;
        written.push(name);
    }

    for name in written.iter().copied().chain(policy_files.iter().map(String::as_str)) {
        let path = dir.join(name);
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        files.insert(name.to_string(), sha256_hex(&bytes));
    }

    let ec = config.equilibrium_config();
    let manifest = Manifest {
        schema_version: RUN_SCHEMA_VERSION,
        trace_schema_version: TRACE_SCHEMA_VERSION,
        dataset_schema_version: CANONICAL_SCHEMA_VERSION,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        scenario,
        seed: config.seed,
        config_sha256: sha256_hex(config_text.as_bytes()),
        config: serde_json::to_value(config)?,
        buildings: ds.buildings.len(),
        steps: ds.step_count(),
        converged: run.converged(),
        rounds: run.convergence.round_count(),
        final_distance: run.convergence.final_distance(),
        threshold: ec.threshold,
        files,
    };
    emit(MANIFEST_FILE, &|w| {
        serde_json::to_writer_pretty(&mut *w, &manifest)?;
        w.write_all(b"\n").map_err(|e| Error::io(MANIFEST_FILE, e))
    })?;
    Ok(manifest)
}

/// Loads the dataset, solves and replays the scenario, and writes the run
/// directory.
pub fn execute_run(config: &RunConfig, scenario: Scenario, dir: &Path) -> Result<Manifest> {
    let ds = config.load_dataset()?;
    let run = run_scenario(&ds, scenario, &config.equilibrium_config())?;
    write_run_dir(dir, config, &ds, scenario, &run)
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join(MANIFEST_FILE);
    if !path.exists() {
        return Err(Error::MissingFile(path));
    }
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: Manifest = serde_json::from_str(&text)?;
    if manifest.schema_version != RUN_SCHEMA_VERSION {
        return Err(Error::Incompatible(format!(
            "{} has schema version {}, expected {RUN_SCHEMA_VERSION}",
            path.display(),
            manifest.schema_version
        )));
    }
    Ok(manifest)
}

/// A run's metrics, recomputed from its trace file.
#[derive(Debug, Clone)]
pub struct RunMetrics {
    pub name: String,
    pub dir: PathBuf,
    pub scenario: Scenario,
    pub calendar: Calendar,
    pub metrics: MetricsReport,
}

pub fn load_run_metrics(dir: &Path) -> Result<RunMetrics> {
    let manifest = read_manifest(dir)?;
    let path = dir.join(TRACE_FILE);
    if !path.exists() {
        return Err(Error::MissingFile(path));
    }
    let file = File::open(&path).map_err(|e| Error::io(&path, e))?;
    let summary = read_trace_summary(std::io::BufReader::new(file))?;
    let metrics = compute_metrics(&summary.community_net_load, &summary.calendar)?;
    Ok(RunMetrics {
        name: manifest.scenario.key().to_string(),
        dir: dir.to_path_buf(),
        scenario: manifest.scenario,
        calendar: summary.calendar,
        metrics,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub key: &'static str,
    pub label: &'static str,
    pub values: Vec<f64>,
    /// Columns whose magnitude ties the smallest one.
    pub best: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone)]
pub struct Comparison {
    pub columns: Vec<String>,
    pub rows: Vec<TableRow>,
    /// Mean daily net consumption per column.
    pub consumption: Vec<f64>,
    pub checks: Vec<Check>,
}

/// `|a| <= |b|` up to ties; two undefined values tie.
fn le(a: f64, b: f64) -> bool {
    (a.is_nan() && b.is_nan()) || a.abs() <= b.abs() + TIE_EPS
}

/// Builds the side-by-side table and, when the matching scenarios are
/// present, the ordering checks.
pub fn compare_runs(runs: &[RunMetrics]) -> Result<Comparison> {
    if runs.len() < 2 {
        return Err(Error::InvalidArgument("compare needs at least two runs".into()));
    }
    for r in &runs[1..] {
        if r.calendar != runs[0].calendar {
            return Err(Error::Incompatible(format!(
                "{} and {} cover different calendars ({} vs {} steps)",
                runs[0].dir.display(),
                r.dir.display(),
                runs[0].calendar.step_count(),
                r.calendar.step_count()
            )));
        }
    }
    // Disambiguate repeated scenarios by position.
    let mut columns: Vec<String> = runs.iter().map(|r| r.name.clone()).collect();
    for i in 0..columns.len() {
        if runs.iter().filter(|r| r.name == runs[i].name).count() > 1 {
            columns[i] = format!("{}#{}", runs[i].name, i + 1);
        }
    }

    let tables: Vec<_> = runs.iter().map(|r| r.metrics.rows()).collect();
    let rows = (0..tables[0].len())
        .map(|k| {
            let values: Vec<f64> = tables.iter().map(|t| t[k].value).collect();
            let min = values.iter().map(|v| v.abs()).fold(f64::INFINITY, f64::min);
            let best = if min.is_finite() {
                (0..values.len())
                    .filter(|&i| values[i].abs() <= min + TIE_EPS)
                    .collect()
            } else {
                Vec::new()
            };
            TableRow {
                key: tables[0][k].key,
                label: tables[0][k].label,
                values,
                best,
            }
        })
        .collect::<Vec<_>>();
    let consumption = runs.iter().map(|r| r.metrics.daily_consumption()).collect();

    let find = |s: Scenario| runs.iter().position(|r| r.scenario == s);
    let mut checks = Vec::new();
    if let Some(a) = find(Scenario::Alex) {
        for other in [Scenario::NoDerms, Scenario::IndividualDerms] {
            if let Some(o) = find(other) {
                let failing: Vec<&str> = rows
                    .iter()
                    .filter(|row| !le(row.values[a], row.values[o]))
                    .map(|row| row.key)
                    .collect();
                checks.push(Check {
                    name: format!("alex improves or ties {} on every metric", other.key()),
                    passed: failing.is_empty(),
                    detail: if failing.is_empty() {
                        "all metrics".into()
                    } else {
                        format!("worse on {}", failing.join(", "))
                    },
                });
            }
        }
        if let (Some(i), Some(n)) = (find(Scenario::IndividualDerms), find(Scenario::NoDerms)) {
            let c = |k: usize| runs[k].metrics.daily_consumption();
            checks.push(Check {
                name: "consumption alex >= individual >= noderms".into(),
                passed: c(a) >= c(i) - TIE_EPS && c(i) >= c(n) - TIE_EPS,
                detail: format!("{:.4} / {:.4} / {:.4} kWh per day", c(a), c(i), c(n)),
            });
        }
        if let Some(i) = find(Scenario::IndividualDerms) {
            let (ma, mi) = (&runs[a].metrics, &runs[i].metrics);
            let passed = ma.avg_daily_import.abs() < mi.avg_daily_import.abs()
                && ma.avg_daily_export.abs() < mi.avg_daily_export.abs();
            checks.push(Check {
                name: "alex trades less with the grid than individual".into(),
                passed,
                detail: format!(
                    "import {:.4} vs {:.4}, export {:.4} vs {:.4}",
                    ma.avg_daily_import, mi.avg_daily_import, ma.avg_daily_export, mi.avg_daily_export
                ),
            });
        }
    }
    Ok(Comparison {
        columns,
        rows,
        consumption,
        checks,
    })
}

impl Comparison {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["metric".to_string(), "label".to_string()];
        header.extend(self.columns.iter().cloned());
        header.push("best".into());
        w.write_record(&header)?;
        for row in &self.rows {
            let mut rec = vec![row.key.to_string(), row.label.to_string()];
            rec.extend(row.values.iter().map(|v| v.to_string()));
            rec.push(
                row.best
                    .iter()
                    .map(|&i| self.columns[i].as_str())
                    .collect::<Vec<_>>()
                    .join(";"),
            );
            w.write_record(&rec)?;
        }
        let mut rec = vec!["daily_consumption".to_string(), "E_d+ + E_d-".to_string()];
        rec.extend(self.consumption.iter().map(|v| v.to_string()));
        rec.push(String::new());
        w.write_record(&rec)?;
        w.flush().map_err(|e| Error::io("comparison csv", e))?;
        Ok(())
    }

    /// Aligned plain-text table; `*` marks the best value in each row.
    pub fn to_text(&self) -> String {
        let label_width = self.rows.iter().map(|r| r.label.len()).max().unwrap_or(0).max(16);
        let col_width = self.columns.iter().map(String::len).max().unwrap_or(0).max(10) + 2;
        let mut s = format!("{:label_width$}", "metric");
        for c in &self.columns {
            s += &format!("{c:>col_width$}");
        }
        s.push('\n');
        for row in &self.rows {
            s += &format!("{:label_width$}", row.label);
            for (i, v) in row.values.iter().enumerate() {
                let mark = if row.best.contains(&i) { "*" } else { " " };
                s += &format!("{:>w$}{mark}", format!("{v:.4}"), w = col_width - 1);
            }
            s.push('\n');
        }
        s += &format!("{:label_width$}", "daily consumption");
        for v in &self.consumption {
            s += &format!("{:>w$} ", format!("{v:.4}"), w = col_width - 1);
        }
        s.push('\n');
        for c in &self.checks {
            s += &format!("{} {}: {}\n", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
        }
        s
    }
}
