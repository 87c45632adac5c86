//! Community net-load metrics and figure-ready profile series.
//!
//! All metrics depend only on the community net load `E_B` and the calendar.
//! Lower magnitudes are better everywhere, which is why the load factor is
//! reported as its complement.

use std::io::Write;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::domain::{Calendar, Season};
use crate::error::{Error, Result};
use crate::simulate::SimulationTrace;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Flow {
    Import,
    Export,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Extreme {
    Peak,
    Valley,
}

fn check_len(series: &[f64], calendar: &Calendar) -> Result<()> {
    if series.is_empty() {
        return Err(Error::EmptySeries);
    }
    if series.len() != calendar.step_count() {
        return Err(Error::InvalidArgument(format!(
            "series has {} steps, calendar {}",
            series.len(),
            calendar.step_count()
        )));
    }
    Ok(())
}

fn daily<F: Fn(&[f64]) -> f64>(series: &[f64], calendar: &Calendar, f: F) -> Vec<f64> {
    calendar.days().into_iter().map(|d| f(&series[d])).collect()
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn max_of(xs: &[f64]) -> f64 {
    xs.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

fn min_of(xs: &[f64]) -> f64 {
    xs.iter().copied().fold(f64::INFINITY, f64::min)
}

/// Average daily imported energy, or exported energy carrying a negative sign.
pub fn avg_daily_energy(series: &[f64], calendar: &Calendar, flow: Flow) -> Result<f64> {
    check_len(series, calendar)?;
    let per_day = daily(series, calendar, |d| match flow {
        Flow::Import => d.iter().map(|e| e.max(0.0)).sum(),
        Flow::Export => d.iter().map(|e| e.min(0.0)).sum(),
    });
    Ok(mean(&per_day))
}

/// Mean over days of the daily maximum (peak) or minimum (valley).
pub fn avg_daily_extreme(series: &[f64], calendar: &Calendar, which: Extreme) -> Result<f64> {
    check_len(series, calendar)?;
    let per_day = daily(series, calendar, |d| match which {
        Extreme::Peak => max_of(d),
        Extreme::Valley => min_of(d),
    });
    Ok(mean(&per_day))
}

pub fn absolute_extreme(series: &[f64], which: Extreme) -> Result<f64> {
    if series.is_empty() {
        return Err(Error::EmptySeries);
    }
    Ok(match which {
        Extreme::Peak => max_of(series),
        Extreme::Valley => min_of(series),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ramping {
    /// Mean over days of the summed absolute step-to-step change.
    pub daily_sum: f64,
    /// Mean absolute step-to-step change over every step with a predecessor.
    pub per_step: f64,
}

/// Ramping of the net load. Differences run across day boundaries; only the
/// very first step has no predecessor.
pub fn avg_daily_ramping(series: &[f64], calendar: &Calendar) -> Result<Ramping> {
    check_len(series, calendar)?;
    let grad: Vec<f64> = std::iter::once(0.0)
        .chain(series.windows(2).map(|w| (w[1] - w[0]).abs()))
        .collect();
    let per_day = daily(&grad, calendar, |d| d.iter().sum());
    let per_step = if series.len() > 1 {
        grad[1..].iter().sum::<f64>() / (series.len() - 1) as f64
    } else {
        0.0
    };
    Ok(Ramping {
        daily_sum: mean(&per_day),
        per_step,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoadFactor {
    pub complement: f64,
    /// Windows left out because their maximum was not positive.
    pub skipped: usize,
}

/// Mean over windows of `1 - mean/max`.
pub fn load_factor_complement(series: &[f64], windows: &[Range<usize>]) -> Result<LoadFactor> {
    let mut values = Vec::with_capacity(windows.len());
    let mut skipped = 0;
    for w in windows {
        let slice = series
            .get(w.clone())
            .ok_or_else(|| Error::InvalidArgument(format!("window {w:?} outside the series")))?;
        let peak = max_of(slice);
        if slice.is_empty() || peak <= 0.0 {
            skipped += 1;
            continue;
        }
        values.push(1.0 - mean(slice) / peak);
    }
    if values.is_empty() {
        return Err(Error::AllWindowsSkipped);
    }
    Ok(LoadFactor {
        complement: mean(&values),
        skipped,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub avg_daily_import: f64,
    pub avg_daily_export: f64,
    pub avg_daily_peak: f64,
    pub avg_daily_valley: f64,
    pub max_peak: f64,
    pub min_valley: f64,
    pub ramping: Ramping,
    /// `None` when no window has a positive peak (e.g. a perfectly balanced
    /// community).
    pub daily_load_factor: Option<LoadFactor>,
    pub monthly_load_factor: Option<LoadFactor>,
    pub step_count: usize,
    pub day_count: usize,
    pub month_count: usize,
}

/// One row of the comparison table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricRow {
    pub key: &'static str,
    pub label: &'static str,
    pub value: f64,
}

impl MetricsReport {
    /// Daily import plus (negative) export: net energy consumed per day.
    pub fn daily_consumption(&self) -> f64 {
        self.avg_daily_import + self.avg_daily_export
    }

    /// The comparison rows; ramping appears under both normalizations and an
    /// undefined load factor shows as NaN.
    pub fn rows(&self) -> Vec<MetricRow> {
        let lf = |l: &Option<LoadFactor>| l.map_or(f64::NAN, |l| l.complement);
        let row = |key, label, value| MetricRow { key, label, value };
        vec![
            row("avg_daily_import", "E_d+", self.avg_daily_import),
            row("avg_daily_export", "E_d-", self.avg_daily_export),
            row("avg_daily_peak", "P_d+", self.avg_daily_peak),
            row("avg_daily_valley", "P_d-", self.avg_daily_valley),
            row("max_peak", "P+", self.max_peak),
            row("min_valley", "P-", self.min_valley),
            row("ramping_per_step", "R_d (per step)", self.ramping.per_step),
            row("ramping_daily_sum", "R_d (daily sum)", self.ramping.daily_sum),
            row("daily_load_factor_complement", "1-L_d", lf(&self.daily_load_factor)),
            row("monthly_load_factor_complement", "1-L_m", lf(&self.monthly_load_factor)),
        ]
    }
}

fn optional(lf: Result<LoadFactor>) -> Result<Option<LoadFactor>> {
    match lf {
        Ok(lf) => Ok(Some(lf)),
        Err(Error::AllWindowsSkipped) => Ok(None),
        Err(e) => Err(e),
    }
}

pub fn compute_metrics(series: &[f64], calendar: &Calendar) -> Result<MetricsReport> {
    check_len(series, calendar)?;
    let months = calendar.month_boundaries();
    Ok(MetricsReport {
        avg_daily_import: avg_daily_energy(series, calendar, Flow::Import)?,
        avg_daily_export: avg_daily_energy(series, calendar, Flow::Export)?,
        avg_daily_peak: avg_daily_extreme(series, calendar, Extreme::Peak)?,
        avg_daily_valley: avg_daily_extreme(series, calendar, Extreme::Valley)?,
        max_peak: absolute_extreme(series, Extreme::Peak)?,
        min_valley: absolute_extreme(series, Extreme::Valley)?,
        ramping: avg_daily_ramping(series, calendar)?,
        daily_load_factor: optional(load_factor_complement(series, &calendar.days()))?,
        monthly_load_factor: optional(load_factor_complement(series, &months))?,
        step_count: calendar.step_count(),
        day_count: calendar.day_count(),
        month_count: months.len(),
    })
}

/// Per-day and per-month intermediates as CSV.
pub fn write_daily_csv<W: Write>(out: W, series: &[f64], calendar: &Calendar) -> Result<()> {
    check_len(series, calendar)?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "day",
        "month",
        "import_kwh",
        "export_kwh",
        "peak_kwh",
        "valley_kwh",
        "ramp_kwh",
        "load_factor_complement",
    ])?;
    let mut prev: Option<f64> = None;
    for (d, range) in calendar.days().into_iter().enumerate() {
        let s = &series[range];
        let mut ramp = 0.0;
        for &e in s {
            if let Some(p) = prev {
                ramp += (e - p).abs();
            }
            prev = Some(e);
        }
        let peak = max_of(s);
        let lf = if peak > 0.0 {
            (1.0 - mean(s) / peak).to_string()
        } else {
            String::new()
        };
        w.write_record([
            d.to_string(),
            calendar.day_months()[d].to_string(),
            s.iter().map(|e| e.max(0.0)).sum::<f64>().to_string(),
            s.iter().map(|e| e.min(0.0)).sum::<f64>().to_string(),
            peak.to_string(),
            min_of(s).to_string(),
            ramp.to_string(),
            lf,
        ])?;
    }
    w.flush().map_err(|e| Error::io("daily csv", e))?;
    Ok(())
}

pub fn write_monthly_csv<W: Write>(out: W, series: &[f64], calendar: &Calendar) -> Result<()> {
    check_len(series, calendar)?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "window",
        "month",
        "start",
        "end",
        "mean_kwh",
        "max_kwh",
        "load_factor_complement",
    ])?;
    for (k, range) in calendar.month_boundaries().into_iter().enumerate() {
        let month = calendar.day_months()[calendar.day_of_step(range.start)];
        let s = &series[range.clone()];
        let peak = max_of(s);
        let lf = if peak > 0.0 {
            (1.0 - mean(s) / peak).to_string()
        } else {
            String::new()
        };
        w.write_record([
            k.to_string(),
            month.to_string(),
            range.start.to_string(),
            range.end.to_string(),
            mean(s).to_string(),
            peak.to_string(),
            lf,
        ])?;
    }
    w.flush().map_err(|e| Error::io("monthly csv", e))?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Grouping {
    HourOfDay,
    HourOfDaySeason,
    /// No grouping: one row per step, spread taken across buildings.
    Step,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quantity {
    NetLoad,
    MeanSoc,
    CumulativeMeanBill,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProfileRow {
    pub group: String,
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let m = mean(xs);
    let var = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64;
    (m, var.sqrt())
}

/// Grouped mean and standard-deviation bands of a trace quantity.
///
/// For hour-of-day groupings the community value (`E_B`, mean SoC, or mean
/// cumulative bill) of each step is grouped; for `Step` each step's
/// per-building values are summarized instead.
pub fn profile_series(trace: &SimulationTrace, grouping: Grouping, quantity: Quantity) -> Vec<ProfileRow> {
    let cal = &trace.calendar;
    if grouping == Grouping::Step {
        let cumulative = trace.cumulative_bills();
        return trace
            .steps
            .iter()
            .map(|s| {
                let values: Vec<f64> = match quantity {
                    Quantity::NetLoad => s.buildings.iter().map(|b| b.net_load).collect(),
                    Quantity::MeanSoc => s.buildings.iter().map(|b| b.soc).collect(),
                    Quantity::CumulativeMeanBill => cumulative[s.t].clone(),
                };
                let (mean, std) = mean_std(&values);
                ProfileRow {
                    group: s.t.to_string(),
                    mean,
                    std,
                }
            })
            .collect();
    }

    let values: Vec<f64> = match quantity {
        Quantity::NetLoad => trace.community_net_load(),
        Quantity::MeanSoc => trace.mean_soc(),
        Quantity::CumulativeMeanBill => {
            let n = trace.building_ids.len() as f64;
            trace
                .cumulative_bills()
                .iter()
                .map(|c| c.iter().sum::<f64>() / n)
                .collect()
        }
    };
    let hours = cal.steps_per_day();
    let seasons: Vec<Option<Season>> = match grouping {
        Grouping::HourOfDaySeason => Season::ALL.iter().copied().map(Some).collect(),
        _ => vec![None],
    };
    let mut buckets: Vec<Vec<f64>> = vec![Vec::new(); seasons.len() * hours];
    for (t, v) in values.iter().enumerate() {
        let s = match grouping {
            Grouping::HourOfDaySeason => cal.season_of_step(t) as usize,
            _ => 0,
        };
        buckets[s * hours + cal.hour_of_step(t)].push(*v);
    }
    let mut out = Vec::new();
    for (si, season) in seasons.iter().enumerate() {
        for h in 0..hours {
            let bucket = &buckets[si * hours + h];
            if bucket.is_empty() {
                continue;
            }
            let (mean, std) = mean_std(bucket);
            let group = match season {
                Some(s) => format!("{}:{h:02}", s.name()),
                None => format!("{h:02}"),
            };
            out.push(ProfileRow { group, mean, std });
        }
    }
    out
}

/// Writes profile rows as `group,mean,std`.
pub fn write_profile_csv<W: Write>(out: W, rows: &[ProfileRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["group", "mean", "std"])?;
    for r in rows {
        w.write_record([r.group.clone(), r.mean.to_string(), r.std.to_string()])?;
    }
    w.flush().map_err(|e| Error::io("profile csv", e))?;
    Ok(())
}
