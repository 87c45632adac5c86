//! Core data types shared by every stage of the simulator.
//!
//! Energies are kWh per hourly step throughout. With hourly resolution a kWh
//! per step and a kW of average power are the same number, so nothing here
//! converts between the two.

use std::collections::HashSet;
use std::fmt;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Non-leap month lengths, January first.
const MONTH_DAYS: [usize; 12] = [31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Season {
    Winter,
    Spring,
    Summer,
    Fall,
}

impl Season {
    pub const ALL: [Season; 4] = [Season::Winter, Season::Spring, Season::Summer, Season::Fall];

    /// Meteorological seasons: Dec-Feb is winter, Mar-May spring, and so on.
    pub fn of_month(month: u8) -> Season {
        match month {
            12 | 1 | 2 => Season::Winter,
            3..=5 => Season::Spring,
            6..=8 => Season::Summer,
            _ => Season::Fall,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Season::Winter => "winter",
            Season::Spring => "spring",
            Season::Summer => "summer",
            Season::Fall => "fall",
        }
    }
}

/// Step-to-day and day-to-month layout of a dataset.
///
/// Days are consecutive blocks of `steps_per_day` steps starting at step 0;
/// the last day may be shorter when `step_count` is not a multiple of it.
/// Each day carries a calendar month (1-12). Months are the maximal runs of
/// consecutive days sharing a label, so they always partition the series.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Calendar {
    step_count: usize,
    steps_per_day: usize,
    day_months: Vec<u8>,
}

impl Calendar {
    pub fn new(step_count: usize, steps_per_day: usize, day_months: Vec<u8>) -> Result<Self> {
        let calendar = Calendar {
            step_count,
            steps_per_day,
            day_months,
        };
        let problems = calendar.violations();
        if problems.is_empty() {
            Ok(calendar)
        } else {
            Err(Error::InvalidArgument(
                problems.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "),
            ))
        }
    }

    /// Hourly calendar starting at the given month and day of month, using
    /// non-leap month lengths.
    pub fn hourly_from(step_count: usize, start_month: u8, start_day: usize) -> Result<Self> {
        if !(1..=12).contains(&start_month) {
            return Err(Error::InvalidArgument(format!("start month {start_month}")));
        }
        let steps_per_day = 24;
        let days = step_count.div_ceil(steps_per_day);
        let mut month = start_month as usize - 1;
        let mut day_in_month = start_day.max(1);
        if day_in_month > MONTH_DAYS[month] {
            return Err(Error::InvalidArgument(format!(
                "start day {start_day} beyond month {start_month}"
            )));
        }
        let mut day_months = Vec::with_capacity(days);
        for _ in 0..days {
            day_months.push(month as u8 + 1);
            day_in_month += 1;
            if day_in_month > MONTH_DAYS[month] {
                day_in_month = 1;
                month = (month + 1) % 12;
            }
        }
        Calendar::new(step_count, steps_per_day, day_months)
    }

    pub fn step_count(&self) -> usize {
        self.step_count
    }

    pub fn steps_per_day(&self) -> usize {
        self.steps_per_day
    }

    pub fn day_count(&self) -> usize {
        self.day_months.len()
    }

    pub fn day_months(&self) -> &[u8] {
        &self.day_months
    }

    pub fn day_of_step(&self, t: usize) -> usize {
        t / self.steps_per_day
    }

    pub fn hour_of_step(&self, t: usize) -> usize {
        t % self.steps_per_day
    }

    pub fn season_of_step(&self, t: usize) -> Season {
        Season::of_month(self.day_months[self.day_of_step(t)])
    }

    pub fn days(&self) -> Vec<Range<usize>> {
        (0..self.day_count())
            .map(|d| {
                let start = d * self.steps_per_day;
                start..(start + self.steps_per_day).min(self.step_count)
            })
            .collect()
    }

    pub fn month_boundaries(&self) -> Vec<Range<usize>> {
        let mut out = Vec::new();
        let mut start_day = 0;
        for d in 1..=self.day_count() {
            if d == self.day_count() || self.day_months[d] != self.day_months[start_day] {
                out.push(start_day * self.steps_per_day..(d * self.steps_per_day).min(self.step_count));
                start_day = d;
            }
        }
        out
    }

    /// Step ranges of each season, in `Season::ALL` order. A season may span
    /// several disjoint ranges (e.g. a year starting in August).
    pub fn season_boundaries(&self) -> Vec<(Season, Vec<Range<usize>>)> {
        let mut out: Vec<(Season, Vec<Range<usize>>)> = Season::ALL.iter().map(|s| (*s, Vec::new())).collect();
        for (range, month) in self.days().into_iter().zip(&self.day_months) {
            let ranges = &mut out[Season::of_month(*month) as usize].1;
            match ranges.last_mut() {
                Some(last) if last.end == range.start => last.end = range.end,
                _ => ranges.push(range),
            }
        }
        out
    }

    fn violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.steps_per_day == 0 {
            out.push(Violation::calendar("steps_per_day must be positive"));
            return out;
        }
        let expected_days = self.step_count.div_ceil(self.steps_per_day);
        if self.day_months.len() != expected_days {
            out.push(Violation::calendar(format!(
                "{} day labels for {} steps of {} per day (expected {expected_days})",
                self.day_months.len(),
                self.step_count,
                self.steps_per_day
            )));
        }
        for (d, m) in self.day_months.iter().enumerate() {
            if !(1..=12).contains(m) {
                out.push(Violation::calendar(format!("day {d} has month label {m}")));
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridTariff {
    /// Price paid per kWh imported from the grid.
    pub grid_buy: f64,
    /// Price received per kWh exported to the grid.
    pub grid_sell: f64,
    pub market_min: f64,
    pub market_max: f64,
    /// Flat fee charged to every building each step.
    #[serde(default)]
    pub fees_per_step: f64,
}

impl Default for GridTariff {
    fn default() -> Self {
        GridTariff {
            grid_buy: 0.25,
            grid_sell: 0.05,
            market_min: 0.07,
            market_max: 0.23,
            fees_per_step: 0.0,
        }
    }
}

impl GridTariff {
    fn violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let fields = [
            ("grid_buy", self.grid_buy),
            ("grid_sell", self.grid_sell),
            ("market_min", self.market_min),
            ("market_max", self.market_max),
            ("fees_per_step", self.fees_per_step),
        ];
        for (name, v) in fields {
            if !v.is_finite() {
                out.push(Violation::tariff(format!("{name} is not finite")));
            }
        }
        if !out.is_empty() {
            return out;
        }
        if !(self.grid_sell < self.market_min && self.market_min <= self.market_max && self.market_max < self.grid_buy)
        {
            out.push(Violation::tariff(format!(
                "profitability gap violated: need grid_sell {} < market_min {} <= market_max {} < grid_buy {}",
                self.grid_sell, self.market_min, self.market_max, self.grid_buy
            )));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatterySpec {
    pub capacity: f64,
    pub max_charge_power: f64,
    pub max_discharge_power: f64,
    /// Fraction of grid-side energy that ends up stored when charging.
    pub charge_efficiency: f64,
    /// Fraction of removed stored energy delivered to the building.
    pub discharge_efficiency: f64,
    #[serde(default)]
    pub self_discharge: f64,
    #[serde(default)]
    pub initial_soc: f64,
}

impl BatterySpec {
    /// Splits a single round-trip efficiency evenly between the two directions.
    pub fn from_round_trip(capacity: f64, max_power: f64, round_trip: f64) -> Self {
        let eta = round_trip.sqrt();
        BatterySpec {
            capacity,
            max_charge_power: max_power,
            max_discharge_power: max_power,
            charge_efficiency: eta,
            discharge_efficiency: eta,
            self_discharge: 0.0,
            initial_soc: 0.0,
        }
    }

    fn violations(&self, building: &str) -> Vec<Violation> {
        let mut out = Vec::new();
        let mut bad = |what: String| out.push(Violation::battery(building, what));
        if !(self.capacity.is_finite() && self.capacity > 0.0) {
            bad(format!("capacity {} must be positive", self.capacity));
        }
        for (name, v) in [
            ("max_charge_power", self.max_charge_power),
            ("max_discharge_power", self.max_discharge_power),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                bad(format!("{name} {v} must be non-negative"));
            }
        }
        for (name, v) in [
            ("charge_efficiency", self.charge_efficiency),
            ("discharge_efficiency", self.discharge_efficiency),
        ] {
            if !(v > 0.0 && v <= 1.0) {
                bad(format!("{name} {v} outside (0, 1]"));
            }
        }
        if !(self.self_discharge >= 0.0 && self.self_discharge < 1.0) {
            bad(format!("self_discharge {} outside [0, 1)", self.self_discharge));
        }
        if !(self.initial_soc >= 0.0 && self.initial_soc <= self.capacity) {
            bad(format!(
                "initial_soc {} outside [0, {}]",
                self.initial_soc, self.capacity
            ));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildingRecord {
    pub id: String,
    pub load: Vec<f64>,
    pub generation: Vec<f64>,
    pub battery: BatterySpec,
}

impl BuildingRecord {
    /// Load minus generation, the net load with an idle battery.
    pub fn residual(&self, t: usize) -> f64 {
        self.load[t] - self.generation[t]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommunityDataset {
    pub calendar: Calendar,
    pub tariff: GridTariff,
    pub buildings: Vec<BuildingRecord>,
}

impl CommunityDataset {
    pub fn step_count(&self) -> usize {
        self.calendar.step_count()
    }

    pub fn building_index(&self, id: &str) -> Option<usize> {
        self.buildings.iter().position(|b| b.id == id)
    }

    /// Returns the dataset unchanged when valid, otherwise every violation.
    pub fn validated(self) -> Result<Self> {
        let problems = validate_dataset(&self);
        if problems.is_empty() {
            Ok(self)
        } else {
            Err(Error::InvalidDataset(problems.iter().map(|v| v.to_string()).collect()))
        }
    }
}

/// One broken invariant, located as precisely as possible.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub building: Option<String>,
    pub series: Option<&'static str>,
    pub index: Option<usize>,
    pub message: String,
}

impl Violation {
    fn calendar(message: impl Into<String>) -> Self {
        Violation {
            building: None,
            series: Some("calendar"),
            index: None,
            message: message.into(),
        }
    }

    fn tariff(message: impl Into<String>) -> Self {
        Violation {
            building: None,
            series: Some("tariff"),
            index: None,
            message: message.into(),
        }
    }

    fn battery(building: &str, message: String) -> Self {
        Violation {
            building: Some(building.to_string()),
            series: Some("battery"),
            index: None,
            message,
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(b) = &self.building {
            write!(f, "building `{b}`: ")?;
        }
        if let Some(s) = self.series {
            write!(f, "{s}")?;
            if let Some(i) = self.index {
                write!(f, "[{i}]")?;
            }
            write!(f, ": ")?;
        }
        write!(f, "{}", self.message)
    }
}

/// Checks every dataset invariant; an empty list means the dataset is usable
/// by all downstream stages.
pub fn validate_dataset(ds: &CommunityDataset) -> Vec<Violation> {
    let mut out = ds.calendar.violations();
    out.extend(ds.tariff.violations());
    if ds.buildings.is_empty() {
        out.push(Violation {
            building: None,
            series: None,
            index: None,
            message: "community has no buildings".into(),
        });
    }
    let steps = ds.calendar.step_count();
    let mut seen = HashSet::new();
    for b in &ds.buildings {
        if !seen.insert(b.id.as_str()) {
            out.push(Violation {
                building: Some(b.id.clone()),
                series: None,
                index: None,
                message: "duplicate building id".into(),
            });
        }
        out.extend(b.battery.violations(&b.id));
        for (name, series) in [("load", &b.load), ("generation", &b.generation)] {
            if series.len() != steps {
                out.push(Violation {
                    building: Some(b.id.clone()),
                    series: Some(name),
                    index: None,
                    message: format!("length {} differs from calendar length {steps}", series.len()),
                });
            }
            for (i, v) in series.iter().enumerate() {
                if !v.is_finite() {
                    out.push(Violation {
                        building: Some(b.id.clone()),
                        series: Some(name),
                        index: Some(i),
                        message: format!("value {v} is not finite"),
                    });
                } else if *v < 0.0 {
                    out.push(Violation {
                        building: Some(b.id.clone()),
                        series: Some(name),
                        index: Some(i),
                        message: format!("value {v} is negative"),
                    });
                }
            }
        }
    }
    out
}
