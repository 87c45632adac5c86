//! Replays a joint policy through the market and records the per-step trace
//! that metrics and reports are computed from.

use std::io::{Read, Write};

use serde::Serialize;

use crate::domain::{Calendar, CommunityDataset};
use crate::equilibrium::{
    battery_models, rollout, solve_equilibrium, ConvergenceTrace, EquilibriumConfig, JointPolicy,
};
use crate::error::{Error, Result};
use crate::market::{building_bill, curve_price, make_bid_ask, settle_grid_only, settle_round, SettlementRound};
use crate::mdp::Scenario;

/// Version of the trace CSV layout written by [`SimulationTrace::write_csv`].
pub const TRACE_SCHEMA_VERSION: u32 = 1;

/// Building id used for the per-step community rows of the trace CSV.
pub const COMMUNITY_ROW: &str = "community";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BuildingStep {
    pub net_load: f64,
    /// Stored energy after this step's battery action (kWh).
    pub soc: f64,
    pub battery_energy: f64,
    pub bill: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepRecord {
    pub t: usize,
    pub buildings: Vec<BuildingStep>,
    pub round: SettlementRound,
    pub community_net_load: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationTrace {
    pub scenario: Scenario,
    pub calendar: Calendar,
    pub building_ids: Vec<String>,
    pub steps: Vec<StepRecord>,
}

impl SimulationTrace {
    pub fn community_net_load(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.community_net_load).collect()
    }

    pub fn mean_soc(&self) -> Vec<f64> {
        let n = self.building_ids.len() as f64;
        self.steps
            .iter()
            .map(|s| s.buildings.iter().map(|b| b.soc).sum::<f64>() / n)
            .collect()
    }

    /// Running bill total per building, `[t][building]`.
    pub fn cumulative_bills(&self) -> Vec<Vec<f64>> {
        let mut acc = vec![0.0; self.building_ids.len()];
        self.steps
            .iter()
            .map(|s| {
                for (a, b) in acc.iter_mut().zip(&s.buildings) {
                    *a += b.bill;
                }
                acc.clone()
            })
            .collect()
    }

    pub fn total_bills(&self) -> Vec<f64> {
        self.cumulative_bills()
            .pop()
            .unwrap_or_else(|| vec![0.0; self.building_ids.len()])
    }

    /// One row per `(t, building)` followed by a community row per step.
    ///
    /// Columns: `t,day,hour,month,building,net_load_kwh,soc_kwh,battery_kwh,
    /// market_buy_kwh,market_sell_kwh,grid_buy_kwh,grid_sell_kwh,market_price,
    /// cleared_kwh,bill,cumulative_bill`. Community rows sum energies and
    /// bills over buildings and report the mean SoC.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "t",
            "day",
            "hour",
            "month",
            "building",
            "net_load_kwh",
            "soc_kwh",
            "battery_kwh",
            "market_buy_kwh",
            "market_sell_kwh",
            "grid_buy_kwh",
            "grid_sell_kwh",
            "market_price",
            "cleared_kwh",
            "bill",
            "cumulative_bill",
        ])?;
        let cumulative = self.cumulative_bills();
        let n = self.building_ids.len() as f64;
        for (s, cum) in self.steps.iter().zip(&cumulative) {
            let day = self.calendar.day_of_step(s.t);
            let prefix = [
                s.t.to_string(),
                day.to_string(),
                self.calendar.hour_of_step(s.t).to_string(),
                self.calendar.day_months()[day].to_string(),
            ];
            let mut sums = [0.0f64; 8];
            for (k, b) in s.buildings.iter().enumerate() {
                let a = &s.round.allocations[k];
                let vals = [
                    b.net_load,
                    b.soc,
                    b.battery_energy,
                    a.market_buy,
                    a.market_sell,
                    a.grid_buy,
                    a.grid_sell,
                    b.bill,
                ];
                for (acc, v) in sums.iter_mut().zip(vals) {
                    *acc += v;
                }
                let mut row: Vec<String> = prefix.to_vec();
                row.push(self.building_ids[k].clone());
                row.extend(vals[..7].iter().map(|v| v.to_string()));
                row.push(s.round.market_price.to_string());
                row.push(s.round.cleared_quantity.to_string());
                row.push(b.bill.to_string());
                row.push(cum[k].to_string());
                w.write_record(&row)?;
            }
            sums[0] = s.community_net_load;
            sums[1] /= n;
            let mut row: Vec<String> = prefix.to_vec();
            row.push(COMMUNITY_ROW.to_string());
            row.extend(sums[..7].iter().map(|v| v.to_string()));
            row.push(s.round.market_price.to_string());
            row.push(s.round.cleared_quantity.to_string());
            row.push(sums[7].to_string());
            row.push(cum.iter().sum::<f64>().to_string());
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| Error::io("trace csv", e))?;
        Ok(())
    }
}

/// Community series recovered from a trace CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceSummary {
    pub calendar: Calendar,
    pub community_net_load: Vec<f64>,
}

/// Reads the community rows of a trace CSV back into a net-load series and
/// the calendar it was recorded on.
pub fn read_trace_summary<R: Read>(input: R) -> Result<TraceSummary> {
    let mut r = csv::Reader::from_reader(input);
    let headers = r.headers()?.clone();
    let col = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| Error::Parse {
            context: "trace csv".into(),
            message: format!("missing column `{name}`"),
        })
    };
    let (c_t, c_day, c_hour, c_month, c_b, c_net) = (
        col("t")?,
        col("day")?,
        col("hour")?,
        col("month")?,
        col("building")?,
        col("net_load_kwh")?,
    );
    let parse = |s: &str, what: &str| -> Result<f64> {
        s.parse::<f64>().map_err(|e| Error::Parse {
            context: "trace csv".into(),
            message: format!("{what}: {e}"),
        })
    };
    let mut net = Vec::new();
    let mut day_months: Vec<u8> = Vec::new();
    let mut max_hour = 0usize;
    for rec in r.records() {
        let rec = rec?;
        if &rec[c_b] != COMMUNITY_ROW {
            continue;
        }
        let t = parse(&rec[c_t], "t")? as usize;
        if t != net.len() {
            return Err(Error::Parse {
                context: "trace csv".into(),
                message: format!("community row for t={t} out of order"),
            });
        }
        net.push(parse(&rec[c_net], "net_load_kwh")?);
        let day = parse(&rec[c_day], "day")? as usize;
        max_hour = max_hour.max(parse(&rec[c_hour], "hour")? as usize);
        if day == day_months.len() {
            day_months.push(parse(&rec[c_month], "month")? as u8);
        }
    }
    // A single (possibly partial) day cannot reveal its length; assume hourly.
    let steps_per_day = if day_months.len() > 1 {
        max_hour + 1
    } else {
        24.max(max_hour + 1)
    };
    Ok(TraceSummary {
        calendar: Calendar::new(net.len(), steps_per_day, day_months)?,
        community_net_load: net,
    })
}

/// Rolls every building forward under its policy and settles each step.
pub fn replay(ds: &CommunityDataset, scenario: Scenario, joint: &JointPolicy) -> Result<SimulationTrace> {
    let n_quant = joint.policies.first().map_or(2, |p| p.levels());
    let models = battery_models(ds, n_quant)?;
    let moves = ds
        .buildings
        .iter()
        .zip(&models)
        .zip(&joint.policies)
        .map(|((b, m), p)| rollout(b, m, p))
        .collect::<Result<Vec<_>>>()?;

    let mut steps = Vec::with_capacity(ds.step_count());
    for t in 0..ds.step_count() {
        let nets: Vec<f64> = ds
            .buildings
            .iter()
            .zip(&moves)
            .map(|(b, mv)| b.residual(t) + mv[t].grid_side_energy)
            .collect();
        let demand: f64 = nets.iter().map(|e| e.max(0.0)).sum();
        let supply: f64 = nets.iter().map(|e| (-e).max(0.0)).sum();
        let price = curve_price(demand, supply, &ds.tariff);
        let orders: Vec<_> = ds
            .buildings
            .iter()
            .zip(&nets)
            .map(|(b, e)| make_bid_ask(b.id.clone(), *e, price))
            .collect();
        let round = match scenario {
            Scenario::Alex => settle_round(&orders, &ds.tariff, t)?,
            _ => settle_grid_only(&orders, &ds.tariff, t)?,
        };
        let buildings = nets
            .iter()
            .zip(&round.allocations)
            .enumerate()
            .map(|(k, (e, a))| BuildingStep {
                net_load: *e,
                soc: models[k].grid().level(moves[k][t].to_index),
                battery_energy: moves[k][t].grid_side_energy,
                bill: building_bill(a, round.market_price, &ds.tariff),
            })
            .collect();
        steps.push(StepRecord {
            t,
            buildings,
            community_net_load: nets.iter().sum(),
            round,
        });
    }
    Ok(SimulationTrace {
        scenario,
        calendar: ds.calendar.clone(),
        building_ids: ds.buildings.iter().map(|b| b.id.clone()).collect(),
        steps,
    })
}

#[derive(Debug, Clone)]
pub struct ScenarioRun {
    pub trace: SimulationTrace,
    pub joint: JointPolicy,
    pub convergence: ConvergenceTrace,
}

impl ScenarioRun {
    pub fn converged(&self) -> bool {
        self.convergence.converged
    }
}

/// Solves the scenario's policies and replays them. A search that hits the
/// round limit still yields a trace from the last joint policy; check
/// [`ScenarioRun::converged`].
pub fn run_scenario(ds: &CommunityDataset, scenario: Scenario, config: &EquilibriumConfig) -> Result<ScenarioRun> {
    let outcome = solve_equilibrium(ds, scenario, config)?;
    let trace = replay(ds, scenario, &outcome.joint)?;
    Ok(ScenarioRun {
        trace,
        joint: outcome.joint,
        convergence: outcome.trace,
    })
}
