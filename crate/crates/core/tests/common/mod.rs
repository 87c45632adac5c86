//! Oracles and fixtures shared by the integration tests.
#![allow(dead_code)]

use std::path::PathBuf;

use alex_core::battery::BatteryModel;
use alex_core::domain::{BatterySpec, CommunityDataset, GridTariff};
use alex_core::ingest::{generate_synthetic, Profile, SyntheticSpec};
use alex_core::market::{building_bill, make_bid_ask, settle_round};
use alex_core::mdp::LayeredMdp;
use alex_core::simulate::SimulationTrace;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Tolerance for identities that hold exactly in real arithmetic.
pub const EXACT: f64 = 1e-9;

pub fn citylearn_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/citylearn_challenge_2022_phase_all")
}

pub fn configs_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

/// Every SoC index path of `horizon` steps from `start` the battery allows.
pub fn trajectories(model: &BatteryModel, start: usize, horizon: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut path = vec![start];
    fn walk(model: &BatteryModel, horizon: usize, path: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if path.len() == horizon + 1 {
            out.push(path.clone());
            return;
        }
        let from = *path.last().unwrap();
        for tr in model.transitions(from) {
            path.push(tr.to_index);
            walk(model, horizon, path, out);
            path.pop();
        }
    }
    walk(model, horizon, &mut path, &mut out);
    out
}

/// Each building's total bill when the buildings follow `paths` and every
/// step clears through the double auction.
pub fn market_bills(ds: &CommunityDataset, models: &[BatteryModel], paths: &[&[usize]]) -> Vec<f64> {
    let mut totals = vec![0.0; ds.buildings.len()];
    for t in 0..ds.step_count() {
        let orders: Vec<_> = ds
            .buildings
            .iter()
            .enumerate()
            .map(|(k, b)| {
                let tr = models[k]
                    .transition(paths[k][t], paths[k][t + 1])
                    .expect("feasible path");
                let net = b.load[t] - b.generation[t] + tr.grid_side_energy;
                make_bid_ask(b.id.clone(), net, ds.tariff.market_min)
            })
            .collect();
        let round = settle_round(&orders, &ds.tariff, t).unwrap();
        for (k, a) in round.allocations.iter().enumerate() {
            totals[k] += building_bill(a, round.market_price, &ds.tariff);
        }
    }
    totals
}

/// Best achievable return from every state, by exhaustive path search.
pub fn brute_force_values<M: LayeredMdp>(mdp: &M) -> Vec<Vec<f64>> {
    fn best<M: LayeredMdp>(mdp: &M, t: usize, i: usize) -> f64 {
        if t == mdp.horizon() {
            return 0.0;
        }
        mdp.actions(t, i)
            .iter()
            .map(|a| mdp.reward(t, a) + best(mdp, t + 1, a.to_index))
            .fold(f64::NEG_INFINITY, f64::max)
    }
    (0..mdp.horizon())
        .map(|t| (0..mdp.levels()).map(|i| best(mdp, t, i)).collect())
        .collect()
}

pub fn random_battery(rng: &mut ChaCha8Rng) -> BatterySpec {
    let capacity = rng.gen_range(0.5..3.0);
    BatterySpec {
        capacity,
        max_charge_power: rng.gen_range(0.3..2.0) * capacity,
        max_discharge_power: rng.gen_range(0.3..2.0) * capacity,
        charge_efficiency: rng.gen_range(0.8..=1.0),
        discharge_efficiency: rng.gen_range(0.8..=1.0),
        self_discharge: if rng.gen_bool(0.3) {
            rng.gen_range(0.0..0.05)
        } else {
            0.0
        },
        initial_soc: rng.gen_range(0.0..=capacity),
    }
}

/// A small random community for oracle checks.
pub fn random_community(seed: u64, buildings: usize, steps: usize) -> CommunityDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let mut spec = SyntheticSpec::new(
        Profile::Random {
            load_max: rng.gen_range(0.5..3.0),
            generation_max: rng.gen_range(0.5..3.0),
        },
        random_battery(&mut rng),
    );
    spec.tariff = GridTariff {
        grid_buy: 0.25,
        grid_sell: 0.05,
        market_min: 0.07,
        market_max: 0.23,
        fees_per_step: if rng.gen_bool(0.5) { 0.01 } else { 0.0 },
    };
    let mut ds = generate_synthetic(seed, buildings, steps, &spec).unwrap();
    // Give every building its own battery.
    for b in &mut ds.buildings {
        b.battery = random_battery(&mut rng);
    }
    ds.validated().unwrap()
}

/// Checks the per-step market and accounting identities of a trace and
/// returns a description of every violation.
pub fn conservation_violations(ds: &CommunityDataset, trace: &SimulationTrace) -> Vec<String> {
    let mut bad = Vec::new();
    let tariff = &ds.tariff;
    let mut totals = vec![0.0; ds.buildings.len()];
    for step in &trace.steps {
        let t = step.t;
        let r = &step.round;
        let buy: f64 = r.allocations.iter().map(|a| a.market_buy).sum();
        let sell: f64 = r.allocations.iter().map(|a| a.market_sell).sum();
        if (buy - r.cleared_quantity).abs() > EXACT || (sell - r.cleared_quantity).abs() > EXACT {
            bad.push(format!(
                "t={t}: bought {buy}, sold {sell}, cleared {}",
                r.cleared_quantity
            ));
        }
        if !(tariff.market_min..=tariff.market_max).contains(&r.market_price) {
            bad.push(format!("t={t}: price {} outside the market band", r.market_price));
        }
        let mut community = 0.0;
        for (k, (b, s)) in ds.buildings.iter().zip(&step.buildings).enumerate() {
            let a = &r.allocations[k];
            if [a.market_buy, a.market_sell, a.grid_buy, a.grid_sell]
                .iter()
                .any(|v| *v < 0.0)
            {
                bad.push(format!("t={t} {}: negative allocation {a:?}", b.id));
            }
            let settled = a.market_buy + a.grid_buy - a.market_sell - a.grid_sell;
            if (settled - s.net_load).abs() > EXACT {
                bad.push(format!("t={t} {}: settled {settled} vs net load {}", b.id, s.net_load));
            }
            let physical = b.load[t] - b.generation[t] + s.battery_energy;
            if (physical - s.net_load).abs() > EXACT {
                bad.push(format!(
                    "t={t} {}: net load {} vs load/generation/battery {physical}",
                    b.id, s.net_load
                ));
            }
            let bill = (a.market_buy - a.market_sell) * r.market_price + a.grid_buy * tariff.grid_buy
                - a.grid_sell * tariff.grid_sell
                + tariff.fees_per_step;
            if (bill - s.bill).abs() > EXACT {
                bad.push(format!("t={t} {}: bill {} vs recomputed {bill}", b.id, s.bill));
            }
            if s.soc < -EXACT || s.soc > b.battery.capacity + EXACT {
                bad.push(format!(
                    "t={t} {}: SoC {} outside [0, {}]",
                    b.id, s.soc, b.battery.capacity
                ));
            }
            totals[k] += s.bill;
            community += s.net_load;
        }
        if (community - step.community_net_load).abs() > EXACT {
            bad.push(format!(
                "t={t}: community net load {} vs sum {community}",
                step.community_net_load
            ));
        }
    }
    for (k, total) in trace.total_bills().iter().enumerate() {
        if (total - totals[k]).abs() > EXACT * trace.steps.len() as f64 {
            bad.push(format!(
                "{}: total bill {total} vs sum of steps {}",
                ds.buildings[k].id, totals[k]
            ));
        }
    }
    bad
}
