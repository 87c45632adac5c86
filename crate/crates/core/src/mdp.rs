//! Per-building finite-horizon MDPs.
//!
//! A state is `(t, soc_index)`; an action is a battery transition, from which
//! the net load, and through the residual rule the bid or ask, follow. The
//! MDP is deterministic: `(t, i)` under `i -> j` always lands in `(t + 1, j)`.
//! The terminal layer `t = T` is worth 0 in every scenario.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::battery::{BatteryModel, BatteryTransition};
use crate::domain::{BuildingRecord, GridTariff};
use crate::error::{Error, Result};
use crate::market::{building_bill, curve_price, own_allocation};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scenario {
    /// Batteries stay idle.
    #[serde(rename = "noderms")]
    NoDerms,
    /// Each building optimizes self-sufficiency alone under net billing.
    #[serde(rename = "individual")]
    IndividualDerms,
    /// Bill-minimizing agents trading through the local market.
    #[serde(rename = "alex")]
    Alex,
}

impl Scenario {
    pub const ALL: [Scenario; 3] = [Scenario::NoDerms, Scenario::IndividualDerms, Scenario::Alex];

    pub fn key(self) -> &'static str {
        match self {
            Scenario::NoDerms => "noderms",
            Scenario::IndividualDerms => "individual",
            Scenario::Alex => "alex",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Scenario::NoDerms => "NoDERMS",
            Scenario::IndividualDerms => "IndividualDERMS",
            Scenario::Alex => "ALEX",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "noderms" | "no-derms" | "none" => Ok(Scenario::NoDerms),
            "individual" | "individualderms" | "individual-derms" => Ok(Scenario::IndividualDerms),
            "alex" => Ok(Scenario::Alex),
            other => Err(Error::InvalidArgument(format!("unknown scenario `{other}`"))),
        }
    }
}

/// Aggregate order flow of every building except the one being optimized.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MarketBackground {
    pub others_bid: Vec<f64>,
    pub others_ask: Vec<f64>,
}

impl MarketBackground {
    pub fn zeros(steps: usize) -> Self {
        MarketBackground {
            others_bid: vec![0.0; steps],
            others_ask: vec![0.0; steps],
        }
    }

    pub fn len(&self) -> usize {
        self.others_bid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.others_bid.is_empty()
    }
}

/// The layered, deterministic MDP shape the solvers work on.
pub trait LayeredMdp: Sync {
    /// Number of decision layers `T`.
    fn horizon(&self) -> usize;
    /// SoC levels per layer.
    fn levels(&self) -> usize;
    fn actions(&self, t: usize, soc_index: usize) -> &[BatteryTransition];
    fn reward(&self, t: usize, action: &BatteryTransition) -> f64;
}

pub fn net_load(building: &BuildingRecord, t: usize, action: &BatteryTransition) -> f64 {
    building.load[t] - building.generation[t] + action.grid_side_energy
}

#[inline]
fn alex_reward_for(net: f64, others_bid: f64, others_ask: f64, tariff: &GridTariff) -> f64 {
    let bid = net.max(0.0);
    let ask = (-net).max(0.0);
    let demand = others_bid + bid;
    let supply = others_ask + ask;
    let price = curve_price(demand, supply, tariff);
    let alloc = own_allocation(bid, ask, demand, supply);
    -building_bill(&alloc, price, tariff)
}

/// Negative bill of the building when its order meets the background in one
/// round. The building's own quantity moves the price.
pub fn reward_alex(
    building: &BuildingRecord,
    background: &MarketBackground,
    t: usize,
    action: &BatteryTransition,
    tariff: &GridTariff,
) -> f64 {
    alex_reward_for(
        net_load(building, t, action),
        background.others_bid[t],
        background.others_ask[t],
        tariff,
    )
}

#[inline]
fn individual_reward_for(net: f64, tariff: &GridTariff, w_sq: f64) -> f64 {
    -(net.max(0.0) * tariff.grid_buy - (-net).max(0.0) * tariff.grid_sell) - w_sq * net * net
}

/// Net-billing reward with a quadratic net-load penalty. The penalty flattens
/// peaks and valleys and damps ramps while keeping the state `(t, SoC)`.
pub fn reward_individual(
    building: &BuildingRecord,
    t: usize,
    action: &BatteryTransition,
    tariff: &GridTariff,
    w_sq: f64,
) -> f64 {
    individual_reward_for(net_load(building, t, action), tariff, w_sq)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MdpConfig {
    pub n_quant: usize,
    /// Weight of the squared net-load penalty in the IndividualDERMS reward.
    /// At zero the objective is plain net billing; on CityLearn data even tiny
    /// positive weights mostly reorder equal-cost schedules toward flatter
    /// net load.
    pub w_sq: f64,
}

impl Default for MdpConfig {
    fn default() -> Self {
        MdpConfig { n_quant: 40, w_sq: 0.0 }
    }
}

#[derive(Debug, Clone)]
enum Objective<'a> {
    Idle,
    Individual { w_sq: f64 },
    Alex { background: &'a MarketBackground },
}

/// One building's MDP for a scenario.
#[derive(Debug, Clone)]
pub struct BuildingMdp<'a> {
    residual: Vec<f64>,
    tariff: GridTariff,
    model: BatteryModel,
    hold_only: Vec<[BatteryTransition; 1]>,
    objective: Objective<'a>,
}

pub fn build_mdp<'a>(
    building: &BuildingRecord,
    background: Option<&'a MarketBackground>,
    scenario: Scenario,
    tariff: &GridTariff,
    config: &MdpConfig,
) -> Result<BuildingMdp<'a>> {
    let model = BatteryModel::new(building.battery, config.n_quant)?;
    let steps = building.load.len();
    let objective = match scenario {
        Scenario::NoDerms => Objective::Idle,
        Scenario::IndividualDerms => Objective::Individual { w_sq: config.w_sq },
        Scenario::Alex => {
            let background = background.ok_or(Error::MissingBackground)?;
            if background.len() != steps {
                return Err(Error::InvalidArgument(format!(
                    "background covers {} steps, building has {steps}",
                    background.len()
                )));
            }
            Objective::Alex { background }
        }
    };
    let hold_only = (0..model.levels()).map(|i| [*model.hold_transition(i)]).collect();
    Ok(BuildingMdp {
        residual: (0..steps).map(|t| building.residual(t)).collect(),
        tariff: *tariff,
        model,
        hold_only,
        objective,
    })
}

impl BuildingMdp<'_> {
    pub fn model(&self) -> &BatteryModel {
        &self.model
    }

    pub fn initial_index(&self) -> usize {
        self.model.initial_index()
    }
}

impl LayeredMdp for BuildingMdp<'_> {
    fn horizon(&self) -> usize {
        self.residual.len()
    }

    fn levels(&self) -> usize {
        self.model.levels()
    }

    fn actions(&self, _t: usize, soc_index: usize) -> &[BatteryTransition] {
        match self.objective {
            Objective::Idle => &self.hold_only[soc_index],
            _ => self.model.transitions(soc_index),
        }
    }

    fn reward(&self, t: usize, action: &BatteryTransition) -> f64 {
        let net = self.residual[t] + action.grid_side_energy;
        match &self.objective {
            Objective::Idle => {
                -(net.max(0.0) * self.tariff.grid_buy - (-net).max(0.0) * self.tariff.grid_sell
                    + self.tariff.fees_per_step)
            }
            Objective::Individual { w_sq } => individual_reward_for(net, &self.tariff, *w_sq),
            Objective::Alex { background } => {
                alex_reward_for(net, background.others_bid[t], background.others_ask[t], &self.tariff)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::BatterySpec;

    fn tariff() -> GridTariff {
        GridTariff {
            grid_buy: 0.20,
            grid_sell: 0.05,
            market_min: 0.07,
            market_max: 0.18,
            fees_per_step: 0.0,
        }
    }

    fn building(load: Vec<f64>, generation: Vec<f64>) -> BuildingRecord {
        BuildingRecord {
            id: "b".into(),
            load,
            generation,
            battery: BatterySpec {
                capacity: 1.0,
                max_charge_power: 2.0,
                max_discharge_power: 2.0,
                charge_efficiency: 1.0,
                discharge_efficiency: 1.0,
                self_discharge: 0.0,
                initial_soc: 0.0,
            },
        }
    }

    fn action(e: f64) -> BatteryTransition {
        BatteryTransition {
            from_index: 0,
            to_index: 0,
            grid_side_energy: e,
        }
    }

    #[test]
    fn net_load_formula() {
        let b = building(vec![3.0, 0.0, 1.0], vec![1.0, 0.0, 2.0]);
        assert_eq!(net_load(&b, 0, &action(0.5)), 2.5);
        assert_eq!(net_load(&b, 1, &action(0.0)), 0.0);
        assert_eq!(net_load(&b, 2, &action(0.0)), -1.0);
    }

    #[test]
    fn alex_reward_cases() {
        let t = tariff();
        let b = building(vec![2.0], vec![0.0]);
        let empty = MarketBackground::zeros(1);
        assert!((reward_alex(&b, &empty, 0, &action(0.0), &t) + 0.40).abs() < 1e-12);

        let bg = MarketBackground {
            others_bid: vec![0.0],
            others_ask: vec![10.0],
        };
        let p = crate::market::price_curve(2.0, 10.0, &t).unwrap();
        assert!((reward_alex(&b, &bg, 0, &action(0.0), &t) + 2.0 * p).abs() < 1e-12);

        let idle = building(vec![1.0], vec![1.0]);
        let fees = GridTariff {
            fees_per_step: 0.03,
            ..t
        };
        assert_eq!(reward_alex(&idle, &bg, 0, &action(0.0), &t), 0.0);
        assert_eq!(reward_alex(&idle, &bg, 0, &action(0.0), &fees), -0.03);
    }

    #[test]
    fn individual_reward_cases() {
        let t = tariff();
        let b = building(vec![0.0, 2.0, 0.0], vec![0.0, 0.0, 2.0]);
        assert_eq!(reward_individual(&b, 0, &action(0.0), &t, 0.01), 0.0);
        assert!((reward_individual(&b, 1, &action(0.0), &t, 0.01) + 0.44).abs() < 1e-12);
        assert!((reward_individual(&b, 2, &action(0.0), &t, 0.01) - 0.06).abs() < 1e-12);
    }

    #[test]
    fn alex_with_empty_background_is_net_billing() {
        let t = tariff();
        let b = building(vec![0.0, 3.0, 1.0], vec![2.0, 0.0, 1.5]);
        let bg = MarketBackground::zeros(3);
        let mdp = build_mdp(&b, Some(&bg), Scenario::Alex, &t, &MdpConfig { n_quant: 2, w_sq: 0.0 }).unwrap();
        let ind = build_mdp(
            &b,
            None,
            Scenario::IndividualDerms,
            &t,
            &MdpConfig { n_quant: 2, w_sq: 0.0 },
        )
        .unwrap();
        for step in 0..3 {
            for i in 0..2 {
                for a in mdp.actions(step, i) {
                    assert!((mdp.reward(step, a) - ind.reward(step, a)).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn mdp_shapes() {
        let t = tariff();
        let b = building(vec![1.0, 1.0], vec![0.0, 0.0]);
        let cfg = MdpConfig { n_quant: 2, w_sq: 0.01 };
        let ind = build_mdp(&b, None, Scenario::IndividualDerms, &t, &cfg).unwrap();
        assert_eq!(ind.horizon() * ind.levels(), 4);
        for step in 0..2 {
            for i in 0..2 {
                assert!(ind.actions(step, i).len() <= 2);
            }
        }
        let idle = build_mdp(&b, None, Scenario::NoDerms, &t, &cfg).unwrap();
        for i in 0..2 {
            assert_eq!(idle.actions(0, i).len(), 1);
            assert_eq!(idle.actions(0, i)[0].grid_side_energy, 0.0);
        }
        assert!(matches!(
            build_mdp(&b, None, Scenario::Alex, &t, &cfg),
            Err(Error::MissingBackground)
        ));
    }

    #[test]
    fn scenario_names_round_trip() {
        for s in Scenario::ALL {
            assert_eq!(s.key().parse::<Scenario>().unwrap(), s);
        }
        assert!("bogus".parse::<Scenario>().is_err());
    }
}
