//! Iterative best response across buildings.
//!
//! Each outer round visits the buildings in a freshly shuffled order. A visit
//! freezes every other building's policy, turns their order flow into a
//! market background, and replaces the visited policy with its exact best
//! response. Exactly one policy changes per visit. The search stops once no
//! policy moved by `threshold` or more during a whole round.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::battery::{BatteryModel, BatteryTransition};
use crate::domain::{BuildingRecord, CommunityDataset};
use crate::error::{Error, Result};
use crate::mdp::{build_mdp, BuildingMdp, LayeredMdp, MarketBackground, MdpConfig, Scenario};
use crate::solver::{backward_induction, policy_return, value_iteration, QuantizedPolicy, Solution};

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Engine {
    #[default]
    BackwardInduction,
    ValueIteration {
        tol: f64,
    },
}

impl Engine {
    pub fn solve<M: LayeredMdp + ?Sized>(&self, mdp: &M) -> Result<Solution> {
        match *self {
            Engine::BackwardInduction => backward_induction(mdp),
            Engine::ValueIteration { tol } => value_iteration(mdp, tol, 1.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Init {
    #[default]
    Hold,
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumConfig {
    pub mdp: MdpConfig,
    pub threshold: f64,
    pub max_outer_rounds: usize,
    pub seed: u64,
    pub init: Init,
    pub engine: Engine,
}

impl Default for EquilibriumConfig {
    fn default() -> Self {
        EquilibriumConfig {
            mdp: MdpConfig::default(),
            threshold: 0.01,
            max_outer_rounds: 100,
            seed: 0,
            init: Init::Hold,
            engine: Engine::BackwardInduction,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointPolicy {
    pub policies: Vec<QuantizedPolicy>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VisitRecord {
    pub building: String,
    pub distance: f64,
    /// Building return under its previous policy, others as they were.
    pub return_before: f64,
    pub return_after: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoundRecord {
    pub round: usize,
    pub visits: Vec<VisitRecord>,
    pub max_distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceTrace {
    pub rounds: Vec<RoundRecord>,
    pub converged: bool,
}

impl ConvergenceTrace {
    pub fn round_count(&self) -> usize {
        self.rounds.len()
    }

    pub fn final_distance(&self) -> f64 {
        self.rounds.last().map_or(f64::INFINITY, |r| r.max_distance)
    }

    /// CSV with columns `round,position,building,distance,return_before,return_after`.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "round",
            "position",
            "building",
            "distance",
            "return_before",
            "return_after",
        ])?;
        for r in &self.rounds {
            for (pos, v) in r.visits.iter().enumerate() {
                w.write_record([
                    r.round.to_string(),
                    pos.to_string(),
                    v.building.clone(),
                    v.distance.to_string(),
                    v.return_before.to_string(),
                    v.return_after.to_string(),
                ])?;
            }
        }
        w.flush().map_err(|e| Error::io("convergence csv", e))?;
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct EquilibriumOutcome {
    pub joint: JointPolicy,
    pub trace: ConvergenceTrace,
}

/// Mean over states of the absolute change in target SoC, as a fraction of
/// capacity.
pub fn policy_distance(new: &QuantizedPolicy, old: &QuantizedPolicy) -> Result<f64> {
    if new.horizon() != old.horizon() || new.levels() != old.levels() {
        return Err(Error::StateSpaceMismatch(format!(
            "{}x{} vs {}x{}",
            new.horizon(),
            new.levels(),
            old.horizon(),
            old.levels()
        )));
    }
    let states = new.state_count();
    if states == 0 {
        return Ok(0.0);
    }
    let scale = if new.levels() > 1 {
        1.0 / (new.levels() - 1) as f64
    } else {
        0.0
    };
    let mut sum = 0.0;
    for t in 0..new.horizon() {
        for i in 0..new.levels() {
            sum += (new.target(t, i) as f64 - old.target(t, i) as f64).abs() * scale;
        }
    }
    Ok(sum / states as f64)
}

/// Battery transitions a building takes under `policy` from its initial SoC.
pub fn rollout(
    building: &BuildingRecord,
    model: &BatteryModel,
    policy: &QuantizedPolicy,
) -> Result<Vec<BatteryTransition>> {
    let mut i = model.initial_index();
    let mut out = Vec::with_capacity(policy.horizon());
    for t in 0..policy.horizon() {
        let to = policy.target(t, i);
        let tr = model.transition(i, to).ok_or_else(|| Error::InfeasiblePolicy {
            building: building.id.clone(),
            t,
            from: i,
            to,
        })?;
        out.push(*tr);
        i = to;
    }
    Ok(out)
}

fn order_flow(building: &BuildingRecord, moves: &[BatteryTransition]) -> (Vec<f64>, Vec<f64>) {
    moves
        .iter()
        .enumerate()
        .map(|(t, m)| {
            let e = building.residual(t) + m.grid_side_energy;
            (e.max(0.0), (-e).max(0.0))
        })
        .unzip()
}

pub fn battery_models(ds: &CommunityDataset, n_quant: usize) -> Result<Vec<BatteryModel>> {
    ds.buildings
        .iter()
        .map(|b| BatteryModel::new(b.battery, n_quant))
        .collect()
}

pub(crate) fn background_with(
    ds: &CommunityDataset,
    models: &[BatteryModel],
    joint: &JointPolicy,
    exclude: usize,
) -> Result<MarketBackground> {
    let mut bg = MarketBackground::zeros(ds.step_count());
    for (k, b) in ds.buildings.iter().enumerate() {
        if k == exclude {
            continue;
        }
        let (bids, asks) = order_flow(b, &rollout(b, &models[k], &joint.policies[k])?);
        for t in 0..bids.len() {
            bg.others_bid[t] += bids[t];
            bg.others_ask[t] += asks[t];
        }
    }
    Ok(bg)
}

/// Aggregate bids and asks of every building other than `exclude`, each
/// rolled forward under its own policy.
pub fn compute_background(ds: &CommunityDataset, joint: &JointPolicy, exclude: &str) -> Result<MarketBackground> {
    let exclude = ds
        .building_index(exclude)
        .ok_or_else(|| Error::InvalidArgument(format!("unknown building `{exclude}`")))?;
    let levels = joint.policies.first().map_or(2, |p| p.levels());
    let models = battery_models(ds, levels)?;
    background_with(ds, &models, joint, exclude)
}

fn initial_policy(mdp: &BuildingMdp<'_>, init: Init, rng: &mut ChaCha8Rng) -> QuantizedPolicy {
    match init {
        Init::Hold => QuantizedPolicy::from_fn(mdp.horizon(), mdp.levels(), |_, i| mdp.model().hold_target(i)),
        Init::Random => QuantizedPolicy::from_fn(mdp.horizon(), mdp.levels(), |t, i| {
            let actions = mdp.actions(t, i);
            actions[rng.gen_range(0..actions.len())].to_index
        }),
    }
}

/// Best response for one building against the frozen others.
pub fn best_response(
    ds: &CommunityDataset,
    joint: &JointPolicy,
    building: usize,
    scenario: Scenario,
    config: &EquilibriumConfig,
) -> Result<Solution> {
    let background = match scenario {
        Scenario::Alex => {
            let models = battery_models(ds, config.mdp.n_quant)?;
            Some(background_with(ds, &models, joint, building)?)
        }
        _ => None,
    };
    let mdp = build_mdp(
        &ds.buildings[building],
        background.as_ref(),
        scenario,
        &ds.tariff,
        &config.mdp,
    )?;
    config.engine.solve(&mdp)
}

pub fn solve_equilibrium(
    ds: &CommunityDataset,
    scenario: Scenario,
    config: &EquilibriumConfig,
) -> Result<EquilibriumOutcome> {
    let models = battery_models(ds, config.mdp.n_quant)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let steps = ds.step_count();
    let empty = MarketBackground::zeros(steps);

    let mut policies = Vec::with_capacity(ds.buildings.len());
    for b in &ds.buildings {
        let mdp = build_mdp(b, Some(&empty), scenario, &ds.tariff, &config.mdp)?;
        policies.push(initial_policy(&mdp, config.init, &mut rng));
    }
    let mut joint = JointPolicy { policies };

    let mut order: Vec<usize> = (0..ds.buildings.len()).collect();
    let mut rounds = Vec::new();
    let mut converged = false;
    for round in 0..config.max_outer_rounds {
        order.shuffle(&mut rng);
        let mut visits = Vec::with_capacity(order.len());
        for &b in &order {
            let background = match scenario {
                Scenario::Alex => background_with(ds, &models, &joint, b)?,
                _ => empty.clone(),
            };
            let mdp = build_mdp(&ds.buildings[b], Some(&background), scenario, &ds.tariff, &config.mdp)?;
            let solution = config.engine.solve(&mdp)?;
            let start = mdp.initial_index();
            let return_before = policy_return(&mdp, &joint.policies[b], start)?;
            let return_after = policy_return(&mdp, &solution.policy, start)?;
            let distance = policy_distance(&solution.policy, &joint.policies[b])?;
            joint.policies[b] = solution.policy;
            visits.push(VisitRecord {
                building: ds.buildings[b].id.clone(),
                distance,
                return_before,
                return_after,
            });
        }
        let max_distance = visits.iter().map(|v| v.distance).fold(0.0, f64::max);
        rounds.push(RoundRecord {
            round,
            visits,
            max_distance,
        });
        if max_distance < config.threshold {
            converged = true;
            break;
        }
    }
    Ok(EquilibriumOutcome {
        joint,
        trace: ConvergenceTrace { rounds, converged },
    })
}
