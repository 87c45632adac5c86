//! Exact policy computation for layered, deterministic MDPs.
//!
//! Both engines share `select`, so on the same instance they produce
//! bit-identical values and policies. Among actions whose value is within
//! `TIE_TOL` of the best, the one with the smallest |grid-side energy| wins,
//! then the lower target index.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::battery::BatteryTransition;
use crate::error::{Error, Result};
use crate::mdp::LayeredMdp;

/// Actions whose values differ by at most this much (money) are ties.
pub const TIE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct ValueTable {
    horizon: usize,
    levels: usize,
    values: Vec<f64>,
}

impl ValueTable {
    fn zeros(horizon: usize, levels: usize) -> Self {
        ValueTable {
            horizon,
            levels,
            values: vec![0.0; (horizon + 1) * levels],
        }
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    /// Value of `(t, soc_index)`; `t` may equal the horizon (terminal, 0).
    pub fn get(&self, t: usize, soc_index: usize) -> f64 {
        self.values[t * self.levels + soc_index]
    }

    fn set(&mut self, t: usize, soc_index: usize, v: f64) {
        self.values[t * self.levels + soc_index] = v;
    }

    fn layer(&self, t: usize) -> &[f64] {
        &self.values[t * self.levels..(t + 1) * self.levels]
    }
}

/// Deterministic policy: target SoC index for every live state.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuantizedPolicy {
    horizon: usize,
    levels: usize,
    targets: Vec<u32>,
}

impl QuantizedPolicy {
    pub fn from_fn(horizon: usize, levels: usize, mut f: impl FnMut(usize, usize) -> usize) -> Self {
        let mut targets = Vec::with_capacity(horizon * levels);
        for t in 0..horizon {
            for i in 0..levels {
                targets.push(f(t, i) as u32);
            }
        }
        QuantizedPolicy {
            horizon,
            levels,
            targets,
        }
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn state_count(&self) -> usize {
        self.targets.len()
    }

    pub fn target(&self, t: usize, soc_index: usize) -> usize {
        self.targets[t * self.levels + soc_index] as usize
    }

    /// SoC-index path starting at `start`, `horizon + 1` entries long.
    pub fn trajectory(&self, start: usize) -> Vec<usize> {
        let mut path = Vec::with_capacity(self.horizon + 1);
        let mut i = start;
        path.push(i);
        for t in 0..self.horizon {
            i = self.target(t, i);
            path.push(i);
        }
        path
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub values: ValueTable,
    pub policy: QuantizedPolicy,
    /// Full sweeps performed (1 for backward induction).
    pub sweeps: usize,
}

fn prefer(a: &BatteryTransition, b: &BatteryTransition) -> bool {
    let (ea, eb) = (a.grid_side_energy.abs(), b.grid_side_energy.abs());
    ea < eb || (ea == eb && a.to_index < b.to_index)
}

/// Best action at `(t, i)` given successor values; returns (value, target).
fn select<M: LayeredMdp + ?Sized>(
    mdp: &M,
    t: usize,
    i: usize,
    next: &[f64],
    gamma: f64,
    scratch: &mut Vec<f64>,
) -> Result<(f64, usize)> {
    let actions = mdp.actions(t, i);
    scratch.clear();
    let mut best = f64::NEG_INFINITY;
    for a in actions {
        let r = mdp.reward(t, a);
        if !r.is_finite() {
            return Err(Error::NonFiniteReward { t, soc_index: i });
        }
        let q = r + gamma * next[a.to_index];
        best = best.max(q);
        scratch.push(q);
    }
    let mut chosen: Option<usize> = None;
    for (k, (a, q)) in actions.iter().zip(scratch.iter()).enumerate() {
        if *q >= best - TIE_TOL && chosen.is_none_or(|c| prefer(a, &actions[c])) {
            chosen = Some(k);
        }
    }
    let k = chosen.ok_or_else(|| Error::InvalidArgument(format!("state ({t}, {i}) has no actions")))?;
    Ok((scratch[k], actions[k].to_index))
}

/// In-place value iteration: sweeps every live state (t ascending) until the
/// largest change in a sweep is at most `tol`, then extracts the greedy policy.
///
/// On a layered MDP the values are final after `T` sweeps; one more sweep
/// observes the zero change.
pub fn value_iteration<M: LayeredMdp + ?Sized>(mdp: &M, tol: f64, gamma: f64) -> Result<Solution> {
    if tol.is_nan() || tol <= 0.0 {
        return Err(Error::InvalidArgument(format!("tolerance {tol} must be positive")));
    }
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::InvalidArgument(format!("discount {gamma} outside [0, 1]")));
    }
    let (horizon, levels) = (mdp.horizon(), mdp.levels());
    let mut v = ValueTable::zeros(horizon, levels);
    let mut scratch = Vec::new();
    let mut next = vec![0.0; levels];
    let mut sweeps = 0;
    loop {
        sweeps += 1;
        let mut delta = 0.0f64;
        for t in 0..horizon {
            next.copy_from_slice(v.layer(t + 1));
            for i in 0..levels {
                let old = v.get(t, i);
                let (new, _) = select(mdp, t, i, &next, gamma, &mut scratch)?;
                v.set(t, i, new);
                delta = delta.max((new - old).abs());
            }
        }
        if delta <= tol {
            break;
        }
    }
    let mut targets = Vec::with_capacity(horizon * levels);
    for t in 0..horizon {
        for i in 0..levels {
            targets.push(select(mdp, t, i, v.layer(t + 1), gamma, &mut scratch)?.1 as u32);
        }
    }
    Ok(Solution {
        values: v,
        policy: QuantizedPolicy {
            horizon,
            levels,
            targets,
        },
        sweeps,
    })
}

/// Single backward pass over the layers (undiscounted).
pub fn backward_induction<M: LayeredMdp + ?Sized>(mdp: &M) -> Result<Solution> {
    let (horizon, levels) = (mdp.horizon(), mdp.levels());
    let mut v = ValueTable::zeros(horizon, levels);
    let mut targets = vec![0u32; horizon * levels];
    let mut scratch = Vec::new();
    let mut next = vec![0.0; levels];
    for t in (0..horizon).rev() {
        next.copy_from_slice(v.layer(t + 1));
        for i in 0..levels {
            let (value, target) = select(mdp, t, i, &next, 1.0, &mut scratch)?;
            v.set(t, i, value);
            targets[t * levels + i] = target as u32;
        }
    }
    Ok(Solution {
        values: v,
        policy: QuantizedPolicy {
            horizon,
            levels,
            targets,
        },
        sweeps: 1,
    })
}

/// Sum of rewards obtained by following `policy` from `(0, start)`.
pub fn policy_return<M: LayeredMdp + ?Sized>(mdp: &M, policy: &QuantizedPolicy, start: usize) -> Result<f64> {
    let mut total = 0.0;
    let mut i = start;
    for t in 0..mdp.horizon() {
        let to = policy.target(t, i);
        let a = mdp
            .actions(t, i)
            .iter()
            .find(|a| a.to_index == to)
            .ok_or_else(|| Error::InvalidArgument(format!("policy moves {i} -> {to} at t={t}, not an action")))?;
        total += mdp.reward(t, a);
        i = to;
    }
    Ok(total)
}

/// Value of every state when `policy` is followed to the horizon.
pub fn evaluate_policy<M: LayeredMdp + ?Sized>(mdp: &M, policy: &QuantizedPolicy) -> Result<ValueTable> {
    let (horizon, levels) = (mdp.horizon(), mdp.levels());
    if policy.horizon != horizon || policy.levels != levels {
        return Err(Error::StateSpaceMismatch(format!(
            "policy is {}x{}, MDP is {horizon}x{levels}",
            policy.horizon, policy.levels
        )));
    }
    let mut values = ValueTable::zeros(horizon, levels);
    for t in (0..horizon).rev() {
        for i in 0..levels {
            let to = policy.target(t, i);
            let a =
                mdp.actions(t, i).iter().find(|a| a.to_index == to).ok_or_else(|| {
                    Error::InvalidArgument(format!("policy moves {i} -> {to} at t={t}, not an action"))
                })?;
            let v = mdp.reward(t, a) + values.get(t + 1, to);
            values.set(t, i, v);
        }
    }
    Ok(values)
}

#[derive(Debug, Serialize, Deserialize)]
struct PolicyRow {
    t: usize,
    soc_index: usize,
    target_index: usize,
    value: f64,
}

/// Writes `t,soc_index,target_index,value`, one row per live state.
pub fn write_policy_csv<W: Write>(out: W, policy: &QuantizedPolicy, values: &ValueTable) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for t in 0..policy.horizon {
        for i in 0..policy.levels {
            w.serialize(PolicyRow {
                t,
                soc_index: i,
                target_index: policy.target(t, i),
                value: values.get(t, i),
            })?;
        }
    }
    w.flush().map_err(|e| Error::io("policy csv", e))?;
    Ok(())
}

/// Reads a policy written by [`write_policy_csv`].
pub fn read_policy_csv<R: Read>(input: R) -> Result<(QuantizedPolicy, ValueTable)> {
    let mut rows: Vec<PolicyRow> = Vec::new();
    for row in csv::Reader::from_reader(input).deserialize() {
        rows.push(row?);
    }
    let horizon = rows.iter().map(|r| r.t + 1).max().unwrap_or(0);
    let levels = rows.iter().map(|r| r.soc_index + 1).max().unwrap_or(0);
    if rows.len() != horizon * levels {
        return Err(Error::Parse {
            context: "policy csv".into(),
            message: format!("{} rows for a {horizon}x{levels} state space", rows.len()),
        });
    }
    let mut targets = vec![u32::MAX; horizon * levels];
    let mut values = ValueTable::zeros(horizon, levels);
    for r in rows {
        if r.target_index >= levels {
            return Err(Error::Parse {
                context: "policy csv".into(),
                message: format!("target {} out of range at t={}", r.target_index, r.t),
            });
        }
        targets[r.t * levels + r.soc_index] = r.target_index as u32;
        values.set(r.t, r.soc_index, r.value);
    }
    if targets.contains(&u32::MAX) {
        return Err(Error::Parse {
            context: "policy csv".into(),
            message: "duplicate or missing state rows".into(),
        });
    }
    Ok((
        QuantizedPolicy {
            horizon,
            levels,
            targets,
        },
        values,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Arbitrary rewards on a complete transition graph.
    struct TableMdp {
        horizon: usize,
        levels: usize,
        actions: Vec<Vec<BatteryTransition>>,
        rewards: Vec<f64>,
    }

    impl TableMdp {
        fn new(horizon: usize, levels: usize, reward: impl Fn(usize, usize, usize) -> f64) -> Self {
            let actions = (0..levels)
                .map(|i| {
                    (0..levels)
                        .map(|j| BatteryTransition {
                            from_index: i,
                            to_index: j,
                            grid_side_energy: j as f64 - i as f64,
                        })
                        .collect()
                })
                .collect();
            let mut rewards = Vec::new();
            for t in 0..horizon {
                for i in 0..levels {
                    for j in 0..levels {
                        rewards.push(reward(t, i, j));
                    }
                }
            }
            TableMdp {
                horizon,
                levels,
                actions,
                rewards,
            }
        }
    }

    impl LayeredMdp for TableMdp {
        fn horizon(&self) -> usize {
            self.horizon
        }
        fn levels(&self) -> usize {
            self.levels
        }
        fn actions(&self, _t: usize, i: usize) -> &[BatteryTransition] {
            &self.actions[i]
        }
        fn reward(&self, t: usize, a: &BatteryTransition) -> f64 {
            self.rewards[(t * self.levels + a.from_index) * self.levels + a.to_index]
        }
    }

    #[test]
    fn zero_rewards_hold_everywhere() {
        let mdp = TableMdp::new(3, 4, |_, _, _| 0.0);
        let s = backward_induction(&mdp).unwrap();
        for t in 0..3 {
            for i in 0..4 {
                assert_eq!(s.values.get(t, i), 0.0);
                assert_eq!(s.policy.target(t, i), i);
            }
        }
    }

    #[test]
    fn single_level_is_hold() {
        let mdp = TableMdp::new(4, 1, |t, _, _| t as f64);
        let s = value_iteration(&mdp, 1e-9, 1.0).unwrap();
        assert!((0..4).all(|t| s.policy.target(t, 0) == 0));
        assert_eq!(s.values.get(0, 0), 6.0);
    }

    #[test]
    fn one_layer_takes_best_reward() {
        let mdp = TableMdp::new(1, 3, |_, i, j| -((j as f64) - 1.5 - i as f64).powi(2));
        let s = backward_induction(&mdp).unwrap();
        for i in 0..3 {
            let best = (0..3).map(|j| mdp.rewards[i * 3 + j]).fold(f64::NEG_INFINITY, f64::max);
            assert_eq!(s.values.get(0, i), best);
        }
    }

    #[test]
    fn engines_agree_and_sweeps_are_bounded() {
        let mdp = TableMdp::new(5, 3, |t, i, j| ((t * 7 + i * 3 + j * 5) % 11) as f64 * 0.37 - 1.0);
        let bi = backward_induction(&mdp).unwrap();
        let vi = value_iteration(&mdp, f64::MIN_POSITIVE, 1.0).unwrap();
        assert_eq!(bi.values, vi.values);
        assert_eq!(bi.policy, vi.policy);
        assert!(vi.sweeps <= mdp.horizon + 1, "{} sweeps", vi.sweeps);
    }

    #[test]
    fn rejects_bad_parameters_and_rewards() {
        let mdp = TableMdp::new(2, 2, |_, _, _| 0.0);
        assert!(value_iteration(&mdp, 0.0, 1.0).is_err());
        assert!(value_iteration(&mdp, 1e-9, 1.5).is_err());
        let bad = TableMdp::new(2, 2, |t, _, _| if t == 1 { f64::NAN } else { 0.0 });
        assert!(matches!(
            backward_induction(&bad),
            Err(Error::NonFiniteReward { t: 1, .. })
        ));
    }

    #[test]
    fn discounting_converges() {
        let mdp = TableMdp::new(6, 3, |t, i, j| (t + i * j) as f64);
        let s = value_iteration(&mdp, 1e-12, 0.5).unwrap();
        assert!(s.values.get(0, 0).is_finite());
    }

    #[test]
    fn evaluating_the_optimal_policy_recovers_its_values() {
        let m = TableMdp::new(4, 3, |t, i, j| ((t * 7 + i * 3 + j * 5) % 11) as f64 - 5.0);
        let s = backward_induction(&m).unwrap();
        assert_eq!(evaluate_policy(&m, &s.policy).unwrap(), s.values);
    }

    #[test]
    fn policy_csv_round_trip() {
        let mdp = TableMdp::new(3, 3, |t, i, j| (t as f64 + 1.0) / (1.0 + i as f64 + j as f64));
        let s = backward_induction(&mdp).unwrap();
        let mut buf = Vec::new();
        write_policy_csv(&mut buf, &s.policy, &s.values).unwrap();
        let (p, v) = read_policy_csv(buf.as_slice()).unwrap();
        assert_eq!(p, s.policy);
        for t in 0..3 {
            for i in 0..3 {
                assert_eq!(v.get(t, i), s.values.get(t, i));
            }
        }
        assert!(read_policy_csv("t,soc_index,target_index,value\n0,0,5,0\n".as_bytes()).is_err());
    }
}
