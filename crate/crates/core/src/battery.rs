//! Quantized battery model: the SoC grid, the transitions allowed between
//! grid levels within one step, and a continuous reference model.

use serde::Serialize;

use crate::domain::BatterySpec;
use crate::error::{Error, Result};

/// Slack for float comparisons against power limits and SoC bounds (kWh).
pub const ENERGY_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct SocGrid {
    levels: Vec<f64>,
}

impl SocGrid {
    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn capacity(&self) -> f64 {
        *self.levels.last().unwrap_or(&0.0)
    }

    pub fn level(&self, index: usize) -> f64 {
        self.levels[index]
    }

    /// Index of the grid level closest to `soc`; ties go to the lower level.
    pub fn nearest_index(&self, soc: f64) -> usize {
        let n = self.levels.len();
        if n < 2 {
            return 0;
        }
        let step = self.capacity() / (n - 1) as f64;
        let pos = (soc / step).clamp(0.0, (n - 1) as f64);
        let lower = pos.floor() as usize;
        if lower + 1 < n && pos - lower as f64 > 0.5 {
            lower + 1
        } else {
            lower
        }
    }

    /// Level expressed as a fraction of capacity.
    pub fn fraction(&self, index: usize) -> f64 {
        let n = self.levels.len();
        if n < 2 {
            0.0
        } else {
            index as f64 / (n - 1) as f64
        }
    }
}

pub fn make_soc_grid(spec: &BatterySpec, n_quant: usize) -> Result<SocGrid> {
    if n_quant < 2 {
        return Err(Error::InvalidArgument(format!(
            "SoC grid needs at least 2 levels, got {n_quant}"
        )));
    }
    let last = (n_quant - 1) as f64;
    let mut levels: Vec<f64> = (0..n_quant).map(|i| spec.capacity * i as f64 / last).collect();
    levels[n_quant - 1] = spec.capacity;
    Ok(SocGrid { levels })
}

/// One allowed battery move between grid levels over a single step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BatteryTransition {
    pub from_index: usize,
    pub to_index: usize,
    /// Energy the building draws for the battery (kWh); negative when the
    /// battery supplies the building.
    pub grid_side_energy: f64,
}

/// Grid-side energy for a stored-energy change of `delta` kWh.
fn grid_side_energy(spec: &BatterySpec, delta: f64) -> f64 {
    if delta > 0.0 {
        delta / spec.charge_efficiency
    } else if delta < 0.0 {
        delta * spec.discharge_efficiency
    } else {
        0.0
    }
}

/// Grid index the battery drifts to over one idle step.
pub fn hold_index(spec: &BatterySpec, grid: &SocGrid, from_index: usize) -> usize {
    grid.nearest_index(grid.level(from_index) * (1.0 - spec.self_discharge))
}

/// All transitions reachable from `from_index` within the power limits, in
/// ascending `to_index` order.
///
/// Self-discharge is applied first and the decayed SoC snapped to the nearest
/// grid level; the move is then priced from that snapped level, so the hold
/// transition always exists and draws exactly zero energy.
pub fn feasible_transitions(spec: &BatterySpec, grid: &SocGrid, from_index: usize) -> Vec<BatteryTransition> {
    let start = hold_index(spec, grid, from_index);
    let base = grid.level(start);
    (0..grid.len())
        .filter_map(|to| {
            let energy = if to == start {
                0.0
            } else {
                grid_side_energy(spec, grid.level(to) - base)
            };
            let within =
                energy <= spec.max_charge_power + ENERGY_EPS && -energy <= spec.max_discharge_power + ENERGY_EPS;
            (to == start || within).then_some(BatteryTransition {
                from_index,
                to_index: to,
                grid_side_energy: energy,
            })
        })
        .collect()
}

/// Continuous reference model: SoC after one step with grid-side energy `e`.
pub fn step_soc(spec: &BatterySpec, soc: f64, e: f64) -> Result<f64> {
    let next = soc * (1.0 - spec.self_discharge) + spec.charge_efficiency * e.max(0.0)
        - (-e).max(0.0) / spec.discharge_efficiency;
    if next < -ENERGY_EPS || next > spec.capacity + ENERGY_EPS || !next.is_finite() {
        return Err(Error::SocOutOfRange {
            soc: next,
            capacity: spec.capacity,
        });
    }
    Ok(next.clamp(0.0, spec.capacity))
}

/// A building's battery: grid plus precomputed transition table.
#[derive(Debug, Clone)]
pub struct BatteryModel {
    spec: BatterySpec,
    grid: SocGrid,
    transitions: Vec<Vec<BatteryTransition>>,
    hold: Vec<usize>,
}

impl BatteryModel {
    pub fn new(spec: BatterySpec, n_quant: usize) -> Result<Self> {
        let grid = make_soc_grid(&spec, n_quant)?;
        let transitions = (0..n_quant).map(|i| feasible_transitions(&spec, &grid, i)).collect();
        let hold = (0..n_quant).map(|i| hold_index(&spec, &grid, i)).collect();
        Ok(BatteryModel {
            spec,
            grid,
            transitions,
            hold,
        })
    }

    pub fn spec(&self) -> &BatterySpec {
        &self.spec
    }

    pub fn grid(&self) -> &SocGrid {
        &self.grid
    }

    pub fn levels(&self) -> usize {
        self.grid.len()
    }

    pub fn initial_index(&self) -> usize {
        self.grid.nearest_index(self.spec.initial_soc)
    }

    pub fn transitions(&self, from: usize) -> &[BatteryTransition] {
        &self.transitions[from]
    }

    pub fn hold_target(&self, from: usize) -> usize {
        self.hold[from]
    }

    pub fn hold_transition(&self, from: usize) -> &BatteryTransition {
        self.transition(from, self.hold[from])
            .expect("hold transition is always feasible")
    }

    pub fn transition(&self, from: usize, to: usize) -> Option<&BatteryTransition> {
        self.transitions
            .get(from)?
            .binary_search_by_key(&to, |tr| tr.to_index)
            .ok()
            .map(|k| &self.transitions[from][k])
    }
}
