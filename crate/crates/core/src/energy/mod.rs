//! Closed-form energy arithmetic: movement cost, the two per-step battery
//! recursions, and the device-level remaining-movement-time model.
//!
//! The battery recursions are evaluated directly from a robot's action and
//! never go through the optimization model, so they serve as the replay
//! oracle for plans and simulation traces.

pub mod profile;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::num::Scalar;
use crate::scenario::{Cell, EnergyParams, GridMap};

pub use profile::{
    fit_device_profiles, remaining_movement_time, Anchor, Device, DevicePowerProfile, FittedProfile,
    ProfileFile,
};

#[derive(Debug, Error, PartialEq)]
pub enum EnergyError {
    #[error("cells {from} and {to} are not adjacent")]
    NotAdjacent { from: Cell, to: Cell },
    #[error("battery depleted (level would be {level})")]
    Depleted { level: f64 },
}

/// Battery level `b_{r,t}` against its capacity `B_max`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatteryState<T> {
    pub level: T,
    pub capacity: T,
}

impl<T: Scalar> BatteryState<T> {
    pub fn new(level: T, capacity: T) -> Self {
        Self { level, capacity }
    }

    pub fn full(capacity: T) -> Self {
        Self { level: capacity, capacity }
    }
}

/// One robot action over a single step.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Action {
    pub from: Cell,
    pub to: Cell,
    /// `u`: drawing charge at a station this step.
    pub charging: bool,
    /// Whether the destination was already explored before this step.
    pub dest_explored: bool,
}

impl Action {
    pub fn stay(cell: Cell) -> Self {
        Self { from: cell, to: cell, charging: false, dest_explored: true }
    }
}

/// Energy of one step split by component. `charge` is the gain, the rest are drains.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StepEnergy<T> {
    pub moving: T,
    pub tx: T,
    pub rx: T,
    pub sen: T,
    pub charge: T,
}

impl<T: Scalar> StepEnergy<T> {
    pub fn drain(&self) -> T {
        self.moving + self.tx + self.rx + self.sen
    }

    /// Level change over the step.
    pub fn net(&self) -> T {
        self.charge - self.drain()
    }
}

/// `P_move` between adjacent cells: zero for stay, the base cost scaled by
/// the destination's terrain factor otherwise, times the diagonal factor for
/// diagonal moves.
pub fn p_move<T: Scalar>(
    params: &EnergyParams,
    grid: &GridMap,
    from: Cell,
    to: Cell,
) -> Result<T, EnergyError> {
    if !grid.in_bounds(from) || !grid.in_bounds(to) || !grid.adjacent(from, to) {
        return Err(EnergyError::NotAdjacent { from, to });
    }
    if from == to {
        return Ok(T::zero());
    }
    let base = T::lit(params.p_move_base) * T::lit(grid.terrain_factor(to));
    if from.a != to.a && from.b != to.b {
        Ok(base * T::lit(params.p_move_diag_factor))
    } else {
        Ok(base)
    }
}

/// Exploration-aware step: sensing and transmission at the destination are
/// paid only when it was unexplored; reception is paid unless charging.
pub fn step_energy_a<T: Scalar>(
    action: Action,
    charge_rate: f64,
    params: &EnergyParams,
    grid: &GridMap,
) -> Result<StepEnergy<T>, EnergyError> {
    let moving = p_move::<T>(params, grid, action.from, action.to)?;
    let sensing = !action.dest_explored;
    Ok(StepEnergy {
        moving,
        tx: if sensing { T::lit(params.p_tx_at(action.to)) } else { T::zero() },
        rx: if action.charging { T::zero() } else { T::lit(params.p_rx) },
        sen: if sensing { T::lit(params.p_sen) } else { T::zero() },
        charge: if action.charging { T::lit(charge_rate) } else { T::zero() },
    })
}

/// Charging-aware step: while not charging the robot pays reception,
/// sensing and transmission at the destination regardless of exploration.
pub fn step_energy_b<T: Scalar>(
    action: Action,
    charge_rate: f64,
    params: &EnergyParams,
    grid: &GridMap,
) -> Result<StepEnergy<T>, EnergyError> {
    let moving = p_move::<T>(params, grid, action.from, action.to)?;
    if action.charging {
        Ok(StepEnergy { moving, charge: T::lit(charge_rate), ..Default::default() })
    } else {
        Ok(StepEnergy {
            moving,
            tx: T::lit(params.p_tx_at(action.to)),
            rx: T::lit(params.p_rx),
            sen: T::lit(params.p_sen),
            charge: T::zero(),
        })
    }
}

/// Applies a step to a battery: errors below zero, clamps at capacity.
pub fn apply_step<T: Scalar>(
    state: BatteryState<T>,
    energy: &StepEnergy<T>,
) -> Result<BatteryState<T>, EnergyError> {
    let level = state.level + energy.net();
    if level < -T::feas_tol() {
        return Err(EnergyError::Depleted { level: level.as_f64() });
    }
    Ok(BatteryState { level: level.max(T::zero()).min(state.capacity), capacity: state.capacity })
}

pub fn battery_step_a<T: Scalar>(
    state: BatteryState<T>,
    action: Action,
    charge_rate: f64,
    params: &EnergyParams,
    grid: &GridMap,
) -> Result<BatteryState<T>, EnergyError> {
    apply_step(state, &step_energy_a(action, charge_rate, params, grid)?)
}

pub fn battery_step_b<T: Scalar>(
    state: BatteryState<T>,
    action: Action,
    charge_rate: f64,
    params: &EnergyParams,
    grid: &GridMap,
) -> Result<BatteryState<T>, EnergyError> {
    apply_step(state, &step_energy_b(action, charge_rate, params, grid)?)
}
