//! Energy-aware multi-robot exploration: scenario model, battery arithmetic,
//! MILP window model, LP/MILP solvers, receding-horizon planner and simulator.

pub mod energy;
pub mod instances;
pub mod milp;
pub mod num;
pub mod planner;
pub mod scenario;
pub mod simulator;
pub mod solver;

pub use num::Scalar;
pub use scenario::{Cell, GridMap, Scenario};

/// Window model over `f64`.
pub type Model = milp::MilpModel<f64>;
pub type Solution = solver::Solution<f64>;
pub type Battery = energy::BatteryState<f64>;
