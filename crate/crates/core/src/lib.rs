#![allow(clippy::neg_cmp_op_on_partial_ord)] // negated comparisons also reject NaN
//! Charge scheduling for commercial EV fleets.
//!
//! The scheduler minimizes a normalized weighted sum of charging cost,
//! battery capacity fade and (negative) ride availability over per-vehicle and
//! station current limits, and replays charging-session logs to compare it
//! against charging at maximum power.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases at
//! the crate root fix it to `f64`.

pub mod allocation;
pub mod config;
pub mod error;
pub mod fade;
pub mod ingest;
pub mod problem;
pub mod scalar;
pub mod scheduler;
pub mod simulator;
pub mod solver;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Allocation = allocation::Allocation<f64>;
pub type FadeModelParams = fade::FadeModelParams<f64>;
pub type SlotCharge = fade::SlotCharge<f64>;
pub type ChargingTask = problem::ChargingTask<f64>;
pub type ChargeLimits = problem::ChargeLimits<f64>;
pub type PriceSeries = problem::PriceSeries<f64>;
pub type ProblemInstance = problem::ProblemInstance<f64>;
pub type Weights = problem::Weights<f64>;
pub type ObjectiveBreakdown = problem::ObjectiveBreakdown<f64>;
pub type NormalizationPoints = problem::NormalizationPoints<f64>;
pub type SolverConfig = solver::SolverConfig<f64>;
pub type SolveReport = solver::SolveReport<f64>;
pub type FleetState = scheduler::FleetState<f64>;
pub type SimConfig = simulator::SimConfig<f64>;
pub type MetricsReport = simulator::MetricsReport<f64>;
pub type PriceCurve = ingest::PriceCurve<f64>;
