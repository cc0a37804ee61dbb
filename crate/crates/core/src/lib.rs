//! Dual-sourcing inventory control for green hydrogen.
//!
//! A solver and simulation engine for a weekly-review inventory system fed by
//! a local supplier with stochastic capacity and an import channel with
//! random yield and a longer lead time. The crate computes optimal ordering
//! policies for the average-cost Markov decision process, tunes four
//! practitioner heuristics (FOQ, FOQ+, TBS, TBS+), and evaluates every policy
//! by seeded long-run simulation.
//!
//! Core math is generic over the scalar type via [`real::Real`]; the `f64`
//! aliases below are what the CLI and experiments use.

pub mod dynamics;
pub mod error;
pub mod experiments;
pub mod heuristics;
pub mod model;
pub mod real;
pub mod simulator;
pub mod solver;

pub use error::{Error, Result};
pub use real::Real;

/// `f64` specializations of the generic core types.
pub type DiscreteDistribution = model::DiscreteDistribution<f64>;
pub type DistributionSpec = model::DistributionSpec<f64>;
pub type CostParams = model::CostParams<f64>;
pub type ProblemConfig = model::ProblemConfig<f64>;
pub type Dynamics = dynamics::Dynamics<f64>;
pub type TransitionEntry = dynamics::TransitionEntry<f64>;
pub type SolverOptions = solver::SolverOptions<f64>;
pub type SolveResult = solver::SolveResult<f64>;
pub type SimulationReport = simulator::SimulationReport<f64>;
pub type BenchmarkVariant = simulator::BenchmarkVariant<f64>;
