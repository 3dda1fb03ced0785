//! Privacy-preserving finite-time push-sum over directed graphs, its
//! gradient-descent outer loop, and an adversary harness that checks the
//! uncertainty-based privacy guarantee by re-execution.

pub mod digraph;
mod engine;
pub mod error;
pub mod hankel;
pub mod optimizer;
pub mod privacy;
pub mod prftps;
pub mod pushsum;
pub mod scalar;
pub mod termination;

pub use digraph::{is_strongly_connected, neighbor_sets, random_strongly_connected, DiGraph, NeighborSets};
pub use error::{Error, Result};
pub use hankel::{DefectScan, PolyCoefficients, Trajectory};
pub use optimizer::{ConvergenceReport, LeastSquaresObjective, Objective, OptimizerConfig, RowStochasticMixer};
pub use prftps::{prftps_step, Arithmetic, DiscoveryReport, PrftpsConfig, PrftpsSession, StepReport};
pub use pushsum::{AgentConsensusState, BaselineState, Phase, WeightSet};
pub use termination::TerminationState;
