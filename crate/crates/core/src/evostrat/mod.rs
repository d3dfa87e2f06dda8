//! Ask/tell black-box minimizers over fixed-dimension real vectors.
//!
//! An [`Optimizer`] proposes candidates with `ask` and consumes their fitness
//! with `tell`. Keeping the two apart is what lets the success predictor sit
//! between them and discard candidates before they are evaluated. Other
//! strategies (CMA-ES, DE, ...) plug in by implementing the same trait.

mod checkpoint;
pub mod functions;
mod lmmaes;
mod objective;
mod random;
mod runner;

pub use checkpoint::{Checkpoint, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use lmmaes::{default_population_size, LmMaEs, SIGMA_MAX, SIGMA_MIN};
pub use objective::{FnObjective, Objective, ObjectiveHandle};
pub use random::{random_search_step, RandomSearch};
pub use runner::{
    evaluate_candidates, minimize, run_optimizer, Incumbent, OptimizerKind, PlainRun, Progress,
    RunBudget, RunResult, Termination,
};

use serde::{Deserialize, Serialize};

use crate::Result;

/// One sampled point together with the randomness that produced it.
///
/// `point = mean + sigma * step`, where `step` is `draw` pushed through the
/// strategy's current transform. Strategies need the raw draw back in `tell`,
/// so filtered subsets must carry whole candidates, not bare points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub point: Vec<f64>,
    pub draw: Vec<f64>,
    pub step: Vec<f64>,
}

pub trait Optimizer {
    fn dimension(&self) -> usize;

    /// Number of evaluated candidates `tell` expects per generation.
    fn population_size(&self) -> usize;

    /// Samples `count` candidates. Advances the sampler's RNG only; the search
    /// distribution is left untouched.
    fn ask(&mut self, count: usize) -> Result<Vec<Candidate>>;

    /// Updates the search distribution from exactly `population_size()`
    /// evaluated candidates.
    fn tell(&mut self, evaluated: Vec<(Candidate, f64)>) -> Result<()>;
}
