//! Budgeted run driver shared by every strategy.

use serde::{Deserialize, Serialize};

use super::{Candidate, LmMaEs, ObjectiveHandle, Optimizer, RandomSearch};
use crate::error::invalid;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunBudget {
    pub max_evaluations: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Incumbent {
    pub point: Vec<f64>,
    pub fitness: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Termination {
    /// Another generation would exceed the evaluation budget.
    BudgetExhausted,
    /// The strategy's step size hit its floor or ceiling.
    StepSize { sigma: f64, iteration: u64 },
}

/// Best-so-far bookkeeping of a run; serializable so runs can be resumed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Progress {
    pub best: Option<Incumbent>,
    /// Best fitness seen after each generation.
    pub trace: Vec<f64>,
    pub evaluations: usize,
    pub max_evaluations: usize,
    pub population: usize,
    pub termination: Option<Termination>,
}

impl Progress {
    pub fn new(max_evaluations: usize, population: usize) -> Result<Self> {
        if population == 0 || max_evaluations < population {
            return Err(invalid(format!(
                "budget of {max_evaluations} evaluations does not cover one generation of {population}"
            )));
        }
        Ok(Self {
            best: None,
            trace: Vec::new(),
            evaluations: 0,
            max_evaluations,
            population,
            termination: None,
        })
    }

    pub fn iterations(&self) -> usize {
        self.trace.len()
    }

    /// `floor(max_evaluations / population)`.
    pub fn planned_iterations(&self) -> usize {
        self.max_evaluations / self.population
    }

    pub fn is_finished(&self) -> bool {
        self.termination.is_some()
    }

    pub fn best_fitness(&self) -> Option<f64> {
        self.best.as_ref().map(|b| b.fitness)
    }

    pub(crate) fn record(&mut self, evaluated: &[(Candidate, f64)]) {
        self.evaluations += evaluated.len();
        for (c, f) in evaluated {
            if self.best.as_ref().is_none_or(|b| *f < b.fitness) {
                self.best = Some(Incumbent {
                    point: c.point.clone(),
                    fitness: *f,
                });
            }
        }
        let best = self
            .best_fitness()
            .expect("at least one candidate recorded");
        self.trace.push(best);
        if self.evaluations + self.population > self.max_evaluations {
            self.termination = Some(Termination::BudgetExhausted);
        }
    }

    pub(crate) fn absorb_tell(&mut self, outcome: Result<()>) -> Result<()> {
        match outcome {
            Ok(()) => Ok(()),
            Err(Error::StepSize { sigma, iteration }) => {
                self.termination = Some(Termination::StepSize { sigma, iteration });
                Ok(())
            }
            Err(e) => Err(e),
        }
    }

    pub fn to_result(&self) -> Option<RunResult> {
        Some(RunResult {
            best: self.best.clone()?,
            trace: self.trace.clone(),
            evaluations: self.evaluations,
            termination: self.termination.clone(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub best: Incumbent,
    pub trace: Vec<f64>,
    pub evaluations: usize,
    pub termination: Option<Termination>,
}

/// Evaluates candidates through the counting handle. A non-finite value aborts
/// with the global index of the offending evaluation.
pub fn evaluate_candidates(
    objective: &ObjectiveHandle<'_>,
    candidates: Vec<Candidate>,
) -> Result<Vec<(Candidate, f64)>> {
    let before = objective.evaluations();
    let points: Vec<&[f64]> = candidates.iter().map(|c| c.point.as_slice()).collect();
    let fitness = objective.evaluate_batch(&points);
    if let Some((i, &value)) = fitness.iter().enumerate().find(|(_, f)| !f.is_finite()) {
        return Err(Error::NonFiniteFitness {
            value,
            evaluation: before + i + 1,
        });
    }
    Ok(candidates.into_iter().zip(fitness).collect())
}

/// An optimizer plus its progress: one resumable unit of work.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlainRun<O> {
    optimizer: O,
    progress: Progress,
}

impl<O: Optimizer> PlainRun<O> {
    pub fn new(optimizer: O, max_evaluations: usize) -> Result<Self> {
        let progress = Progress::new(max_evaluations, optimizer.population_size())?;
        Ok(Self {
            optimizer,
            progress,
        })
    }

    pub fn optimizer(&self) -> &O {
        &self.optimizer
    }

    pub fn progress(&self) -> &Progress {
        &self.progress
    }

    /// Runs one generation. Returns `false` once the run has finished.
    pub fn step(&mut self, objective: &ObjectiveHandle<'_>) -> Result<bool> {
        if self.progress.is_finished() {
            return Ok(false);
        }
        let lambda = self.optimizer.population_size();
        let candidates = self.optimizer.ask(lambda)?;
        let evaluated = evaluate_candidates(objective, candidates)?;
        self.progress.record(&evaluated);
        let told = self.optimizer.tell(evaluated);
        self.progress.absorb_tell(told)?;
        Ok(true)
    }

    pub fn run_to_end(&mut self, objective: &ObjectiveHandle<'_>) -> Result<RunResult> {
        while self.step(objective)? {}
        Ok(self
            .progress
            .to_result()
            .expect("a finished run has evaluated at least once"))
    }
}

pub fn run_optimizer<O: Optimizer>(
    optimizer: O,
    objective: &ObjectiveHandle<'_>,
    max_evaluations: usize,
) -> Result<RunResult> {
    PlainRun::new(optimizer, max_evaluations)?.run_to_end(objective)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OptimizerKind {
    LmMaEs,
    RandomSearch,
}

/// Builds the optimizer from `budget.seed` with default settings and runs it.
pub fn minimize(
    kind: OptimizerKind,
    objective: &ObjectiveHandle<'_>,
    budget: RunBudget,
) -> Result<RunResult> {
    let n = objective.dimension();
    match kind {
        OptimizerKind::LmMaEs => run_optimizer(
            LmMaEs::new(n, budget.seed)?,
            objective,
            budget.max_evaluations,
        ),
        OptimizerKind::RandomSearch => run_optimizer(
            RandomSearch::new(n, budget.seed)?,
            objective,
            budget.max_evaluations,
        ),
    }
}
