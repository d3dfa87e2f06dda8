//! The predictor-assisted generation loop.

use serde::{Deserialize, Serialize};

use super::filter::{audit_accuracy, filter_candidates};
use super::memory::{relabel, ReplayMemory};
use crate::error::invalid;
use crate::evostrat::{
    default_population_size, evaluate_candidates, Candidate, LmMaEs, ObjectiveHandle, Optimizer,
    Progress, RunBudget, RunResult,
};
use crate::seed::{derive_seed, rng_from_seed, Rng};
use crate::Result;

/// A classifier estimating whether a candidate will land below the memory's
/// p-percentile.
pub trait Predictor {
    /// Success probabilities in `(0, 1)`, one per candidate. Inference mode.
    fn score(&self, candidates: &[&[f64]]) -> Vec<f64>;

    /// One training pass; returns the mean loss, or `None` if nothing trained.
    fn train_epoch(&mut self, labeled: &[(&[f64], bool)], rng: &mut Rng) -> Option<f64>;

    /// Discards all learned state.
    fn reinitialize(&mut self);
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterConfig {
    /// Candidates sampled per generation before filtering (lambda').
    pub oversample: usize,
    /// Candidates evaluated per generation (lambda).
    pub population: usize,
    /// Percentile of the memory that separates successful candidates.
    pub percentile: f64,
    /// Audited accuracy below this counts toward a reinitialization.
    pub accuracy_threshold: f64,
    /// Consecutive low-accuracy generations that trigger a reinitialization.
    pub patience: usize,
    /// Leading share of the planned generations that runs unfiltered.
    pub warmup_fraction: f64,
    pub memory_capacity: usize,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            oversample: 1000,
            population: 22,
            percentile: 5.0,
            accuracy_threshold: 0.6,
            patience: 20,
            warmup_fraction: 0.05,
            memory_capacity: 5000,
        }
    }
}

impl FilterConfig {
    /// Defaults with `population` set to the LM-MA-ES default for `dimension`.
    pub fn for_dimension(dimension: usize) -> Self {
        Self {
            population: default_population_size(dimension),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.population < 2 {
            return Err(invalid("population must be at least 2"));
        }
        if self.oversample < self.population {
            return Err(invalid(format!(
                "oversample ({}) must be at least population ({})",
                self.oversample, self.population
            )));
        }
        if !(self.percentile > 0.0 && self.percentile < 100.0) {
            return Err(invalid(format!(
                "percentile {} outside (0, 100)",
                self.percentile
            )));
        }
        if !(self.accuracy_threshold > 0.0 && self.accuracy_threshold < 1.0) {
            return Err(invalid(format!(
                "accuracy threshold {} outside (0, 1)",
                self.accuracy_threshold
            )));
        }
        if self.patience == 0 {
            return Err(invalid("patience must be positive"));
        }
        if !(0.0..=1.0).contains(&self.warmup_fraction) {
            return Err(invalid(format!(
                "warm-up fraction {} outside [0, 1]",
                self.warmup_fraction
            )));
        }
        if self.memory_capacity == 0 {
            return Err(invalid("memory capacity must be positive"));
        }
        Ok(())
    }
}

/// One line of the per-generation diagnostics trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub best_fitness: f64,
    pub memory_size: usize,
    /// Audited accuracy of the filtered batch; absent during warm-up.
    pub accuracy: Option<f64>,
    pub reinitialized: bool,
    pub loss: Option<f64>,
    pub filtered: bool,
}

/// LM-MA-ES with a success predictor between `ask` and evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssistedSearch<P> {
    es: LmMaEs,
    predictor: P,
    memory: ReplayMemory,
    config: FilterConfig,
    rng: Rng,
    progress: Progress,
    warmup_iterations: usize,
    low_accuracy_streak: usize,
    reinitializations: usize,
    records: Vec<IterationRecord>,
}

impl<P: Predictor> AssistedSearch<P> {
    /// `seed` drives memory eviction, batch shuffling and filter sampling; the
    /// strategy and predictor bring their own streams.
    pub fn new(
        es: LmMaEs,
        predictor: P,
        config: FilterConfig,
        max_evaluations: usize,
        seed: u64,
    ) -> Result<Self> {
        config.validate()?;
        if config.population != es.lambda() {
            return Err(invalid(format!(
                "filter population {} differs from strategy lambda {}",
                config.population,
                es.lambda()
            )));
        }
        let progress = Progress::new(max_evaluations, config.population)?;
        let warmup_iterations =
            (config.warmup_fraction * progress.planned_iterations() as f64).floor() as usize;
        Ok(Self {
            memory: ReplayMemory::new(config.memory_capacity, derive_seed(seed, "memory"))?,
            rng: rng_from_seed(derive_seed(seed, "sampling")),
            es,
            predictor,
            config,
            progress,
            warmup_iterations,
            low_accuracy_streak: 0,
            reinitializations: 0,
            records: Vec::new(),
        })
    }

    pub fn progress(&self) -> &Progress {
        &self.progress
    }

    pub fn records(&self) -> &[IterationRecord] {
        &self.records
    }

    pub fn strategy(&self) -> &LmMaEs {
        &self.es
    }

    pub fn predictor(&self) -> &P {
        &self.predictor
    }

    pub fn memory(&self) -> &ReplayMemory {
        &self.memory
    }

    pub fn config(&self) -> &FilterConfig {
        &self.config
    }

    pub fn warmup_iterations(&self) -> usize {
        self.warmup_iterations
    }

    pub fn reinitializations(&self) -> usize {
        self.reinitializations
    }

    /// Runs one generation; `None` once the run has finished.
    pub fn step(&mut self, objective: &ObjectiveHandle<'_>) -> Result<Option<IterationRecord>> {
        if self.progress.is_finished() {
            return Ok(None);
        }
        let iteration = self.progress.iterations();
        let lambda = self.config.population;
        let filtered = iteration >= self.warmup_iterations;

        let (batch, scores) = if filtered {
            let pool = self.es.ask(self.config.oversample)?;
            let rows: Vec<&[f64]> = pool.iter().map(|c| c.point.as_slice()).collect();
            let picks = filter_candidates(&self.predictor, &rows, lambda, &mut self.rng)?;
            let mut slots: Vec<Option<Candidate>> = pool.into_iter().map(Some).collect();
            let chosen = picks
                .iter()
                .map(|s| slots[s.index].take().expect("selections are distinct"))
                .collect();
            (
                chosen,
                Some(picks.iter().map(|s| s.score).collect::<Vec<_>>()),
            )
        } else {
            (self.es.ask(lambda)?, None)
        };

        let evaluated = evaluate_candidates(objective, batch)?;

        // Audit against the memory the predictor was trained on.
        let accuracy = scores.and_then(|scores| {
            let pairs: Vec<(f64, f64)> = scores
                .into_iter()
                .zip(evaluated.iter().map(|(_, f)| *f))
                .collect();
            audit_accuracy(&pairs, &self.memory, self.config.percentile)
        });

        for (c, f) in &evaluated {
            self.memory.insert(c.point.clone(), *f)?;
        }
        let labeled = relabel(&self.memory, self.config.percentile);
        let loss = self.predictor.train_epoch(&labeled, &mut self.rng);

        self.progress.record(&evaluated);
        let told = self.es.tell(evaluated);
        self.progress.absorb_tell(told)?;

        let mut reinitialized = false;
        if let Some(acc) = accuracy {
            if acc < self.config.accuracy_threshold {
                self.low_accuracy_streak += 1;
            } else {
                self.low_accuracy_streak = 0;
            }
            if self.low_accuracy_streak >= self.config.patience {
                self.predictor.reinitialize();
                self.low_accuracy_streak = 0;
                self.reinitializations += 1;
                reinitialized = true;
            }
        }

        let record = IterationRecord {
            iteration,
            best_fitness: self.progress.best_fitness().expect("recorded a generation"),
            memory_size: self.memory.len(),
            accuracy,
            reinitialized,
            loss,
            filtered,
        };
        self.records.push(record.clone());
        Ok(Some(record))
    }

    pub fn run_to_end(&mut self, objective: &ObjectiveHandle<'_>) -> Result<RunResult> {
        while self.step(objective)?.is_some() {}
        Ok(self
            .progress
            .to_result()
            .expect("a finished run has evaluated at least once"))
    }
}

/// Runs a predictor-assisted search to the end of `budget`.
pub fn assisted_generation_loop<P: Predictor>(
    es: LmMaEs,
    predictor: P,
    config: FilterConfig,
    objective: &ObjectiveHandle<'_>,
    budget: RunBudget,
) -> Result<(RunResult, Vec<IterationRecord>)> {
    let mut search =
        AssistedSearch::new(es, predictor, config, budget.max_evaluations, budget.seed)?;
    let result = search.run_to_end(objective)?;
    Ok((result, search.records))
}
