//! One optimizer run against one objective, checkpointed to disk.
//!
//! A run's checkpoint file holds either its live state or, once it has
//! finished, its result. Re-executing a run therefore resumes it where it
//! stopped, or returns the stored result without evaluating anything.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use mastersample::evostrat::{
    Checkpoint, LmMaEs, Objective, ObjectiveHandle, PlainRun, RandomSearch, RunResult,
};
use mastersample::predictor::{AssistedSearch, FilterConfig, IterationRecord, PredictorNet};
use mastersample::seed::derive_seed;
use mastersample::{Error, Result};
use serde::{Deserialize, Serialize};

use crate::config::OptimizerChoice;

pub const RUN_CHECKPOINT_KIND: &str = "experiment-run";

/// Identifies a run within an experiment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunKey {
    pub config_hash: String,
    pub optimizer: OptimizerChoice,
    /// Greedy iteration or cluster index; 0 for single-master runs.
    pub stage: usize,
    pub seed: u64,
}

impl RunKey {
    fn stem(&self) -> String {
        format!("stage{:02}-seed{}", self.stage, self.seed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinishedRun {
    pub result: RunResult,
    pub reinitializations: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum RunState {
    Random(PlainRun<RandomSearch>),
    LmMaEs(PlainRun<LmMaEs>),
    Assisted(Box<AssistedSearch<PredictorNet<f32>>>),
    Finished(FinishedRun),
}

impl RunState {
    fn iterations(&self) -> usize {
        match self {
            Self::Random(r) => r.progress().iterations(),
            Self::LmMaEs(r) => r.progress().iterations(),
            Self::Assisted(r) => r.progress().iterations(),
            Self::Finished(f) => f.result.trace.len(),
        }
    }

    fn is_finished(&self) -> bool {
        match self {
            Self::Random(r) => r.progress().is_finished(),
            Self::LmMaEs(r) => r.progress().is_finished(),
            Self::Assisted(r) => r.progress().is_finished(),
            Self::Finished(_) => true,
        }
    }

    /// One generation; `false` once the run has finished.
    fn step(&mut self, objective: &ObjectiveHandle<'_>) -> Result<bool> {
        match self {
            Self::Random(r) => r.step(objective),
            Self::LmMaEs(r) => r.step(objective),
            Self::Assisted(r) => Ok(r.step(objective)?.is_some()),
            Self::Finished(_) => Ok(false),
        }
    }

    fn finish(&self) -> FinishedRun {
        let (progress, reinitializations) = match self {
            Self::Random(r) => (r.progress(), 0),
            Self::LmMaEs(r) => (r.progress(), 0),
            Self::Assisted(r) => (r.progress(), r.reinitializations()),
            Self::Finished(f) => return f.clone(),
        };
        FinishedRun {
            result: progress.to_result().expect("a finished run has evaluated"),
            reinitializations,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunCheckpoint {
    pub key: RunKey,
    pub state: RunState,
}

impl RunCheckpoint {
    pub fn load(path: &Path) -> Result<Self> {
        Ok(Checkpoint::<Self>::load(path, RUN_CHECKPOINT_KIND)?.payload)
    }
}

/// Serializes exactly like [`RunCheckpoint`] without owning the state.
#[derive(Serialize)]
struct RunCheckpointRef<'a> {
    key: &'a RunKey,
    state: &'a RunState,
}

#[derive(Serialize)]
struct PlainTraceLine {
    iteration: usize,
    best_fitness: f64,
}

/// Settings shared by every run of an experiment.
#[derive(Debug, Clone)]
pub struct RunSettings {
    pub out_dir: PathBuf,
    pub config_hash: String,
    pub root_seed: u64,
    pub budget: usize,
    pub population: usize,
    pub initial_sigma: f64,
    pub filter: FilterConfig,
    pub checkpoint_every: usize,
    /// Stop every run once it has completed this many generations.
    pub halt_at: Option<usize>,
}

impl RunSettings {
    pub fn key(&self, optimizer: OptimizerChoice, stage: usize, seed: u64) -> RunKey {
        RunKey {
            config_hash: self.config_hash.clone(),
            optimizer,
            stage,
            seed,
        }
    }

    pub fn checkpoint_path(&self, key: &RunKey) -> PathBuf {
        self.out_dir
            .join("checkpoints")
            .join(key.optimizer.slug())
            .join(format!("{}.json", key.stem()))
    }

    pub fn trace_path(&self, key: &RunKey) -> PathBuf {
        self.out_dir
            .join("traces")
            .join(key.optimizer.slug())
            .join(format!("{}.ndjson", key.stem()))
    }

    fn fresh_state(&self, key: &RunKey, dimension: usize) -> Result<RunState> {
        let tag = format!("{}/{}", key.seed, key.stage);
        let es_seed = derive_seed(self.root_seed, &format!("optimizer/{tag}"));
        let es = || {
            LmMaEs::with_options(
                dimension,
                es_seed,
                None,
                self.initial_sigma,
                Some(self.population),
            )
        };
        Ok(match key.optimizer {
            OptimizerChoice::Random => RunState::Random(PlainRun::new(
                RandomSearch::with_batch(dimension, es_seed, self.population)?,
                self.budget,
            )?),
            OptimizerChoice::LmMaEs => RunState::LmMaEs(PlainRun::new(es()?, self.budget)?),
            OptimizerChoice::Assisted => {
                let net = PredictorNet::new(
                    dimension,
                    derive_seed(self.root_seed, &format!("predictor-init/{tag}")),
                );
                RunState::Assisted(Box::new(AssistedSearch::new(
                    es()?,
                    net,
                    self.filter.clone(),
                    self.budget,
                    derive_seed(self.root_seed, &format!("predictor/{tag}")),
                )?))
            }
        })
    }

    /// Runs `key` against `objective` to the end of the budget, resuming from
    /// its checkpoint if one exists.
    pub fn execute(&self, key: &RunKey, objective: &dyn Objective) -> Result<FinishedRun> {
        let path = self.checkpoint_path(key);
        let mut state = if path.exists() {
            let stored = RunCheckpoint::load(&path)?;
            if stored.key != *key {
                return Err(Error::Checkpoint(format!(
                    "{} belongs to {:?}, expected {:?}",
                    path.display(),
                    stored.key,
                    key
                )));
            }
            stored.state
        } else {
            self.fresh_state(key, objective.dimension())?
        };
        if let RunState::Finished(done) = state {
            return Ok(done);
        }

        let handle = ObjectiveHandle::new(objective);
        while state.step(&handle)? {
            let halt = self.halt_at == Some(state.iterations()) && !state.is_finished();
            if halt || state.iterations() % self.checkpoint_every == 0 {
                self.store(key, &state, &path)?;
            }
            if halt {
                return Err(Error::Interrupted {
                    iteration: state.iterations(),
                    checkpoint: path.display().to_string(),
                });
            }
        }
        self.write_trace(key, &state)?;
        let done = state.finish();
        self.store(key, &RunState::Finished(done.clone()), &path)?;
        Ok(done)
    }

    fn store(&self, key: &RunKey, state: &RunState, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        Checkpoint::new(RUN_CHECKPOINT_KIND, RunCheckpointRef { key, state }).save(path)
    }

    fn write_trace(&self, key: &RunKey, state: &RunState) -> Result<()> {
        let path = self.trace_path(key);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        let mut out = Vec::new();
        match state {
            RunState::Assisted(r) => {
                for record in r.records() {
                    write_line(&mut out, record)?;
                }
            }
            RunState::Random(_) | RunState::LmMaEs(_) => {
                let result = state.finish().result;
                for (iteration, &best_fitness) in result.trace.iter().enumerate() {
                    write_line(
                        &mut out,
                        &PlainTraceLine {
                            iteration,
                            best_fitness,
                        },
                    )?;
                }
            }
            RunState::Finished(_) => {}
        }
        fs::write(path, out)?;
        Ok(())
    }
}

fn write_line<T: Serialize>(out: &mut Vec<u8>, value: &T) -> Result<()> {
    serde_json::to_writer(&mut *out, value)?;
    out.write_all(b"\n")?;
    Ok(())
}

/// Reads a run's diagnostics trace back.
pub fn read_assisted_trace(path: &Path) -> Result<Vec<IterationRecord>> {
    let text = fs::read_to_string(path)?;
    text.lines().map(|l| Ok(serde_json::from_str(l)?)).collect()
}
