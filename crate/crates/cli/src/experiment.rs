//! Experiment driver: world, identity split, calibration, searches, artifacts.
//!
//! Output directory layout:
//!
//! ```text
//! config.toml                   resolved configuration
//! checkpoints/<opt>/*.json      per-run state, replaced by the result when done
//! traces/<opt>/*.ndjson         per-run iteration traces
//! coverage/<opt>.{train,test}.csv
//! masters.json                  master latents at full precision
//! runs.csv                      one line per optimizer run
//! summary.csv, summary.txt
//! INCOMPLETE                    present while running or after a failure
//! ```

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use log::{info, warn};
use mastersample::coverage::{
    clustered_coverage_search, combined_far_frr, combined_threshold_grid, far_frr, greedy_coverage,
    threshold_at_eer, threshold_at_far, AttackTarget, CombinedProblem, CoverageReport, PairScores,
    VerificationProblem,
};
use mastersample::evostrat::Termination;
use mastersample::seed::derive_seed;
use mastersample::synthworld::{build_world, paired_world};
use mastersample::Error;
use serde::{Deserialize, Serialize};

use crate::config::{CoverageMode, ExperimentConfig, OptimizerChoice, ThresholdPolicy};
use crate::runs::{FinishedRun, RunCheckpoint, RunKey, RunSettings};
use crate::summary::{PerModelMsc, Summary, SummaryRow};
use crate::{CliError, CliResult};

pub const CONFIG_FILE: &str = "config.toml";
pub const INCOMPLETE_MARKER: &str = "INCOMPLETE";
pub const MASTERS_FILE: &str = "masters.json";
pub const SUMMARY_CSV: &str = "summary.csv";
pub const SUMMARY_TXT: &str = "summary.txt";

/// Seeded split of identity indices into sorted train and test lists.
pub fn split_identities(n: usize, n_train: usize, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&i| (derive_seed(seed, &i.to_string()), i));
    let mut train = order[..n_train].to_vec();
    let mut test = order[n_train..].to_vec();
    train.sort_unstable();
    test.sort_unstable();
    (train, test)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    /// One threshold per model.
    pub thresholds: Vec<f64>,
    /// Rates of the decision on the training pairs.
    pub far: f64,
    pub frr: f64,
}

pub fn calibrate_single(scores: &PairScores, policy: ThresholdPolicy) -> CliResult<Calibration> {
    let theta = match policy {
        ThresholdPolicy::FarTarget { target } => {
            let t = threshold_at_far(scores, target)?;
            if !t.attainable {
                warn!(
                    "FAR target {target} is below the resolution of {} impostor pairs",
                    scores.impostor.len()
                );
            }
            t.theta
        }
        ThresholdPolicy::Eer => threshold_at_eer(scores)?.theta,
        ThresholdPolicy::CombinedGrid { .. } => {
            return Err(CliError::Config(
                "the combined_grid policy needs two models".into(),
            ))
        }
    };
    let (far, frr) = far_frr(scores, theta)?;
    Ok(Calibration {
        thresholds: vec![theta],
        far,
        frr,
    })
}

pub fn calibrate_combined(
    a: &PairScores,
    b: &PairScores,
    policy: ThresholdPolicy,
) -> CliResult<Calibration> {
    let (theta_a, theta_b) = match policy {
        ThresholdPolicy::CombinedGrid { resolution } => {
            let g = combined_threshold_grid(a, b, resolution)?;
            (g.theta_a, g.theta_b)
        }
        _ => (
            calibrate_single(a, policy)?.thresholds[0],
            calibrate_single(b, policy)?.thresholds[0],
        ),
    };
    let (far, frr) = combined_far_frr(a, b, theta_a, theta_b)?;
    Ok(Calibration {
        thresholds: vec![theta_a, theta_b],
        far,
        frr,
    })
}

#[derive(Debug, Clone)]
pub struct Targets<T> {
    pub train: T,
    pub test: T,
}

#[derive(Debug, Clone)]
#[allow(clippy::large_enum_variant)]
pub enum Attack {
    Single(Targets<VerificationProblem>),
    Combined(Targets<CombinedProblem>),
}

/// Everything an experiment attacks, rebuilt from the configuration alone.
#[derive(Debug, Clone)]
pub struct Setup {
    /// The resolved configuration.
    pub config: ExperimentConfig,
    pub train_ids: Vec<usize>,
    pub test_ids: Vec<usize>,
    pub calibration: Calibration,
    pub attack: Attack,
    pub warnings: Vec<String>,
}

impl Setup {
    pub fn build(config: &ExperimentConfig) -> CliResult<Self> {
        config.validate()?;
        let config = config.resolved();
        let root = config.experiment.root_seed;
        let (train_ids, test_ids) = split_identities(
            config.world.n_identities,
            config.train_size(),
            derive_seed(root, "split"),
        );
        let ids = |v: &[usize]| v.iter().map(|&i| i as u64).collect::<Vec<_>>();
        let (train_u, test_u) = (ids(&train_ids), ids(&test_ids));
        let policy = config.experiment.threshold;
        let (calibration, attack, warnings) = if config.experiment.mode == CoverageMode::Combined {
            let world = paired_world(&config.world)?;
            let [sa, sb] = world.pair_scores(&train_ids)?;
            let cal = calibrate_combined(&sa, &sb, policy)?;
            let full = CombinedProblem::new(
                world.models[0].problem(cal.thresholds[0])?,
                world.models[1].problem(cal.thresholds[1])?,
            )?;
            let targets = Targets {
                train: full.restrict(&train_u)?,
                test: full.restrict(&test_u)?,
            };
            (cal, Attack::Combined(targets), world.warnings)
        } else {
            let world = build_world(&config.world)?;
            let cal = calibrate_single(&world.pair_scores(&train_ids)?, policy)?;
            let full = world.problem(cal.thresholds[0])?;
            let targets = Targets {
                train: full.restrict(&train_u)?,
                test: full.restrict(&test_u)?,
            };
            (cal, Attack::Single(targets), world.warnings)
        };
        Ok(Self {
            config,
            train_ids,
            test_ids,
            calibration,
            attack,
            warnings,
        })
    }

    /// Train and test cumulative MSC of `latents`, and per-model values for a
    /// combined attack.
    pub fn score(&self, latents: &[Vec<f64>]) -> CliResult<(f64, f64, Option<PerModelMsc>)> {
        let msc = |t: &dyn Fn() -> mastersample::Result<CoverageReport>| -> CliResult<f64> {
            Ok(t()?.cumulative_coverage)
        };
        match &self.attack {
            Attack::Single(t) => Ok((
                msc(&|| CoverageReport::from_latents(&t.train, latents))?,
                msc(&|| CoverageReport::from_latents(&t.test, latents))?,
                None,
            )),
            Attack::Combined(t) => {
                let (train_a, train_b) = t.train.models();
                let (test_a, test_b) = t.test.models();
                let per_model = PerModelMsc {
                    train_a: msc(&|| CoverageReport::from_latents(train_a, latents))?,
                    train_b: msc(&|| CoverageReport::from_latents(train_b, latents))?,
                    test_a: msc(&|| CoverageReport::from_latents(test_a, latents))?,
                    test_b: msc(&|| CoverageReport::from_latents(test_b, latents))?,
                };
                Ok((
                    msc(&|| CoverageReport::from_latents(&t.train, latents))?,
                    msc(&|| CoverageReport::from_latents(&t.test, latents))?,
                    Some(per_model),
                ))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MasterRecord {
    pub latent: Vec<f64>,
    /// Seed of the run that produced the master.
    pub seed: Option<u64>,
    pub train_marginal_msc: f64,
    pub covered_train_ids: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerMasters {
    pub optimizer: OptimizerChoice,
    pub masters: Vec<MasterRecord>,
}

/// Masters of every optimizer, enough to recompute every table value from
/// the configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MastersFile {
    pub config_hash: String,
    pub world_seed: u64,
    pub calibration: Calibration,
    pub train_ids: Vec<usize>,
    pub test_ids: Vec<usize>,
    pub optimizers: Vec<OptimizerMasters>,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Interrupt every run after this many generations.
    pub halt_at: Option<usize>,
}

struct OptimizerOutcome {
    train: CoverageReport,
    test: CoverageReport,
    runs: Vec<(RunKey, FinishedRun)>,
}

fn search<T: AttackTarget>(
    config: &ExperimentConfig,
    settings: &RunSettings,
    optimizer: OptimizerChoice,
    targets: &Targets<T>,
) -> mastersample::Result<OptimizerOutcome> {
    let seeds = &config.experiment.seeds;
    let runs = Mutex::new(Vec::new());
    let inner = |target: &T, stage: usize, attempt: usize| -> mastersample::Result<Vec<f64>> {
        let key = settings.key(optimizer, stage, seeds[attempt]);
        let done = settings.execute(&key, target)?;
        info!(
            "{optimizer} stage {stage} seed {}: best fitness {:.6} after {} evaluations",
            key.seed, done.result.best.fitness, done.result.evaluations
        );
        let z = done.result.best.point.clone();
        runs.lock().expect("run log lock").push((key, done));
        Ok(z)
    };
    let attempts = seeds.len();
    let train = match config.experiment.mode {
        CoverageMode::Single | CoverageMode::Combined => {
            greedy_coverage(&targets.train, 1, &inner, attempts)?
        }
        CoverageMode::Greedy { max_iter } => {
            greedy_coverage(&targets.train, max_iter, &inner, attempts)?
        }
        CoverageMode::Clustered { k } => clustered_coverage_search(
            &targets.train,
            k,
            &inner,
            attempts,
            derive_seed(config.experiment.root_seed, "clusters"),
        )?,
    };
    let test = CoverageReport::from_latents(&targets.test, &train.latents())?;
    let mut runs = runs.into_inner().expect("run log lock");
    runs.sort_by_key(|(k, _)| (k.stage, k.seed));
    Ok(OptimizerOutcome { train, test, runs })
}

/// Creates the output directory and pins it to this configuration.
fn prepare_output(out_dir: &Path, config: &ExperimentConfig) -> CliResult<()> {
    let unwritable = |e: std::io::Error| CliError::Output(format!("{}: {e}", out_dir.display()));
    fs::create_dir_all(out_dir).map_err(unwritable)?;
    let path = out_dir.join(CONFIG_FILE);
    if path.exists() {
        let existing = ExperimentConfig::load(&path)?;
        if existing.hash() != config.hash() {
            return Err(CliError::Config(format!(
                "{} holds a different experiment (config {} vs {}); choose another output directory",
                out_dir.display(),
                existing.hash(),
                config.hash()
            )));
        }
    }
    fs::write(&path, config.to_toml()).map_err(unwritable)?;
    fs::write(out_dir.join(INCOMPLETE_MARKER), "running\n").map_err(unwritable)?;
    Ok(())
}

/// Runs the whole experiment into `out_dir`. Runs finished by an earlier
/// invocation are reused, and interrupted ones resume from their checkpoints.
pub fn run_experiment(
    config: &ExperimentConfig,
    out_dir: &Path,
    options: RunOptions,
) -> CliResult<Summary> {
    config.validate()?;
    let mut config = config.resolved();
    config.experiment.output_dir = out_dir.to_path_buf();
    prepare_output(out_dir, &config)?;
    let outcome = execute(&config, out_dir, options);
    let marker = out_dir.join(INCOMPLETE_MARKER);
    match &outcome {
        Ok(_) => fs::remove_file(&marker)?,
        Err(e) => {
            // The run already failed; a missing marker is the lesser problem.
            let _ = fs::write(&marker, format!("{e}\n"));
        }
    }
    outcome
}

fn execute(config: &ExperimentConfig, out_dir: &Path, options: RunOptions) -> CliResult<Summary> {
    let setup = Setup::build(config)?;
    for w in &setup.warnings {
        warn!("{w}");
    }
    info!(
        "world seed {}: {} train / {} test identities, thresholds {:?}",
        config.world.seed,
        setup.train_ids.len(),
        setup.test_ids.len(),
        setup.calibration.thresholds
    );
    let hash = config.hash();
    let settings = RunSettings {
        out_dir: out_dir.to_path_buf(),
        config_hash: hash.clone(),
        root_seed: config.experiment.root_seed,
        budget: config.experiment.budget,
        population: config.population(),
        initial_sigma: config.optimizer.initial_sigma,
        filter: config.filter_config(),
        checkpoint_every: config.experiment.checkpoint_every,
        halt_at: options.halt_at,
    };

    let coverage_dir = out_dir.join("coverage");
    fs::create_dir_all(&coverage_dir)?;
    let mut rows = Vec::new();
    let mut masters = Vec::new();
    let mut run_lines = String::from(
        "optimizer,stage,seed,best_fitness,evaluations,iterations,reinitializations,termination\n",
    );
    for &optimizer in &config.optimizer.run {
        let outcome = match &setup.attack {
            Attack::Single(t) => search(config, &settings, optimizer, t),
            Attack::Combined(t) => search(config, &settings, optimizer, t),
        };
        let outcome = match outcome {
            Ok(o) => o,
            Err(Error::CoverageAborted { partial, source }) => {
                let path = coverage_dir.join(format!("{}.train.partial.csv", optimizer.slug()));
                fs::write(path, partial.to_csv())?;
                return Err(CliError::Run(*source));
            }
            Err(e) => return Err(e.into()),
        };
        let slug = optimizer.slug();
        fs::write(
            coverage_dir.join(format!("{slug}.train.csv")),
            outcome.train.to_csv(),
        )?;
        fs::write(
            coverage_dir.join(format!("{slug}.test.csv")),
            outcome.test.to_csv(),
        )?;

        let (_, _, per_model) = setup.score(&outcome.train.latents())?;
        rows.push(SummaryRow {
            optimizer,
            masters: outcome.train.master_samples.len(),
            train_msc: outcome.train.cumulative_coverage,
            test_msc: outcome.test.cumulative_coverage,
            evaluations: outcome.runs.iter().map(|(_, r)| r.result.evaluations).sum(),
            per_model,
        });
        masters.push(OptimizerMasters {
            optimizer,
            masters: outcome
                .train
                .master_samples
                .iter()
                .map(|m| MasterRecord {
                    latent: m.latent.clone(),
                    seed: m.attempt.map(|a| config.experiment.seeds[a]),
                    train_marginal_msc: m.marginal_msc,
                    covered_train_ids: m.covered_subject_ids.clone(),
                })
                .collect(),
        });
        for (key, run) in &outcome.runs {
            let termination = match &run.result.termination {
                Some(Termination::BudgetExhausted) | None => "budget".to_string(),
                Some(Termination::StepSize { iteration, .. }) => format!("step-size@{iteration}"),
            };
            run_lines.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                optimizer,
                key.stage,
                key.seed,
                run.result.best.fitness,
                run.result.evaluations,
                run.result.trace.len(),
                run.reinitializations,
                termination
            ));
        }
    }

    let summary = Summary {
        mode: config.experiment.mode.name().to_string(),
        world_seed: config.world.seed,
        train_subjects: setup.train_ids.len(),
        test_subjects: setup.test_ids.len(),
        calibration: setup.calibration.clone(),
        rows,
    };
    let masters = MastersFile {
        config_hash: hash,
        world_seed: config.world.seed,
        calibration: setup.calibration.clone(),
        train_ids: setup.train_ids.clone(),
        test_ids: setup.test_ids.clone(),
        optimizers: masters,
    };
    fs::write(
        out_dir.join(MASTERS_FILE),
        serde_json::to_string_pretty(&masters)?,
    )?;
    fs::write(out_dir.join("runs.csv"), run_lines)?;
    fs::write(out_dir.join(SUMMARY_CSV), summary.to_csv())?;
    fs::write(out_dir.join(SUMMARY_TXT), summary.to_table())?;
    Ok(summary)
}

/// Finds the experiment directory a run checkpoint belongs to and checks the
/// checkpoint against its configuration.
pub fn locate_resume(path: &Path) -> CliResult<(PathBuf, ExperimentConfig)> {
    let out_dir = if path.is_dir() {
        path.to_path_buf()
    } else {
        path.ancestors()
            .skip(1)
            .find(|d| d.join(CONFIG_FILE).is_file())
            .map(Path::to_path_buf)
            .ok_or_else(|| CliError::Config(format!("no {CONFIG_FILE} above {}", path.display())))?
    };
    let config = ExperimentConfig::load(&out_dir.join(CONFIG_FILE))?;
    if path.is_file() {
        let checkpoint = RunCheckpoint::load(path)?;
        if checkpoint.key.config_hash != config.hash() {
            return Err(CliError::Run(Error::Checkpoint(format!(
                "{} was written for config {}, the experiment has {}",
                path.display(),
                checkpoint.key.config_hash,
                config.hash()
            ))));
        }
    }
    Ok((out_dir, config))
}

/// Recomputes every optimizer's train and test MSC from `masters.json` and
/// the configuration snapshot of `out_dir`.
pub fn recompute_from_masters(out_dir: &Path) -> CliResult<Vec<(OptimizerChoice, f64, f64)>> {
    let config = ExperimentConfig::load(&out_dir.join(CONFIG_FILE))?;
    let text = fs::read_to_string(out_dir.join(MASTERS_FILE))?;
    let masters: MastersFile = serde_json::from_str(&text)?;
    if masters.world_seed != config.resolved().world.seed {
        return Err(CliError::Config(
            "masters were produced from another world".into(),
        ));
    }
    let setup = Setup::build(&config)?;
    masters
        .optimizers
        .iter()
        .map(|o| {
            let latents: Vec<Vec<f64>> = o.masters.iter().map(|m| m.latent.clone()).collect();
            let (train, test, _) = setup.score(&latents)?;
            Ok((o.optimizer, train, test))
        })
        .collect()
}
