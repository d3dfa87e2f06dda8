use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{default_population_size, Candidate, Optimizer};
use crate::error::invalid;
use crate::seed::{rng_from_seed, Rng};
use crate::Result;

/// `count` i.i.d. standard normal points from a fresh stream seeded by `seed`.
pub fn random_search_step(dimension: usize, seed: u64, count: usize) -> Result<Vec<Vec<f64>>> {
    if dimension == 0 || count == 0 {
        return Err(invalid("random search needs dimension >= 1 and count >= 1"));
    }
    let mut rng = rng_from_seed(seed);
    Ok((0..count)
        .map(|_| standard_normal(&mut rng, dimension))
        .collect())
}

fn standard_normal(rng: &mut Rng, dimension: usize) -> Vec<f64> {
    (0..dimension).map(|_| rng.sample(StandardNormal)).collect()
}

/// Baseline: samples the latent prior and ignores feedback.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomSearch {
    dimension: usize,
    batch: usize,
    iteration: u64,
    rng: Rng,
}

impl RandomSearch {
    /// Batches have the LM-MA-ES population size for the same dimension, so
    /// equal budgets give equal generation counts.
    pub fn new(dimension: usize, seed: u64) -> Result<Self> {
        Self::with_batch(dimension, seed, default_population_size(dimension.max(1)))
    }

    pub fn with_batch(dimension: usize, seed: u64, batch: usize) -> Result<Self> {
        if dimension == 0 || batch == 0 {
            return Err(invalid("random search needs dimension >= 1 and batch >= 1"));
        }
        Ok(Self {
            dimension,
            batch,
            iteration: 0,
            rng: rng_from_seed(seed),
        })
    }

    pub fn iteration(&self) -> u64 {
        self.iteration
    }
}

impl Optimizer for RandomSearch {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn population_size(&self) -> usize {
        self.batch
    }

    fn ask(&mut self, count: usize) -> Result<Vec<Candidate>> {
        if count == 0 {
            return Err(invalid("ask needs count >= 1"));
        }
        Ok((0..count)
            .map(|_| {
                let draw = standard_normal(&mut self.rng, self.dimension);
                Candidate {
                    point: draw.clone(),
                    step: draw.clone(),
                    draw,
                }
            })
            .collect())
    }

    fn tell(&mut self, evaluated: Vec<(Candidate, f64)>) -> Result<()> {
        if evaluated.len() != self.batch {
            return Err(invalid(format!(
                "tell expects {} candidates, got {}",
                self.batch,
                evaluated.len()
            )));
        }
        self.iteration += 1;
        Ok(())
    }
}
