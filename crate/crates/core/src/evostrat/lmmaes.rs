//! Limited-memory matrix adaptation evolution strategy (LM-MA-ES).
//!
//! Instead of a covariance matrix the strategy keeps `m = lambda` direction
//! vectors, each an evolution path with its own learning rate. Sampling pushes
//! a standard normal draw through `m` rank-one contractions, so both memory and
//! time per sample are `O(m n)`.

use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{Candidate, Optimizer};
use crate::error::invalid;
use crate::seed::{rng_from_seed, Rng};
use crate::{Error, Result};

pub const SIGMA_MIN: f64 = 1e-20;
pub const SIGMA_MAX: f64 = 1e20;

/// Upper bound on the step-size cumulation rate. `2 lambda / n` exceeds one
/// for small `n`, which would flip the path every generation.
const C_SIGMA_CAP: f64 = 0.5;

/// `4 + floor(3 ln n)`.
pub fn default_population_size(dimension: usize) -> usize {
    4 + (3.0 * (dimension as f64).ln()).floor() as usize
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LmMaEs {
    dimension: usize,
    lambda: usize,
    mu: usize,
    weights: Vec<f64>,
    mu_eff: f64,
    c_sigma: f64,
    /// Contraction rate of each direction vector when sampling.
    c_d: Vec<f64>,
    /// Learning rate of each direction vector.
    c_c: Vec<f64>,
    mean: Vec<f64>,
    sigma: f64,
    path_sigma: Vec<f64>,
    directions: Vec<Vec<f64>>,
    iteration: u64,
    rng: Rng,
}

impl LmMaEs {
    /// Default strategy: mean at the origin, `sigma = 1`, `lambda = 4 + floor(3 ln n)`.
    pub fn new(dimension: usize, seed: u64) -> Result<Self> {
        Self::with_options(dimension, seed, None, 1.0, None)
    }

    pub fn with_options(
        dimension: usize,
        seed: u64,
        initial_mean: Option<Vec<f64>>,
        initial_sigma: f64,
        lambda: Option<usize>,
    ) -> Result<Self> {
        if dimension < 2 {
            return Err(invalid(format!(
                "dimension must be at least 2, got {dimension}"
            )));
        }
        if !(initial_sigma.is_finite() && initial_sigma > 0.0) {
            return Err(invalid(format!(
                "initial sigma must be positive, got {initial_sigma}"
            )));
        }
        let mean = match initial_mean {
            Some(m) if m.len() != dimension => {
                return Err(invalid(format!(
                    "initial mean has length {}, expected {dimension}",
                    m.len()
                )))
            }
            Some(m) if m.iter().any(|v| !v.is_finite()) => {
                return Err(invalid("initial mean must be finite"))
            }
            Some(m) => m,
            None => vec![0.0; dimension],
        };
        let lambda = lambda.unwrap_or_else(|| default_population_size(dimension));
        if lambda < 2 {
            return Err(invalid(format!(
                "population size must be at least 2, got {lambda}"
            )));
        }
        let mu = lambda / 2;

        let raw: Vec<f64> = (1..=mu)
            .map(|i| (mu as f64 + 0.5).ln() - (i as f64).ln())
            .collect();
        let total: f64 = raw.iter().sum();
        let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
        let mu_eff = 1.0 / weights.iter().map(|w| w * w).sum::<f64>();

        let n = dimension as f64;
        let m = lambda;
        let c_sigma = (2.0 * lambda as f64 / n).min(C_SIGMA_CAP);
        let c_d = (0..m).map(|i| 1.0 / (1.5f64.powi(i as i32) * n)).collect();
        let c_c = (0..m)
            .map(|i| (lambda as f64 / (4f64.powi(i as i32) * n)).min(1.0))
            .collect();

        Ok(Self {
            dimension,
            lambda,
            mu,
            weights,
            mu_eff,
            c_sigma,
            c_d,
            c_c,
            mean,
            sigma: initial_sigma,
            path_sigma: vec![0.0; dimension],
            directions: vec![vec![0.0; dimension]; m],
            iteration: 0,
            rng: rng_from_seed(seed),
        })
    }

    pub fn lambda(&self) -> usize {
        self.lambda
    }

    pub fn mu(&self) -> usize {
        self.mu
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn path_sigma(&self) -> &[f64] {
        &self.path_sigma
    }

    pub fn directions(&self) -> &[Vec<f64>] {
        &self.directions
    }

    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    /// Total number of stored reals; grows as `O(m n)`.
    pub fn state_size(&self) -> usize {
        self.mean.len()
            + self.path_sigma.len()
            + self.directions.iter().map(Vec::len).sum::<usize>()
            + self.weights.len()
            + self.c_d.len()
            + self.c_c.len()
    }

    /// Applies the stored direction vectors to a standard normal draw.
    fn transform(&self, draw: &[f64]) -> Vec<f64> {
        let mut d = draw.to_vec();
        let active = (self.iteration as usize).min(self.directions.len());
        for (dir, &c) in self.directions[..active].iter().zip(&self.c_d) {
            let proj: f64 = dir.iter().zip(&d).map(|(a, b)| a * b).sum();
            for (di, &mi) in d.iter_mut().zip(dir) {
                *di = (1.0 - c) * *di + c * proj * mi;
            }
        }
        d
    }
}

impl Optimizer for LmMaEs {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn population_size(&self) -> usize {
        self.lambda
    }

    fn ask(&mut self, count: usize) -> Result<Vec<Candidate>> {
        if count == 0 {
            return Err(invalid("ask needs count >= 1"));
        }
        let mut out = Vec::with_capacity(count);
        for _ in 0..count {
            let draw: Vec<f64> = (0..self.dimension)
                .map(|_| self.rng.sample(StandardNormal))
                .collect();
            let step = self.transform(&draw);
            let point = self
                .mean
                .iter()
                .zip(&step)
                .map(|(m, s)| m + self.sigma * s)
                .collect();
            out.push(Candidate { point, draw, step });
        }
        Ok(out)
    }

    fn tell(&mut self, evaluated: Vec<(Candidate, f64)>) -> Result<()> {
        if evaluated.len() != self.lambda {
            return Err(invalid(format!(
                "tell expects {} candidates, got {}",
                self.lambda,
                evaluated.len()
            )));
        }
        if let Some((_, f)) = evaluated.iter().find(|(_, f)| !f.is_finite()) {
            return Err(invalid(format!("non-finite fitness {f} passed to tell")));
        }
        if evaluated
            .iter()
            .any(|(c, _)| c.step.len() != self.dimension || c.draw.len() != self.dimension)
        {
            return Err(invalid("candidate dimension mismatch"));
        }

        let mut order: Vec<usize> = (0..evaluated.len()).collect();
        // Stable: ties keep the supplied order.
        order.sort_by(|&a, &b| evaluated[a].1.total_cmp(&evaluated[b].1));

        let n = self.dimension;
        let mut step_w = vec![0.0; n];
        let mut draw_w = vec![0.0; n];
        for (&w, &idx) in self.weights.iter().zip(&order) {
            let c = &evaluated[idx].0;
            for i in 0..n {
                step_w[i] += w * c.step[i];
                draw_w[i] += w * c.draw[i];
            }
        }

        for (m, s) in self.mean.iter_mut().zip(&step_w) {
            *m += self.sigma * s;
        }

        let cs = self.c_sigma;
        let path_rate = (self.mu_eff * cs * (2.0 - cs)).sqrt();
        for (p, z) in self.path_sigma.iter_mut().zip(&draw_w) {
            *p = (1.0 - cs) * *p + path_rate * z;
        }

        for (dir, &cc) in self.directions.iter_mut().zip(&self.c_c) {
            let rate = (self.mu_eff * cc * (2.0 - cc)).sqrt();
            for (v, z) in dir.iter_mut().zip(&draw_w) {
                *v = (1.0 - cc) * *v + rate * z;
            }
        }

        let norm2: f64 = self.path_sigma.iter().map(|p| p * p).sum();
        let sigma = self.sigma * (0.5 * cs * (norm2 / n as f64 - 1.0)).exp();
        self.iteration += 1;

        if !sigma.is_finite() || sigma > SIGMA_MAX {
            self.sigma = SIGMA_MAX;
            return Err(Error::StepSize {
                sigma,
                iteration: self.iteration,
            });
        }
        if sigma < SIGMA_MIN {
            self.sigma = SIGMA_MIN;
            return Err(Error::StepSize {
                sigma,
                iteration: self.iteration,
            });
        }
        self.sigma = sigma;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn population_size_formula() {
        assert_eq!(default_population_size(512), 22);
        assert_eq!(default_population_size(10), 10);
        let es = LmMaEs::new(512, 0).unwrap();
        assert_eq!((es.lambda(), es.mu()), (22, 11));
        assert_eq!(es.iteration(), 0);
        assert!(es.directions().iter().flatten().all(|v| *v == 0.0));
        assert!(es.path_sigma().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(LmMaEs::new(1, 0).is_err());
        assert!(LmMaEs::with_options(4, 0, None, 0.0, None).is_err());
        assert!(LmMaEs::with_options(4, 0, None, -1.0, None).is_err());
        assert!(LmMaEs::with_options(4, 0, Some(vec![0.0; 3]), 1.0, None).is_err());
        let mut es = LmMaEs::new(4, 0).unwrap();
        assert!(es.ask(0).is_err());
    }

    #[test]
    fn weights_are_decreasing_and_normalized() {
        for n in [2, 10, 512, 4096] {
            let es = LmMaEs::new(n, 0).unwrap();
            let w = es.weights();
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(w.windows(2).all(|p| p[0] >= p[1]));
            assert!(w.iter().all(|&v| v > 0.0));
        }
    }

    #[test]
    fn first_generation_is_plain_normal_sampling() {
        let mut es = LmMaEs::new(6, 11).unwrap();
        for c in es.ask(5).unwrap() {
            assert_eq!(c.point, c.draw);
            assert_eq!(c.step, c.draw);
        }
    }

    #[test]
    fn ask_is_reproducible_from_a_state_copy() {
        let mut a = LmMaEs::new(8, 3).unwrap();
        let mut b = a.clone();
        assert_eq!(a.ask(7).unwrap(), b.ask(7).unwrap());
        assert_eq!(a.ask(1000).unwrap().len(), 1000);
    }

    #[test]
    fn ask_leaves_distribution_alone() {
        let mut es = LmMaEs::new(8, 3).unwrap();
        let before = (es.mean().to_vec(), es.sigma(), es.iteration());
        es.ask(50).unwrap();
        assert_eq!(before, (es.mean().to_vec(), es.sigma(), es.iteration()));
    }

    #[test]
    fn tell_rejects_wrong_count_and_non_finite() {
        let mut es = LmMaEs::new(4, 0).unwrap();
        let pop = es.ask(es.lambda() - 1).unwrap();
        let eval: Vec<_> = pop.into_iter().map(|c| (c, 1.0)).collect();
        assert!(es.tell(eval).is_err());
        let mut eval: Vec<_> = es
            .ask(es.lambda())
            .unwrap()
            .into_iter()
            .map(|c| (c, 1.0))
            .collect();
        eval[0].1 = f64::NAN;
        assert!(es.tell(eval).is_err());
    }

    #[test]
    fn constant_fitness_keeps_supplied_order() {
        let mut es = LmMaEs::with_options(3, 5, None, 0.5, Some(6)).unwrap();
        let pop = es.ask(6).unwrap();
        let w = es.weights().to_vec();
        let expected: Vec<f64> = (0..3)
            .map(|i| w.iter().zip(&pop).map(|(w, c)| w * c.point[i]).sum())
            .collect();
        es.tell(pop.into_iter().map(|c| (c, 0.25)).collect())
            .unwrap();
        for (m, e) in es.mean().iter().zip(&expected) {
            assert!((m - e).abs() < 1e-12);
        }
    }

    #[test]
    fn recombination_matches_hand_computation() {
        // lambda = 4, mu = 2: w = (ln 2.5, ln 2.5 - ln 2) normalized.
        let mut es = LmMaEs::with_options(2, 9, Some(vec![1.0, -1.0]), 2.0, Some(4)).unwrap();
        let w1 = 2.5f64.ln();
        let w2 = 2.5f64.ln() - 2f64.ln();
        let (w1, w2) = (w1 / (w1 + w2), w2 / (w1 + w2));
        assert!((es.weights()[0] - w1).abs() < 1e-15);

        let pop = es.ask(4).unwrap();
        let fitness = [3.0, 0.5, 2.0, 1.0];
        // Best two: index 1 then index 3.
        let expected: Vec<f64> = (0..2)
            .map(|i| w1 * pop[1].point[i] + w2 * pop[3].point[i])
            .collect();
        es.tell(pop.into_iter().zip(fitness).collect()).unwrap();
        for (m, e) in es.mean().iter().zip(&expected) {
            assert!((m - e).abs() < 1e-12, "{m} vs {e}");
        }
        assert_eq!(es.iteration(), 1);
    }

    #[test]
    fn state_is_linear_in_dimension() {
        let small = LmMaEs::with_options(100, 0, None, 1.0, Some(10)).unwrap();
        let large = LmMaEs::with_options(1000, 0, None, 1.0, Some(10)).unwrap();
        // (m + 2) n + O(m): ten times the dimension, about ten times the state.
        let ratio = large.state_size() as f64 / small.state_size() as f64;
        assert!(ratio < 10.1, "ratio {ratio}");
    }

    #[test]
    fn step_size_floor_is_reported() {
        let mut es = LmMaEs::with_options(4, 0, None, 2.0 * SIGMA_MIN, None).unwrap();
        let mut hit = false;
        for _ in 0..2000 {
            let pop = es.ask(es.lambda()).unwrap();
            let eval = pop
                .into_iter()
                .map(|c| {
                    let f = c.point.iter().map(|v| v * v).sum::<f64>();
                    (c, f)
                })
                .collect();
            if let Err(Error::StepSize { .. }) = es.tell(eval) {
                hit = true;
                break;
            }
        }
        assert!(hit);
        assert!(es.sigma() >= SIGMA_MIN && es.sigma().is_finite());
    }
}
