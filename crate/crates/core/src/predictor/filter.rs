use rand::Rng as _;

use super::assisted::Predictor;
use super::memory::ReplayMemory;
use crate::error::invalid;
use crate::seed::Rng;
use crate::Result;

/// A pool index chosen by [`filter_candidates`] and the score it had.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Selection {
    pub index: usize,
    pub score: f64,
}

/// Scores `pool` and draws `count` distinct indices without replacement,
/// each draw proportional to `softmax(score)` over the indices still left.
pub fn filter_candidates<P: Predictor + ?Sized>(
    predictor: &P,
    pool: &[&[f64]],
    count: usize,
    rng: &mut Rng,
) -> Result<Vec<Selection>> {
    if count > pool.len() {
        return Err(invalid(format!(
            "cannot select {count} candidates from a pool of {}",
            pool.len()
        )));
    }
    let scores = predictor.score(pool);
    let top = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    // Unnormalized softmax; the normalizer changes as entries are removed.
    let mut weights: Vec<f64> = scores.iter().map(|s| (s - top).exp()).collect();
    let mut picked = Vec::with_capacity(count);
    for _ in 0..count {
        let total: f64 = weights.iter().sum();
        let mut u = rng.random::<f64>() * total;
        let mut choice = None;
        for (i, &w) in weights.iter().enumerate() {
            if w <= 0.0 {
                continue;
            }
            choice = Some(i);
            if u < w {
                break;
            }
            u -= w;
        }
        // Rounding can walk past the end; `choice` then holds the last live index.
        let i = choice.expect("fewer selections than pool entries");
        weights[i] = 0.0;
        picked.push(Selection {
            index: i,
            score: scores[i],
        });
    }
    Ok(picked)
}

/// Fraction of `(score, fitness)` pairs the predictor got right against the
/// memory's current p-percentile: a score above 0.5 claims "strictly below the
/// percentile", anything else claims "at or above".
pub fn audit_accuracy(selected: &[(f64, f64)], memory: &ReplayMemory, p: f64) -> Option<f64> {
    if selected.is_empty() {
        return None;
    }
    let cut = memory.percentile(p)?;
    let correct = selected
        .iter()
        .filter(|&&(score, fitness)| (score > 0.5) == (fitness < cut))
        .count();
    Some(correct as f64 / selected.len() as f64)
}
