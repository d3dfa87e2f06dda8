use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::invalid;
use crate::seed::{rng_from_seed, Rng};
use crate::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryEntry {
    pub candidate: Vec<f64>,
    pub fitness: f64,
}

/// Bounded store of evaluated candidates. Overflow evicts a uniformly random
/// entry other than the current best.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayMemory {
    capacity: usize,
    entries: Vec<MemoryEntry>,
    rng: Rng,
}

impl ReplayMemory {
    pub fn new(capacity: usize, seed: u64) -> Result<Self> {
        if capacity == 0 {
            return Err(invalid("memory capacity must be positive"));
        }
        Ok(Self {
            capacity,
            entries: Vec::with_capacity(capacity + 1),
            rng: rng_from_seed(seed),
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[MemoryEntry] {
        &self.entries
    }

    /// Index of the lowest fitness; the first one on ties.
    fn best_index(&self) -> Option<usize> {
        self.entries
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.fitness.total_cmp(&b.1.fitness))
            .map(|(i, _)| i)
    }

    pub fn best(&self) -> Option<&MemoryEntry> {
        self.best_index().map(|i| &self.entries[i])
    }

    pub fn insert(&mut self, candidate: Vec<f64>, fitness: f64) -> Result<()> {
        if !fitness.is_finite() {
            return Err(invalid(format!(
                "memory rejects non-finite fitness {fitness}"
            )));
        }
        self.entries.push(MemoryEntry { candidate, fitness });
        while self.entries.len() > self.capacity {
            let keep = self.best_index().expect("memory is non-empty");
            // Uniform over all indices except `keep`.
            let mut victim = self.rng.random_range(0..self.entries.len() - 1);
            if victim >= keep {
                victim += 1;
            }
            self.entries.swap_remove(victim);
        }
        Ok(())
    }

    /// The nearest-rank p-percentile of the stored fitnesses.
    pub fn percentile(&self, p: f64) -> Option<f64> {
        let values: Vec<f64> = self.entries.iter().map(|e| e.fitness).collect();
        nearest_rank_percentile(&values, p)
    }
}

/// Value at rank `ceil(p / 100 * N)` (1-based, at least 1) of the sorted
/// sample. No interpolation.
pub fn nearest_rank_percentile(values: &[f64], p: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = ((p / 100.0) * sorted.len() as f64).ceil() as usize;
    Some(sorted[rank.clamp(1, sorted.len()) - 1])
}

/// Labels every entry `true` iff its fitness is strictly below the memory's
/// p-percentile. Labels are recomputed from scratch on every call.
pub fn relabel(memory: &ReplayMemory, p: f64) -> Vec<(&[f64], bool)> {
    let Some(cut) = memory.percentile(p) else {
        return Vec::new();
    };
    memory
        .entries()
        .iter()
        .map(|e| (e.candidate.as_slice(), e.fitness < cut))
        .collect()
}
