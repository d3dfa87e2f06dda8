//! Greedy coverage search, the per-cluster baseline and the report they share.

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::kmeans::kmeans;
use super::problem::AttackTarget;
use crate::error::invalid;
use crate::seed::checksum;
use crate::{Error, Result};

/// Round limit for the clustering step of [`clustered_coverage_search`].
pub const KMEANS_ROUNDS: usize = 300;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MasterSample {
    pub latent: Vec<f64>,
    /// One embedding per model of the target.
    pub embeddings: Vec<Vec<f64>>,
    /// Newly covered subjects as a percentage of the full gallery.
    pub marginal_msc: f64,
    /// Newly covered subjects, in gallery order; disjoint across the report.
    pub covered_subject_ids: Vec<u64>,
    /// Index of the winning attempt within its stage, if searched.
    pub attempt: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub gallery_size: usize,
    pub master_samples: Vec<MasterSample>,
    pub cumulative_coverage: f64,
}

fn percent(count: usize, total: usize) -> f64 {
    100.0 * count as f64 / total as f64
}

impl CoverageReport {
    fn empty(gallery_size: usize) -> Self {
        Self {
            gallery_size,
            master_samples: Vec::new(),
            cumulative_coverage: 0.0,
        }
    }

    fn covered(&self) -> BTreeSet<u64> {
        self.master_samples
            .iter()
            .flat_map(|m| m.covered_subject_ids.iter().copied())
            .collect()
    }

    /// Appends a master, crediting it only with subjects not yet covered.
    fn push(
        &mut self,
        latent: Vec<f64>,
        embeddings: Vec<Vec<f64>>,
        matched: Vec<u64>,
        attempt: Option<usize>,
    ) {
        let covered = self.covered();
        let fresh: Vec<u64> = matched
            .into_iter()
            .filter(|id| !covered.contains(id))
            .collect();
        self.cumulative_coverage = percent(covered.len() + fresh.len(), self.gallery_size);
        self.master_samples.push(MasterSample {
            latent,
            embeddings,
            marginal_msc: percent(fresh.len(), self.gallery_size),
            covered_subject_ids: fresh,
            attempt,
        });
    }

    /// Scores `latents` in order against `target`, never counting a subject
    /// twice.
    pub fn from_latents<T: AttackTarget>(target: &T, latents: &[Vec<f64>]) -> Result<Self> {
        let mut report = Self::empty(target.subject_count());
        for z in latents {
            report.push(
                z.clone(),
                target.embed(z)?,
                target.matched_subjects(z)?,
                None,
            );
        }
        Ok(report)
    }

    pub fn latents(&self) -> Vec<Vec<f64>> {
        self.master_samples
            .iter()
            .map(|m| m.latent.clone())
            .collect()
    }

    pub fn marginals(&self) -> Vec<f64> {
        self.master_samples.iter().map(|m| m.marginal_msc).collect()
    }

    /// `index,marginal_msc,cumulative,covered_ids,latent_checksum`, one row per
    /// master; covered ids are `;`-separated.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("index,marginal_msc,cumulative,covered_ids,latent_checksum\n");
        let mut cumulative = 0usize;
        for (i, m) in self.master_samples.iter().enumerate() {
            cumulative += m.covered_subject_ids.len();
            let ids: Vec<String> = m.covered_subject_ids.iter().map(u64::to_string).collect();
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                i,
                m.marginal_msc,
                percent(cumulative, self.gallery_size),
                ids.join(";"),
                checksum(&m.latent)
            ));
        }
        out
    }
}

/// The inner single-master optimizer of a coverage search.
pub trait MasterSearch<T: AttackTarget>: Sync {
    /// Finds a master latent against `target`. `stage` is the greedy iteration
    /// or cluster index, `attempt` the restart within that stage.
    fn search(&self, target: &T, stage: usize, attempt: usize) -> Result<Vec<f64>>;
}

impl<T, F> MasterSearch<T> for F
where
    T: AttackTarget,
    F: Fn(&T, usize, usize) -> Result<Vec<f64>> + Sync,
{
    fn search(&self, target: &T, stage: usize, attempt: usize) -> Result<Vec<f64>> {
        self(target, stage, attempt)
    }
}

/// Brute force over a fixed candidate list: the candidate matching the most
/// subjects of the target, first on ties.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExhaustiveSearch {
    pub candidates: Vec<Vec<f64>>,
}

impl<T: AttackTarget> MasterSearch<T> for ExhaustiveSearch {
    fn search(&self, target: &T, _stage: usize, _attempt: usize) -> Result<Vec<f64>> {
        let mut best: Option<(usize, &Vec<f64>)> = None;
        for z in &self.candidates {
            let count = target.matched_subjects(z)?.len();
            if best.is_none_or(|(b, _)| count > b) {
                best = Some((count, z));
            }
        }
        best.map(|(_, z)| z.clone())
            .ok_or_else(|| invalid("no candidates"))
    }
}

/// Runs every attempt of a stage and keeps the one matching the most subjects
/// of `target`; ties go to the lowest attempt.
fn best_of_attempts<T: AttackTarget, S: MasterSearch<T>>(
    target: &T,
    inner: &S,
    stage: usize,
    attempts: usize,
) -> Result<(usize, Vec<f64>, Vec<u64>)> {
    let found: Vec<Result<(Vec<f64>, Vec<u64>)>> = (0..attempts)
        .into_par_iter()
        .map(|a| {
            let z = inner.search(target, stage, a)?;
            let matched = target.matched_subjects(&z)?;
            Ok((z, matched))
        })
        .collect();
    let mut best: Option<(usize, Vec<f64>, Vec<u64>)> = None;
    for (a, r) in found.into_iter().enumerate() {
        let (z, matched) = r?;
        if best
            .as_ref()
            .is_none_or(|(_, _, m)| matched.len() > m.len())
        {
            best = Some((a, z, matched));
        }
    }
    Ok(best.expect("at least one attempt"))
}

fn aborted(partial: CoverageReport, source: Error) -> Error {
    Error::CoverageAborted {
        partial: Box::new(partial),
        source: Box::new(source),
    }
}

/// Greedy coverage: each iteration optimizes a master against the subjects
/// still uncovered, keeps the best of `attempts` restarts, and removes what it
/// matched. Unproductive iterations stay in the report; the search ends early
/// once every subject is covered.
pub fn greedy_coverage<T: AttackTarget, S: MasterSearch<T>>(
    target: &T,
    max_iter: usize,
    inner: &S,
    attempts: usize,
) -> Result<CoverageReport> {
    if max_iter == 0 || attempts == 0 {
        return Err(invalid("max_iter and attempts must be positive"));
    }
    let mut report = CoverageReport::empty(target.subject_count());
    let mut remaining: Vec<u64> = target.subject_ids().to_vec();
    for stage in 0..max_iter {
        if remaining.is_empty() {
            break;
        }
        let step = target.restrict(&remaining).and_then(|sub| {
            let (attempt, z, matched) = best_of_attempts(&sub, inner, stage, attempts)?;
            Ok((attempt, sub.embed(&z)?, z, matched))
        });
        let (attempt, embeddings, z, matched) = match step {
            Ok(s) => s,
            Err(e) => return Err(aborted(report, e)),
        };
        let hit: BTreeSet<u64> = matched.iter().copied().collect();
        remaining.retain(|id| !hit.contains(id));
        report.push(z, embeddings, matched, Some(attempt));
    }
    Ok(report)
}

/// Per-cluster baseline: cluster the gallery into `k` groups, optimize one
/// master per cluster against that cluster alone, then score every master on
/// the full gallery in cluster order without double counting. Clusters left
/// empty by k-means are skipped.
pub fn clustered_coverage_search<T: AttackTarget, S: MasterSearch<T>>(
    target: &T,
    k: usize,
    inner: &S,
    attempts: usize,
    cluster_seed: u64,
) -> Result<CoverageReport> {
    if k == 0 || attempts == 0 {
        return Err(invalid("k and attempts must be positive"));
    }
    let (features, metric) = target.cluster_features();
    let clusters = kmeans(features, k, metric, cluster_seed, KMEANS_ROUNDS)?;
    let ids = target.subject_ids();
    let mut report = CoverageReport::empty(target.subject_count());
    for (stage, rows) in clusters.members().into_iter().enumerate() {
        if rows.is_empty() {
            continue;
        }
        let members: Vec<u64> = rows.iter().map(|&r| ids[r]).collect();
        let step = target.restrict(&members).and_then(|sub| {
            let (attempt, z, _) = best_of_attempts(&sub, inner, stage, attempts)?;
            Ok((attempt, target.embed(&z)?, target.matched_subjects(&z)?, z))
        });
        match step {
            Ok((attempt, embeddings, matched, z)) => {
                report.push(z, embeddings, matched, Some(attempt))
            }
            Err(e) => return Err(aborted(report, e)),
        }
    }
    Ok(report)
}
