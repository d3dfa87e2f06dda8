//! FAR/FRR and decision-threshold calibration.

use serde::{Deserialize, Serialize};

use super::metric::Metric;
use crate::error::invalid;
use crate::Result;

/// Genuine (same subject) and impostor (different subjects) distances under one
/// metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairScores {
    pub genuine: Vec<f64>,
    pub impostor: Vec<f64>,
    pub metric: Metric,
}

impl PairScores {
    pub fn new(genuine: Vec<f64>, impostor: Vec<f64>, metric: Metric) -> Result<Self> {
        let scores = Self {
            genuine,
            impostor,
            metric,
        };
        scores.validate()?;
        Ok(scores)
    }

    fn validate(&self) -> Result<()> {
        if self.genuine.is_empty() || self.impostor.is_empty() {
            return Err(invalid("genuine and impostor lists must be non-empty"));
        }
        if self
            .genuine
            .iter()
            .chain(&self.impostor)
            .any(|d| !d.is_finite() || *d < 0.0)
        {
            return Err(invalid("pair distances must be finite and non-negative"));
        }
        Ok(())
    }
}

/// `(far, frr)`: the share of impostor distances below `theta` and the share
/// of genuine distances at or above it.
pub fn far_frr(scores: &PairScores, theta: f64) -> Result<(f64, f64)> {
    scores.validate()?;
    let accepted = scores.impostor.iter().filter(|&&d| d < theta).count();
    let rejected = scores.genuine.iter().filter(|&&d| d >= theta).count();
    Ok((
        accepted as f64 / scores.impostor.len() as f64,
        rejected as f64 / scores.genuine.len() as f64,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FarThreshold {
    pub theta: f64,
    pub far: f64,
    /// False when there are fewer impostor pairs than `1 / target`; `theta` is
    /// then the smallest impostor distance.
    pub attainable: bool,
}

fn sorted(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// Largest cut point (an impostor distance, a midpoint of two neighbours, or
/// just above the largest) whose FAR does not exceed `target`.
pub fn threshold_at_far(scores: &PairScores, target: f64) -> Result<FarThreshold> {
    if !(target > 0.0 && target <= 1.0) {
        return Err(invalid(format!("target FAR {target} outside (0, 1]")));
    }
    scores.validate()?;
    let imp = sorted(&scores.impostor);
    let n = imp.len();
    let attainable = n as f64 * target >= 1.0;
    // Largest impostor count whose share stays within the target.
    let mut allowed = ((n as f64 * target).floor() as usize).min(n);
    while allowed > 0 && allowed as f64 / n as f64 > target {
        allowed -= 1;
    }
    while allowed < n && (allowed + 1) as f64 / n as f64 <= target {
        allowed += 1;
    }
    // Any cut point above imp[allowed] admits at least allowed + 1 impostors.
    let theta = if allowed >= n {
        imp[n - 1].next_up()
    } else {
        imp[allowed]
    };
    let far = imp.partition_point(|&d| d < theta) as f64 / n as f64;
    Ok(FarThreshold {
        theta,
        far,
        attainable,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EerThreshold {
    pub theta: f64,
    pub far: f64,
    pub frr: f64,
    /// `(far + frr) / 2`.
    pub eer: f64,
}

/// Merged distances, midpoints of distinct neighbours and a point above the
/// maximum, ascending.
fn cut_points(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut merged = sorted(&[a, b].concat());
    merged.dedup();
    let mut cuts = Vec::with_capacity(2 * merged.len());
    for w in merged.windows(2) {
        cuts.push(w[0]);
        cuts.push(w[0] + (w[1] - w[0]) / 2.0);
    }
    let last = *merged.last().expect("non-empty");
    cuts.push(last);
    cuts.push(last.next_up());
    cuts
}

/// The cut point minimizing `|far - frr|`; ties go to the smaller threshold.
pub fn threshold_at_eer(scores: &PairScores) -> Result<EerThreshold> {
    scores.validate()?;
    let imp = sorted(&scores.impostor);
    let gen = sorted(&scores.genuine);
    let (ni, ng) = (imp.len() as f64, gen.len() as f64);
    let mut best: Option<(f64, EerThreshold)> = None;
    let (mut i, mut g) = (0, 0);
    for theta in cut_points(&imp, &gen) {
        while i < imp.len() && imp[i] < theta {
            i += 1;
        }
        while g < gen.len() && gen[g] < theta {
            g += 1;
        }
        let far = i as f64 / ni;
        let frr = (gen.len() - g) as f64 / ng;
        let gap = (far - frr).abs();
        if best.as_ref().is_none_or(|(b, _)| gap < *b) {
            let eer = (far + frr) / 2.0;
            best = Some((
                gap,
                EerThreshold {
                    theta,
                    far,
                    frr,
                    eer,
                },
            ));
        }
    }
    Ok(best.expect("at least one cut point").1)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CombinedThresholds {
    pub theta_a: f64,
    pub theta_b: f64,
    pub far: f64,
    pub frr: f64,
    /// `(far + frr) / 2` at the chosen pair.
    pub eer: f64,
}

/// Unit of the normalized grid axis: cosine distances are halved, euclidean
/// ones divided by (just above) the largest observed distance.
fn grid_scale(scores: &PairScores) -> f64 {
    match scores.metric.max_distance() {
        Some(max) => max,
        None => scores
            .genuine
            .iter()
            .chain(&scores.impostor)
            .fold(0.0_f64, |m, &d| m.max(d))
            .next_up(),
    }
}

/// FAR and FRR when a pair is accepted only if both models accept it. The
/// lists of the two models must be aligned pair by pair.
pub fn combined_far_frr(
    a: &PairScores,
    b: &PairScores,
    theta_a: f64,
    theta_b: f64,
) -> Result<(f64, f64)> {
    check_aligned(a, b)?;
    let accepted = a
        .impostor
        .iter()
        .zip(&b.impostor)
        .filter(|(&x, &y)| x < theta_a && y < theta_b)
        .count();
    let rejected = a
        .genuine
        .iter()
        .zip(&b.genuine)
        .filter(|(&x, &y)| !(x < theta_a && y < theta_b))
        .count();
    Ok((
        accepted as f64 / a.impostor.len() as f64,
        rejected as f64 / a.genuine.len() as f64,
    ))
}

fn check_aligned(a: &PairScores, b: &PairScores) -> Result<()> {
    a.validate()?;
    b.validate()?;
    if a.genuine.len() != b.genuine.len() || a.impostor.len() != b.impostor.len() {
        return Err(invalid(format!(
            "pair lists are not aligned: {}/{} genuine, {}/{} impostor",
            a.genuine.len(),
            b.genuine.len(),
            a.impostor.len(),
            b.impostor.len()
        )));
    }
    Ok(())
}

/// Cumulative 2-D histogram: `counts[i][j]` is the number of pairs accepted by
/// model A at grid step `i` and model B at step `j` (1-based steps).
fn accepted_counts(da: &[f64], db: &[f64], ta: &[f64], tb: &[f64]) -> Vec<Vec<usize>> {
    let res = ta.len();
    // First grid step accepting the distance; `res` means never.
    let first = |d: f64, t: &[f64]| t.partition_point(|&theta| d >= theta);
    let mut h = vec![vec![0usize; res + 1]; res + 1];
    for (&x, &y) in da.iter().zip(db) {
        let (i, j) = (first(x, ta), first(y, tb));
        if i < res && j < res {
            h[i + 1][j + 1] += 1;
        }
    }
    for i in 1..=res {
        for j in 1..=res {
            h[i][j] += h[i - 1][j] + h[i][j - 1] - h[i - 1][j - 1];
        }
    }
    h
}

/// Grid search over `resolution²` threshold pairs `(i/res, j/res)` in
/// normalized units, `i, j` in `1..=res`, minimizing `|FAR - FRR|` of the
/// conjunctive decision. Ties go to the lower balanced error, then the lower
/// thresholds. Thresholds are returned in each model's own units.
pub fn combined_threshold_grid(
    a: &PairScores,
    b: &PairScores,
    resolution: usize,
) -> Result<CombinedThresholds> {
    check_aligned(a, b)?;
    if resolution == 0 {
        return Err(invalid("grid resolution must be positive"));
    }
    let axis = |scale: f64| -> Vec<f64> {
        (1..=resolution)
            .map(|i| i as f64 / resolution as f64 * scale)
            .collect()
    };
    let (ta, tb) = (axis(grid_scale(a)), axis(grid_scale(b)));
    let gen = accepted_counts(&a.genuine, &b.genuine, &ta, &tb);
    let imp = accepted_counts(&a.impostor, &b.impostor, &ta, &tb);
    let (ng, ni) = (a.genuine.len(), a.impostor.len());

    let mut best: Option<((f64, f64), CombinedThresholds)> = None;
    for i in 1..=resolution {
        for j in 1..=resolution {
            let far = imp[i][j] as f64 / ni as f64;
            let frr = (ng - gen[i][j]) as f64 / ng as f64;
            let key = ((far - frr).abs(), (far + frr) / 2.0);
            if best.as_ref().is_none_or(|(k, _)| key < *k) {
                let found = CombinedThresholds {
                    theta_a: ta[i - 1],
                    theta_b: tb[j - 1],
                    far,
                    frr,
                    eer: key.1,
                };
                best = Some((key, found));
            }
        }
    }
    Ok(best.expect("non-empty grid").1)
}
