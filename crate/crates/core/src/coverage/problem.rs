//! Attack targets: a frozen gallery, a threshold and the latent-to-embedding
//! map, scored by the normalized coverage fitness.

use std::fmt::Debug;
use std::sync::Arc;

use ndarray::Array2;

use super::metric::{EmbeddingGallery, Metric};
use crate::error::invalid;
use crate::evostrat::Objective;
use crate::Result;

/// The generator/descriptor composition as one black box.
pub trait Encoder: Send + Sync + Debug {
    fn latent_dim(&self) -> usize;

    fn embedding_dim(&self) -> usize;

    fn encode(&self, z: &[f64]) -> Vec<f64>;

    /// One embedding per row; must agree exactly with [`Encoder::encode`].
    fn encode_batch(&self, zs: &[&[f64]]) -> Array2<f64> {
        let mut out = Array2::zeros((zs.len(), self.embedding_dim()));
        for (mut row, z) in out.rows_mut().into_iter().zip(zs) {
            row.assign(&ndarray::Array1::from(self.encode(z)));
        }
        out
    }
}

/// Something a master latent is optimized against: coverage fitness is the
/// objective, and coverage search needs to shrink it to a subject subset.
pub trait AttackTarget: Objective + Sized {
    fn subject_ids(&self) -> &[u64];

    /// Embeddings of `z`, one per model.
    fn embed(&self, z: &[f64]) -> Result<Vec<Vec<f64>>>;

    /// Subjects falsely accepted for `z`, in gallery order.
    fn matched_subjects(&self, z: &[f64]) -> Result<Vec<u64>>;

    /// The same attack against a subset of the subjects.
    fn restrict(&self, ids: &[u64]) -> Result<Self>;

    /// Per-subject vectors and metric used to cluster the gallery.
    fn cluster_features(&self) -> (&Array2<f64>, Metric);

    fn subject_count(&self) -> usize {
        self.subject_ids().len()
    }
}

fn check_latent(z: &[f64], dim: usize) -> Result<()> {
    if z.len() != dim {
        return Err(invalid(format!(
            "latent has dimension {}, expected {dim}",
            z.len()
        )));
    }
    if z.iter().any(|x| !x.is_finite()) {
        return Err(invalid("latent has non-finite entries"));
    }
    Ok(())
}

/// `1 - matched / n`.
fn fitness_from_count(count: usize, n: usize) -> f64 {
    1.0 - count as f64 / n as f64
}

#[derive(Debug, Clone)]
pub struct VerificationProblem {
    gallery: EmbeddingGallery,
    threshold: f64,
    encoder: Arc<dyn Encoder>,
}

impl VerificationProblem {
    pub fn new(
        gallery: EmbeddingGallery,
        threshold: f64,
        encoder: Arc<dyn Encoder>,
    ) -> Result<Self> {
        if gallery.is_empty() {
            return Err(invalid("gallery must be non-empty"));
        }
        if !threshold.is_finite() {
            return Err(invalid(format!("threshold {threshold} is not finite")));
        }
        if encoder.embedding_dim() != gallery.dim() {
            return Err(invalid(format!(
                "encoder emits dimension {}, gallery holds {}",
                encoder.embedding_dim(),
                gallery.dim()
            )));
        }
        Ok(Self {
            gallery,
            threshold,
            encoder,
        })
    }

    pub fn gallery(&self) -> &EmbeddingGallery {
        &self.gallery
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn encoder(&self) -> &Arc<dyn Encoder> {
        &self.encoder
    }

    pub fn with_threshold(&self, threshold: f64) -> Result<Self> {
        Self::new(self.gallery.clone(), threshold, Arc::clone(&self.encoder))
    }

    /// Encodes `z` and validates the result as a probe.
    pub fn encode(&self, z: &[f64]) -> Result<Vec<f64>> {
        check_latent(z, self.encoder.latent_dim())?;
        let e = self.encoder.encode(z);
        self.gallery.check_probe(&e)?;
        Ok(e)
    }

    pub fn matches(&self, z: &[f64]) -> Result<Vec<bool>> {
        let e = self.encode(z)?;
        Ok(self.gallery.matches(&e, self.threshold))
    }

    /// Normalized fitness in `[0, 1]`: 0 when every subject matches.
    pub fn coverage_fitness(&self, z: &[f64]) -> Result<f64> {
        let e = self.encode(z)?;
        Ok(fitness_from_count(
            self.gallery.match_count(&e, self.threshold),
            self.gallery.len(),
        ))
    }

    /// Matched share of the gallery in percent.
    pub fn msc(&self, z: &[f64]) -> Result<f64> {
        let e = self.encode(z)?;
        Ok(super::metric::msc(&e, &self.gallery, self.threshold))
    }
}

impl Objective for VerificationProblem {
    fn dimension(&self) -> usize {
        self.encoder.latent_dim()
    }

    /// Invalid embeddings (e.g. a zero vector under the cosine metric) match
    /// nothing.
    fn evaluate(&self, x: &[f64]) -> f64 {
        let e = self.encoder.encode(x);
        fitness_from_count(
            self.gallery.match_count(&e, self.threshold),
            self.gallery.len(),
        )
    }

    fn evaluate_batch(&self, xs: &[&[f64]]) -> Vec<f64> {
        let embedded = self.encoder.encode_batch(xs);
        embedded
            .rows()
            .into_iter()
            .map(|e| {
                let e = e.as_slice().expect("standard layout");
                fitness_from_count(
                    self.gallery.match_count(e, self.threshold),
                    self.gallery.len(),
                )
            })
            .collect()
    }
}

impl AttackTarget for VerificationProblem {
    fn subject_ids(&self) -> &[u64] {
        self.gallery.subject_ids()
    }

    fn embed(&self, z: &[f64]) -> Result<Vec<Vec<f64>>> {
        Ok(vec![self.encode(z)?])
    }

    fn matched_subjects(&self, z: &[f64]) -> Result<Vec<u64>> {
        let flags = self.matches(z)?;
        Ok(self
            .gallery
            .subject_ids()
            .iter()
            .zip(flags)
            .filter_map(|(&id, hit)| hit.then_some(id))
            .collect())
    }

    fn restrict(&self, ids: &[u64]) -> Result<Self> {
        Self::new(
            self.gallery.restrict(ids)?,
            self.threshold,
            Arc::clone(&self.encoder),
        )
    }

    fn cluster_features(&self) -> (&Array2<f64>, Metric) {
        (self.gallery.embeddings(), self.gallery.metric())
    }
}

/// Normalized fitness of `z` against `problem`.
pub fn coverage_fitness(z: &[f64], problem: &VerificationProblem) -> Result<f64> {
    problem.coverage_fitness(z)
}

/// Two verifiers over the same subjects; a subject is falsely accepted only if
/// both models accept the master.
#[derive(Debug, Clone)]
pub struct CombinedProblem {
    a: VerificationProblem,
    b: VerificationProblem,
}

impl CombinedProblem {
    pub fn new(a: VerificationProblem, b: VerificationProblem) -> Result<Self> {
        if a.gallery().subject_ids() != b.gallery().subject_ids() {
            return Err(invalid(
                "combined models must enroll the same subjects in the same order",
            ));
        }
        if a.encoder().latent_dim() != b.encoder().latent_dim() {
            return Err(invalid("combined models must share the latent space"));
        }
        Ok(Self { a, b })
    }

    pub fn models(&self) -> (&VerificationProblem, &VerificationProblem) {
        (&self.a, &self.b)
    }

    pub fn matches(&self, z: &[f64]) -> Result<Vec<bool>> {
        let (ma, mb) = (self.a.matches(z)?, self.b.matches(z)?);
        Ok(ma.into_iter().zip(mb).map(|(x, y)| x && y).collect())
    }

    pub fn coverage_fitness(&self, z: &[f64]) -> Result<f64> {
        let count = self.matches(z)?.into_iter().filter(|&m| m).count();
        Ok(fitness_from_count(count, self.a.gallery().len()))
    }

    pub fn msc(&self, z: &[f64]) -> Result<f64> {
        let count = self.matches(z)?.into_iter().filter(|&m| m).count();
        Ok(100.0 * count as f64 / self.a.gallery().len() as f64)
    }

    fn count_both(&self, ea: &[f64], eb: &[f64]) -> usize {
        let da = self.a.gallery().distances(ea);
        let db = self.b.gallery().distances(eb);
        da.into_iter()
            .zip(db)
            .filter(|&(x, y)| x < self.a.threshold() && y < self.b.threshold())
            .count()
    }
}

impl Objective for CombinedProblem {
    fn dimension(&self) -> usize {
        self.a.dimension()
    }

    fn evaluate(&self, x: &[f64]) -> f64 {
        let (ea, eb) = (self.a.encoder().encode(x), self.b.encoder().encode(x));
        fitness_from_count(self.count_both(&ea, &eb), self.a.gallery().len())
    }

    fn evaluate_batch(&self, xs: &[&[f64]]) -> Vec<f64> {
        let ea = self.a.encoder().encode_batch(xs);
        let eb = self.b.encoder().encode_batch(xs);
        ea.rows()
            .into_iter()
            .zip(eb.rows())
            .map(|(x, y)| {
                let count = self.count_both(
                    x.as_slice().expect("standard layout"),
                    y.as_slice().expect("standard layout"),
                );
                fitness_from_count(count, self.a.gallery().len())
            })
            .collect()
    }
}

impl AttackTarget for CombinedProblem {
    fn subject_ids(&self) -> &[u64] {
        self.a.gallery().subject_ids()
    }

    fn embed(&self, z: &[f64]) -> Result<Vec<Vec<f64>>> {
        Ok(vec![self.a.encode(z)?, self.b.encode(z)?])
    }

    fn matched_subjects(&self, z: &[f64]) -> Result<Vec<u64>> {
        let flags = self.matches(z)?;
        Ok(self
            .subject_ids()
            .iter()
            .zip(flags)
            .filter_map(|(&id, hit)| hit.then_some(id))
            .collect())
    }

    fn restrict(&self, ids: &[u64]) -> Result<Self> {
        Self::new(self.a.restrict(ids)?, self.b.restrict(ids)?)
    }

    /// Clusters on the first model's embeddings.
    fn cluster_features(&self) -> (&Array2<f64>, Metric) {
        self.a.cluster_features()
    }
}
