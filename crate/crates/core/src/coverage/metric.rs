//! Distances, the match predicate and the enrolled gallery.

use ndarray::{Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

use crate::error::invalid;
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Euclidean,
    /// `1 - cos(a, b)`, in `[0, 2]`.
    Cosine,
}

impl Metric {
    /// Distance between two equal-length vectors. Cosine distance of a zero
    /// vector is NaN; callers validate first.
    pub fn distance(self, a: &[f64], b: &[f64]) -> f64 {
        debug_assert_eq!(a.len(), b.len());
        match self {
            Metric::Euclidean => a
                .iter()
                .zip(b)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt(),
            Metric::Cosine => {
                let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
                for (x, y) in a.iter().zip(b) {
                    dot += x * y;
                    na += x * x;
                    nb += y * y;
                }
                1.0 - dot / (na.sqrt() * nb.sqrt())
            }
        }
    }

    /// Upper end of the distance range, if bounded.
    pub fn max_distance(self) -> Option<f64> {
        match self {
            Metric::Euclidean => None,
            Metric::Cosine => Some(2.0),
        }
    }
}

fn check_vector(v: &[f64], metric: Metric, what: &str) -> Result<()> {
    if let Some(x) = v.iter().find(|x| !x.is_finite()) {
        return Err(invalid(format!("{what} has non-finite entry {x}")));
    }
    if metric == Metric::Cosine && v.iter().all(|&x| x == 0.0) {
        return Err(invalid(format!(
            "{what} is the zero vector under the cosine metric"
        )));
    }
    Ok(())
}

/// `true` iff `distance(a, b) < theta`.
pub fn is_match(a: &[f64], b: &[f64], metric: Metric, theta: f64) -> Result<bool> {
    if a.len() != b.len() {
        return Err(invalid(format!(
            "length mismatch: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    check_vector(a, metric, "first vector")?;
    check_vector(b, metric, "second vector")?;
    Ok(metric.distance(a, b) < theta)
}

/// One enrolled embedding per subject.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingGallery {
    embeddings: Array2<f64>,
    metric: Metric,
    subject_ids: Vec<u64>,
}

impl EmbeddingGallery {
    pub fn new(embeddings: Array2<f64>, metric: Metric, subject_ids: Vec<u64>) -> Result<Self> {
        if embeddings.nrows() != subject_ids.len() {
            return Err(invalid(format!(
                "{} embeddings for {} subject ids",
                embeddings.nrows(),
                subject_ids.len()
            )));
        }
        if embeddings.ncols() == 0 {
            return Err(invalid("embedding dimension must be positive"));
        }
        let mut sorted = subject_ids.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(invalid("subject ids must be unique"));
        }
        for (row, id) in embeddings.rows().into_iter().zip(&subject_ids) {
            check_vector(&row.to_vec(), metric, &format!("embedding of subject {id}"))?;
        }
        let embeddings = embeddings.as_standard_layout().into_owned();
        Ok(Self {
            embeddings,
            metric,
            subject_ids,
        })
    }

    /// Gallery with subject ids `0..rows`.
    pub fn with_sequential_ids(embeddings: Array2<f64>, metric: Metric) -> Result<Self> {
        let ids = (0..embeddings.nrows() as u64).collect();
        Self::new(embeddings, metric, ids)
    }

    pub fn len(&self) -> usize {
        self.subject_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subject_ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.embeddings.ncols()
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    pub fn embeddings(&self) -> &Array2<f64> {
        &self.embeddings
    }

    pub fn subject_ids(&self) -> &[u64] {
        &self.subject_ids
    }

    pub fn embedding(&self, row: usize) -> ArrayView1<'_, f64> {
        self.embeddings.row(row)
    }

    pub fn row_of(&self, id: u64) -> Option<usize> {
        self.subject_ids.iter().position(|&s| s == id)
    }

    /// The sub-gallery of the given rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        Self {
            embeddings: self.embeddings.select(Axis(0), rows),
            metric: self.metric,
            subject_ids: rows.iter().map(|&r| self.subject_ids[r]).collect(),
        }
    }

    /// The sub-gallery of the listed subjects, in gallery order. Unknown ids are
    /// an error.
    pub fn restrict(&self, ids: &[u64]) -> Result<Self> {
        let mut wanted: Vec<u64> = ids.to_vec();
        wanted.sort_unstable();
        wanted.dedup();
        let rows: Vec<usize> = (0..self.len())
            .filter(|&r| wanted.binary_search(&self.subject_ids[r]).is_ok())
            .collect();
        if rows.len() != wanted.len() {
            return Err(invalid("restriction names subjects outside the gallery"));
        }
        Ok(self.select_rows(&rows))
    }

    /// Distance from `probe` to every gallery embedding, in gallery order.
    pub fn distances(&self, probe: &[f64]) -> Vec<f64> {
        self.embeddings
            .rows()
            .into_iter()
            .map(|row| {
                self.metric
                    .distance(probe, row.as_slice().expect("standard layout"))
            })
            .collect()
    }

    /// Per-subject match flags against `probe`.
    pub fn matches(&self, probe: &[f64], theta: f64) -> Vec<bool> {
        self.distances(probe)
            .into_iter()
            .map(|d| d < theta)
            .collect()
    }

    pub fn match_count(&self, probe: &[f64], theta: f64) -> usize {
        self.distances(probe)
            .into_iter()
            .filter(|&d| d < theta)
            .count()
    }

    pub fn check_probe(&self, probe: &[f64]) -> Result<()> {
        if probe.len() != self.dim() {
            return Err(invalid(format!(
                "probe has dimension {}, gallery {}",
                probe.len(),
                self.dim()
            )));
        }
        check_vector(probe, self.metric, "probe")
    }
}

/// Mean set coverage of one embedding: matched share of the gallery, in percent.
pub fn msc(embedding: &[f64], gallery: &EmbeddingGallery, theta: f64) -> f64 {
    if gallery.is_empty() {
        return 0.0;
    }
    100.0 * gallery.match_count(embedding, theta) as f64 / gallery.len() as f64
}

/// Share of subjects matched by at least one centroid, in percent.
pub fn centroid_coverage(
    gallery: &EmbeddingGallery,
    centroids: &Array2<f64>,
    theta: f64,
) -> Result<f64> {
    if centroids.nrows() == 0 {
        return Err(invalid("no centroids"));
    }
    if centroids.ncols() != gallery.dim() {
        return Err(invalid("centroid dimension differs from gallery"));
    }
    if gallery.is_empty() {
        return Ok(0.0);
    }
    let mut covered = vec![false; gallery.len()];
    for c in centroids.rows() {
        let c = c.to_vec();
        for (flag, hit) in covered.iter_mut().zip(gallery.matches(&c, theta)) {
            *flag |= hit;
        }
    }
    Ok(100.0 * covered.iter().filter(|&&c| c).count() as f64 / gallery.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn match_examples() {
        let e = Metric::Euclidean;
        assert!(is_match(&[1.0, 2.0], &[1.0, 2.0], e, 1e-9).unwrap());
        assert!(!is_match(&[0.0, 0.0], &[3.0, 4.0], e, 5.0).unwrap());
        assert!(is_match(&[0.0, 0.0], &[3.0, 4.0], e, 5.001).unwrap());
        assert!(!is_match(&[1.0, 0.0], &[0.0, 1.0], Metric::Cosine, 1.0).unwrap());
        assert!(is_match(&[0.0, 0.0], &[1.0, 0.0], Metric::Cosine, 1.0).is_err());
        assert!(is_match(&[1.0], &[1.0, 0.0], e, 1.0).is_err());
    }

    #[test]
    fn msc_examples() {
        let g = EmbeddingGallery::with_sequential_ids(
            array![[0.0, 0.0], [1.0, 0.0], [5.0, 0.0], [9.0, 0.0]],
            Metric::Euclidean,
        )
        .unwrap();
        assert_eq!(msc(&[9.0, 0.5], &g, 1.0), 25.0);
        assert_eq!(msc(&[20.0, 0.0], &g, 1.0), 0.0);
        assert_eq!(msc(&[0.5, 0.0], &g, 1.0), 50.0);
    }

    #[test]
    fn gallery_validation() {
        assert!(
            EmbeddingGallery::new(array![[1.0], [2.0]], Metric::Euclidean, vec![3, 3]).is_err()
        );
        assert!(EmbeddingGallery::new(array![[f64::NAN]], Metric::Euclidean, vec![0]).is_err());
        assert!(EmbeddingGallery::new(array![[0.0, 0.0]], Metric::Cosine, vec![0]).is_err());
        assert!(EmbeddingGallery::new(array![[1.0]], Metric::Euclidean, vec![0, 1]).is_err());
    }

    #[test]
    fn restriction_keeps_gallery_order() {
        let g = EmbeddingGallery::new(
            array![[0.0], [1.0], [2.0]],
            Metric::Euclidean,
            vec![7, 3, 5],
        )
        .unwrap();
        let r = g.restrict(&[5, 7]).unwrap();
        assert_eq!(r.subject_ids(), &[7, 5]);
        assert_eq!(r.embeddings(), &array![[0.0], [2.0]]);
        assert!(g.restrict(&[4]).is_err());
    }

    #[test]
    fn centroid_examples() {
        let pts = array![[0.0, 0.0], [1.0, 1.0], [4.0, 4.0]];
        let g = EmbeddingGallery::with_sequential_ids(pts.clone(), Metric::Euclidean).unwrap();
        assert_eq!(centroid_coverage(&g, &pts, 0.1).unwrap(), 100.0);
        assert_eq!(
            centroid_coverage(&g, &array![[100.0, 100.0]], 1.0).unwrap(),
            0.0
        );
        assert!(centroid_coverage(&g, &Array2::zeros((0, 2)), 1.0).is_err());
    }
}
