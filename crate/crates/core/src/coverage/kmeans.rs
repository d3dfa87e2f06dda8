//! Lloyd k-means with k-means++ seeding, and its spherical variant for the
//! cosine metric.

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::metric::Metric;
use crate::error::invalid;
use crate::seed::{rng_from_seed, Rng};
use crate::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeans {
    /// `k × d`; unit-norm rows for the spherical variant.
    pub centroids: Array2<f64>,
    pub assignments: Vec<usize>,
    pub rounds: usize,
    /// Whether assignments reached a fixpoint within the round limit.
    pub converged: bool,
}

impl KMeans {
    /// Rows assigned to each cluster, in data order.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.centroids.nrows()];
        for (row, &c) in self.assignments.iter().enumerate() {
            out[c].push(row);
        }
        out
    }
}

fn sq_dist(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn normalized(v: ArrayView1<'_, f64>) -> Option<Array1<f64>> {
    let norm = v.dot(&v).sqrt();
    (norm > 0.0 && norm.is_finite()).then(|| &v / norm)
}

/// Dissimilarity used for assignment: squared distance, or negated dot product
/// on the unit sphere.
fn cost(spherical: bool, x: ArrayView1<'_, f64>, c: ArrayView1<'_, f64>) -> f64 {
    if spherical {
        -x.dot(&c)
    } else {
        sq_dist(x, c)
    }
}

fn plus_plus(data: &Array2<f64>, k: usize, rng: &mut Rng) -> Array2<f64> {
    let n = data.nrows();
    let mut chosen = vec![rng.random_range(0..n)];
    let mut d2: Vec<f64> = data
        .rows()
        .into_iter()
        .map(|x| sq_dist(x, data.row(chosen[0])))
        .collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = None;
            for (i, &w) in d2.iter().enumerate() {
                if w > 0.0 {
                    pick = Some(i);
                    if target < w {
                        break;
                    }
                    target -= w;
                }
            }
            pick.expect("positive total weight")
        } else {
            // Every point coincides with a centre; take the first unused row.
            (0..n).find(|i| !chosen.contains(i)).expect("k <= n")
        };
        chosen.push(next);
        for (w, x) in d2.iter_mut().zip(data.rows()) {
            *w = w.min(sq_dist(x, data.row(next)));
        }
    }
    data.select(Axis(0), &chosen)
}

fn assign(data: &Array2<f64>, centroids: &Array2<f64>, spherical: bool) -> Vec<usize> {
    data.rows()
        .into_iter()
        .map(|x| {
            let mut best = (0, f64::INFINITY);
            for (j, c) in centroids.rows().into_iter().enumerate() {
                let d = cost(spherical, x, c);
                if d < best.1 {
                    best = (j, d);
                }
            }
            best.0
        })
        .collect()
}

/// Clusters the rows of `data`. Empty clusters are re-seeded at the point
/// farthest from its own centroid.
pub fn kmeans(
    data: &Array2<f64>,
    k: usize,
    metric: Metric,
    seed: u64,
    max_rounds: usize,
) -> Result<KMeans> {
    let n = data.nrows();
    if k == 0 || k > n {
        return Err(invalid(format!("k = {k} must lie in 1..={n}")));
    }
    if data.iter().any(|x| !x.is_finite()) {
        return Err(invalid("k-means input must be finite"));
    }
    let spherical = metric == Metric::Cosine;
    let data = if spherical {
        let mut unit = data.clone();
        for mut row in unit.rows_mut() {
            let v = normalized(row.view())
                .ok_or_else(|| invalid("zero vector under the cosine metric"))?;
            row.assign(&v);
        }
        unit
    } else {
        data.clone()
    };
    let mut rng = rng_from_seed(seed);
    let mut centroids = plus_plus(&data, k, &mut rng);
    let mut assignments = assign(&data, &centroids, spherical);
    let mut rounds = 0;
    let mut converged = false;
    while rounds < max_rounds {
        rounds += 1;
        let mut sums = Array2::<f64>::zeros(centroids.raw_dim());
        let mut counts = vec![0usize; k];
        for (x, &c) in data.rows().into_iter().zip(&assignments) {
            let mut s = sums.row_mut(c);
            s += &x;
            counts[c] += 1;
        }
        for (j, &count) in counts.iter().enumerate() {
            if count == 0 {
                continue;
            }
            let mean = sums.row(j).mapv(|v| v / count as f64);
            let next = if spherical {
                normalized(mean.view())
            } else {
                Some(mean)
            };
            if let Some(c) = next {
                centroids.row_mut(j).assign(&c);
            }
        }
        let empty: Vec<usize> = (0..k).filter(|&j| counts[j] == 0).collect();
        for j in empty {
            let far = (0..n)
                .filter(|&i| counts[assignments[i]] > 1)
                .max_by(|&a, &b| {
                    let da = cost(spherical, data.row(a), centroids.row(assignments[a]));
                    let db = cost(spherical, data.row(b), centroids.row(assignments[b]));
                    da.total_cmp(&db).then(b.cmp(&a))
                });
            if let Some(i) = far {
                counts[assignments[i]] -= 1;
                counts[j] = 1;
                assignments[i] = j;
                centroids.row_mut(j).assign(&data.row(i));
            }
        }
        let next = assign(&data, &centroids, spherical);
        if next == assignments {
            converged = true;
            break;
        }
        assignments = next;
    }
    Ok(KMeans {
        centroids,
        assignments,
        rounds,
        converged,
    })
}
