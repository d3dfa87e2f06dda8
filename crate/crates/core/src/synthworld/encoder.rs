//! A fixed random two-layer tanh network standing in for generator plus
//! descriptor.

use ndarray::{Array1, Array2, Axis};
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::coverage::Encoder;
use crate::seed::{rng_from_seed, Rng};

/// Architecture and weight statistics of a [`SyntheticEncoder`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EncoderShape {
    pub latent_dim: usize,
    pub hidden_dim: usize,
    pub embedding_dim: usize,
    /// Weight of the isotropic part of the first layer relative to the part
    /// that reads the identity subspace.
    pub leak: f64,
    pub bias_scale: f64,
    /// Project outputs onto the unit sphere.
    pub normalize: bool,
}

/// `z -> tanh(z W1 + b1) W2`, optionally unit-normalized.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticEncoder {
    shape: EncoderShape,
    seed: u64,
    /// `latent_dim × hidden_dim`.
    w1: Array2<f64>,
    b1: Array1<f64>,
    /// `hidden_dim × embedding_dim`.
    w2: Array2<f64>,
}

fn normal_matrix(rows: usize, cols: usize, scale: f64, rng: &mut Rng) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| {
        scale * rng.sample::<f64, _>(StandardNormal)
    })
}

impl SyntheticEncoder {
    /// Draws weights from `seed`. The first layer mostly reads `subspace`
    /// (`latent_dim × q`, orthonormal columns), so distances between embeddings
    /// are dominated by the identity coordinates.
    pub fn new(shape: EncoderShape, subspace: &Array2<f64>, seed: u64) -> Self {
        let mut rng = rng_from_seed(seed);
        let (n, q) = subspace.dim();
        assert_eq!(
            n, shape.latent_dim,
            "subspace rows must equal the latent dimension"
        );
        let h = shape.hidden_dim;
        let g = normal_matrix(q, h, 1.0 / (q as f64).sqrt(), &mut rng);
        let w1 = subspace.dot(&g) + normal_matrix(n, h, shape.leak / (n as f64).sqrt(), &mut rng);
        let b1 = Array1::from_shape_fn(h, |_| {
            shape.bias_scale * rng.sample::<f64, _>(StandardNormal)
        });
        let w2 = normal_matrix(h, shape.embedding_dim, 1.0 / (h as f64).sqrt(), &mut rng);
        Self {
            shape,
            seed,
            w1,
            b1,
            w2,
        }
    }

    pub fn shape(&self) -> &EncoderShape {
        &self.shape
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Encodes the rows of `zs`.
    pub fn encode_rows(&self, zs: &Array2<f64>) -> Array2<f64> {
        let mut hidden = zs.dot(&self.w1) + &self.b1;
        hidden.mapv_inplace(f64::tanh);
        let mut out = hidden.dot(&self.w2);
        if self.shape.normalize {
            for mut row in out.axis_iter_mut(Axis(0)) {
                let norm = row.dot(&row).sqrt();
                if norm > 0.0 {
                    row /= norm;
                }
            }
        }
        out
    }

    /// Upper bound on `|f(x) - f(y)| / |x - y|` for the map before
    /// normalization: tanh is 1-Lipschitz and Frobenius norms bound the
    /// spectral norms.
    pub fn lipschitz_bound(&self) -> f64 {
        let frob = |m: &Array2<f64>| m.iter().map(|x| x * x).sum::<f64>().sqrt();
        frob(&self.w1) * frob(&self.w2)
    }
}

impl Encoder for SyntheticEncoder {
    fn latent_dim(&self) -> usize {
        self.shape.latent_dim
    }

    fn embedding_dim(&self) -> usize {
        self.shape.embedding_dim
    }

    /// Goes through the batched path so single and batched calls agree bit for
    /// bit.
    fn encode(&self, z: &[f64]) -> Vec<f64> {
        let row = Array2::from_shape_vec((1, z.len()), z.to_vec()).expect("one row");
        self.encode_rows(&row).into_raw_vec_and_offset().0
    }

    fn encode_batch(&self, zs: &[&[f64]]) -> Array2<f64> {
        let n = self.shape.latent_dim;
        let mut m = Array2::zeros((zs.len(), n));
        for (mut row, z) in m.rows_mut().into_iter().zip(zs) {
            row.assign(&ndarray::ArrayView1::from(*z));
        }
        self.encode_rows(&m)
    }
}
