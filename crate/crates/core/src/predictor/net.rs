//! The success predictor network: `dense(256) -> batchnorm -> ELU ->
//! dense(128) -> ELU -> dense(1) -> sigmoid`, trained with Adam on mini-batches
//! of 32 under binary cross-entropy.
//!
//! The network is generic over its float type. Runs use `f32`; gradient checks
//! instantiate `f64`.

use std::fmt::Debug;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use ndarray::linalg::general_mat_mul;
use ndarray::{Array1, Array2, Axis, LinalgScalar, ScalarOperand, Zip};
use num_traits::{Float, FromPrimitive};
use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::assisted::Predictor;
use crate::seed::{derive_seed, rng_from_seed, Rng};

pub const HIDDEN_WIDTHS: [usize; 2] = [256, 128];
pub const BATCH_SIZE: usize = 32;
pub const LEARNING_RATE: f64 = 1e-3;

const BN_MOMENTUM: f64 = 0.1;
const BN_EPS: f64 = 1e-5;
const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// Largest double below one; scores are clamped into the open unit interval.
const SCORE_CEIL: f64 = 1.0 - f64::EPSILON / 2.0;

pub trait NetFloat:
    Float
    + LinalgScalar
    + ScalarOperand
    + FromPrimitive
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Serialize
    + DeserializeOwned
    + Debug
    + Send
    + Sync
    + 'static
{
}

impl NetFloat for f32 {}
impl NetFloat for f64 {}

/// `aᵀ b` in row-major layout.
fn t_dot<F: NetFloat>(a: &Array2<F>, b: &Array2<F>) -> Array2<F> {
    let mut out = Array2::zeros((a.ncols(), b.ncols()));
    general_mat_mul(F::one(), &a.t(), b, F::zero(), &mut out);
    out
}

fn cast<F: NetFloat>(v: f64) -> F {
    F::from_f64(v).expect("representable constant")
}

/// Trainable tensors. Also used for gradients and Adam moments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gradients<F> {
    pub w1: Array2<F>,
    pub b1: Array1<F>,
    pub gamma: Array1<F>,
    pub beta: Array1<F>,
    pub w2: Array2<F>,
    pub b2: Array1<F>,
    pub w3: Array2<F>,
    pub b3: Array1<F>,
}

type Params<F> = Gradients<F>;

impl<F: NetFloat> Gradients<F> {
    fn zeros(input_dim: usize) -> Self {
        let [h1, h2] = HIDDEN_WIDTHS;
        Self {
            w1: Array2::zeros((input_dim, h1)),
            b1: Array1::zeros(h1),
            gamma: Array1::zeros(h1),
            beta: Array1::zeros(h1),
            w2: Array2::zeros((h1, h2)),
            b2: Array1::zeros(h2),
            w3: Array2::zeros((h2, 1)),
            b3: Array1::zeros(1),
        }
    }

    /// Uniform `(-1/sqrt(fan_in), 1/sqrt(fan_in))` for dense layers, identity
    /// affine for batch normalization.
    fn initialized(input_dim: usize, rng: &mut Rng) -> Self {
        let [h1, h2] = HIDDEN_WIDTHS;
        let mut dense = |fan_in: usize, fan_out: usize| {
            let bound = 1.0 / (fan_in as f64).sqrt();
            let w = Array2::from_shape_fn((fan_in, fan_out), |_| {
                cast::<F>(rng.random_range(-bound..bound))
            });
            let b = Array1::from_shape_fn(fan_out, |_| cast::<F>(rng.random_range(-bound..bound)));
            (w, b)
        };
        let (w1, b1) = dense(input_dim, h1);
        let (w2, b2) = dense(h1, h2);
        let (w3, b3) = dense(h2, 1);
        Self {
            w1,
            b1,
            gamma: Array1::ones(h1),
            beta: Array1::zeros(h1),
            w2,
            b2,
            w3,
            b3,
        }
    }

    pub fn slices(&self) -> [&[F]; 8] {
        [
            self.w1.as_slice().expect("standard layout"),
            self.b1.as_slice().expect("standard layout"),
            self.gamma.as_slice().expect("standard layout"),
            self.beta.as_slice().expect("standard layout"),
            self.w2.as_slice().expect("standard layout"),
            self.b2.as_slice().expect("standard layout"),
            self.w3.as_slice().expect("standard layout"),
            self.b3.as_slice().expect("standard layout"),
        ]
    }

    pub fn slices_mut(&mut self) -> [&mut [F]; 8] {
        [
            self.w1.as_slice_mut().expect("standard layout"),
            self.b1.as_slice_mut().expect("standard layout"),
            self.gamma.as_slice_mut().expect("standard layout"),
            self.beta.as_slice_mut().expect("standard layout"),
            self.w2.as_slice_mut().expect("standard layout"),
            self.b2.as_slice_mut().expect("standard layout"),
            self.w3.as_slice_mut().expect("standard layout"),
            self.b3.as_slice_mut().expect("standard layout"),
        ]
    }

    pub fn len(&self) -> usize {
        self.slices().iter().map(|s| s.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Adam<F> {
    m: Gradients<F>,
    v: Gradients<F>,
    t: u64,
}

impl<F: NetFloat> Adam<F> {
    fn new(input_dim: usize) -> Self {
        Self {
            m: Gradients::zeros(input_dim),
            v: Gradients::zeros(input_dim),
            t: 0,
        }
    }

    fn step(&mut self, params: &mut Params<F>, grads: &Gradients<F>) {
        self.t += 1;
        let t = self.t as i32;
        let bc1 = 1.0 - ADAM_BETA1.powi(t);
        let bc2_sqrt = (1.0 - ADAM_BETA2.powi(t)).sqrt();
        let (b1, b2) = (cast::<F>(ADAM_BETA1), cast::<F>(ADAM_BETA2));
        let (one, eps) = (F::one(), cast::<F>(ADAM_EPS));
        let step = cast::<F>(LEARNING_RATE / bc1);
        let bc2_sqrt = cast::<F>(bc2_sqrt);

        let p = params.slices_mut();
        let g = grads.slices();
        let m = self.m.slices_mut();
        let v = self.v.slices_mut();
        for (((p, g), m), v) in p.into_iter().zip(g).zip(m).zip(v) {
            for (((p, &g), m), v) in p.iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
                *m = b1 * *m + (one - b1) * g;
                *v = b2 * *v + (one - b2) * g * g;
                *p -= step * *m / (v.sqrt() / bc2_sqrt + eps);
            }
        }
    }
}

/// Intermediate activations kept for the backward pass.
struct Forward<F> {
    logits: Array1<F>,
    xhat: Array2<F>,
    inv_std: Array1<F>,
    bn_out: Array2<F>,
    h1: Array2<F>,
    a2: Array2<F>,
    h2: Array2<F>,
    /// Batch mean and biased variance, when batch statistics were used.
    batch_stats: Option<(Array1<F>, Array1<F>)>,
}

fn elu<F: NetFloat>(x: F) -> F {
    if x > F::zero() {
        x
    } else {
        x.exp() - F::one()
    }
}

/// ELU derivative from input `x` and output `y = elu(x)`.
fn elu_grad<F: NetFloat>(x: F, y: F) -> F {
    if x > F::zero() {
        F::one()
    } else {
        y + F::one()
    }
}

/// Flushes subnormal results and inputs to zero on the current thread while
/// alive. A confident classifier produces underflowing gradients, and
/// subnormal arithmetic is orders of magnitude slower.
struct FlushDenormals {
    #[cfg(target_arch = "x86_64")]
    saved: u32,
}

impl FlushDenormals {
    #[cfg(target_arch = "x86_64")]
    #[allow(deprecated)]
    fn new() -> Self {
        use std::arch::x86_64::{_mm_getcsr, _mm_setcsr};
        const FTZ_DAZ: u32 = 0x8040;
        // SAFETY: only the flush-to-zero and denormals-are-zero bits change;
        // the previous state is restored on drop.
        let saved = unsafe { _mm_getcsr() };
        unsafe { _mm_setcsr(saved | FTZ_DAZ) };
        Self { saved }
    }

    #[cfg(not(target_arch = "x86_64"))]
    fn new() -> Self {
        Self {}
    }
}

impl Drop for FlushDenormals {
    #[allow(deprecated)]
    fn drop(&mut self) {
        #[cfg(target_arch = "x86_64")]
        // SAFETY: restores the control word read in `new`.
        unsafe {
            std::arch::x86_64::_mm_setcsr(self.saved)
        };
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn sigmoid_f<F: NetFloat>(x: F) -> F {
    let one = F::one();
    if x >= F::zero() {
        one / (one + (-x).exp())
    } else {
        let e = x.exp();
        e / (one + e)
    }
}

/// `-(y ln s + (1-y) ln(1-s))` for `s = sigmoid(logit)`, computed stably.
fn bce_with_logit<F: NetFloat>(logit: F, y: F) -> F {
    logit.max(F::zero()) - logit * y + (-logit.abs()).exp().ln_1p()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictorNet<F> {
    input_dim: usize,
    params: Params<F>,
    running_mean: Array1<F>,
    running_var: Array1<F>,
    adam: Adam<F>,
    init_seed: u64,
    generation: u32,
}

impl<F: NetFloat> PredictorNet<F> {
    pub fn new(input_dim: usize, init_seed: u64) -> Self {
        Self::with_generation(input_dim, init_seed, 0)
    }

    /// The network as the `generation`-th (re)initialization from `init_seed`
    /// leaves it.
    pub fn with_generation(input_dim: usize, init_seed: u64, generation: u32) -> Self {
        let mut rng = rng_from_seed(derive_seed(init_seed, &format!("init/{generation}")));
        let h1 = HIDDEN_WIDTHS[0];
        Self {
            input_dim,
            params: Params::initialized(input_dim, &mut rng),
            running_mean: Array1::zeros(h1),
            running_var: Array1::ones(h1),
            adam: Adam::new(input_dim),
            init_seed,
            generation,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn generation(&self) -> u32 {
        self.generation
    }

    pub fn params(&self) -> &Gradients<F> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut Gradients<F> {
        &mut self.params
    }

    /// Discards everything learned and draws fresh parameters from the next
    /// initializer generation. Adam moments and batch-norm statistics reset too.
    pub fn reinitialize(&mut self) {
        *self = Self::with_generation(self.input_dim, self.init_seed, self.generation + 1);
    }

    pub fn to_matrix(&self, rows: &[&[f64]]) -> Array2<F> {
        Array2::from_shape_fn((rows.len(), self.input_dim), |(i, j)| cast(rows[i][j]))
    }

    fn forward(&self, x: &Array2<F>, batch_stats: bool) -> Forward<F> {
        let p = &self.params;
        let mut xhat = x.dot(&p.w1);
        xhat += &p.b1;
        let eps = cast::<F>(BN_EPS);
        let (var, stats) = if batch_stats && x.nrows() >= 2 {
            let mean = xhat.mean_axis(Axis(0)).expect("non-empty batch");
            xhat -= &mean;
            let mut var = Array1::<F>::zeros(xhat.ncols());
            for row in xhat.rows() {
                Zip::from(&mut var).and(&row).for_each(|v, &c| *v += c * c);
            }
            var.mapv_inplace(|v| v / cast::<F>(x.nrows() as f64));
            (var.clone(), Some((mean, var)))
        } else {
            xhat -= &self.running_mean;
            (self.running_var.clone(), None)
        };
        let inv_std = var.mapv(|v| F::one() / (v + eps).sqrt());
        xhat *= &inv_std;
        let bn_out = &xhat * &p.gamma + &p.beta;
        let h1 = bn_out.mapv(elu);
        let a2 = h1.dot(&p.w2) + &p.b2;
        let h2 = a2.mapv(elu);
        let logits = (h2.dot(&p.w3) + &p.b3).column(0).to_owned();
        Forward {
            logits,
            xhat,
            inv_std,
            bn_out,
            h1,
            a2,
            h2,
            batch_stats: stats,
        }
    }

    /// Inference-mode logits (running batch-norm statistics).
    pub fn logits(&self, x: &Array2<F>) -> Array1<F> {
        self.forward(x, false).logits
    }

    /// Probability of the successful class for each row, in `(0, 1)`.
    pub fn score_rows(&self, rows: &[&[f64]]) -> Vec<f64> {
        if rows.is_empty() {
            return Vec::new();
        }
        let _flush = FlushDenormals::new();
        let logits = self.logits(&self.to_matrix(rows));
        logits
            .iter()
            .map(|l| sigmoid(l.to_f64().unwrap_or(f64::NAN)).clamp(f64::MIN_POSITIVE, SCORE_CEIL))
            .collect()
    }

    /// Training-mode mean BCE of a batch, without side effects.
    pub fn loss(&self, x: &Array2<F>, labels: &Array1<F>) -> F {
        let fwd = self.forward(x, true);
        let n = cast::<F>(x.nrows() as f64);
        Zip::from(&fwd.logits)
            .and(labels)
            .fold(F::zero(), |acc, &l, &y| acc + bce_with_logit(l, y))
            / n
    }

    /// Training-mode mean BCE and its gradient with respect to every parameter.
    pub fn loss_and_gradients(&self, x: &Array2<F>, labels: &Array1<F>) -> (F, Gradients<F>) {
        let (loss, grads, _) = self.backward(x, labels);
        (loss, grads)
    }

    #[allow(clippy::type_complexity)]
    fn backward(
        &self,
        x: &Array2<F>,
        labels: &Array1<F>,
    ) -> (F, Gradients<F>, Option<(Array1<F>, Array1<F>)>) {
        let p = &self.params;
        let fwd = self.forward(x, true);
        let batch = x.nrows();
        let n = cast::<F>(batch as f64);

        let loss = Zip::from(&fwd.logits)
            .and(labels)
            .fold(F::zero(), |acc, &l, &y| acc + bce_with_logit(l, y))
            / n;

        // d loss / d logit
        let dl = Zip::from(&fwd.logits)
            .and(labels)
            .map_collect(|&l, &y| (sigmoid_f(l) - y) / n)
            .insert_axis(Axis(1));

        let w3 = t_dot(&fwd.h2, &dl);
        let b3 = dl.sum_axis(Axis(0));
        let mut da2 = dl.dot(&p.w3.t());
        Zip::from(&mut da2)
            .and(&fwd.a2)
            .and(&fwd.h2)
            .for_each(|d, &a, &h| *d *= elu_grad(a, h));

        let w2 = t_dot(&fwd.h1, &da2);
        let b2 = da2.sum_axis(Axis(0));
        let mut dbn = da2.dot(&p.w2.t());
        Zip::from(&mut dbn)
            .and(&fwd.bn_out)
            .and(&fwd.h1)
            .for_each(|d, &a, &h| *d *= elu_grad(a, h));

        let gamma = (&dbn * &fwd.xhat).sum_axis(Axis(0));
        let beta = dbn.sum_axis(Axis(0));
        let dxhat = dbn * &p.gamma;
        let da1 = if fwd.batch_stats.is_some() {
            let sum_dxhat = dxhat.sum_axis(Axis(0));
            let sum_dxhat_xhat = (&dxhat * &fwd.xhat).sum_axis(Axis(0));
            let scaled = dxhat * n - &sum_dxhat - &fwd.xhat * &sum_dxhat_xhat;
            scaled * &(&fwd.inv_std / n)
        } else {
            dxhat * &fwd.inv_std
        };
        let w1 = t_dot(x, &da1);
        let b1 = da1.sum_axis(Axis(0));

        let grads = Gradients {
            w1,
            b1,
            gamma,
            beta,
            w2,
            b2,
            w3,
            b3,
        };
        (loss, grads, fwd.batch_stats)
    }

    /// One Adam step on a batch; updates batch-norm running statistics.
    pub fn train_batch(&mut self, x: &Array2<F>, labels: &Array1<F>) -> F {
        let (loss, grads, stats) = self.backward(x, labels);
        self.adam.step(&mut self.params, &grads);
        if let Some((mean, var)) = stats {
            let batch = x.nrows() as f64;
            let m = cast::<F>(BN_MOMENTUM);
            let keep = F::one() - m;
            let unbias = cast::<F>(batch / (batch - 1.0));
            Zip::from(&mut self.running_mean)
                .and(&mean)
                .for_each(|r, &v| *r = keep * *r + m * v);
            Zip::from(&mut self.running_var)
                .and(&var)
                .for_each(|r, &v| *r = keep * *r + m * v * unbias);
        }
        loss
    }

    /// One shuffled pass over `samples` in mini-batches of [`BATCH_SIZE`].
    /// Returns the mean batch loss, or `None` for an empty set.
    pub fn train_epoch(&mut self, samples: &[(&[f64], bool)], rng: &mut Rng) -> Option<f64> {
        if samples.is_empty() {
            return None;
        }
        let _flush = FlushDenormals::new();
        let mut order: Vec<usize> = (0..samples.len()).collect();
        order.shuffle(rng);
        let mut total = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(BATCH_SIZE) {
            let rows: Vec<&[f64]> = chunk.iter().map(|&i| samples[i].0).collect();
            let x = self.to_matrix(&rows);
            let y = Array1::from_iter(chunk.iter().map(|&i| {
                if samples[i].1 {
                    F::one()
                } else {
                    F::zero()
                }
            }));
            total += self.train_batch(&x, &y).to_f64().unwrap_or(f64::NAN);
            batches += 1;
        }
        Some(total / batches as f64)
    }
}

impl<F: NetFloat> Predictor for PredictorNet<F> {
    fn score(&self, candidates: &[&[f64]]) -> Vec<f64> {
        self.score_rows(candidates)
    }

    fn train_epoch(&mut self, labeled: &[(&[f64], bool)], rng: &mut Rng) -> Option<f64> {
        PredictorNet::train_epoch(self, labeled, rng)
    }

    fn reinitialize(&mut self) {
        PredictorNet::reinitialize(self)
    }
}
