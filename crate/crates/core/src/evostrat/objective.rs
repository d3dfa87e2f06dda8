use std::sync::atomic::{AtomicUsize, Ordering};

/// A deterministic function to minimize.
pub trait Objective: Sync {
    fn dimension(&self) -> usize;

    fn evaluate(&self, x: &[f64]) -> f64;

    /// Evaluates a batch. Implementations may vectorize but must return
    /// exactly what `evaluate` would for each point.
    fn evaluate_batch(&self, xs: &[&[f64]]) -> Vec<f64> {
        xs.iter().map(|x| self.evaluate(x)).collect()
    }
}

/// Wraps a closure as an [`Objective`].
pub struct FnObjective<F> {
    dimension: usize,
    f: F,
}

impl<F: Fn(&[f64]) -> f64 + Sync> FnObjective<F> {
    pub fn new(dimension: usize, f: F) -> Self {
        Self { dimension, f }
    }
}

impl<F: Fn(&[f64]) -> f64 + Sync> Objective for FnObjective<F> {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn evaluate(&self, x: &[f64]) -> f64 {
        (self.f)(x)
    }
}

/// Counts every call that reaches the wrapped objective.
pub struct ObjectiveHandle<'a> {
    objective: &'a dyn Objective,
    evaluations: AtomicUsize,
}

impl<'a> ObjectiveHandle<'a> {
    pub fn new(objective: &'a dyn Objective) -> Self {
        Self {
            objective,
            evaluations: AtomicUsize::new(0),
        }
    }

    pub fn dimension(&self) -> usize {
        self.objective.dimension()
    }

    pub fn evaluate(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dimension());
        self.evaluations.fetch_add(1, Ordering::Relaxed);
        self.objective.evaluate(x)
    }

    pub fn evaluate_batch(&self, xs: &[&[f64]]) -> Vec<f64> {
        self.evaluations.fetch_add(xs.len(), Ordering::Relaxed);
        self.objective.evaluate_batch(xs)
    }

    pub fn evaluations(&self) -> usize {
        self.evaluations.load(Ordering::Relaxed)
    }
}
