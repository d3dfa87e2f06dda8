//! Benchmark objectives used by tests and the acceptance suite.

use super::Objective;

/// `f(x) = sum x_i^2`, minimum 0 at the origin.
#[derive(Debug, Clone, Copy)]
pub struct Sphere {
    pub dimension: usize,
}

impl Objective for Sphere {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn evaluate(&self, x: &[f64]) -> f64 {
        x.iter().map(|v| v * v).sum()
    }
}

/// Rastrigin function, minimum 0 at the origin.
#[derive(Debug, Clone, Copy)]
pub struct Rastrigin {
    pub dimension: usize,
}

impl Objective for Rastrigin {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn evaluate(&self, x: &[f64]) -> f64 {
        let tau = 2.0 * std::f64::consts::PI;
        10.0 * x.len() as f64
            + x.iter()
                .map(|v| v * v - 10.0 * (tau * v).cos())
                .sum::<f64>()
    }
}

/// Returns the same value everywhere.
#[derive(Debug, Clone, Copy)]
pub struct Constant {
    pub dimension: usize,
    pub value: f64,
}

impl Objective for Constant {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn evaluate(&self, _x: &[f64]) -> f64 {
        self.value
    }
}
