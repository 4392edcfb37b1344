use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// A complex coefficient together with its directional derivatives with
/// respect to the active parameters `xi_1 .. xi_P` (forward mode).
///
/// When the polynomial tracks no parameters `grad` is empty and every
/// operation reduces to plain complex arithmetic.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Coeff {
    pub value: Complex64,
    pub grad: Vec<Complex64>,
}

impl Coeff {
    pub fn new(value: Complex64, params: usize) -> Self {
        Self { value, grad: vec![Complex64::new(0.0, 0.0); params] }
    }

    pub fn with_grad(value: Complex64, grad: Vec<Complex64>) -> Self {
        Self { value, grad }
    }

    pub fn real(value: f64, params: usize) -> Self {
        Self::new(Complex64::new(value, 0.0), params)
    }

    pub fn params(&self) -> usize {
        self.grad.len()
    }

    pub fn scaled(&self, s: Complex64) -> Self {
        Self { value: self.value * s, grad: self.grad.iter().map(|g| g * s).collect() }
    }

    pub fn scale_mut(&mut self, s: Complex64) {
        self.value *= s;
        for g in &mut self.grad {
            *g *= s;
        }
    }

    /// Product rule.
    pub fn mul(&self, other: &Self) -> Self {
        let grad = self
            .grad
            .iter()
            .zip(&other.grad)
            .map(|(ga, gb)| self.value * gb + ga * other.value)
            .collect();
        Self { value: self.value * other.value, grad }
    }

    pub fn add_assign(&mut self, other: &Self) {
        self.value += other.value;
        for (g, o) in self.grad.iter_mut().zip(&other.grad) {
            *g += o;
        }
    }

    /// `self += s * other`.
    pub fn add_scaled(&mut self, other: &Self, s: Complex64) {
        self.value += other.value * s;
        for (g, o) in self.grad.iter_mut().zip(&other.grad) {
            *g += o * s;
        }
    }

    /// `1 / self`, with derivative `-grad / value^2`.
    pub fn recip(&self) -> Self {
        let inv = self.value.inv();
        let d = -inv * inv;
        Self { value: inv, grad: self.grad.iter().map(|g| g * d).collect() }
    }

    pub fn conj(&self) -> Self {
        Self { value: self.value.conj(), grad: self.grad.iter().map(|g| g.conj()).collect() }
    }

    /// Largest modulus over the value and every derivative entry.
    pub fn magnitude(&self) -> f64 {
        self.grad.iter().fold(self.value.norm(), |m, g| m.max(g.norm()))
    }

    /// `|value| + |d/dxi_j value|` maximised over active directions.
    pub fn value_plus_grad(&self) -> f64 {
        let g = self.grad.iter().fold(0.0_f64, |m, g| m.max(g.norm()));
        self.value.norm() + g
    }
}
