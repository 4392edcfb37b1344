//! Sparse graded polynomial algebra on the phase space `(x, y, q, qbar)`.
//!
//! A [`PolyHamiltonian`] stores terms `c * e^{i<k,x>} y^alpha q^beta qbar^gamma`
//! truncated at a weighted degree cap `D` (with `deg = 2|alpha| + |beta| + |gamma|`)
//! and a Fourier cap `K` on `|k|`. Coefficients optionally carry forward-mode
//! derivatives with respect to the spectral parameters `xi`.
//!
//! The Poisson bracket is
//! `{U,V} = <U_x, V_y> - <U_y, V_x> + i sum_j (U_{q_j} V_{qbar_j} - U_{qbar_j} V_{q_j})`,
//! so that `d/dt (U o flow_V^t) = {U,V} o flow_V^t` for the vector field
//! `X_V = (V_y, -V_x, i V_qbar, -i V_q)`.

mod bracket;
mod coeff;
mod eval;
mod io;
mod key;
pub mod random;

use std::collections::BTreeMap;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use bracket::{lie_series, lie_transform, poisson_bracket, LieReport, SeriesOptions};
pub use coeff::Coeff;
pub use eval::{CompiledPoly, PhasePoint, VectorField};
pub use key::{MonomialKey, SparseExps};

/// Relative threshold below which coefficients are discarded.
pub const DROP_TOLERANCE: f64 = 1e-16;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolyError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: String, got: String },
    #[error("generator has terms of weighted degree {min_degree} <= 2; the Lie series does not terminate at the cap")]
    NonNilpotentGenerator { min_degree: u32 },
    #[error("degree cap exceeded: {0}")]
    Cap(String),
    #[error("Lie series did not converge after {order} orders (last term magnitude {residual:e})")]
    NonConvergent { order: usize, residual: f64 },
    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

/// Truncation caps of the algebra.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Caps {
    /// Weighted degree cap `D`.
    pub degree: u32,
    /// Cap `K` on `|k|_1`.
    pub fourier: u32,
    /// Absolute magnitude below which coefficients are discarded (0 keeps everything).
    #[serde(default)]
    pub floor: f64,
}

impl Caps {
    pub fn new(degree: u32, fourier: u32) -> Self {
        Self { degree, fourier, floor: 0.0 }
    }

    pub fn with_floor(self, floor: f64) -> Self {
        Self { floor, ..self }
    }

    pub fn admits(&self, key: &MonomialKey) -> bool {
        key.degree() <= self.degree && key.fourier_norm() <= self.fourier
    }
}

/// Terms that fell outside the caps during an operation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TruncationReport {
    pub dropped_degree: usize,
    pub dropped_fourier: usize,
    /// Coefficients removed by the magnitude floor.
    #[serde(default)]
    pub dropped_small: usize,
}

impl TruncationReport {
    pub fn total(&self) -> usize {
        self.dropped_degree + self.dropped_fourier
    }

    pub fn absorb(&mut self, other: TruncationReport) {
        self.dropped_degree += other.dropped_degree;
        self.dropped_fourier += other.dropped_fourier;
        self.dropped_small += other.dropped_small;
    }
}

/// Sparse truncated Hamiltonian with `n` angle/action pairs and `j` complex normal modes.
#[derive(Clone, Debug, PartialEq)]
pub struct PolyHamiltonian {
    n: usize,
    j: usize,
    params: usize,
    caps: Caps,
    terms: BTreeMap<MonomialKey, Coeff>,
}

impl PolyHamiltonian {
    pub fn new(n: usize, j: usize, caps: Caps) -> Self {
        Self { n, j, params: 0, caps, terms: BTreeMap::new() }
    }

    /// Same as [`PolyHamiltonian::new`] but every coefficient carries `params` derivatives.
    pub fn with_params(n: usize, j: usize, caps: Caps, params: usize) -> Self {
        Self { n, j, params, caps, terms: BTreeMap::new() }
    }

    /// Empty polynomial with the same dimensions, caps and parameter count.
    pub fn empty_like(&self) -> Self {
        Self { n: self.n, j: self.j, params: self.params, caps: self.caps, terms: BTreeMap::new() }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn j(&self) -> usize {
        self.j
    }

    pub fn params(&self) -> usize {
        self.params
    }

    pub fn caps(&self) -> Caps {
        self.caps
    }

    pub fn set_caps(&mut self, caps: Caps) {
        self.caps = caps;
        self.terms.retain(|k, _| caps.admits(k));
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&MonomialKey, &Coeff)> {
        self.terms.iter()
    }

    pub fn keys(&self) -> impl Iterator<Item = &MonomialKey> {
        self.terms.keys()
    }

    pub fn coeff(&self, key: &MonomialKey) -> Option<&Coeff> {
        self.terms.get(key)
    }

    /// Coefficient value, zero when the monomial is absent.
    pub fn value(&self, key: &MonomialKey) -> Complex64 {
        self.terms.get(key).map_or(Complex64::new(0.0, 0.0), |c| c.value)
    }

    pub fn remove(&mut self, key: &MonomialKey) -> Option<Coeff> {
        self.terms.remove(key)
    }

    fn check_key(&self, key: &MonomialKey) {
        debug_assert_eq!(key.n(), self.n, "angle dimension of key");
        debug_assert!(key.max_mode().map_or(true, |m| m < self.j), "mode index out of range");
    }

    /// Accumulates a term. Returns `false` (and drops it) when it lies outside the caps.
    pub fn add_term(&mut self, key: MonomialKey, coeff: Coeff) -> bool {
        self.check_key(&key);
        if !self.caps.admits(&key) {
            return false;
        }
        debug_assert_eq!(coeff.params(), self.params);
        match self.terms.get_mut(&key) {
            Some(c) => c.add_assign(&coeff),
            None => {
                self.terms.insert(key, coeff);
            }
        }
        true
    }

    pub fn add_value(&mut self, key: MonomialKey, value: Complex64) -> bool {
        let params = self.params;
        self.add_term(key, Coeff::new(value, params))
    }

    /// Overwrites (rather than accumulates) a coefficient.
    pub fn set_term(&mut self, key: MonomialKey, coeff: Coeff) {
        self.check_key(&key);
        if self.caps.admits(&key) {
            self.terms.insert(key, coeff);
        }
    }

    pub fn add_assign(&mut self, other: &Self) {
        self.add_scaled(other, Complex64::new(1.0, 0.0));
    }

    pub fn add_scaled(&mut self, other: &Self, s: Complex64) {
        assert_eq!((self.n, self.j), (other.n, other.j), "dimension mismatch in add");
        for (k, c) in &other.terms {
            if !self.caps.admits(k) {
                continue;
            }
            match self.terms.get_mut(k) {
                Some(e) => e.add_scaled(c, s),
                None => {
                    self.terms.insert(k.clone(), c.scaled(s));
                }
            }
        }
    }

    pub fn scaled(&self, s: Complex64) -> Self {
        let mut out = self.clone();
        for c in out.terms.values_mut() {
            c.scale_mut(s);
        }
        out
    }

    pub fn sub(&self, other: &Self) -> Self {
        let mut out = self.clone();
        out.add_scaled(other, Complex64::new(-1.0, 0.0));
        out.canonicalize();
        out
    }

    /// Largest coefficient magnitude (value or derivative).
    pub fn max_magnitude(&self) -> f64 {
        self.terms.values().fold(0.0, |m, c| m.max(c.magnitude()))
    }

    /// Drops coefficients below `DROP_TOLERANCE` relative to the largest one
    /// and below the absolute floor of the caps; returns how many were removed.
    pub fn canonicalize(&mut self) -> usize {
        let cut = (DROP_TOLERANCE * self.max_magnitude()).max(self.caps.floor);
        let before = self.terms.len();
        self.terms.retain(|_, c| c.magnitude() > cut && c.magnitude() > 0.0);
        before - self.terms.len()
    }

    pub fn min_degree(&self) -> Option<u32> {
        self.terms.keys().map(|k| k.degree()).min()
    }

    pub fn max_degree(&self) -> Option<u32> {
        self.terms.keys().map(|k| k.degree()).max()
    }

    pub fn filter<F: Fn(&MonomialKey, &Coeff) -> bool>(&self, keep: F) -> Self {
        let mut out = self.empty_like();
        out.terms = self.terms.iter().filter(|(k, c)| keep(k, c)).map(|(k, c)| (k.clone(), c.clone())).collect();
        out
    }

    /// Splits into `(matching, rest)`.
    pub fn partition<F: Fn(&MonomialKey, &Coeff) -> bool>(self, pred: F) -> (Self, Self) {
        let mut yes = self.empty_like();
        let mut no = self.empty_like();
        for (k, c) in self.terms {
            if pred(&k, &c) {
                yes.terms.insert(k, c);
            } else {
                no.terms.insert(k, c);
            }
        }
        (yes, no)
    }

    pub fn degree_part(&self, d: u32) -> Self {
        self.filter(|k, _| k.degree() == d)
    }

    /// Largest violation of `c(k,alpha,beta,gamma) = conj(c(-k,alpha,gamma,beta))`.
    pub fn reality_defect(&self) -> f64 {
        let zero = Complex64::new(0.0, 0.0);
        let mut worst: f64 = 0.0;
        for (k, c) in &self.terms {
            let partner = self.terms.get(&k.conjugate()).map_or(zero, |p| p.value);
            worst = worst.max((c.value - partner.conj()).norm());
        }
        worst
    }

    /// Projects onto the real-valued part `(H + conj(H)) / 2`.
    pub fn realified(&self) -> Self {
        let mut out = self.scaled(Complex64::new(0.5, 0.0));
        for (k, c) in &self.terms {
            out.add_term(k.conjugate(), c.conj().scaled(Complex64::new(0.5, 0.0)));
        }
        out.canonicalize();
        out
    }

    /// Drops the derivative information.
    pub fn without_params(&self) -> Self {
        let mut out = Self::new(self.n, self.j, self.caps);
        for (k, c) in &self.terms {
            out.terms.insert(k.clone(), Coeff::new(c.value, 0));
        }
        out
    }

    pub fn d_x(&self, site: usize) -> Self {
        let mut out = self.empty_like();
        for (k, c) in &self.terms {
            let kj = k.k()[site];
            if kj != 0 {
                out.terms.insert(k.clone(), c.scaled(Complex64::new(0.0, kj as f64)));
            }
        }
        out
    }

    pub fn d_y(&self, site: usize) -> Self {
        let mut out = self.empty_like();
        for (k, c) in &self.terms {
            if let Some((p, low)) = k.d_action(site) {
                out.add_term(low, c.scaled(Complex64::new(p as f64, 0.0)));
            }
        }
        out
    }

    pub fn d_q(&self, mode: usize) -> Self {
        let mut out = self.empty_like();
        for (k, c) in &self.terms {
            if let Some((p, low)) = k.d_q(mode) {
                out.add_term(low, c.scaled(Complex64::new(p as f64, 0.0)));
            }
        }
        out
    }

    pub fn d_qbar(&self, mode: usize) -> Self {
        let mut out = self.empty_like();
        for (k, c) in &self.terms {
            if let Some((p, low)) = k.d_qbar(mode) {
                out.add_term(low, c.scaled(Complex64::new(p as f64, 0.0)));
            }
        }
        out
    }

    /// `sum coeff * e^{i<k,x>} y^alpha q^beta qbar^gamma` at `w`.
    pub fn evaluate(&self, w: &PhasePoint) -> Result<Complex64, PolyError> {
        w.check_dims(self.n, self.j)?;
        Ok(eval::evaluate_terms(self.terms.iter(), w))
    }

    /// The Hamiltonian vector field `(H_y, -H_x, i H_qbar, -i H_q)` as component polynomials.
    pub fn vector_field(&self) -> VectorField {
        VectorField::of(self)
    }
}
