use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{NlwError, Result};
use crate::model::FrequencyData;
use crate::poly::{Coeff, MonomialKey, PolyHamiltonian};

/// Small-divisor gate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DivisorGate {
    /// Order-2 gate constant `eta`.
    pub eta: f64,
    /// Partial normal form gate constant `eta_tilde`.
    pub eta_tilde: f64,
    pub tau: f64,
    /// Normal form order parameter `M`.
    pub m: u32,
    /// Low/high split: normal modes `1..=N` are low.
    pub n_split: usize,
}

/// Which threshold a solve is checked against.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GateKind {
    Order2,
    Partial,
}

impl DivisorGate {
    /// `eta / (|k|+1)^tau`.
    pub fn order2_threshold(&self, k_norm: u32) -> f64 {
        self.eta / (k_norm as f64 + 1.0).powf(self.tau)
    }

    /// `C(N, l) = prod_{i <= N} (1 + i^2 l_i^2)` over the low modes of `l`.
    pub fn c_weight(&self, l: &[(u16, i32)]) -> f64 {
        l.iter()
            .filter(|(m, _)| (*m as usize) < self.n_split)
            .map(|&(m, v)| {
                let i = (m + 1) as f64;
                1.0 + i * i * (v as f64) * (v as f64)
            })
            .product()
    }

    /// `eta_tilde / (4^{3M} (|k|+1)^tau C(N, l_low))`.
    pub fn partial_threshold(&self, k_norm: u32, l: &[(u16, i32)]) -> f64 {
        self.eta_tilde / (4f64.powi(3 * self.m as i32) * (k_norm as f64 + 1.0).powf(self.tau) * self.c_weight(l))
    }

    pub fn threshold(&self, kind: GateKind, key: &MonomialKey) -> f64 {
        match kind {
            GateKind::Order2 => self.order2_threshold(key.fourier_norm()),
            GateKind::Partial => self.partial_threshold(key.fourier_norm(), &key.mode_balance()),
        }
    }

    /// Number of high modes (index > N) in the monomial, counted with multiplicity.
    pub fn high_count(&self, key: &MonomialKey) -> u32 {
        key.beta()
            .iter()
            .chain(key.gamma().iter())
            .filter(|(m, _)| (*m as usize) >= self.n_split)
            .map(|&(_, p)| p as u32)
            .sum()
    }
}

/// Frequencies of the current integrable part, with parameter derivatives.
#[derive(Clone, Debug)]
pub struct FrequencyCoeffs {
    pub omega: Vec<Coeff>,
    pub big_omega: Vec<Coeff>,
}

impl FrequencyCoeffs {
    /// Reads `omega_j` from the `y_j` coefficient and `Omega_j` from the `q_j qbar_j` coefficient.
    pub fn read(h: &PolyHamiltonian) -> Self {
        let (n, j, params) = (h.n(), h.j(), h.params());
        let get = |key: MonomialKey| h.coeff(&key).cloned().unwrap_or_else(|| Coeff::new(Complex64::new(0.0, 0.0), params));
        let omega = (0..n)
            .map(|s| {
                let mut a = vec![0u32; n];
                a[s] = 1;
                get(MonomialKey::new(&vec![0; n], &a, &vec![0; j], &vec![0; j]))
            })
            .collect();
        let big_omega = (0..j)
            .map(|m| {
                let mut e = vec![0u32; j];
                e[m] = 1;
                get(MonomialKey::new(&vec![0; n], &vec![0; n], &e, &e))
            })
            .collect();
        Self { omega, big_omega }
    }

    /// `<k, omega> + <beta - gamma, Omega>` with derivatives.
    pub fn divisor(&self, key: &MonomialKey) -> Coeff {
        let params = self.omega.first().or(self.big_omega.first()).map_or(0, |c| c.params());
        let mut d = Coeff::new(Complex64::new(0.0, 0.0), params);
        for (s, &kv) in key.k().iter().enumerate() {
            if kv != 0 {
                d.add_scaled(&self.omega[s], Complex64::new(kv as f64, 0.0));
            }
        }
        for (m, l) in key.mode_balance() {
            d.add_scaled(&self.big_omega[m as usize], Complex64::new(l as f64, 0.0));
        }
        // frequencies are real; drop rounding noise in the imaginary part
        d.value.im = 0.0;
        for g in &mut d.grad {
            g.im = 0.0;
        }
        d
    }

    /// Writes the real parts into the corrected fields of `freq`.
    pub fn store(&self, freq: &mut FrequencyData) {
        freq.omega_corr = self.omega.iter().map(|c| c.value.re).collect();
        freq.big_omega_corr = self.big_omega.iter().map(|c| c.value.re).collect();
        if self.omega.first().map_or(false, |c| c.params() > 0) {
            freq.omega_corr_grad = Some(self.omega.iter().map(|c| c.grad.iter().map(|g| g.re).collect()).collect());
            freq.big_omega_corr_grad = Some(self.big_omega.iter().map(|c| c.grad.iter().map(|g| g.re).collect()).collect());
        }
    }
}

/// `<k, omega> + <l, Omega>` from corrected frequencies; `l` holds 1-based normal
/// modes with signed multiplicities and may reach beyond the truncation.
pub fn divisor(k: &[i32], l: &[(usize, i32)], freq: &FrequencyData) -> f64 {
    let mut d = 0.0;
    for (s, &kv) in k.iter().enumerate() {
        d += kv as f64 * freq.omega_corr[s];
    }
    for &(j, v) in l {
        d += v as f64 * freq.big_omega_at(j);
    }
    d
}

/// Generator coefficient `coeff / (i * divisor)` cancelling one non-integrable term against `N`.
pub fn homological_solve(
    key: &MonomialKey,
    coeff: &Coeff,
    freqs: &FrequencyCoeffs,
    gate: &DivisorGate,
    kind: GateKind,
) -> Result<Coeff> {
    if key.is_integrable() {
        return Err(NlwError::Precondition(format!("term {key} is integrable and has no homological solution")));
    }
    let d = freqs.divisor(key);
    let threshold = gate.threshold(kind, key);
    if !(d.value.norm() >= threshold) {
        return Err(NlwError::ResonantTerm { key: key.to_string(), divisor: d.value.norm(), threshold });
    }
    let i_d = d.scaled(Complex64::new(0.0, 1.0));
    Ok(coeff.mul(&i_d.recip()))
}
