//! Homological equations, the order-2 normal form and the partial normal
//! form of order `M + 2`, with the coordinate changes kept as a chain of
//! Hamiltonian generators.

mod flow;
mod homological;

use std::fmt::Write as _;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{NlwError, Result};
use crate::model::{lift_model, FrequencyData, ModelConfig, ParameterPoint};
use crate::poly::{lie_series, Caps, lie_transform, MonomialKey, PolyHamiltonian, SeriesOptions, TruncationReport};

pub use flow::{apply_chain, ChainEntry, CompiledChain, Direction, FlowOptions, TransformChain};
pub use homological::{divisor, homological_solve, DivisorGate, FrequencyCoeffs, GateKind};

/// Cancellation record of one solved monomial.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualRow {
    pub stage: String,
    pub monomial: String,
    /// Magnitude before the stage.
    pub before: f64,
    /// Magnitude of the same coefficient after the stage.
    pub residual: f64,
}

/// A small divisor met during the partial normal form.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResonanceHit {
    pub stage: String,
    pub monomial: String,
    pub divisor: f64,
    pub threshold: f64,
}

/// Output of the normal form pipelines.
#[derive(Clone, Debug)]
pub struct NormalFormResult {
    /// Integrable part of weighted degree <= 2 (constants, `omega y`, `Omega |q|^2`).
    pub n_breve: PolyHamiltonian,
    /// Integrable terms of degree `4..=M+2`.
    pub z: PolyHamiltonian,
    /// Terms of degree `>= M+3` with at most two high modes.
    pub p: PolyHamiltonian,
    /// Terms with at least three high modes.
    pub q: PolyHamiltonian,
    /// Everything else: the order-2 remainder, or rounding residue after the partial stages.
    pub remainder: PolyHamiltonian,
    /// Non-integrable terms of degree <= 2 left by the order-2 sweeps.
    pub low_residual: PolyHamiltonian,
    /// Terms that failed the divisor gate and were left untouched.
    pub resonant: PolyHamiltonian,
    pub chain: TransformChain,
    pub freq: FrequencyData,
    pub residuals: Vec<ResidualRow>,
    pub resonances: Vec<ResonanceHit>,
    pub truncation: TruncationReport,
    pub sweeps: usize,
    /// Normal form order parameter, `None` for the order-2 flavor.
    pub order: Option<u32>,
    pub n_split: usize,
}

impl NormalFormResult {
    /// `xi` passed every divisor gate.
    pub fn nonresonant(&self) -> bool {
        self.resonances.is_empty()
    }

    /// Sum of every class: the transformed Hamiltonian as represented.
    pub fn total(&self) -> PolyHamiltonian {
        let mut h = self.n_breve.clone();
        for part in [&self.z, &self.p, &self.q, &self.remainder, &self.low_residual, &self.resonant] {
            h.add_assign(part);
        }
        h
    }

    /// Largest non-integrable coefficient with degree <= `max_degree` and at most two high modes.
    pub fn max_nonintegrable(&self, max_degree: u32) -> f64 {
        let gate = DivisorGate { eta: 1.0, eta_tilde: 1.0, tau: 0.0, m: 0, n_split: self.n_split };
        self.total()
            .iter()
            .filter(|(k, _)| k.degree() <= max_degree && !k.is_integrable() && gate.high_count(k) <= 2)
            .map(|(_, c)| c.value.norm())
            .fold(0.0, f64::max)
    }

    /// Checks the defining index constraints of each class term by term.
    pub fn check_classification(&self) -> std::result::Result<(), String> {
        let gate = DivisorGate { eta: 1.0, eta_tilde: 1.0, tau: 0.0, m: 0, n_split: self.n_split };
        for (k, _) in self.n_breve.iter() {
            if !(k.is_integrable() && k.degree() <= 2) {
                return Err(format!("N term {k} is not integrable of degree <= 2"));
            }
        }
        let Some(m) = self.order else { return Ok(()) };
        for (k, _) in self.z.iter() {
            if !(k.is_integrable() && gate.high_count(k) <= 2 && (4..=m + 2).contains(&k.degree())) {
                return Err(format!("Z term {k} violates the class constraints"));
            }
        }
        for (k, _) in self.p.iter() {
            if !(k.degree() >= m + 3 && gate.high_count(k) <= 2) {
                return Err(format!("P term {k} violates the class constraints"));
            }
        }
        for (k, _) in self.q.iter() {
            if gate.high_count(k) < 3 {
                return Err(format!("Q term {k} has fewer than three high modes"));
            }
        }
        Ok(())
    }

    /// `stage,monomial,residual` table.
    pub fn residuals_csv(&self) -> String {
        let mut s = String::from("stage,monomial,residual\n");
        for r in &self.residuals {
            let _ = writeln!(s, "{},{},{:e}", r.stage, r.monomial, r.residual);
        }
        s
    }
}

/// Order-2 sweep controls.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Order2Options {
    pub max_sweeps: usize,
    pub tol: f64,
}

impl Default for Order2Options {
    fn default() -> Self {
        Self { max_sweeps: 8, tol: 1e-12 }
    }
}

fn split_low_nonintegrable(h: &PolyHamiltonian) -> (PolyHamiltonian, PolyHamiltonian) {
    h.clone().partition(|k, _| k.degree() <= 2 && !k.is_integrable())
}

/// Removes every non-integrable term of weighted degree <= 2.
///
/// Each sweep reads the current frequencies off the `y_j` and `q_j qbar_j`
/// coefficients, solves all remaining low-degree terms at once and applies the
/// time-1 map of the generator. Sweeps stop when the largest remaining
/// coefficient is below `opts.tol`.
pub fn order2_step(h: &PolyHamiltonian, freq: &FrequencyData, gate: &DivisorGate, opts: Order2Options) -> Result<NormalFormResult> {
    let mut h = h.clone();
    let mut chain = TransformChain::default();
    let mut residuals = Vec::new();
    let mut truncation = TruncationReport::default();
    let mut sweeps = 0;
    loop {
        let (low, _) = split_low_nonintegrable(&h);
        let worst = low.iter().map(|(_, c)| c.value.norm()).fold(0.0, f64::max);
        if worst <= opts.tol {
            break;
        }
        if sweeps == opts.max_sweeps {
            return Err(NlwError::Convergence { sweeps, residual: worst });
        }
        sweeps += 1;
        let freqs = FrequencyCoeffs::read(&h);
        let mut gen = h.empty_like();
        for (k, c) in low.iter() {
            match homological_solve(k, c, &freqs, gate, GateKind::Order2) {
                Ok(f) => {
                    gen.add_term(k.clone(), f);
                }
                Err(NlwError::ResonantTerm { key, divisor, threshold }) => {
                    return Err(NlwError::Order2Resonance { key, divisor, threshold });
                }
                Err(e) => return Err(e),
            }
        }
        let (next, rep) = lie_series(&h, &gen, 1.0, SeriesOptions::default())?;
        truncation.absorb(rep.truncation);
        let label = format!("order2-{sweeps}");
        for (k, c) in low.iter() {
            residuals.push(ResidualRow {
                stage: label.clone(),
                monomial: k.to_string(),
                before: c.value.norm(),
                residual: next.value(k).norm(),
            });
        }
        h = next;
        chain.push(label, gen, 1.0);
    }
    let freqs = FrequencyCoeffs::read(&h);
    let mut freq = freq.clone();
    freqs.store(&mut freq);
    let (n_breve, rest) = h.partition(|k, _| k.degree() <= 2 && k.is_integrable());
    let (low_residual, remainder) = split_low_nonintegrable(&rest);
    let empty = n_breve.empty_like();
    Ok(NormalFormResult {
        n_breve,
        z: empty.clone(),
        p: empty.clone(),
        q: empty.clone(),
        remainder,
        low_residual,
        resonant: empty,
        chain,
        freq,
        residuals,
        resonances: Vec::new(),
        truncation,
        sweeps,
        order: None,
        n_split: gate.n_split,
    })
}

/// Partial normal form of order `M + 2` on top of an order-2 result.
///
/// For `d = 3..=M+2` the non-integrable degree-`d` terms with at most two high
/// modes are removed by one Lie transform each. Terms with three or more high
/// modes are moved to `Q` and terms of degree `>= M+3` to `P` as soon as they
/// appear; neither is transformed afterwards.
pub fn partial_normal_form(order2: &NormalFormResult, m: u32, gate: &DivisorGate) -> Result<NormalFormResult> {
    let caps = order2.n_breve.caps();
    if m + 2 > caps.degree {
        return Err(NlwError::Cap(format!("order M+2 = {} exceeds the degree cap {}", m + 2, caps.degree)));
    }
    if gate.n_split > order2.n_breve.j() {
        return Err(NlwError::Config {
            path: "normal_form.n_split".into(),
            msg: format!("N = {} exceeds J = {}", gate.n_split, order2.n_breve.j()),
        });
    }
    let mut h = order2.n_breve.clone();
    h.add_assign(&order2.remainder);
    let mut q = h.empty_like();
    let mut p = h.empty_like();
    let mut resonant = h.empty_like();
    let mut chain = order2.chain.clone();
    let mut residuals = order2.residuals.clone();
    let mut resonances = Vec::new();
    let mut truncation = order2.truncation;
    let freqs = FrequencyCoeffs::read(&order2.n_breve);

    let sweep_out = |h: PolyHamiltonian, p: &mut PolyHamiltonian, q: &mut PolyHamiltonian| -> PolyHamiltonian {
        let (to_q, rest) = h.partition(|k, _| gate.high_count(k) >= 3);
        q.add_assign(&to_q);
        let (to_p, rest) = rest.partition(|k, _| k.degree() >= m + 3);
        p.add_assign(&to_p);
        rest
    };
    h = sweep_out(h, &mut p, &mut q);

    for d in 3..=m + 2 {
        let label = format!("degree-{d}");
        let (solve, rest) = h.partition(|k, _| k.degree() == d && !k.is_integrable());
        h = rest;
        let mut gen = h.empty_like();
        let mut solved = Vec::new();
        for (k, c) in solve.iter() {
            match homological_solve(k, c, &freqs, gate, GateKind::Partial) {
                Ok(f) => {
                    gen.add_term(k.clone(), f);
                    solved.push((k.clone(), c.value.norm()));
                }
                Err(NlwError::ResonantTerm { key, divisor, threshold }) => {
                    resonant.add_term(k.clone(), c.clone());
                    resonances.push(ResonanceHit { stage: label.clone(), monomial: key, divisor, threshold });
                }
                Err(e) => return Err(e),
            }
        }
        // put the solved terms back; the transform cancels them against N
        h.add_assign(&solve.filter(|k, _| gen.coeff(k).is_some()));
        let (next, rep) = lie_transform(&h, &gen, 1.0)?;
        truncation.absorb(rep.truncation);
        for (k, before) in solved {
            residuals.push(ResidualRow {
                stage: label.clone(),
                monomial: k.to_string(),
                before,
                residual: next.value(&k).norm(),
            });
        }
        h = sweep_out(next, &mut p, &mut q);
        chain.push(label, gen, 1.0);
    }

    let (n_breve, rest) = h.partition(|k, _| k.degree() <= 2 && k.is_integrable());
    let (z, rest) = rest.partition(|k, _| k.is_integrable() && (4..=m + 2).contains(&k.degree()));
    let (low_residual, remainder) = split_low_nonintegrable(&rest);
    let mut low = order2.low_residual.clone();
    low.add_assign(&low_residual);
    let mut freq = order2.freq.clone();
    FrequencyCoeffs::read(&n_breve).store(&mut freq);
    p.canonicalize();
    q.canonicalize();
    Ok(NormalFormResult {
        n_breve,
        z,
        p,
        q,
        remainder,
        low_residual: low,
        resonant,
        chain,
        freq,
        residuals,
        resonances,
        truncation,
        sweeps: order2.sweeps,
        order: Some(m),
        n_split: gate.n_split,
    })
}

/// Builds and lifts the model at `xi` and runs [`order2_step`] on it.
pub fn order2_for_model(cfg: &ModelConfig, xi: &ParameterPoint, gate: &DivisorGate, caps: Caps, opts: Order2Options) -> Result<NormalFormResult> {
    let mh = lift_model(cfg, xi, caps, false)?;
    order2_step(&mh.h, &mh.freq, gate, opts)
}

/// Settings of the full pipeline on the model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineOptions {
    /// Order parameter `M`.
    pub m_order: u32,
    /// Weighted degree cap, default `M + 3`.
    pub degree_cap: Option<u32>,
    /// Fourier cap, default twice the degree cap.
    pub fourier_cap: Option<u32>,
    /// Absolute coefficient floor used during the transforms.
    pub floor: f64,
    pub order2: Order2Options,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        Self { m_order: 1, degree_cap: None, fourier_cap: None, floor: 1e-15, order2: Order2Options::default() }
    }
}

impl PipelineOptions {
    pub fn caps(&self) -> Caps {
        let d = self.degree_cap.unwrap_or(self.m_order + 3);
        Caps::new(d, self.fourier_cap.unwrap_or(2 * d)).with_floor(self.floor)
    }
}

/// Lift, order-2 step and partial normal form of order `M + 2` at `xi`.
pub fn normal_form_for_model(cfg: &ModelConfig, xi: &ParameterPoint, gate: &DivisorGate, opts: &PipelineOptions) -> Result<NormalFormResult> {
    let o2 = order2_for_model(cfg, xi, gate, opts.caps(), opts.order2)?;
    partial_normal_form(&o2, opts.m_order, gate)
}

/// Smallest `N` with `N + 1 >= delta^{-(M+1)/(p-1)}`.
pub fn select_cutoff(delta: f64, m: u32, p: f64) -> usize {
    let x = delta.powf(-((m + 1) as f64) / (p - 1.0));
    // guard against x landing a rounding error above an integer
    let n1 = (x * (1.0 - 1e-12)).ceil().max(1.0);
    n1 as usize - 1
}

/// Coefficient of a monomial as a plain complex number (zero when absent).
pub fn coefficient(h: &PolyHamiltonian, key: &MonomialKey) -> Complex64 {
    h.value(key)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::eigen_frequencies;

    fn c(v: f64) -> Complex64 {
        Complex64::new(v, 0.0)
    }

    fn gate(n_split: usize) -> DivisorGate {
        DivisorGate { eta: 1e-3, eta_tilde: 1e-3, tau: 8.0, m: 1, n_split }
    }

    fn integrable_base(j: usize, caps: Caps) -> (PolyHamiltonian, FrequencyData) {
        let f = eigen_frequencies(1.0, &ParameterPoint::midpoint(j + 2), 2, j).unwrap();
        let mut h = PolyHamiltonian::new(2, j, caps);
        for s in 0..2 {
            let mut a = [0u32; 2];
            a[s] = 1;
            h.add_value(MonomialKey::new(&[0, 0], &a, &vec![0; j], &vec![0; j]), c(f.omega[s]));
        }
        for mm in 0..j {
            let mut e = vec![0u32; j];
            e[mm] = 1;
            h.add_value(MonomialKey::new(&[0, 0], &[0, 0], &e, &e), c(f.big_omega[mm]));
        }
        (h, f)
    }

    #[test]
    fn select_cutoff_examples() {
        assert_eq!(select_cutoff(0.01, 1, 3.0), 99);
        assert_eq!(select_cutoff(0.1, 1, 21.0), 1);
    }

    #[test]
    fn order2_identity_when_no_perturbation() {
        let (h, f) = integrable_base(3, Caps::new(5, 4));
        let r = order2_step(&h, &f, &gate(2), Order2Options::default()).unwrap();
        assert!(r.chain.is_empty());
        assert_eq!(r.freq.omega_corr, f.omega);
        assert_eq!(r.freq.big_omega_corr, f.big_omega);
    }

    #[test]
    fn order2_removes_planted_term_in_one_sweep() {
        let (mut h, f) = integrable_base(3, Caps::new(5, 4));
        let k = MonomialKey::new(&[0, 0], &[0, 0], &[1, 0, 0], &[0, 1, 0]);
        h.add_value(k.clone(), c(1e-5));
        h.add_value(k.conjugate(), c(1e-5));
        let r = order2_step(&h, &f, &gate(2), Order2Options::default()).unwrap();
        assert_eq!(r.chain.len(), 1);
        assert!(r.total().value(&k).norm() < 1e-12);
    }

    #[test]
    fn partial_classifies_high_cubic_into_q() {
        let (mut h, f) = integrable_base(4, Caps::new(4, 4));
        // three high modes (N = 1): q_2 q_3 qbar_4 and its conjugate
        let k = MonomialKey::new(&[0, 0], &[0, 0], &[0, 1, 1, 0], &[0, 0, 0, 1]);
        h.add_value(k.clone(), c(0.01));
        h.add_value(k.conjugate(), c(0.01));
        let o2 = order2_step(&h, &f, &gate(1), Order2Options::default()).unwrap();
        let r = partial_normal_form(&o2, 1, &gate(1)).unwrap();
        assert_eq!(r.q.len(), 2);
        assert!(r.z.is_empty());
        assert_eq!(r.chain.len(), 1);
        assert!(r.chain.entries[0].generator.is_empty());
        r.check_classification().unwrap();
    }

    #[test]
    fn partial_removes_planted_cubic() {
        let (mut h, f) = integrable_base(3, Caps::new(5, 4));
        // y_1 q_1 e^{i x_2}
        let k = MonomialKey::new(&[0, 1], &[1, 0], &[1, 0, 0], &[0, 0, 0]);
        h.add_value(k.clone(), c(0.02));
        h.add_value(k.conjugate(), c(0.02));
        let o2 = order2_step(&h, &f, &gate(2), Order2Options::default()).unwrap();
        let r = partial_normal_form(&o2, 1, &gate(2)).unwrap();
        assert!(r.total().value(&k).norm() <= 1e-10);
        r.check_classification().unwrap();
        assert!(r.nonresonant());
    }

    #[test]
    fn partial_rejects_order_above_cap() {
        let (h, f) = integrable_base(2, Caps::new(4, 4));
        let o2 = order2_step(&h, &f, &gate(1), Order2Options::default()).unwrap();
        assert!(matches!(partial_normal_form(&o2, 3, &gate(1)), Err(NlwError::Cap(_))));
    }
}
