//! Norms of truncated Hamiltonians and their vector fields at finite truncation.
//!
//! Operator norms of the non-negative multilinear maps are reported as a
//! certified upper bound (Hilbert-Schmidt bound per input block pattern) and a
//! probed lower bound (best attained ratio). The tame norm itself is assembled
//! from the upper bounds.

mod tensor;

use std::collections::BTreeMap;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::poly::{Coeff, CompiledPoly, MonomialKey, PhasePoint, PolyHamiltonian, SparseExps};
pub use tensor::{Elem, FormTerm, MultiForm, OutputNorm, OutputTensor};

/// `sum_k (|c_k| + |d_xi_j c_k|) e^{|k| s}` maximised over active directions `j`.
fn fourier_sum<'a>(terms: impl Iterator<Item = (u32, &'a Coeff)>, s: f64) -> f64 {
    let mut base = 0.0;
    let mut per_dir: Vec<f64> = Vec::new();
    for (kn, c) in terms {
        let w = (kn as f64 * s).exp();
        base += c.value.norm() * w;
        if per_dir.len() < c.grad.len() {
            per_dir.resize(c.grad.len(), 0.0);
        }
        for (acc, g) in per_dir.iter_mut().zip(&c.grad) {
            *acc += g.norm() * w;
        }
    }
    base + per_dir.into_iter().fold(0.0, f64::max)
}

/// Norm of a function of the angles alone (`y`, `z` exponents are ignored).
pub fn angle_norm(w: &PolyHamiltonian, s: f64) -> f64 {
    debug_assert!(w.iter().all(|(k, _)| k.degree() == 0), "angle_norm expects an x-only function");
    fourier_sum(w.iter().map(|(k, c)| (k.fourier_norm(), c)), s)
}

type ZPart = (SparseExps, SparseExps);

/// `sum_alpha ||W^alpha||_s r^{2|alpha|}` per z-monomial. For a non-negative
/// coefficient the symmetric multilinear map attains its sup-norm operator
/// norm at the all-ones vector, where it equals the coefficient.
fn modulus_map(w: &PolyHamiltonian, s: f64, r: f64) -> BTreeMap<ZPart, f64> {
    let mut groups: BTreeMap<(ZPart, SmallVec<[u8; 4]>), Vec<(u32, &Coeff)>> = BTreeMap::new();
    for (k, c) in w.iter() {
        groups
            .entry(((k.beta().clone(), k.gamma().clone()), k.alpha().iter().copied().collect()))
            .or_default()
            .push((k.fourier_norm(), c));
    }
    let mut out: BTreeMap<ZPart, f64> = BTreeMap::new();
    for ((z, alpha), terms) in groups {
        let a: u32 = alpha.iter().map(|&v| v as u32).sum();
        *out.entry(z).or_default() += fourier_sum(terms.into_iter(), s) * r.powi(2 * a as i32);
    }
    out
}

/// Norm of a function of `(x, y)`; `z` exponents must be absent.
pub fn action_norm(w: &PolyHamiltonian, s: f64, r: f64) -> f64 {
    debug_assert!(w.iter().all(|(k, _)| k.z_degree() == 0), "action_norm expects a function of (x, y)");
    modulus_map(w, s, r).values().sum()
}

/// Non-negative z-polynomial whose coefficients are the `(x, y)` norms of `W`'s coefficient functions.
pub fn modulus(w: &PolyHamiltonian, s: f64, r: f64) -> PolyHamiltonian {
    let mut out = PolyHamiltonian::new(w.n(), w.j(), w.caps());
    let zeros: SmallVec<[i16; 4]> = SmallVec::from_elem(0, w.n());
    let zeros_a: SmallVec<[u8; 4]> = SmallVec::from_elem(0, w.n());
    for ((b, g), v) in modulus_map(w, s, r) {
        let key = MonomialKey::from_sparse(zeros.clone(), zeros_a.clone(), b, g);
        out.add_value(key, Complex64::new(v, 0.0));
    }
    out
}

/// `sup_i |w_i| i` with 1-based `i`.
pub fn norm_minus1(w: &[f64]) -> f64 {
    w.iter().enumerate().map(|(i, v)| v.abs() * (i + 1) as f64).fold(0.0, f64::max)
}

/// `sqrt(sum |v_j|^2 j^{2p})` over 1-based indices.
pub fn weighted_l2(v: &[Complex64], p: f64) -> f64 {
    v.iter().enumerate().map(|(i, x)| x.norm_sqr() * ((i + 1) as f64).powf(2.0 * p)).sum::<f64>().sqrt()
}

/// Upper bound together with the best attained lower bound.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Bound {
    pub upper: f64,
    pub probe: f64,
}

impl Bound {

    fn scaled(self, f: f64) -> Self {
        Self { upper: self.upper * f, probe: self.probe * f }
    }

    fn add(self, o: Self) -> Self {
        Self { upper: self.upper + o.upper, probe: self.probe + o.probe }
    }

    fn max(self, o: Self) -> Self {
        Self { upper: self.upper.max(o.upper), probe: self.probe.max(o.probe) }
    }
}

/// Operator norms of one z-homogeneous layer `W_h`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerNorms {
    pub h: u32,
    pub w_y: Bound,
    pub w_x: Bound,
    pub z_tame: Bound,
    pub z_one: Bound,
    /// `|||W_y||| r^h + r^-2 |||W_x||| r^h + r^-1 max(tame, one) r^{h-1}`.
    pub total: Bound,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormReport {
    pub p: f64,
    pub s: f64,
    pub r: f64,
    pub layers: Vec<LayerNorms>,
    /// Sum over layers of the scaled `W_y` parts.
    pub w_y: Bound,
    pub w_x: Bound,
    pub w_z: Bound,
    /// The tame norm of the vector field; `upper` is certified, `probe` is attained.
    pub tame: Bound,
    /// Sampled weighted norm, a lower estimate of the true supremum.
    pub weighted: Option<f64>,
    pub weighted_samples: usize,
    pub upper_is_certified: bool,
}

/// Options for the probed lower bounds.
#[derive(Clone, Copy, Debug)]
pub struct ProbeOptions {
    pub trials: usize,
    pub iterations: usize,
}

impl Default for ProbeOptions {
    fn default() -> Self {
        Self { trials: 4, iterations: 40 }
    }
}

fn elems_of(b: &SparseExps, g: &SparseExps) -> SmallVec<[Elem; 6]> {
    let mut e: SmallVec<[Elem; 6]> = SmallVec::new();
    for &(m, p) in b {
        for _ in 0..p {
            e.push((0, m as u32 + 1));
        }
    }
    for &(m, p) in g {
        for _ in 0..p {
            e.push((1, m as u32 + 1));
        }
    }
    e.sort();
    e
}

fn form_terms(m: &BTreeMap<ZPart, f64>) -> Vec<FormTerm> {
    m.iter().filter(|(_, &v)| v > 0.0).map(|((b, g), &v)| FormTerm { elems: elems_of(b, g), coef: v }).collect()
}

/// Norm of the `h`-linear map `z -> W_v` with sup-norm over sites.
fn site_form(layer: &PolyHamiltonian, h: u32, s: f64, r: f64, deriv: impl Fn(&PolyHamiltonian, usize) -> PolyHamiltonian) -> MultiForm {
    let outputs = (0..layer.n())
        .map(|site| OutputTensor { group: site, weight: 1.0, terms: form_terms(&modulus_map(&deriv(layer, site), s, r)) })
        .collect();
    MultiForm { degree: h as usize, outputs, norm: OutputNorm::Max, p1: 1.0 }
}

/// Norm of `z -> J W_z` into `l2_{w_out}` of `(q, qbar)`.
fn z_form(layer: &PolyHamiltonian, h: u32, s: f64, r: f64, out_exp: f64, p1: f64) -> MultiForm {
    let mut outputs = Vec::new();
    for m in 0..layer.j() {
        let weight = ((m + 1) as f64).powf(out_exp);
        // J W_z = (W_qbar, -W_q); signs disappear in the modulus
        let dq = modulus_map(&layer.d_qbar(m), s, r);
        if !dq.is_empty() {
            outputs.push(OutputTensor { group: 0, weight, terms: form_terms(&dq) });
        }
        let dqb = modulus_map(&layer.d_q(m), s, r);
        if !dqb.is_empty() {
            outputs.push(OutputTensor { group: 1, weight, terms: form_terms(&dqb) });
        }
    }
    MultiForm { degree: h.saturating_sub(1) as usize, outputs, norm: OutputNorm::SumOfGroups, p1 }
}

fn bound_of<R: Rng>(form: &MultiForm, rng: &mut R, opts: ProbeOptions) -> Bound {
    if form.outputs.iter().all(|o| o.terms.is_empty()) {
        return Bound::default();
    }
    let upper = form.upper_bound();
    let probe = form.probe(rng, opts.trials, opts.iterations).min(upper);
    Bound { upper, probe }
}

/// Operator norms of the `W_z` part of a layer homogeneous of z-degree `h`.
pub fn tame_z_norm<R: Rng>(layer: &PolyHamiltonian, h: u32, p: f64, s: f64, r: f64, rng: &mut R) -> Bound {
    if h == 0 || layer.is_empty() {
        return Bound::default();
    }
    bound_of(&z_form(layer, h, s, r, p + 1.0, p), rng, ProbeOptions::default())
}

/// The tame norm of `X_W`, layer by layer.
pub fn tame_vecfield_norm<R: Rng>(w: &PolyHamiltonian, p: f64, s: f64, r: f64, rng: &mut R, opts: ProbeOptions) -> NormReport {
    let mut by_h: BTreeMap<u32, PolyHamiltonian> = BTreeMap::new();
    for (k, c) in w.iter() {
        by_h.entry(k.z_degree()).or_insert_with(|| w.empty_like()).set_term(k.clone(), c.clone());
    }
    let mut layers = Vec::new();
    let (mut wy, mut wx, mut wz, mut tame) = (Bound::default(), Bound::default(), Bound::default(), Bound::default());
    for (h, layer) in by_h {
        let y = bound_of(&site_form(&layer, h, s, r, |p, i| p.d_y(i)), rng, opts);
        let x = bound_of(&site_form(&layer, h, s, r, |p, i| p.d_x(i)), rng, opts);
        let (zt, z1) = if h == 0 {
            (Bound::default(), Bound::default())
        } else {
            (
                bound_of(&z_form(&layer, h, s, r, p + 1.0, p), rng, opts),
                bound_of(&z_form(&layer, h, s, r, 1.0, 1.0), rng, opts),
            )
        };
        let rh = r.powi(h as i32);
        let y_part = y.scaled(rh);
        let x_part = x.scaled(rh / (r * r));
        let z_part = if h == 0 { Bound::default() } else { zt.max(z1).scaled(r.powi(h as i32 - 1) / r) };
        let total = y_part.add(x_part).add(z_part);
        wy = wy.add(y_part);
        wx = wx.add(x_part);
        wz = wz.add(z_part);
        tame = tame.add(total);
        layers.push(LayerNorms { h, w_y: y, w_x: x, z_tame: zt, z_one: z1, total });
    }
    NormReport {
        p,
        s,
        r,
        layers,
        w_y: wy,
        w_x: wx,
        w_z: wz,
        tame,
        weighted: None,
        weighted_samples: 0,
        upper_is_certified: true,
    }
}

fn random_point<R: Rng>(rng: &mut R, n: usize, j: usize, p: f64, s: f64, r: f64) -> PhasePoint {
    let inner = 0.999;
    let x = (0..n)
        .map(|_| Complex64::new(rng.gen_range(0.0..std::f64::consts::TAU), rng.gen_range(-s..s) * inner))
        .collect();
    let y = (0..n)
        .map(|_| Complex64::from_polar(r * r * inner * rng.gen::<f64>().sqrt(), rng.gen_range(0.0..std::f64::consts::TAU)))
        .collect();
    let mut dir = |_: usize| -> Vec<Complex64> {
        (0..j)
            .map(|m| {
                let scale = rng.gen::<f64>() / ((m + 1) as f64).powf(p + 0.5);
                Complex64::from_polar(scale, rng.gen_range(0.0..std::f64::consts::TAU))
            })
            .collect()
    };
    let mut q = dir(0);
    let mut qbar = dir(1);
    let norm = weighted_l2(&q, p) + weighted_l2(&qbar, p);
    let radius = if rng.gen_bool(0.5) { inner } else { rng.gen::<f64>() * inner };
    if norm > 0.0 {
        let f = r * radius / norm;
        q.iter_mut().for_each(|v| *v *= f);
        qbar.iter_mut().for_each(|v| *v *= f);
    }
    PhasePoint { x, y, q, qbar }
}

/// `sup (|U_y| + r^-2 |U_x| + r^-1 |U_z|_{p+1})` over `samples` random points of the
/// complex domain. The result is a lower estimate of the supremum.
pub fn weighted_vecfield_norm<R: Rng>(w: &PolyHamiltonian, p: f64, s: f64, r: f64, samples: usize, rng: &mut R) -> f64 {
    let (n, j) = (w.n(), w.j());
    if w.is_empty() {
        return 0.0;
    }
    let mut comps = Vec::with_capacity(2 * n + 2 * j);
    for i in 0..n {
        comps.push(w.d_y(i));
    }
    for i in 0..n {
        comps.push(w.d_x(i));
    }
    for m in 0..j {
        comps.push(w.d_q(m));
    }
    for m in 0..j {
        comps.push(w.d_qbar(m));
    }
    let compiled = CompiledPoly::new(n, j, &comps);
    let mut out = vec![Complex64::new(0.0, 0.0); comps.len()];
    let mut best: f64 = 0.0;
    for _ in 0..samples.max(1) {
        let pt = random_point(rng, n, j, p, s, r);
        compiled.eval_into(&pt, &mut out);
        let uy = out[..n].iter().map(|v| v.norm()).fold(0.0, f64::max);
        let ux = out[n..2 * n].iter().map(|v| v.norm()).fold(0.0, f64::max);
        let uz = weighted_l2(&out[2 * n..2 * n + j], p + 1.0) + weighted_l2(&out[2 * n + j..], p + 1.0);
        best = best.max(uy + ux / (r * r) + uz / r);
    }
    best
}

/// Tame norm report with the sampled weighted norm attached.
pub fn norm_report<R: Rng>(w: &PolyHamiltonian, p: f64, s: f64, r: f64, samples: usize, rng: &mut R) -> NormReport {
    let mut rep = tame_vecfield_norm(w, p, s, r, rng, ProbeOptions::default());
    if samples > 0 {
        rep.weighted = Some(weighted_vecfield_norm(w, p, s, r, samples, rng));
        rep.weighted_samples = samples;
    }
    rep
}
