use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use super::{Coeff, MonomialKey, PolyError, PolyHamiltonian, SparseExps};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// A point `(x, y, q, qbar)`; entries are complex so that complex neighbourhoods can be probed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint {
    pub x: Vec<Complex64>,
    pub y: Vec<Complex64>,
    pub q: Vec<Complex64>,
    pub qbar: Vec<Complex64>,
}

impl PhasePoint {
    pub fn zeros(n: usize, j: usize) -> Self {
        Self { x: vec![ZERO; n], y: vec![ZERO; n], q: vec![ZERO; j], qbar: vec![ZERO; j] }
    }

    /// Real point: real angles and actions, `qbar = conj(q)`.
    pub fn real(x: &[f64], y: &[f64], q: &[Complex64]) -> Self {
        Self {
            x: x.iter().map(|&v| Complex64::new(v, 0.0)).collect(),
            y: y.iter().map(|&v| Complex64::new(v, 0.0)).collect(),
            q: q.to_vec(),
            qbar: q.iter().map(|v| v.conj()).collect(),
        }
    }

    pub fn n(&self) -> usize {
        self.x.len()
    }

    pub fn j(&self) -> usize {
        self.q.len()
    }

    pub fn check_dims(&self, n: usize, j: usize) -> Result<(), PolyError> {
        if self.x.len() != n || self.y.len() != n || self.q.len() != j || self.qbar.len() != j {
            return Err(PolyError::Dimension {
                expected: format!("n={n}, J={j}"),
                got: format!("x={}, y={}, q={}, qbar={}", self.x.len(), self.y.len(), self.q.len(), self.qbar.len()),
            });
        }
        Ok(())
    }

    /// Flat state `[x, y, q, qbar]`.
    pub fn to_flat(&self) -> Vec<Complex64> {
        let mut v = Vec::with_capacity(2 * self.n() + 2 * self.j());
        v.extend_from_slice(&self.x);
        v.extend_from_slice(&self.y);
        v.extend_from_slice(&self.q);
        v.extend_from_slice(&self.qbar);
        v
    }

    pub fn from_flat(n: usize, j: usize, v: &[Complex64]) -> Self {
        assert_eq!(v.len(), 2 * n + 2 * j, "flat state length");
        Self {
            x: v[..n].to_vec(),
            y: v[n..2 * n].to_vec(),
            q: v[2 * n..2 * n + j].to_vec(),
            qbar: v[2 * n + j..].to_vec(),
        }
    }
}

fn monomial_value(key: &MonomialKey, w: &PhasePoint) -> Complex64 {
    let mut phase = ZERO;
    for (s, &kj) in key.k().iter().enumerate() {
        if kj != 0 {
            phase += w.x[s] * kj as f64;
        }
    }
    let mut v = if phase == ZERO { ONE } else { (Complex64::new(0.0, 1.0) * phase).exp() };
    for (s, &a) in key.alpha().iter().enumerate() {
        if a != 0 {
            v *= w.y[s].powu(a as u32);
        }
    }
    for &(m, p) in key.beta() {
        v *= w.q[m as usize].powu(p as u32);
    }
    for &(m, p) in key.gamma() {
        v *= w.qbar[m as usize].powu(p as u32);
    }
    v
}

pub(super) fn evaluate_terms<'a>(terms: impl Iterator<Item = (&'a MonomialKey, &'a Coeff)>, w: &PhasePoint) -> Complex64 {
    terms.map(|(k, c)| c.value * monomial_value(k, w)).sum()
}

#[derive(Clone, Debug)]
struct CTerm {
    out: u32,
    c: Complex64,
    k: SmallVec<[(u16, i16); 4]>,
    a: SmallVec<[(u16, u8); 4]>,
    b: SparseExps,
    g: SparseExps,
}

/// Flattened multi-output polynomial for repeated evaluation with cached powers.
#[derive(Clone, Debug)]
pub struct CompiledPoly {
    n: usize,
    j: usize,
    outputs: usize,
    terms: Vec<CTerm>,
    max_k: Vec<i16>,
    max_a: Vec<u8>,
    max_b: Vec<u8>,
    max_g: Vec<u8>,
}

impl CompiledPoly {
    pub fn new<'a>(n: usize, j: usize, polys: impl IntoIterator<Item = &'a PolyHamiltonian>) -> Self {
        let mut me = Self {
            n,
            j,
            outputs: 0,
            terms: Vec::new(),
            max_k: vec![0; n],
            max_a: vec![0; n],
            max_b: vec![0; j],
            max_g: vec![0; j],
        };
        for (out, p) in polys.into_iter().enumerate() {
            assert_eq!((p.n(), p.j()), (n, j), "dimension mismatch in compile");
            me.outputs = out + 1;
            for (key, c) in p.iter() {
                let k: SmallVec<[(u16, i16); 4]> =
                    key.k().iter().enumerate().filter(|(_, &v)| v != 0).map(|(s, &v)| (s as u16, v)).collect();
                let a: SmallVec<[(u16, u8); 4]> =
                    key.alpha().iter().enumerate().filter(|(_, &v)| v != 0).map(|(s, &v)| (s as u16, v)).collect();
                for &(s, v) in &k {
                    me.max_k[s as usize] = me.max_k[s as usize].max(v.abs());
                }
                for &(s, v) in &a {
                    me.max_a[s as usize] = me.max_a[s as usize].max(v);
                }
                for &(m, p) in key.beta() {
                    me.max_b[m as usize] = me.max_b[m as usize].max(p);
                }
                for &(m, p) in key.gamma() {
                    me.max_g[m as usize] = me.max_g[m as usize].max(p);
                }
                me.terms.push(CTerm { out: out as u32, c: c.value, k, a, b: key.beta().clone(), g: key.gamma().clone() });
            }
        }
        me
    }

    pub fn outputs(&self) -> usize {
        self.outputs
    }

    pub fn n_terms(&self) -> usize {
        self.terms.len()
    }

    fn powers(base: Complex64, max: usize) -> Vec<Complex64> {
        let mut v = Vec::with_capacity(max + 1);
        v.push(ONE);
        for i in 1..=max {
            v.push(v[i - 1] * base);
        }
        v
    }

    /// Writes every output at `w` into `out` (overwriting).
    pub fn eval_into(&self, w: &PhasePoint, out: &mut [Complex64]) {
        debug_assert!(w.check_dims(self.n, self.j).is_ok());
        assert!(out.len() >= self.outputs);
        let eix: Vec<(Vec<Complex64>, Vec<Complex64>)> = (0..self.n)
            .map(|s| {
                let m = self.max_k[s] as usize;
                let e = (Complex64::new(0.0, 1.0) * w.x[s]).exp();
                (Self::powers(e, m), Self::powers(e.inv(), m))
            })
            .collect();
        let yp: Vec<_> = (0..self.n).map(|s| Self::powers(w.y[s], self.max_a[s] as usize)).collect();
        let qp: Vec<_> = (0..self.j).map(|m| Self::powers(w.q[m], self.max_b[m] as usize)).collect();
        let gp: Vec<_> = (0..self.j).map(|m| Self::powers(w.qbar[m], self.max_g[m] as usize)).collect();
        for o in out.iter_mut().take(self.outputs) {
            *o = ZERO;
        }
        for t in &self.terms {
            let mut v = t.c;
            for &(s, kv) in &t.k {
                let (pos, neg) = &eix[s as usize];
                v *= if kv > 0 { pos[kv as usize] } else { neg[(-kv) as usize] };
            }
            for &(s, p) in &t.a {
                v *= yp[s as usize][p as usize];
            }
            for &(m, p) in &t.b {
                v *= qp[m as usize][p as usize];
            }
            for &(m, p) in &t.g {
                v *= gp[m as usize][p as usize];
            }
            out[t.out as usize] += v;
        }
    }

    pub fn eval(&self, w: &PhasePoint) -> Vec<Complex64> {
        let mut out = vec![ZERO; self.outputs];
        self.eval_into(w, &mut out);
        out
    }
}

/// Hamiltonian vector field `(H_y, -H_x, i H_qbar, -i H_q)` stored per coordinate.
#[derive(Clone, Debug)]
pub struct VectorField {
    n: usize,
    j: usize,
    components: Vec<PolyHamiltonian>,
}

impl VectorField {
    pub fn of(h: &PolyHamiltonian) -> Self {
        let (n, j) = (h.n(), h.j());
        let i = Complex64::new(0.0, 1.0);
        let mut components = Vec::with_capacity(2 * n + 2 * j);
        for s in 0..n {
            components.push(h.d_y(s));
        }
        for s in 0..n {
            components.push(h.d_x(s).scaled(-ONE));
        }
        for m in 0..j {
            components.push(h.d_qbar(m).scaled(i));
        }
        for m in 0..j {
            components.push(h.d_q(m).scaled(-i));
        }
        Self { n, j, components }
    }

    /// Component polynomials in the order `[x, y, q, qbar]`.
    pub fn components(&self) -> &[PolyHamiltonian] {
        &self.components
    }

    pub fn compile(&self) -> CompiledPoly {
        CompiledPoly::new(self.n, self.j, &self.components)
    }

    pub fn eval(&self, w: &PhasePoint) -> Result<PhasePoint, PolyError> {
        w.check_dims(self.n, self.j)?;
        let flat = self.compile().eval(w);
        Ok(PhasePoint::from_flat(self.n, self.j, &flat))
    }
}

#[cfg(test)]
mod tests {
    use super::super::Caps;
    use super::*;

    #[test]
    fn compiled_matches_direct() {
        let mut p = PolyHamiltonian::new(2, 3, Caps::new(8, 6));
        p.add_value(MonomialKey::new(&[1, -2], &[1, 0], &[1, 0, 0], &[0, 0, 1]), Complex64::new(0.3, 0.1));
        p.add_value(MonomialKey::new(&[0, 1], &[0, 2], &[0, 2, 0], &[0, 0, 0]), Complex64::new(-1.2, 0.0));
        p.add_value(MonomialKey::one(2), Complex64::new(0.5, 0.0));
        let w = PhasePoint {
            x: vec![Complex64::new(0.3, 0.05), Complex64::new(-1.1, 0.0)],
            y: vec![Complex64::new(0.2, 0.0), Complex64::new(0.1, -0.03)],
            q: vec![Complex64::new(0.1, 0.2), Complex64::new(-0.3, 0.1), Complex64::new(0.05, 0.0)],
            qbar: vec![Complex64::new(0.4, 0.0), Complex64::new(0.2, 0.2), Complex64::new(-0.1, 0.3)],
        };
        let direct = p.evaluate(&w).unwrap();
        let compiled = CompiledPoly::new(2, 3, [&p]).eval(&w)[0];
        assert!((direct - compiled).norm() < 1e-15);
    }

    #[test]
    fn vector_field_of_harmonic_oscillator() {
        let mut h = PolyHamiltonian::new(1, 1, Caps::new(4, 2));
        h.add_value(MonomialKey::new(&[0], &[1], &[0], &[0]), Complex64::new(2.0, 0.0));
        h.add_value(MonomialKey::new(&[0], &[0], &[1], &[1]), Complex64::new(3.0, 0.0));
        let w = PhasePoint::real(&[0.1], &[0.0], &[Complex64::new(0.5, 0.0)]);
        let f = h.vector_field().eval(&w).unwrap();
        assert!((f.x[0] - Complex64::new(2.0, 0.0)).norm() < 1e-15);
        assert!(f.y[0].norm() < 1e-15);
        assert!((f.q[0] - Complex64::new(0.0, 1.5)).norm() < 1e-15);
        assert!((f.qbar[0] - Complex64::new(0.0, -1.5)).norm() < 1e-15);
    }
}
