use num_complex::Complex64;
use rayon::prelude::*;
use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};

use super::{Caps, Coeff, MonomialKey, PolyError, PolyHamiltonian, TruncationReport};

type DerivList = Vec<(MonomialKey, Coeff)>;

/// First derivatives of every term, grouped by variable.
struct Derivatives {
    dx: Vec<DerivList>,
    dy: Vec<DerivList>,
    dq: Vec<DerivList>,
    dqb: Vec<DerivList>,
}

impl Derivatives {
    // Lists inherit the key order of the source, hence are sorted by degree.
    fn of(p: &PolyHamiltonian) -> Self {
        let mut dx = vec![Vec::new(); p.n()];
        let mut dy = vec![Vec::new(); p.n()];
        let mut dq = vec![Vec::new(); p.j()];
        let mut dqb = vec![Vec::new(); p.j()];
        for (key, c) in p.iter() {
            for (site, &kj) in key.k().iter().enumerate() {
                if kj != 0 {
                    dx[site].push((key.clone(), c.scaled(Complex64::new(0.0, kj as f64))));
                }
            }
            for site in 0..p.n() {
                if let Some((pw, low)) = key.d_action(site) {
                    dy[site].push((low, c.scaled(Complex64::new(pw as f64, 0.0))));
                }
            }
            for &(m, _) in key.beta() {
                let (pw, low) = key.d_q(m as usize).expect("mode present");
                dq[m as usize].push((low, c.scaled(Complex64::new(pw as f64, 0.0))));
            }
            for &(m, _) in key.gamma() {
                let (pw, low) = key.d_qbar(m as usize).expect("mode present");
                dqb[m as usize].push((low, c.scaled(Complex64::new(pw as f64, 0.0))));
            }
        }
        for list in dx.iter_mut().chain(dy.iter_mut()).chain(dq.iter_mut()).chain(dqb.iter_mut()) {
            list.sort_by_key(|(k, _)| k.degree());
        }
        Self { dx, dy, dq, dqb }
    }
}

fn product_sum(a: &DerivList, b: &DerivList, factor: Complex64, caps: Caps) -> (FxHashMap<MonomialKey, Coeff>, TruncationReport) {
    let mut acc: FxHashMap<MonomialKey, Coeff> = FxHashMap::default();
    let mut report = TruncationReport::default();
    if a.is_empty() || b.is_empty() {
        return (acc, report);
    }
    for (ka, ca) in a {
        let room = caps.degree as i64 - ka.degree() as i64;
        let limit = b.partition_point(|(k, _)| (k.degree() as i64) <= room);
        report.dropped_degree += b.len() - limit;
        for (kb, cb) in &b[..limit] {
            let key = ka.mul(kb);
            if key.fourier_norm() > caps.fourier {
                report.dropped_fourier += 1;
                continue;
            }
            let mut c = ca.mul(cb);
            c.scale_mut(factor);
            match acc.get_mut(&key) {
                Some(e) => e.add_assign(&c),
                None => {
                    acc.insert(key, c);
                }
            }
        }
    }
    (acc, report)
}

/// Poisson bracket `{u, v}` truncated at the caps of `u`.
///
/// The returned report counts individual product contributions dropped by
/// the degree cap and by the Fourier cap.
pub fn poisson_bracket(u: &PolyHamiltonian, v: &PolyHamiltonian) -> Result<(PolyHamiltonian, TruncationReport), PolyError> {
    if u.n() != v.n() || u.j() != v.j() || u.params() != v.params() {
        return Err(PolyError::Dimension {
            expected: format!("n={}, J={}, params={}", u.n(), u.j(), u.params()),
            got: format!("n={}, J={}, params={}", v.n(), v.j(), v.params()),
        });
    }
    let caps = u.caps();
    let du = Derivatives::of(u);
    let dv = Derivatives::of(v);
    let one = Complex64::new(1.0, 0.0);
    let i = Complex64::new(0.0, 1.0);
    let mut tasks: Vec<(&DerivList, &DerivList, Complex64)> = Vec::new();
    for s in 0..u.n() {
        tasks.push((&du.dx[s], &dv.dy[s], one));
        tasks.push((&du.dy[s], &dv.dx[s], -one));
    }
    for m in 0..u.j() {
        tasks.push((&du.dq[m], &dv.dqb[m], i));
        tasks.push((&du.dqb[m], &dv.dq[m], -i));
    }
    let parts: Vec<_> = tasks.par_iter().map(|&(a, b, f)| product_sum(a, b, f, caps)).collect();

    let mut out = u.empty_like();
    let mut report = TruncationReport::default();
    // Merge in task order so the floating point sums do not depend on scheduling.
    for (part, rep) in parts {
        report.absorb(rep);
        let mut entries: Vec<_> = part.into_iter().collect();
        entries.sort_by(|a, b| a.0.cmp(&b.0));
        for (k, c) in entries {
            out.add_term(k, c);
        }
    }
    report.dropped_small += out.canonicalize();
    Ok((out, report))
}

/// Summary of a Lie series evaluation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LieReport {
    /// Index of the last non-zero term `ad^j`.
    pub terms: usize,
    pub truncation: TruncationReport,
}

/// `v o flow_u^t = sum_j t^j/j! ad_u^j v` for a generator of minimal degree >= 3.
///
/// Each bracket raises the degree by at least one, so the series terminates
/// below the degree cap.
pub fn lie_transform(v: &PolyHamiltonian, u: &PolyHamiltonian, t: f64) -> Result<(PolyHamiltonian, LieReport), PolyError> {
    if let Some(d) = u.min_degree() {
        if d <= 2 {
            return Err(PolyError::NonNilpotentGenerator { min_degree: d });
        }
    }
    let mut out = v.clone();
    let mut report = LieReport::default();
    let mut term = v.clone();
    let mut j = 0usize;
    while !term.is_empty() && !u.is_empty() {
        j += 1;
        let (next, rep) = poisson_bracket(&term, u)?;
        report.truncation.absorb(rep);
        term = next.scaled(Complex64::new(t / j as f64, 0.0));
        if term.is_empty() {
            break;
        }
        out.add_assign(&term);
        report.terms = j;
    }
    report.truncation.dropped_small += out.canonicalize();
    Ok((out, report))
}

/// Tolerances for [`lie_series`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SeriesOptions {
    /// Stop once the latest term is below `tol` times the largest coefficient of `v`.
    pub tol: f64,
    pub max_order: usize,
}

impl Default for SeriesOptions {
    fn default() -> Self {
        Self { tol: 1e-17, max_order: 200 }
    }
}

/// Lie series for an arbitrary generator, summed until the terms are negligible.
pub fn lie_series(
    v: &PolyHamiltonian,
    u: &PolyHamiltonian,
    t: f64,
    opts: SeriesOptions,
) -> Result<(PolyHamiltonian, LieReport), PolyError> {
    let scale = v.max_magnitude().max(f64::MIN_POSITIVE);
    let mut out = v.clone();
    let mut report = LieReport::default();
    let mut term = v.clone();
    for j in 1..=opts.max_order {
        let (next, rep) = poisson_bracket(&term, u)?;
        report.truncation.absorb(rep);
        term = next.scaled(Complex64::new(t / j as f64, 0.0));
        if term.is_empty() {
            report.truncation.dropped_small += out.canonicalize();
            return Ok((out, report));
        }
        out.add_assign(&term);
        report.terms = j;
        if term.max_magnitude() <= opts.tol * scale {
            report.truncation.dropped_small += out.canonicalize();
            return Ok((out, report));
        }
    }
    Err(PolyError::NonConvergent { order: opts.max_order, residual: term.max_magnitude() })
}
