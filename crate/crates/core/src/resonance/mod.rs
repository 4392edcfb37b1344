//! Resonant sets of the partial normal form: query enumeration with the
//! analytic pruning rules, membership tests and Monte Carlo measure estimates
//! over the parameter box.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{NlwError, Result};
use crate::model::{eigen_frequencies, FrequencyData, ModelConfig, ParameterPoint};
use crate::normal_form::{order2_for_model, DivisorGate, Order2Options};
use crate::poly::Caps;
use crate::rng::indexed_stream;

/// Shape of the high-mode part `l_hat`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum QueryClass {
    L0,
    L1,
    L2Plus,
    L2Minus,
}

impl QueryClass {
    pub const ALL: [QueryClass; 4] = [QueryClass::L0, QueryClass::L1, QueryClass::L2Plus, QueryClass::L2Minus];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn label(self) -> &'static str {
        match self {
            QueryClass::L0 => "L0",
            QueryClass::L1 => "L1",
            QueryClass::L2Plus => "L2p",
            QueryClass::L2Minus => "L2m",
        }
    }
}

/// High-mode part of a query. Mode indices are absolute (tangential modes are `1..=n`).
///
/// Each query stands for itself and its negative, so only one orientation is
/// stored: `+e_j`, `e_i + e_j` with `i <= j`, and `e_i - e_j` with `i > j`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum HighPart {
    None,
    One(usize),
    Plus(usize, usize),
    Minus(usize, usize),
    /// `e_{j+m} - e_j` for every `j` in `j_lo..=j_hi`, tested through the
    /// reduced criterion with the exact `r_ij` bound.
    MinusTail { m: usize, j_lo: usize, j_hi: usize },
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ResonanceQuery {
    pub k: Vec<i32>,
    /// Low normal modes `1..=N`, dense.
    pub l_low: Vec<i32>,
    pub high: HighPart,
    pub class: QueryClass,
    /// `k = 0` and `l_low = 0` with a nonzero high part: the divisor is never small.
    pub analytically_empty: bool,
}

impl ResonanceQuery {
    pub fn k_norm(&self) -> u32 {
        self.k.iter().map(|v| v.unsigned_abs()).sum()
    }

    pub fn low_norm(&self) -> u32 {
        self.l_low.iter().map(|v| v.unsigned_abs()).sum()
    }

    /// Low part in the sparse form used by the divisor gate (0-based normal modes).
    pub fn low_sparse(&self) -> Vec<(u16, i32)> {
        self.l_low.iter().enumerate().filter(|(_, &v)| v != 0).map(|(i, &v)| (i as u16, v)).collect()
    }

    /// Partial-stage threshold for this query.
    pub fn threshold(&self, gate: &DivisorGate) -> f64 {
        gate.partial_threshold(self.k_norm(), &self.low_sparse())
    }
}

/// Limits for [`enumerate_queries`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QueryBounds {
    pub n: usize,
    pub k_max: u32,
    /// Normal form order parameter `M`.
    pub m_order: u32,
    /// Number of low normal modes `N`.
    pub n_split: usize,
    /// Bound on the tangential frequencies, `sup_j |omega_j|`.
    pub freq_bound: f64,
    /// Largest absolute mode index present in the truncation.
    pub high_max: usize,
    /// When set, `e_i - e_j` with `j >= j0` is folded into one reduced entry per `(k, l, m)`.
    pub tail: Option<TailReduction>,
}

/// Data fixing `j0 = eta_tilde^{-1/2} 4^M (|k|+1)^{tau/2} C(N, l)^{1/2}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailReduction {
    pub eta_tilde: f64,
    pub tau: f64,
}

impl QueryBounds {
    /// Pruning bound `|k| F + 2 (M+2)(n+N) + 1` on absolute high indices.
    ///
    /// Every low frequency is below `n+N+1` and every high frequency
    /// `Omega_a` exceeds `a`, so a query whose largest high index reaches this
    /// bound has a divisor of at least 1.
    pub fn prune_bound(&self, k_norm: u32) -> usize {
        let b = k_norm as f64 * self.freq_bound + 2.0 * (self.m_order as f64 + 2.0) * (self.n + self.n_split) as f64 + 1.0;
        b.ceil() as usize
    }

    /// First absolute high index.
    pub fn high_min(&self) -> usize {
        self.n + self.n_split + 1
    }

    fn j0(&self, k_norm: u32, c_weight: f64) -> usize {
        match self.tail {
            None => usize::MAX,
            Some(t) => {
                let j0 = t.eta_tilde.powf(-0.5) * 4f64.powi(self.m_order as i32) * (k_norm as f64 + 1.0).powf(t.tau / 2.0) * c_weight.sqrt();
                if j0.is_finite() && j0 < usize::MAX as f64 {
                    j0.ceil() as usize
                } else {
                    usize::MAX
                }
            }
        }
    }
}

/// All integer vectors of length `dim` with 1-norm at most `max`, in a fixed order.
pub fn lattice_ball(dim: usize, max: u32) -> Vec<Vec<i32>> {
    let mut out = Vec::new();
    let mut cur = vec![0i32; dim];
    fn rec(pos: usize, left: u32, cur: &mut Vec<i32>, out: &mut Vec<Vec<i32>>) {
        if pos == cur.len() {
            out.push(cur.clone());
            return;
        }
        let l = left as i32;
        for v in -l..=l {
            cur[pos] = v;
            rec(pos + 1, left - v.unsigned_abs(), cur, out);
        }
        cur[pos] = 0;
    }
    rec(0, max, &mut cur, &mut out);
    out
}

fn first_nonzero_positive(k: &[i32], l: &[i32]) -> bool {
    k.iter().chain(l).find(|&&v| v != 0).map_or(false, |&v| v > 0)
}

/// Enumerates every non-pruned query with `|k| <= k_max`.
///
/// Pruned: `L1` and `L2+` queries whose largest high index reaches the
/// pruning bound, and `L2-` queries with `m = i - j` above it. Nothing else is
/// dropped; the `k = 0, l = 0` queries are kept and flagged.
pub fn enumerate_queries(b: &QueryBounds) -> Vec<ResonanceQuery> {
    let m = b.m_order;
    let ks = lattice_ball(b.n, b.k_max);
    let ls = lattice_ball(b.n_split, m + 2);
    let c_weight = |l: &[i32]| -> f64 {
        l.iter().enumerate().map(|(i, &v)| 1.0 + ((i + 1) as f64).powi(2) * (v as f64).powi(2)).product()
    };
    let mut out = Vec::new();
    let lo = b.high_min();
    for k in &ks {
        let kn: u32 = k.iter().map(|v| v.unsigned_abs()).sum();
        let bound = b.prune_bound(kn);
        let top = b.high_max.min(bound.saturating_sub(1));
        for l in &ls {
            let ln: u32 = l.iter().map(|v| v.unsigned_abs()).sum();
            let empty = kn == 0 && ln == 0;
            let push = |out: &mut Vec<ResonanceQuery>, high: HighPart, class: QueryClass| {
                out.push(ResonanceQuery { k: k.clone(), l_low: l.clone(), high, class, analytically_empty: empty });
            };
            if !empty && first_nonzero_positive(k, l) {
                push(&mut out, HighPart::None, QueryClass::L0);
            }
            if ln <= m + 1 {
                for j in lo..=top {
                    push(&mut out, HighPart::One(j), QueryClass::L1);
                }
            }
            if ln <= m {
                for i in lo..=top {
                    for j in i..=top {
                        push(&mut out, HighPart::Plus(i, j), QueryClass::L2Plus);
                    }
                }
                let j0 = b.j0(kn, c_weight(l)).max(lo);
                for mm in 1..=bound {
                    if lo + mm > b.high_max {
                        break;
                    }
                    let j_hi = b.high_max - mm;
                    for j in lo..=j_hi.min(j0.saturating_sub(1)) {
                        push(&mut out, HighPart::Minus(j + mm, j), QueryClass::L2Minus);
                    }
                    if j0 <= j_hi {
                        push(&mut out, HighPart::MinusTail { m: mm, j_lo: j0, j_hi }, QueryClass::L2Minus);
                    }
                }
            }
        }
    }
    out
}

/// Frequencies a membership test reads: `omega` and the normal `Omega_j`, `j = 1..=J`.
#[derive(Clone, Debug, PartialEq)]
pub struct QueryFrequencies {
    pub n: usize,
    pub omega: Vec<f64>,
    pub big_omega: Vec<f64>,
}

impl QueryFrequencies {
    /// Uses the corrected frequencies of `freq`.
    pub fn corrected(freq: &FrequencyData) -> Self {
        Self { n: freq.n, omega: freq.omega_corr.clone(), big_omega: freq.big_omega_corr.clone() }
    }

    pub fn bare(freq: &FrequencyData) -> Self {
        Self { n: freq.n, omega: freq.omega.clone(), big_omega: freq.big_omega.clone() }
    }

    /// Frequency of absolute mode `a > n`.
    pub fn high(&self, a: usize) -> f64 {
        self.big_omega[a - self.n - 1]
    }

    pub fn high_max(&self) -> usize {
        self.n + self.big_omega.len()
    }

    pub fn sup_omega(&self) -> f64 {
        self.omega.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    fn base(&self, k: &[i32], l: &[i32]) -> f64 {
        let mut d = 0.0;
        for (v, w) in k.iter().zip(&self.omega) {
            d += *v as f64 * w;
        }
        for (v, w) in l.iter().zip(&self.big_omega) {
            d += *v as f64 * w;
        }
        d
    }
}

/// Divisor of an explicit query; `None` for a reduced tail entry.
pub fn query_divisor(q: &ResonanceQuery, f: &QueryFrequencies) -> Option<f64> {
    let d = f.base(&q.k, &q.l_low);
    match q.high {
        HighPart::None => Some(d),
        HighPart::One(j) => Some(d + f.high(j)),
        HighPart::Plus(i, j) => Some(d + f.high(i) + f.high(j)),
        HighPart::Minus(i, j) => Some(d + f.high(i) - f.high(j)),
        HighPart::MinusTail { .. } => None,
    }
}

/// `|divisor| <= threshold`. Tail entries use `|<k,omega> + <l,Omega> + m| <= threshold + sup_j |r_{j+m,j}|`.
pub fn is_resonant(q: &ResonanceQuery, gate: &DivisorGate, f: &QueryFrequencies) -> bool {
    let thr = q.threshold(gate);
    match q.high {
        HighPart::MinusTail { m, j_lo, j_hi } => {
            let d = f.base(&q.k, &q.l_low) + m as f64;
            let r = (j_lo..=j_hi).map(|j| (f.high(j + m) - f.high(j) - m as f64).abs()).fold(0.0, f64::max);
            d.abs() <= thr + r
        }
        _ => query_divisor(q, f).unwrap().abs() <= thr,
    }
}

/// Per-sample smallest `|divisor| / (threshold / eta_tilde)` in each class:
/// the sample is resonant at `eta_tilde` iff the entry is `<= eta_tilde`.
///
/// This scans the same query set as [`enumerate_queries`] without a tail
/// reduction, using sorted frequencies instead of materialising the list.
pub fn critical_ratios(b: &QueryBounds, gate: &DivisorGate, f: &QueryFrequencies) -> [f64; 4] {
    let unit = DivisorGate { eta_tilde: 1.0, ..*gate };
    let m = b.m_order;
    let lo = b.high_min();
    let high: Vec<f64> = (lo..=b.high_max).map(|a| f.high(a)).collect();
    let sorted = high.windows(2).all(|w| w[0] <= w[1]);
    let mut best = [f64::INFINITY; 4];
    let ks = lattice_ball(b.n, b.k_max);
    let ls = lattice_ball(b.n_split, m + 2);
    // nearest |d + x| over a slice of increasing x
    let nearest = |d: f64, xs: &[f64]| -> f64 {
        if xs.is_empty() {
            return f64::INFINITY;
        }
        if !sorted {
            return xs.iter().map(|x| (d + x).abs()).fold(f64::INFINITY, f64::min);
        }
        let p = xs.partition_point(|&x| x < -d);
        let mut r = f64::INFINITY;
        if p < xs.len() {
            r = r.min((d + xs[p]).abs());
        }
        if p > 0 {
            r = r.min((d + xs[p - 1]).abs());
        }
        r
    };
    for k in &ks {
        let kn: u32 = k.iter().map(|v| v.unsigned_abs()).sum();
        let bound = b.prune_bound(kn);
        let top = b.high_max.min(bound.saturating_sub(1));
        let count = (top + 1).saturating_sub(lo);
        for l in &ls {
            let ln: u32 = l.iter().map(|v| v.unsigned_abs()).sum();
            let sparse: Vec<(u16, i32)> = l.iter().enumerate().filter(|(_, &v)| v != 0).map(|(i, &v)| (i as u16, v)).collect();
            let coef = unit.partial_threshold(kn, &sparse);
            let d = f.base(k, l);
            let mut upd = |class: QueryClass, dist: f64| {
                let v = dist / coef;
                if v < best[class.index()] {
                    best[class.index()] = v;
                }
            };
            if !(kn == 0 && ln == 0) && first_nonzero_positive(k, l) {
                upd(QueryClass::L0, d.abs());
            }
            let hs = &high[..count.min(high.len())];
            if ln <= m + 1 {
                upd(QueryClass::L1, nearest(d, hs));
            }
            if ln <= m {
                let mut r = f64::INFINITY;
                for (i, hi) in hs.iter().enumerate() {
                    r = r.min(nearest(d + hi, &hs[i..]));
                }
                upd(QueryClass::L2Plus, r);
                let mut r = f64::INFINITY;
                for (jj, hj) in high.iter().enumerate() {
                    // i = j + mm with 1 <= mm <= bound
                    let end = (jj + bound + 1).min(high.len());
                    if jj + 1 < end {
                        r = r.min(nearest(d - hj, &high[jj + 1..end]));
                    }
                }
                upd(QueryClass::L2Minus, r);
            }
        }
    }
    best
}

/// Monte Carlo setup.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasureSetup {
    pub model: ModelConfig,
    pub gate: DivisorGate,
    pub k_max: u32,
    /// Use bare frequencies instead of running the order-2 correction per sample.
    pub fast: bool,
    pub confidence: f64,
}

impl MeasureSetup {
    /// `K_max` with `exp(-K s / 2) < 1e-12`.
    pub fn default_k_max(s: f64) -> u32 {
        (2.0 * 1e12f64.ln() / s).floor() as u32 + 1
    }

    fn bounds(&self, f: &QueryFrequencies) -> QueryBounds {
        QueryBounds {
            n: self.model.n,
            k_max: self.k_max,
            m_order: self.gate.m,
            n_split: self.gate.n_split,
            freq_bound: f.sup_omega(),
            high_max: f.high_max(),
            tail: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasureEstimate {
    pub eta_tilde: f64,
    /// Samples that entered the estimate (order-2 rejections excluded).
    pub n_samples: usize,
    pub rejected: usize,
    pub fraction: f64,
    /// Wilson score half-width at `confidence`.
    pub ci_halfwidth: f64,
    pub confidence: f64,
    /// Fraction of samples resonant through each class, in `QueryClass::ALL` order.
    pub class_fraction: [f64; 4],
    pub fast: bool,
}

/// Wilson score interval half-width for `hits` out of `n`.
pub fn wilson_halfwidth(hits: usize, n: usize, confidence: f64) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let z = Normal::new(0.0, 1.0).unwrap().inverse_cdf(0.5 + confidence / 2.0);
    let nf = n as f64;
    let p = hits as f64 / nf;
    let denom = 1.0 + z * z / nf;
    z * (p * (1.0 - p) / nf + z * z / (4.0 * nf * nf)).sqrt() / denom
}

/// Critical ratios of `count` parameter samples; `None` marks an order-2 rejection.
pub fn sample_ratios(setup: &MeasureSetup, count: usize, seed: u64) -> Result<Vec<Option<[f64; 4]>>> {
    if count < 1000 {
        return Err(NlwError::Precondition(format!("at least 1000 samples are required, got {count}")));
    }
    setup.model.validate()?;
    let dim = setup.model.n + setup.model.big_j;
    (0..count)
        .into_par_iter()
        .map(|i| {
            let mut rng = indexed_stream(seed, "measure", i as u64);
            let xi = ParameterPoint::random(&mut rng, dim);
            let freq = if setup.fast {
                eigen_frequencies(setup.model.m, &xi, setup.model.n, setup.model.big_j)?
            } else {
                let d = 4;
                match order2_for_model(&setup.model, &xi, &setup.gate, Caps::new(d, 2 * d), Order2Options::default()) {
                    Ok(r) => r.freq,
                    Err(NlwError::Order2Resonance { .. }) | Err(NlwError::Convergence { .. }) => return Ok(None),
                    Err(e) => return Err(e),
                }
            };
            let f = QueryFrequencies::corrected(&freq);
            Ok(Some(critical_ratios(&setup.bounds(&f), &setup.gate, &f)))
        })
        .collect()
}

/// Estimates from precomputed ratios, one per `eta_tilde`.
pub fn summarize(ratios: &[Option<[f64; 4]>], eta_tildes: &[f64], setup: &MeasureSetup) -> Vec<MeasureEstimate> {
    let accepted: Vec<&[f64; 4]> = ratios.iter().flatten().collect();
    let n = accepted.len();
    let rejected = ratios.len() - n;
    eta_tildes
        .iter()
        .map(|&eta| {
            let mut class_hits = [0usize; 4];
            let mut hits = 0;
            for r in &accepted {
                let mut any = false;
                for c in 0..4 {
                    if r[c] <= eta {
                        class_hits[c] += 1;
                        any = true;
                    }
                }
                hits += any as usize;
            }
            let frac = |h: usize| if n == 0 { 0.0 } else { h as f64 / n as f64 };
            MeasureEstimate {
                eta_tilde: eta,
                n_samples: n,
                rejected,
                fraction: frac(hits),
                ci_halfwidth: wilson_halfwidth(hits, n, setup.confidence),
                confidence: setup.confidence,
                class_fraction: class_hits.map(frac),
                fast: setup.fast,
            }
        })
        .collect()
}

/// Resonant fraction of the parameter box at `eta_tilde`.
pub fn estimate_measure(setup: &MeasureSetup, eta_tilde: f64, sample_count: usize, seed: u64) -> Result<MeasureEstimate> {
    let r = sample_ratios(setup, sample_count, seed)?;
    Ok(summarize(&r, &[eta_tilde], setup).remove(0))
}

/// Same samples evaluated at several `eta_tilde`.
pub fn measure_sweep(setup: &MeasureSetup, eta_tildes: &[f64], sample_count: usize, seed: u64) -> Result<Vec<MeasureEstimate>> {
    let r = sample_ratios(setup, sample_count, seed)?;
    Ok(summarize(&r, eta_tildes, setup))
}

/// Least-squares slope of `log fraction` against `log eta_tilde` over the
/// points with a nonzero fraction; `None` with fewer than two such points.
pub fn loglog_slope(estimates: &[MeasureEstimate]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = estimates.iter().filter(|e| e.fraction > 0.0 && e.eta_tilde > 0.0).map(|e| (e.eta_tilde.ln(), e.fraction.ln())).collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Some(sxy / sxx)
}

/// `eta_tilde,fraction,ci_halfwidth,n_samples,class_L0,class_L1,class_L2p,class_L2m`
pub fn measure_csv(estimates: &[MeasureEstimate]) -> String {
    let mut s = String::from("eta_tilde,fraction,ci_halfwidth,n_samples,class_L0,class_L1,class_L2p,class_L2m\n");
    for e in estimates {
        s.push_str(&format!(
            "{:e},{:e},{:e},{},{:e},{:e},{:e},{:e}\n",
            e.eta_tilde, e.fraction, e.ci_halfwidth, e.n_samples, e.class_fraction[0], e.class_fraction[1], e.class_fraction[2], e.class_fraction[3]
        ));
    }
    s
}
