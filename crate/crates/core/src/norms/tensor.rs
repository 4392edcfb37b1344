//! Operator norms of non-negative symmetric multilinear maps on weighted
//! sequence spaces, with a certified upper bound and a probed lower bound.
//!
//! Inputs are `z = (q, qbar)` with `|z|_w = |q|_w + |qbar|_w` and
//! `|q|_w^2 = sum |q_j|^2 j^{2w}`. The first slot carries weight `p1`, all other
//! slots weight 1, matching the mixed norm `|(z^d)|_{p,1}` for symmetric maps.

use std::collections::BTreeMap;

use rand::Rng;
use smallvec::SmallVec;

/// `(block, mode)` with block 0 = q, 1 = qbar and 1-based mode.
pub type Elem = (u8, u32);

#[derive(Clone, Debug)]
pub struct FormTerm {
    /// Multiset of inputs, sorted.
    pub elems: SmallVec<[Elem; 6]>,
    /// Non-negative polynomial coefficient of `prod z_e`.
    pub coef: f64,
}

/// One output component of the map.
#[derive(Clone, Debug)]
pub struct OutputTensor {
    /// Output group: a block for vector outputs, a coordinate for sup-norm outputs.
    pub group: usize,
    /// Weight of this output coordinate in its group's norm.
    pub weight: f64,
    pub terms: Vec<FormTerm>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OutputNorm {
    /// `sum_groups sqrt(sum_{v in group} (w_v out_v)^2)`: the `|.|_{p+1}` of `(q, qbar)` outputs.
    SumOfGroups,
    /// `max_v |out_v|`: the sup-norm of `C^n` outputs.
    Max,
}

struct PatternTerm<'a> {
    elems: &'a [Elem],
    entry: f64,
    tuples: f64,
    inv_prod: f64,
    first: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct MultiForm {
    pub degree: usize,
    pub outputs: Vec<OutputTensor>,
    pub norm: OutputNorm,
    /// Weight exponent of the first input slot.
    pub p1: f64,
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|v| v as f64).product()
}

fn multiset_factorial(elems: &[Elem]) -> f64 {
    let mut f = 1.0;
    let mut run = 1usize;
    for w in 1..elems.len() {
        if elems[w] == elems[w - 1] {
            run += 1;
            f *= run as f64;
        } else {
            run = 1;
        }
    }
    f
}

impl MultiForm {
    fn patterns(&self) -> Vec<(u8, usize)> {
        let d = self.degree;
        if d == 0 {
            return vec![(0, 0)];
        }
        let mut out = Vec::new();
        for a in 0..=d {
            if a >= 1 {
                out.push((0, a));
            }
            if a < d {
                out.push((1, a));
            }
        }
        out
    }

    /// Per-term data of one pattern block `(first slot block, number of q slots)`:
    /// `(elems, entry, tuples, 1/prod j_e, slot-one factors j_f^{1-p1} of the admissible first elements)`.
    fn pattern_terms<'a>(&self, terms: &'a [FormTerm], pattern: (u8, usize)) -> Vec<PatternTerm<'a>> {
        let d = self.degree;
        let (b1, a) = pattern;
        let mut out = Vec::new();
        for t in terms {
            if d == 0 {
                out.push(PatternTerm { elems: &t.elems, entry: t.coef, tuples: 1.0, inv_prod: 1.0, first: vec![1.0] });
                continue;
            }
            let nq = t.elems.iter().filter(|e| e.0 == 0).count();
            if nq != a {
                continue;
            }
            let pool: SmallVec<[Elem; 6]> = t.elems.iter().copied().filter(|e| e.0 == b1).collect();
            if pool.is_empty() {
                continue;
            }
            let qs: SmallVec<[Elem; 6]> = t.elems.iter().copied().filter(|e| e.0 == 0).collect();
            let qbs: SmallVec<[Elem; 6]> = t.elems.iter().copied().filter(|e| e.0 == 1).collect();
            let entry = t.coef * multiset_factorial(&t.elems) / factorial(d);
            let tuples = factorial(qs.len()) / multiset_factorial(&qs) * factorial(qbs.len()) / multiset_factorial(&qbs);
            let inv_prod: f64 = t.elems.iter().map(|e| 1.0 / e.1 as f64).product();
            let first = pool.iter().map(|e| (e.1 as f64).powf(1.0 - self.p1)).collect();
            out.push(PatternTerm { elems: &t.elems, entry, tuples, inv_prod, first });
        }
        out
    }

    /// Bound on the norm of the block of one output group for a pattern: the
    /// smaller of the Hilbert-Schmidt norm and the Schur bound
    /// `sqrt(max row sum * max column sum)` of the flattened matrix.
    fn group_bound(&self, outputs: &[&OutputTensor], pattern: (u8, usize)) -> f64 {
        let mut hs = 0.0;
        let mut row_max: f64 = 0.0;
        let mut cols: BTreeMap<&[Elem], (f64, f64)> = BTreeMap::new();
        for o in outputs {
            let mut row = 0.0;
            for t in self.pattern_terms(&o.terms, pattern) {
                let avg_first = t.first.iter().sum::<f64>() / t.first.len() as f64;
                let avg_first_sq = t.first.iter().map(|f| f * f).sum::<f64>() / t.first.len() as f64;
                hs += (o.weight * t.entry * t.inv_prod).powi(2) * t.tuples * avg_first_sq;
                row += o.weight * t.entry * t.inv_prod * t.tuples * avg_first;
                let best_first = t.first.iter().cloned().fold(0.0, f64::max);
                let c = cols.entry(t.elems).or_insert((0.0, best_first));
                c.0 += o.weight * t.entry * t.inv_prod;
            }
            row_max = row_max.max(row);
        }
        let col_max = cols.values().map(|(sum, f)| sum * f).fold(0.0, f64::max);
        hs.sqrt().min((row_max * col_max).sqrt())
    }

    /// Certified upper bound on the operator norm.
    pub fn upper_bound(&self) -> f64 {
        let groups = self.outputs.iter().map(|o| o.group).max().map_or(0, |g| g + 1);
        let mut best: f64 = 0.0;
        for pat in self.patterns() {
            let value = match self.norm {
                OutputNorm::SumOfGroups => (0..groups)
                    .map(|g| {
                        let members: Vec<&OutputTensor> = self.outputs.iter().filter(|o| o.group == g).collect();
                        self.group_bound(&members, pat)
                    })
                    .sum::<f64>(),
                OutputNorm::Max => self.outputs.iter().map(|o| self.group_bound(&[o], pat)).fold(0.0, f64::max),
            };
            best = best.max(value);
        }
        best
    }

    /// Weighted norm of a single input vector; `inputs[b][j-1]`.
    fn input_norm(z: &[Vec<f64>; 2], w: f64) -> f64 {
        z.iter()
            .map(|blk| blk.iter().enumerate().map(|(i, v)| (v * ((i + 1) as f64).powf(w)).powi(2)).sum::<f64>().sqrt())
            .sum()
    }

    fn denominator(&self, z: &[[Vec<f64>; 2]]) -> f64 {
        let d = self.degree;
        if d == 0 {
            return 1.0;
        }
        let np: Vec<f64> = z.iter().map(|zi| Self::input_norm(zi, self.p1)).collect();
        let n1: Vec<f64> = z.iter().map(|zi| Self::input_norm(zi, 1.0)).collect();
        let mut sum = 0.0;
        for s in 0..d {
            let mut prod = np[s];
            for t in 0..d {
                if t != s {
                    prod *= n1[t];
                }
            }
            sum += prod;
        }
        sum / d as f64
    }

    fn evaluate(&self, z: &[[Vec<f64>; 2]]) -> f64 {
        let d = self.degree;
        let perms = permutations(d);
        let scale = 1.0 / factorial(d);
        let get = |slot: usize, e: Elem| -> f64 { z[slot][e.0 as usize].get(e.1 as usize - 1).copied().unwrap_or(0.0) };
        let groups = self.outputs.iter().map(|o| o.group).max().map_or(0, |g| g + 1);
        let mut group_sq = vec![0.0; groups];
        let mut max: f64 = 0.0;
        for o in &self.outputs {
            let mut val = 0.0;
            for t in &o.terms {
                let mut s = 0.0;
                for perm in &perms {
                    let mut prod = 1.0;
                    for (slot, &idx) in perm.iter().enumerate() {
                        prod *= get(slot, t.elems[idx]);
                        if prod == 0.0 {
                            break;
                        }
                    }
                    s += prod;
                }
                val += t.coef * s * scale;
            }
            match self.norm {
                OutputNorm::SumOfGroups => group_sq[o.group] += (o.weight * val).powi(2),
                OutputNorm::Max => max = max.max(o.weight * val),
            }
        }
        match self.norm {
            OutputNorm::SumOfGroups => group_sq.iter().map(|v| v.sqrt()).sum(),
            OutputNorm::Max => max,
        }
    }

    fn ratio(&self, z: &[[Vec<f64>; 2]]) -> f64 {
        let den = self.denominator(z);
        if den <= 0.0 {
            return 0.0;
        }
        self.evaluate(z) / den
    }

    fn modes(&self) -> usize {
        self.outputs
            .iter()
            .flat_map(|o| o.terms.iter().flat_map(|t| t.elems.iter().map(|e| e.1 as usize)))
            .max()
            .unwrap_or(0)
    }

    /// Largest ratio found over basis-vector inputs and randomized coordinate ascent.
    /// Every evaluated ratio is attained, hence a valid lower bound of the norm.
    pub fn probe<R: Rng>(&self, rng: &mut R, trials: usize, iterations: usize) -> f64 {
        let d = self.degree;
        let modes = self.modes().max(1);
        let zero_input = || [vec![0.0; modes], vec![0.0; modes]];
        if d == 0 {
            return self.ratio(&[]);
        }
        let mut best: f64 = 0.0;
        // basis inputs aligned with single terms, trying each element in the weighted slot
        for o in &self.outputs {
            for t in &o.terms {
                for first in 0..d {
                    if first > 0 && t.elems[first] == t.elems[first - 1] {
                        continue;
                    }
                    let mut z: Vec<[Vec<f64>; 2]> = (0..d).map(|_| zero_input()).collect();
                    z[0][t.elems[first].0 as usize][t.elems[first].1 as usize - 1] = 1.0;
                    let mut slot = 1;
                    for (i, e) in t.elems.iter().enumerate() {
                        if i != first {
                            z[slot][e.0 as usize][e.1 as usize - 1] = 1.0;
                            slot += 1;
                        }
                    }
                    best = best.max(self.ratio(&z));
                }
            }
        }
        for _ in 0..trials {
            let mut z: Vec<[Vec<f64>; 2]> = (0..d)
                .map(|_| {
                    let mut v = zero_input();
                    for blk in v.iter_mut() {
                        for (i, x) in blk.iter_mut().enumerate() {
                            *x = rng.gen::<f64>() / ((i + 1) as f64).powi(2);
                        }
                    }
                    v
                })
                .collect();
            let mut cur = self.ratio(&z);
            for _ in 0..iterations {
                let slot = rng.gen_range(0..d);
                let blk = rng.gen_range(0..2);
                let idx = rng.gen_range(0..modes);
                let old = z[slot][blk][idx];
                let factor = [0.0, 0.5, 2.0, 4.0][rng.gen_range(0..4)];
                z[slot][blk][idx] = if old == 0.0 { factor / ((idx + 1) as f64).powi(2) } else { old * factor };
                let r = self.ratio(&z);
                if r >= cur {
                    cur = r;
                } else {
                    z[slot][blk][idx] = old;
                }
            }
            best = best.max(cur);
        }
        best
    }
}

fn permutations(d: usize) -> Vec<SmallVec<[usize; 6]>> {
    let mut out = Vec::new();
    let mut cur: SmallVec<[usize; 6]> = (0..d).collect();
    heap(d, &mut cur, &mut out);
    out
}

fn heap(k: usize, a: &mut SmallVec<[usize; 6]>, out: &mut Vec<SmallVec<[usize; 6]>>) {
    if k <= 1 {
        out.push(a.clone());
        return;
    }
    heap(k - 1, a, out);
    for i in 0..k - 1 {
        if k % 2 == 0 {
            a.swap(i, k - 1);
        } else {
            a.swap(0, k - 1);
        }
        heap(k - 1, a, out);
    }
}
