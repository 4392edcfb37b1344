use std::fmt;

use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

/// Sparse list of `(mode, power)` pairs, sorted by mode, powers non-zero.
pub type SparseExps = SmallVec<[(u16, u8); 4]>;

/// Index of one monomial `e^{i<k,x>} y^alpha q^beta qbar^gamma`.
///
/// The derived ordering is lexicographic on `(deg, k, alpha, beta, gamma)`,
/// which fixes term order in every output file.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MonomialKey {
    deg: u16,
    k: SmallVec<[i16; 4]>,
    alpha: SmallVec<[u8; 4]>,
    beta: SparseExps,
    gamma: SparseExps,
}

fn sparse_from_dense(dense: &[u32]) -> SparseExps {
    dense
        .iter()
        .enumerate()
        .filter(|(_, &p)| p > 0)
        .map(|(j, &p)| (j as u16, p as u8))
        .collect()
}

fn sparse_sum(list: &SparseExps) -> u16 {
    list.iter().map(|&(_, p)| p as u16).sum()
}

fn merge(a: &SparseExps, b: &SparseExps) -> SparseExps {
    let mut out = SparseExps::new();
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        let (ma, pa) = a[i];
        let (mb, pb) = b[j];
        if ma == mb {
            out.push((ma, pa + pb));
            i += 1;
            j += 1;
        } else if ma < mb {
            out.push((ma, pa));
            i += 1;
        } else {
            out.push((mb, pb));
            j += 1;
        }
    }
    out.extend_from_slice(&a[i..]);
    out.extend_from_slice(&b[j..]);
    out
}

fn lower(list: &SparseExps, mode: usize) -> Option<(u8, SparseExps)> {
    let pos = list.iter().position(|&(m, _)| m as usize == mode)?;
    let power = list[pos].1;
    let mut out = list.clone();
    if power == 1 {
        out.remove(pos);
    } else {
        out[pos].1 -= 1;
    }
    Some((power, out))
}

fn power_of(list: &SparseExps, mode: usize) -> u32 {
    list.iter()
        .find(|&&(m, _)| m as usize == mode)
        .map_or(0, |&(_, p)| p as u32)
}

impl MonomialKey {
    /// Builds a key from dense vectors; `beta`/`gamma` are indexed by normal mode (0-based).
    pub fn new(k: &[i32], alpha: &[u32], beta: &[u32], gamma: &[u32]) -> Self {
        Self::from_sparse(
            k.iter().map(|&v| v as i16).collect(),
            alpha.iter().map(|&v| v as u8).collect(),
            sparse_from_dense(beta),
            sparse_from_dense(gamma),
        )
    }

    pub fn from_sparse(
        k: SmallVec<[i16; 4]>,
        alpha: SmallVec<[u8; 4]>,
        beta: SparseExps,
        gamma: SparseExps,
    ) -> Self {
        let deg = 2 * alpha.iter().map(|&a| a as u16).sum::<u16>() + sparse_sum(&beta) + sparse_sum(&gamma);
        Self { deg, k, alpha, beta, gamma }
    }

    /// The constant monomial for `n` tangential sites.
    pub fn one(n: usize) -> Self {
        Self::from_sparse(
            SmallVec::from_elem(0, n),
            SmallVec::from_elem(0, n),
            SparseExps::new(),
            SparseExps::new(),
        )
    }

    /// Weighted degree `2|alpha| + |beta| + |gamma|`.
    pub fn degree(&self) -> u32 {
        self.deg as u32
    }

    /// `|k|` in the 1-norm.
    pub fn fourier_norm(&self) -> u32 {
        self.k.iter().map(|&v| v.unsigned_abs() as u32).sum()
    }

    pub fn z_degree(&self) -> u32 {
        (sparse_sum(&self.beta) + sparse_sum(&self.gamma)) as u32
    }

    pub fn action_degree(&self) -> u32 {
        self.alpha.iter().map(|&a| a as u32).sum()
    }

    pub fn n(&self) -> usize {
        self.k.len()
    }

    pub fn k(&self) -> &[i16] {
        &self.k
    }

    pub fn alpha(&self) -> &[u8] {
        &self.alpha
    }

    pub fn beta(&self) -> &SparseExps {
        &self.beta
    }

    pub fn gamma(&self) -> &SparseExps {
        &self.gamma
    }

    pub fn beta_pow(&self, mode: usize) -> u32 {
        power_of(&self.beta, mode)
    }

    pub fn gamma_pow(&self, mode: usize) -> u32 {
        power_of(&self.gamma, mode)
    }

    /// Largest normal mode index referenced, if any.
    pub fn max_mode(&self) -> Option<usize> {
        let b = self.beta.last().map(|&(m, _)| m as usize);
        let g = self.gamma.last().map(|&(m, _)| m as usize);
        b.max(g)
    }

    pub fn is_angle_free(&self) -> bool {
        self.k.iter().all(|&v| v == 0)
    }

    /// `k = 0` and `beta = gamma`: depends only on `y` and `|q_j|^2`.
    pub fn is_integrable(&self) -> bool {
        self.is_angle_free() && self.beta == self.gamma
    }

    /// Key of the complex-conjugate monomial `(-k, alpha, gamma, beta)`.
    pub fn conjugate(&self) -> Self {
        Self {
            deg: self.deg,
            k: self.k.iter().map(|&v| -v).collect(),
            alpha: self.alpha.clone(),
            beta: self.gamma.clone(),
            gamma: self.beta.clone(),
        }
    }

    /// Product of two monomials.
    pub fn mul(&self, other: &Self) -> Self {
        Self {
            deg: self.deg + other.deg,
            k: self.k.iter().zip(&other.k).map(|(a, b)| a + b).collect(),
            alpha: self.alpha.iter().zip(&other.alpha).map(|(a, b)| a + b).collect(),
            beta: merge(&self.beta, &other.beta),
            gamma: merge(&self.gamma, &other.gamma),
        }
    }

    /// `d/dy_j`: returns the power that comes down and the lowered key.
    pub fn d_action(&self, j: usize) -> Option<(u32, Self)> {
        let a = self.alpha[j];
        if a == 0 {
            return None;
        }
        let mut alpha = self.alpha.clone();
        alpha[j] -= 1;
        Some((
            a as u32,
            Self { deg: self.deg - 2, k: self.k.clone(), alpha, beta: self.beta.clone(), gamma: self.gamma.clone() },
        ))
    }

    pub fn d_q(&self, mode: usize) -> Option<(u32, Self)> {
        let (p, beta) = lower(&self.beta, mode)?;
        Some((
            p as u32,
            Self { deg: self.deg - 1, k: self.k.clone(), alpha: self.alpha.clone(), beta, gamma: self.gamma.clone() },
        ))
    }

    pub fn d_qbar(&self, mode: usize) -> Option<(u32, Self)> {
        let (p, gamma) = lower(&self.gamma, mode)?;
        Some((
            p as u32,
            Self { deg: self.deg - 1, k: self.k.clone(), alpha: self.alpha.clone(), beta: self.beta.clone(), gamma },
        ))
    }

    /// Same monomial with a different angle index.
    pub fn with_k(&self, k: &[i16]) -> Self {
        Self { deg: self.deg, k: k.iter().copied().collect(), ..self.clone() }
    }

    /// Signed mode combination `beta - gamma` restricted to normal modes.
    pub fn mode_balance(&self) -> SmallVec<[(u16, i32); 4]> {
        let mut out: SmallVec<[(u16, i32); 4]> = SmallVec::new();
        let (b, g) = (&self.beta, &self.gamma);
        let (mut i, mut j) = (0, 0);
        while i < b.len() || j < g.len() {
            let take_b = j >= g.len() || (i < b.len() && b[i].0 < g[j].0);
            let take_g = i >= b.len() || (j < g.len() && g[j].0 < b[i].0);
            if take_b {
                out.push((b[i].0, b[i].1 as i32));
                i += 1;
            } else if take_g {
                out.push((g[j].0, -(g[j].1 as i32)));
                j += 1;
            } else {
                let d = b[i].1 as i32 - g[j].1 as i32;
                if d != 0 {
                    out.push((b[i].0, d));
                }
                i += 1;
                j += 1;
            }
        }
        out
    }
}

fn fmt_sparse(f: &mut fmt::Formatter<'_>, list: &SparseExps) -> fmt::Result {
    for (i, (m, p)) in list.iter().enumerate() {
        if i > 0 {
            write!(f, ",")?;
        }
        write!(f, "{}:{}", m + 1, p)?;
    }
    Ok(())
}

impl fmt::Display for MonomialKey {
    /// `k|alpha|beta|gamma` with 1-based sparse `pos:value` entries.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (i, &v) in self.k.iter().enumerate() {
            if v != 0 {
                if !first {
                    write!(f, ",")?;
                }
                write!(f, "{}:{}", i + 1, v)?;
                first = false;
            }
        }
        write!(f, "|")?;
        first = true;
        for (i, &v) in self.alpha.iter().enumerate() {
            if v != 0 {
                if !first {
                    write!(f, ",")?;
                }
                write!(f, "{}:{}", i + 1, v)?;
                first = false;
            }
        }
        write!(f, "|")?;
        fmt_sparse(f, &self.beta)?;
        write!(f, "|")?;
        fmt_sparse(f, &self.gamma)
    }
}
