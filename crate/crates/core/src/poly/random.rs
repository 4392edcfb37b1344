//! Random real polynomials for tests and benchmarks.

use num_complex::Complex64;
use rand::Rng;

use super::{Caps, MonomialKey, PolyHamiltonian};

/// Shape of a random polynomial.
#[derive(Clone, Copy, Debug)]
pub struct RandomSpec {
    pub n: usize,
    pub j: usize,
    pub caps: Caps,
    pub min_degree: u32,
    pub max_degree: u32,
    pub terms: usize,
}

/// Random monomial of exact weighted degree `deg` with `|k| <= caps.fourier`.
pub fn random_key<R: Rng>(rng: &mut R, n: usize, j: usize, fourier: u32, deg: u32) -> MonomialKey {
    let mut k = vec![0i32; n];
    if n > 0 && fourier > 0 {
        let budget = rng.gen_range(0..=fourier);
        for _ in 0..budget {
            let s = rng.gen_range(0..n);
            k[s] += if rng.gen_bool(0.5) { 1 } else { -1 };
        }
        while k.iter().map(|v| v.unsigned_abs()).sum::<u32>() > fourier {
            let s = rng.gen_range(0..n);
            k[s] -= k[s].signum();
        }
    }
    let mut alpha = vec![0u32; n];
    let mut beta = vec![0u32; j];
    let mut gamma = vec![0u32; j];
    let mut left = deg;
    while left > 0 {
        if left >= 2 && n > 0 && (j == 0 || rng.gen_bool(0.3)) {
            alpha[rng.gen_range(0..n)] += 1;
            left -= 2;
        } else if j > 0 {
            let m = rng.gen_range(0..j);
            if rng.gen_bool(0.5) {
                beta[m] += 1;
            } else {
                gamma[m] += 1;
            }
            left -= 1;
        } else {
            // odd degree without normal modes is impossible
            break;
        }
    }
    MonomialKey::new(&k, &alpha, &beta, &gamma)
}

/// Random polynomial satisfying the reality condition, with coefficients of size O(1).
pub fn random_real<R: Rng>(rng: &mut R, spec: &RandomSpec) -> PolyHamiltonian {
    let mut p = PolyHamiltonian::new(spec.n, spec.j, spec.caps);
    for _ in 0..spec.terms {
        let deg = rng.gen_range(spec.min_degree..=spec.max_degree);
        let key = random_key(rng, spec.n, spec.j, spec.caps.fourier, deg);
        if key.degree() != deg {
            continue;
        }
        let c = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        p.add_value(key, c);
    }
    p.realified()
}
