//! Oracles and samplers shared by the integration tests.
#![allow(dead_code)]

use std::num::NonZeroUsize;

use gauss_quad::GaussLegendre;
use nlw_core::model::ModelConfig;
use nlw_core::poly::{Caps, MonomialKey, PolyHamiltonian};
use nlw_core::rng::indexed_stream;
use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Adaptive composite Gauss-Legendre: each panel compares the 10- and 20-point
/// rules and is bisected until they agree to `tol` scaled by its share of `[a, b]`.
pub struct Quadrature {
    coarse: GaussLegendre,
    fine: GaussLegendre,
}

impl Quadrature {
    pub fn new() -> Self {
        Self { coarse: GaussLegendre::new(NonZeroUsize::new(10).unwrap()), fine: GaussLegendre::new(NonZeroUsize::new(20).unwrap()) }
    }

    pub fn integrate(&self, f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
        self.panel(f, a, b, tol / (b - a), 0)
    }

    fn panel(&self, f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol_per_len: f64, depth: u32) -> f64 {
        let c = self.coarse.integrate(a, b, f);
        let fi = self.fine.integrate(a, b, f);
        if (c - fi).abs() <= tol_per_len * (b - a) || depth > 30 {
            return fi;
        }
        let m = 0.5 * (a + b);
        self.panel(f, a, m, tol_per_len, depth + 1) + self.panel(f, m, b, tol_per_len, depth + 1)
    }
}

/// `int_0^pi phi_i phi_j phi_k phi_l dx` with `phi_j = sqrt(2/pi) sin(j x)`, by quadrature.
pub fn four_sine_quadrature(q: &Quadrature, i: usize, j: usize, k: usize, l: usize) -> f64 {
    let c = 2.0 / std::f64::consts::PI;
    let f = move |x: f64| c * c * (i as f64 * x).sin() * (j as f64 * x).sin() * (k as f64 * x).sin() * (l as f64 * x).sin();
    q.integrate(&f, 0.0, std::f64::consts::PI, 1e-13)
}

pub fn model(n: usize, big_j: usize, eps: f64) -> ModelConfig {
    ModelConfig { m: 1.0, n, big_j, eps, actions: vec![0.05; n], taylor_order: 3, s: 1.0, r: 0.1 }
}

/// Random real polynomial whose normal-mode occupation decays like `m^-decay`.
///
/// Every term draws from its own substream `(seed, "pair", index * 8 + term)`,
/// and modes come from an inverse CDF truncated by rejection. Ensembles at two
/// truncations `J < J'` therefore share every term whose modes all lie below
/// `J`, which keeps sampled suprema comparable across dimensions.
pub fn decaying_real(seed: u64, index: u64, n: usize, j: usize, caps: Caps, terms: u64, decay: f64) -> PolyHamiltonian {
    let mut p = PolyHamiltonian::new(n, j, caps);
    for t in 0..terms {
        let rng = &mut indexed_stream(seed, "pair", index * 8 + t);
        let draw = |rng: &mut ChaCha8Rng| loop {
            let u: f64 = rng.gen_range(f64::EPSILON..1.0);
            let m = u.powf(-1.0 / (decay - 1.0)).floor() as usize;
            if m <= j {
                break m - 1;
            }
        };
        let deg = rng.gen_range(2..=4u32);
        let mut k = vec![0i32; n];
        for _ in 0..rng.gen_range(0..=2) {
            k[rng.gen_range(0..n)] += if rng.gen_bool(0.5) { 1 } else { -1 };
        }
        let (mut a, mut b, mut g) = (vec![0u32; n], vec![0u32; j], vec![0u32; j]);
        let mut left = deg;
        while left > 0 {
            if left >= 2 && rng.gen_bool(0.3) {
                a[rng.gen_range(0..n)] += 1;
                left -= 2;
            } else {
                let m = draw(rng);
                if rng.gen_bool(0.5) {
                    b[m] += 1
                } else {
                    g[m] += 1
                }
                left -= 1;
            }
        }
        p.add_value(MonomialKey::new(&k, &a, &b, &g), Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
    }
    p.realified()
}
