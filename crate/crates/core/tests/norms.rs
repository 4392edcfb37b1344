mod common;

use nlw_core::norms::*;
use nlw_core::poly::random::{random_real, RandomSpec};
use nlw_core::poly::{lie_transform, Caps, PolyHamiltonian};
use nlw_core::rng::indexed_stream;
use num_complex::Complex64;
use proptest::prelude::*;

fn sample(seed: u64, index: u64) -> PolyHamiltonian {
    let spec = RandomSpec { n: 2, j: 5, caps: Caps::new(4, 2), min_degree: 2, max_degree: 4, terms: 6 };
    random_real(&mut indexed_stream(seed, "norm-tests", index), &spec)
}

fn tame(h: &PolyHamiltonian, p: f64) -> Bound {
    tame_vecfield_norm(h, p, 0.5, 0.5, &mut indexed_stream(0, "probe", 0), ProbeOptions { trials: 1, iterations: 5 }).tame
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn weighted_norm_is_dominated(seed in any::<u64>(), p in 1.0f64..3.0) {
        let h = sample(seed, 0);
        let rep = norm_report(&h, p, 0.5, 0.5, 100, &mut indexed_stream(seed, "weighted", 0));
        prop_assert!(rep.weighted.unwrap() <= rep.tame.upper * (1.0 + 1e-12));
        prop_assert!(rep.tame.probe <= rep.tame.upper * (1.0 + 1e-12));
    }

    #[test]
    fn tame_norm_is_homogeneous(seed in any::<u64>(), c in -3.0f64..3.0) {
        let h = sample(seed, 0);
        let a = tame(&h, 1.0).upper;
        let b = tame(&h.scaled(Complex64::new(c, 0.0)), 1.0).upper;
        prop_assert!((b - c.abs() * a).abs() <= 1e-12 * a.max(1.0));
    }

    #[test]
    fn tame_norm_is_subadditive(seed in any::<u64>()) {
        let (u, v) = (sample(seed, 0), sample(seed, 1));
        let mut s = u.clone();
        s.add_assign(&v);
        prop_assert!(tame(&s, 1.0).upper <= (tame(&u, 1.0).upper + tame(&v, 1.0).upper) * (1.0 + 1e-12));
    }
}

#[test]
fn small_flows_at_most_double_the_norm() {
    let caps = Caps::new(5, 4);
    for i in 0..10 {
        let mut h = sample(9, 2 * i);
        h.set_caps(caps);
        let spec = RandomSpec { n: 2, j: 5, caps: Caps::new(4, 1), min_degree: 3, max_degree: 4, terms: 4 };
        let mut f = random_real(&mut indexed_stream(9, "generator", i), &spec);
        f.set_caps(caps);
        // small generator relative to the loss of domain
        let scale = 1e-2 / tame(&f, 1.0).upper;
        let f = f.scaled(Complex64::new(scale, 0.0));
        let (g, _) = lie_transform(&h, &f, 1.0).unwrap();
        let (a, b) = (tame(&h, 1.0).upper, tame(&g, 1.0).upper);
        assert!(b <= 2.0 * a, "{i}: {b} > 2 * {a}");
    }
}

#[test]
fn norm_minus_one_and_weighted_l2() {
    assert_eq!(norm_minus1(&[1.0, -0.5, 0.25]), 1.0f64.max(1.0).max(0.75));
    let v = [Complex64::new(3.0, 4.0), Complex64::new(0.0, 1.0)];
    assert!((weighted_l2(&v, 1.0) - (25.0f64 + 4.0).sqrt()).abs() <= 1e-14);
}

#[test]
fn decaying_ensemble_has_finite_norms() {
    let h = common::decaying_real(1, 0, 2, 12, Caps::new(8, 4), 6, 3.0);
    let b = tame(&h, 1.0);
    assert!(b.upper.is_finite() && b.upper > 0.0);
    assert!(b.probe <= b.upper);
}
