mod common;

use nlw_core::poly::random::{random_real, RandomSpec};
use nlw_core::poly::{lie_transform, poisson_bracket, Caps, PhasePoint, PolyHamiltonian};
use nlw_core::rng::indexed_stream;
use num_complex::Complex64;
use proptest::prelude::*;
use rand::Rng;

/// Random real polynomial drawn with `|k| <= 1` and stored under `caps`.
fn sample(seed: u64, index: u64, n: usize, j: usize, degrees: (u32, u32), caps: Caps) -> PolyHamiltonian {
    let spec = RandomSpec { n, j, caps: Caps::new(degrees.1, 1), min_degree: degrees.0, max_degree: degrees.1, terms: 6 };
    let mut h = random_real(&mut indexed_stream(seed, "poly-tests", index), &spec);
    h.set_caps(caps);
    h
}

fn br(u: &PolyHamiltonian, v: &PolyHamiltonian) -> PolyHamiltonian {
    let (b, rep) = poisson_bracket(u, v).unwrap();
    assert_eq!(rep.total(), 0, "caps were meant to avoid truncation");
    b
}

fn real_point(seed: u64, n: usize, j: usize, amp: f64) -> PhasePoint {
    let rng = &mut indexed_stream(seed, "point", 0);
    let x: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..std::f64::consts::TAU)).collect();
    let y: Vec<f64> = (0..n).map(|_| amp * amp * rng.gen_range(-1.0..1.0)).collect();
    let q: Vec<Complex64> = (0..j).map(|_| amp * Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
    PhasePoint::real(&x, &y, &q)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn bracket_is_antisymmetric(seed in any::<u64>()) {
        let caps = Caps::new(8, 8);
        let u = sample(seed, 0, 2, 3, (1, 4), caps);
        let v = sample(seed, 1, 2, 3, (1, 4), caps);
        let mut s = br(&u, &v);
        s.add_assign(&br(&v, &u));
        prop_assert!(s.max_magnitude() <= 1e-14);
    }

    #[test]
    fn bracket_satisfies_jacobi(seed in any::<u64>()) {
        let caps = Caps::new(12, 12);
        let (u, v, w) = (sample(seed, 0, 2, 3, (1, 4), caps), sample(seed, 1, 2, 3, (1, 4), caps), sample(seed, 2, 2, 3, (1, 4), caps));
        let mut j = br(&u, &br(&v, &w));
        j.add_assign(&br(&v, &br(&w, &u)));
        j.add_assign(&br(&w, &br(&u, &v)));
        prop_assert!(j.max_magnitude() <= 1e-12);
    }

    #[test]
    fn bracket_preserves_reality(seed in any::<u64>()) {
        let caps = Caps::new(8, 8);
        let b = br(&sample(seed, 0, 2, 4, (2, 4), caps), &sample(seed, 1, 2, 4, (2, 4), caps));
        prop_assert!(b.reality_defect() <= 1e-14 * b.max_magnitude().max(1.0));
    }

    #[test]
    fn bracket_is_a_derivation_of_evaluation_order(seed in any::<u64>()) {
        // {U, V W} = {U, V} W + V {U, W} checked at a point
        let caps = Caps::new(16, 16);
        let (u, v, w) = (sample(seed, 0, 1, 2, (2, 3), caps), sample(seed, 1, 1, 2, (2, 3), caps), sample(seed, 2, 1, 2, (2, 3), caps));
        let pt = real_point(seed, 1, 2, 0.7);
        let ev = |h: &PolyHamiltonian| h.evaluate(&pt).unwrap();
        let mut vw = PolyHamiltonian::new(1, 2, caps);
        for (a, ca) in v.iter() {
            for (b, cb) in w.iter() {
                vw.add_value(a.mul(b), ca.value * cb.value);
            }
        }
        let lhs = ev(&br(&u, &vw));
        let rhs = ev(&br(&u, &v)) * ev(&w) + ev(&v) * ev(&br(&u, &w));
        prop_assert!((lhs - rhs).norm() <= 1e-11 * (1.0 + lhs.norm()));
    }
}

#[test]
fn lie_transform_is_inverted_by_negative_time() {
    // truncation at a degree cap commutes with brackets by generators of degree >= 3
    let caps = Caps::new(6, 12);
    for i in 0..20 {
        let u = sample(40, 2 * i, 2, 4, (3, 4), caps);
        let v = sample(40, 2 * i + 1, 2, 4, (2, 4), caps);
        let (fwd, rep) = lie_transform(&v, &u, 0.7).unwrap();
        assert_eq!(rep.truncation.dropped_fourier, 0);
        let (back, _) = lie_transform(&fwd, &u, -0.7).unwrap();
        let err = back.sub(&v).max_magnitude();
        assert!(err <= 1e-12 * v.max_magnitude().max(1.0), "{i}: {err:e}");
    }
}

#[test]
fn lie_series_terminates_before_the_cap() {
    let caps = Caps::new(7, 12);
    for i in 0..20 {
        let u = sample(41, 2 * i, 2, 3, (3, 4), caps);
        let v = sample(41, 2 * i + 1, 2, 3, (2, 4), caps);
        let (_, rep) = lie_transform(&v, &u, 1.0).unwrap();
        // every bracket with u raises the weighted degree by at least one
        let bound = (7 - v.min_degree().unwrap()) as usize;
        assert!(rep.terms <= bound, "{} > {bound}", rep.terms);
    }
}

#[test]
fn lie_transform_rejects_quadratic_generators() {
    let caps = Caps::new(6, 4);
    let u = sample(42, 0, 1, 2, (2, 2), caps);
    let v = sample(42, 1, 1, 2, (2, 4), caps);
    assert!(lie_transform(&v, &u, 1.0).is_err());
}

/// Explicit Euler step of `X_U` from a phase point.
fn euler(u: &PolyHamiltonian, w: &PhasePoint, h: f64) -> PhasePoint {
    let f = u.vector_field().eval(w).unwrap();
    let step = |a: &[Complex64], b: &[Complex64]| a.iter().zip(b).map(|(x, d)| x + d * h).collect::<Vec<_>>();
    PhasePoint { x: step(&w.x, &f.x), y: step(&w.y, &f.y), q: step(&w.q, &f.q), qbar: step(&w.qbar, &f.qbar) }
}

#[test]
fn lie_transform_agrees_with_the_flow_to_second_order() {
    // terms cut by the cap are O(h^9)
    let caps = Caps::new(10, 10);
    let u = sample(43, 0, 1, 2, (3, 3), caps);
    let v = sample(43, 1, 1, 2, (2, 3), caps);
    let w = real_point(43, 1, 2, 0.5);
    let err = |h: f64| {
        let (lt, _) = lie_transform(&v, &u, h).unwrap();
        (lt.evaluate(&w).unwrap() - v.evaluate(&euler(&u, &w, h)).unwrap()).norm()
    };
    let (e1, e2) = (err(1e-2), err(5e-3));
    assert!(e1 > 0.0);
    let ratio = e1 / e2;
    assert!((ratio - 4.0).abs() <= 0.4, "{ratio}");
}

#[test]
fn sampled_ensemble_is_real() {
    let h = common::decaying_real(3, 0, 2, 8, Caps::new(4, 2), 6, 3.0);
    assert!(h.reality_defect() <= 1e-15);
    assert!(!h.is_empty());
}
