mod common;

use std::f64::consts::PI;

use nlw_core::model::*;
use nlw_core::poly::{Caps, PhasePoint};
use nlw_core::rng::indexed_stream;
use num_complex::Complex64;
use rand::Rng;

#[test]
fn quartic_term_count_matches_quadrature_support() {
    // every sorted quadruple with a non-zero integral contributes one monomial
    // per way of splitting its modes between q and qbar
    let q = common::Quadrature::new();
    let modes = 8;
    let mut want = 0usize;
    for a in 1..=modes {
        for b in a..=modes {
            for c in b..=modes {
                for d in c..=modes {
                    if common::four_sine_quadrature(&q, a, b, c, d).abs() > 1e-8 {
                        let mut counts = std::collections::BTreeMap::new();
                        for m in [a, b, c, d] {
                            *counts.entry(m).or_insert(0usize) += 1;
                        }
                        want += counts.values().map(|k| k + 1).product::<usize>();
                    }
                }
            }
        }
    }
    let cfg = common::model(2, 6, 1e-2);
    let (h, _) = build_complex_hamiltonian(&cfg, &ParameterPoint::midpoint(8), false).unwrap();
    assert_eq!(h.degree_part(4).len(), want);
    assert_eq!(h.degree_part(2).len(), modes);
}

#[test]
fn single_coupling_against_quadrature() {
    let q = common::Quadrature::new();
    assert!((four_sine_integral(1, 2, 3, 4) - common::four_sine_quadrature(&q, 1, 2, 3, 4)).abs() <= 1e-12);
    assert!((four_sine_integral(1, 2, 3, 4) - 1.0 / (2.0 * PI)).abs() <= 1e-15);
    assert_eq!(four_sine_integral(1, 1, 1, 2), 0.0);
}

/// `H = sum lambda |w|^2 - (eps/4) int u^4` with `u = sum q_j phi_j / sqrt(lambda_j)`
/// and `q_j = (w_j + wbar_j) / sqrt 2`, integrated by quadrature.
fn energy_oracle(lambda: &[f64], eps: f64, w: &[Complex64]) -> f64 {
    let quad = common::Quadrature::new();
    let c = (2.0 / PI).sqrt();
    let qs: Vec<f64> = w.iter().map(|v| 2f64.sqrt() * v.re).collect();
    let u = |x: f64| qs.iter().zip(lambda).enumerate().map(|(j, (q, l))| q / l.sqrt() * c * ((j + 1) as f64 * x).sin()).sum::<f64>();
    let quartic = quad.integrate(&|x| u(x).powi(4), 0.0, PI, 1e-14);
    lambda.iter().zip(w).map(|(l, v)| l * v.norm_sqr()).sum::<f64>() - eps / 4.0 * quartic
}

#[test]
fn complex_hamiltonian_matches_the_energy() {
    let cfg = common::model(1, 5, 0.3);
    let rng = &mut indexed_stream(1, "energy", 0);
    let xi = ParameterPoint::random(rng, 6);
    let (h, freq) = build_complex_hamiltonian(&cfg, &xi, false).unwrap();
    for _ in 0..5 {
        let w: Vec<Complex64> = (0..6).map(|_| Complex64::new(rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5))).collect();
        let pt = PhasePoint::real(&[], &[], &w);
        let got = h.evaluate(&pt).unwrap();
        let want = energy_oracle(&freq.lambda, cfg.eps, &w);
        assert!(got.im.abs() <= 1e-14);
        assert!((got.re - want).abs() <= 1e-12, "{} vs {want}", got.re);
    }
}

#[test]
fn frequencies_are_increasing_over_the_box() {
    for i in 0..1000 {
        let rng = &mut indexed_stream(2, "lambda", i);
        let xi = ParameterPoint::random(rng, 40);
        let f = eigen_frequencies(rng.gen_range(0.0..3.0), &xi, 2, 38).unwrap();
        assert!(f.lambda.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(f.omega.len(), 2);
        assert_eq!(f.big_omega.len(), 38);
    }
}

#[test]
fn parameters_outside_the_box_are_rejected() {
    let mut xi = ParameterPoint::midpoint(4);
    xi.xi[2] = 0.1;
    assert!(eigen_frequencies(1.0, &xi, 1, 3).is_err());
}

/// Lifted minus complex Hamiltonian at action `I + y` for a fixed angle and normal point.
fn lift_error(taylor: u32, y: f64) -> f64 {
    let mut cfg = common::model(1, 3, 0.5);
    cfg.taylor_order = taylor;
    let xi = ParameterPoint::midpoint(4);
    let lifted = lift_model(&cfg, &xi, Caps::new(2 * taylor + 6, 8), false).unwrap();
    let (hc, _) = build_complex_hamiltonian(&cfg, &xi, false).unwrap();
    let q = [Complex64::new(0.01, 0.02), Complex64::new(-0.015, 0.005), Complex64::new(0.004, -0.01)];
    let pt = PhasePoint::real(&[0.9], &[y], &q);
    let (w, wb) = ModelHamiltonian::complex_point(&cfg.actions, &pt);
    let exact = hc.evaluate(&PhasePoint { x: vec![], y: vec![], q: w, qbar: wb }).unwrap();
    (lifted.h.evaluate(&pt).unwrap() - exact).norm()
}

#[test]
fn action_lift_error_has_the_taylor_order() {
    // the expansion of sqrt(I + y) is exact through y^taylor
    for taylor in [2u32, 3] {
        let ratio = lift_error(taylor, 0.01) / lift_error(taylor, 0.005);
        let want = 2f64.powi(taylor as i32 + 1);
        assert!((ratio / want - 1.0).abs() <= 0.15, "taylor {taylor}: ratio {ratio}, expected about {want}");
    }
}

#[test]
fn lifted_hamiltonian_is_real() {
    let cfg = common::model(2, 4, 1e-2);
    let mh = lift_model(&cfg, &ParameterPoint::midpoint(6), Caps::new(5, 10), true).unwrap();
    assert!(mh.h.reality_defect() <= 1e-15);
    assert_eq!(mh.h.params(), 6);
}
