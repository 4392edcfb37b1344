use num_complex::Complex64;
use smallvec::SmallVec;

use super::{eigen_frequencies, CouplingTable, FrequencyData, ModelConfig, ParameterPoint};
use crate::error::{NlwError, Result};
use crate::poly::{Caps, Coeff, MonomialKey, PhasePoint, PolyHamiltonian, SparseExps};

/// Model Hamiltonian in action-angle form together with its eigendata.
#[derive(Clone, Debug)]
pub struct ModelHamiltonian {
    pub h: PolyHamiltonian,
    pub freq: FrequencyData,
}

/// `H = sum_j lambda_j w_j wbar_j - (eps/4) sum_{ijkl} G_{ijkl} q_i q_j q_k q_l`
/// with `q_j = (w_j + wbar_j)/sqrt 2`, over all `n + J` modes (no angles).
///
/// Here `w_j = (q_j - i qt_j)/sqrt 2`, where `u = sum q_j/sqrt(lambda_j) phi_j`
/// and `u_t = sum sqrt(lambda_j) qt_j phi_j`; with `{w, wbar} = i` the linear
/// flow is `w_j(t) = e^{i lambda_j t} w_j(0)`. The minus sign on the quartic
/// part matches the focusing term `+eps u^3` in the equation.
///
/// With `track_params` every coefficient carries derivatives in `xi_1..xi_{n+J}`.
pub fn build_complex_hamiltonian(
    cfg: &ModelConfig,
    xi: &ParameterPoint,
    track_params: bool,
) -> Result<(PolyHamiltonian, FrequencyData)> {
    cfg.validate()?;
    let modes = cfg.modes();
    let freq = eigen_frequencies(cfg.m, xi, cfg.n, cfg.big_j)?;
    let params = if track_params { modes } else { 0 };
    let mut h = PolyHamiltonian::with_params(0, modes, Caps::new(4, 0), params);

    for j in 0..modes {
        let mut grad = vec![Complex64::new(0.0, 0.0); params];
        if track_params {
            grad[j] = Complex64::new(freq.dlambda(j + 1), 0.0);
        }
        let mut b = SparseExps::new();
        b.push((j as u16, 1));
        let key = MonomialKey::from_sparse(SmallVec::new(), SmallVec::new(), b.clone(), b);
        h.add_term(key, Coeff::with_grad(Complex64::new(freq.lambda[j], 0.0), grad));
    }

    if cfg.eps != 0.0 {
        let table = CouplingTable::new(&freq.lambda);
        for e in &table.entries {
            // (q_a q_b q_c q_d) = 1/4 prod (w + wbar)
            let weight = -cfg.eps / 4.0 * e.multiplicity as f64 * e.value / 4.0;
            let mut grad = vec![Complex64::new(0.0, 0.0); params];
            if track_params {
                // dG/dxi_a = -G count_a / (4 lambda_a^2)
                for &a in &e.modes {
                    let l = freq.lambda[a - 1];
                    grad[a - 1] += Complex64::new(-weight / (4.0 * l * l), 0.0);
                }
            }
            let c = Coeff::with_grad(Complex64::new(weight, 0.0), grad);
            for mask in 0u8..16 {
                let mut bs = SparseExps::new();
                let mut gs = SparseExps::new();
                for (slot, &m) in e.modes.iter().enumerate() {
                    let list = if mask & (1 << slot) != 0 { &mut gs } else { &mut bs };
                    match list.last_mut() {
                        Some(last) if last.0 as usize == m - 1 => last.1 += 1,
                        _ => list.push(((m - 1) as u16, 1)),
                    }
                }
                let key = MonomialKey::from_sparse(SmallVec::new(), SmallVec::new(), bs, gs);
                h.add_term(key, c.clone());
            }
        }
    }
    h.canonicalize();
    Ok((h, freq))
}

fn binomial(e: f64, t: u32) -> f64 {
    (0..t).fold(1.0, |acc, i| acc * (e - i as f64) / (i + 1) as f64)
}

/// Replaces the first `n` complex modes by action-angle variables,
/// `w_j = sqrt(I_j + y_j) e^{i x_j}`, expanding `(I_j + y_j)^{(mu+nu)/2}` in `y`
/// up to total order `taylor_order`. The remaining modes become the normal
/// modes `1..J` of the output.
pub fn action_angle_lift(
    h: &PolyHamiltonian,
    actions: &[f64],
    n: usize,
    taylor_order: u32,
    caps: Caps,
) -> Result<PolyHamiltonian> {
    if taylor_order > caps.degree {
        return Err(NlwError::Cap(format!(
            "taylor_order {taylor_order} exceeds the degree cap {}",
            caps.degree
        )));
    }
    if h.n() != 0 || h.j() < n || actions.len() != n {
        return Err(NlwError::Config {
            path: "model.actions".into(),
            msg: format!("lift needs a complex Hamiltonian with at least {n} modes and {n} actions"),
        });
    }
    let big_j = h.j() - n;
    let mut out = PolyHamiltonian::with_params(n, big_j, caps, h.params());
    for (key, c) in h.iter() {
        let mut k: SmallVec<[i16; 4]> = SmallVec::from_elem(0, n);
        let mut half_powers = vec![0u32; n];
        let mut beta = SparseExps::new();
        let mut gamma = SparseExps::new();
        for &(m, p) in key.beta() {
            let m = m as usize;
            if m < n {
                k[m] += p as i16;
                half_powers[m] += p as u32;
            } else {
                beta.push(((m - n) as u16, p));
            }
        }
        for &(m, p) in key.gamma() {
            let m = m as usize;
            if m < n {
                k[m] -= p as i16;
                half_powers[m] += p as u32;
            } else {
                gamma.push(((m - n) as u16, p));
            }
        }
        // expand prod_j (I_j + y_j)^{e_j} over multi-indices with |t| <= taylor_order
        let mut expansions: Vec<(SmallVec<[u8; 4]>, f64)> = vec![(SmallVec::from_elem(0, n), 1.0)];
        for site in 0..n {
            let e = half_powers[site] as f64 / 2.0;
            let ia = actions[site];
            let mut next = Vec::new();
            for (alpha, f) in &expansions {
                let used: u32 = alpha.iter().map(|&a| a as u32).sum();
                for t in 0..=(taylor_order - used) {
                    let b = binomial(e, t);
                    if b == 0.0 {
                        break;
                    }
                    let mut a2 = alpha.clone();
                    a2[site] = t as u8;
                    next.push((a2, f * b * ia.powf(e - t as f64)));
                }
            }
            expansions = next;
        }
        for (alpha, f) in expansions {
            let nk = MonomialKey::from_sparse(k.clone(), alpha, beta.clone(), gamma.clone());
            out.add_term(nk, c.scaled(Complex64::new(f, 0.0)));
        }
    }
    out.canonicalize();
    Ok(out)
}

/// Builds the model and lifts it with the given caps.
pub fn lift_model(cfg: &ModelConfig, xi: &ParameterPoint, caps: Caps, track_params: bool) -> Result<ModelHamiltonian> {
    let (hc, freq) = build_complex_hamiltonian(cfg, xi, track_params)?;
    let h = action_angle_lift(&hc, &cfg.actions, cfg.n, cfg.taylor_order, caps)?;
    Ok(ModelHamiltonian { h, freq })
}

impl ModelHamiltonian {
    /// Complex coordinates `(w, wbar)` of all modes at an action-angle point.
    pub fn complex_point(actions: &[f64], p: &PhasePoint) -> (Vec<Complex64>, Vec<Complex64>) {
        let i = Complex64::new(0.0, 1.0);
        let mut w = Vec::new();
        let mut wb = Vec::new();
        for (s, &ia) in actions.iter().enumerate() {
            let rho = (Complex64::new(ia, 0.0) + p.y[s]).sqrt();
            w.push(rho * (i * p.x[s]).exp());
            wb.push(rho * (-i * p.x[s]).exp());
        }
        w.extend_from_slice(&p.q);
        wb.extend_from_slice(&p.qbar);
        (w, wb)
    }

    /// Inverse of [`ModelHamiltonian::complex_point`] for real points.
    pub fn action_angle_point(actions: &[f64], w: &[Complex64]) -> PhasePoint {
        let n = actions.len();
        let x: Vec<f64> = w[..n].iter().map(|v| v.arg()).collect();
        let y: Vec<f64> = w[..n].iter().zip(actions).map(|(v, ia)| v.norm_sqr() - ia).collect();
        PhasePoint::real(&x, &y, &w[n..])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(n: usize, big_j: usize, eps: f64) -> ModelConfig {
        ModelConfig { m: 1.0, n, big_j, eps, actions: vec![0.1; n], taylor_order: 3, s: 0.5, r: 0.2 }
    }

    #[test]
    fn zero_eps_is_quadratic() {
        let (h, f) = build_complex_hamiltonian(&cfg(1, 3, 0.0), &ParameterPoint::midpoint(4), false).unwrap();
        assert_eq!(h.len(), 4);
        assert_eq!(h.max_degree(), Some(2));
        let key = MonomialKey::new(&[], &[], &[0, 1, 0, 0], &[0, 1, 0, 0]);
        assert_eq!(h.value(&key).re, f.lambda[1]);
    }

    #[test]
    fn w1_squared_coefficient_matches_hand_expansion() {
        // ((w + wbar)/sqrt2)^4 contains 6/4 w^2 wbar^2
        let c = cfg(1, 1, 0.3);
        let (h, f) = build_complex_hamiltonian(&c, &ParameterPoint::midpoint(2), false).unwrap();
        let g = super::super::quartic_coupling(1, 1, 1, 1, &f.lambda);
        let key = MonomialKey::new(&[], &[], &[2, 0], &[2, 0]);
        assert!((h.value(&key).re - (-0.3 / 4.0 * g * 1.5)).abs() < 1e-16);
        assert!(h.reality_defect() < 1e-16);
    }

    #[test]
    fn lift_of_quadratic_part_is_exact() {
        let c = cfg(2, 2, 0.0);
        let m = lift_model(&c, &ParameterPoint::midpoint(4), Caps::new(6, 4), false).unwrap();
        // lambda_1 (I_1 + y_1) + lambda_2 (I_2 + y_2) + normal quadratics
        assert_eq!(m.h.len(), 1 + 2 + 2);
        let y1 = MonomialKey::new(&[0, 0], &[1, 0], &[0, 0], &[0, 0]);
        assert_eq!(m.h.value(&y1).re, m.freq.lambda[0]);
        let one = MonomialKey::one(2);
        assert!((m.h.value(&one).re - 0.1 * (m.freq.lambda[0] + m.freq.lambda[1])).abs() < 1e-15);
    }

    #[test]
    fn lift_rejects_large_taylor_order() {
        let (h, _) = build_complex_hamiltonian(&cfg(1, 2, 0.1), &ParameterPoint::midpoint(3), false).unwrap();
        assert!(matches!(action_angle_lift(&h, &[0.1], 1, 7, Caps::new(6, 4)), Err(NlwError::Cap(_))));
    }

    #[test]
    fn parameter_derivatives_match_finite_differences() {
        let c = cfg(1, 3, 0.5);
        let xi = ParameterPoint::midpoint(4);
        let (h, _) = build_complex_hamiltonian(&c, &xi, true).unwrap();
        let step = 1e-6;
        for a in 0..4 {
            let mut up = xi.clone();
            up.xi[a] += step;
            let mut dn = xi.clone();
            dn.xi[a] -= step;
            let (hu, _) = build_complex_hamiltonian(&c, &up, false).unwrap();
            let (hd, _) = build_complex_hamiltonian(&c, &dn, false).unwrap();
            for (k, coeff) in h.iter() {
                let fd = (hu.value(k) - hd.value(k)) / (2.0 * step);
                assert!((coeff.grad[a] - fd).norm() < 1e-8, "{k} d/dxi_{a}");
            }
        }
    }
}
