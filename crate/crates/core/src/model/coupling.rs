use std::f64::consts::PI;

use rayon::prelude::*;

/// `int_0^pi phi_a phi_b phi_c phi_d dx` for `phi_j = sqrt(2/pi) sin(jx)`, 1-based indices.
///
/// Expanding the product of sines into cosines leaves eight terms
/// `cos((a +- b +- c +- d) x)`, each integrating to `pi` when its frequency
/// vanishes and to zero otherwise.
pub fn four_sine_integral(a: usize, b: usize, c: usize, d: usize) -> f64 {
    let (a, b, c, d) = (a as i64, b as i64, c as i64, d as i64);
    let z = |v: i64| if v == 0 { 1 } else { 0 };
    let plus = z(a - b - c + d) + z(a - b + c - d) + z(a + b - c - d) + z(a + b + c + d);
    let minus = z(a - b - c - d) + z(a - b + c + d) + z(a + b - c + d) + z(a + b + c - d);
    (plus - minus) as f64 / (2.0 * PI)
}

/// `G_{ijkl} = int phi_i phi_j phi_k phi_l / sqrt(lambda_i lambda_j lambda_k lambda_l)`.
pub fn quartic_coupling(i: usize, j: usize, k: usize, l: usize, lambda: &[f64]) -> f64 {
    let integral = four_sine_integral(i, j, k, l);
    if integral == 0.0 {
        return 0.0;
    }
    integral / (lambda[i - 1] * lambda[j - 1] * lambda[k - 1] * lambda[l - 1]).sqrt()
}

/// Sorted quadruples `a <= b <= c <= d <= modes` with a non-zero four-sine integral.
pub fn sorted_quadruples(modes: usize) -> Vec<([usize; 4], f64)> {
    (1..=modes)
        .into_par_iter()
        .flat_map_iter(|a| {
            let mut out = Vec::new();
            for b in a..=modes {
                for c in b..=modes {

                    for d in c..=modes {
                        let v = four_sine_integral(a, b, c, d);
                        if v != 0.0 {
                            out.push(([a, b, c, d], v));
                        }
                    }
                }
            }
            out
        })
        .collect()
}

/// Non-zero couplings over sorted quadruples, with permutation multiplicities.
#[derive(Clone, Debug)]
pub struct CouplingTable {
    pub entries: Vec<CouplingEntry>,
}

#[derive(Clone, Debug)]
pub struct CouplingEntry {
    /// 1-based, sorted.
    pub modes: [usize; 4],
    pub value: f64,
    /// Number of ordered quadruples that are permutations of `modes`.
    pub multiplicity: u32,
}

impl CouplingTable {
    pub fn new(lambda: &[f64]) -> Self {
        let entries = sorted_quadruples(lambda.len())
            .into_iter()
            .map(|(m, integral)| {
                let value = integral / m.iter().map(|&i| lambda[i - 1]).product::<f64>().sqrt();
                CouplingEntry { modes: m, value, multiplicity: permutations(&m) }
            })
            .collect();
        Self { entries }
    }
}

fn permutations(m: &[usize; 4]) -> u32 {
    let mut denom = 1;
    let mut run = 1;
    for w in 1..4 {
        if m[w] == m[w - 1] {
            run += 1;
            denom *= run;
        } else {
            run = 1;
        }
    }
    24 / denom
}
