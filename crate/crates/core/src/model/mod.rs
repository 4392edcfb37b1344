//! The Dirichlet NLW Hamiltonian: eigendata, quartic couplings, complex
//! coordinates and the action-angle lift of the tangential modes.

mod coupling;
mod hamiltonian;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{NlwError, Result};

pub use coupling::{four_sine_integral, quartic_coupling, sorted_quadruples, CouplingTable};
pub use hamiltonian::{action_angle_lift, build_complex_hamiltonian, lift_model, ModelHamiltonian};

/// Physical and truncation parameters of the model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Mass `m >= 0`.
    pub m: f64,
    /// Number of tangential modes.
    pub n: usize,
    /// Number of normal modes kept.
    #[serde(rename = "J")]
    pub big_j: usize,
    /// Strength of the cubic term in the equation.
    pub eps: f64,
    /// Nominal actions `I_j > 0` of the tangential modes.
    pub actions: Vec<f64>,
    /// Order of the expansion of `sqrt(I + y)` in `y`.
    pub taylor_order: u32,
    pub s: f64,
    pub r: f64,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |path: &str, msg: String| Err(NlwError::Config { path: path.into(), msg });
        if !(self.m >= 0.0 && self.m.is_finite()) {
            return bad("model.m", format!("mass must be a non-negative number, got {}", self.m));
        }
        if self.n == 0 {
            return bad("model.n", "at least one tangential mode is required".into());
        }
        if self.big_j == 0 {
            return bad("model.J", "at least one normal mode is required".into());
        }
        if !self.eps.is_finite() {
            return bad("model.eps", "must be finite".into());
        }
        if self.actions.len() != self.n {
            return bad("model.actions", format!("expected {} entries, got {}", self.n, self.actions.len()));
        }
        if let Some(i) = self.actions.iter().position(|&a| !(a > 0.0 && a.is_finite())) {
            return bad(&format!("model.actions[{i}]"), "actions must be positive".into());
        }
        if self.taylor_order == 0 {
            return bad("model.taylor_order", "must be at least 1".into());
        }
        if !(self.s > 0.0 && self.s <= 1.0) {
            return bad("model.s", format!("must lie in (0, 1], got {}", self.s));
        }
        if !(self.r > 0.0 && self.r <= 1.0) {
            return bad("model.r", format!("must lie in (0, 1], got {}", self.r));
        }
        Ok(())
    }

    pub fn modes(&self) -> usize {
        self.n + self.big_j
    }

    /// The domain constraint `r^2 < min I_j` under which `sqrt(I + y)` is analytic.
    pub fn action_window_ok(&self) -> bool {
        let min = self.actions.iter().cloned().fold(f64::INFINITY, f64::min);
        self.r * self.r < min
    }
}

/// External parameters `xi_j in [1/j, 2/j]`, one per mode `j = 1..n+J`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParameterPoint {
    pub xi: Vec<f64>,
}

impl ParameterPoint {
    pub fn new(xi: Vec<f64>) -> Result<Self> {
        let p = Self { xi };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        for (i, &v) in self.xi.iter().enumerate() {
            let (lo, hi) = Self::bounds(i + 1);
            // tolerate representation error at the box edges
            let slack = 1e-15 * hi;
            if !(v >= lo - slack && v <= hi + slack) {
                return Err(NlwError::ParameterDomain { index: i + 1, value: v, lo, hi });
            }
        }
        Ok(())
    }

    /// `[1/j, 2/j]` for 1-based `j`.
    pub fn bounds(j: usize) -> (f64, f64) {
        (1.0 / j as f64, 2.0 / j as f64)
    }

    /// `xi_j = 1.5 / j`.
    pub fn midpoint(len: usize) -> Self {
        Self { xi: (1..=len).map(|j| 1.5 / j as f64).collect() }
    }

    /// Uniform sample of the box.
    pub fn random<R: Rng>(rng: &mut R, len: usize) -> Self {
        Self { xi: (1..=len).map(|j| rng.gen_range(1.0..=2.0) / j as f64).collect() }
    }

    pub fn len(&self) -> usize {
        self.xi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xi.is_empty()
    }

    /// `xi_j` for 1-based `j`; beyond the stored range the box midpoint is used.
    pub fn get(&self, j: usize) -> f64 {
        self.xi.get(j - 1).copied().unwrap_or(1.5 / j as f64)
    }
}

/// Largest deviations of corrected frequencies from the bare ones.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FrequencyDeviation {
    /// `max_j |omega_corr_j - omega_j|`
    pub omega: f64,
    /// `max_{j,a} |d/dxi_a (omega_corr_j - omega_j)|`, when derivatives are tracked
    pub omega_grad: Option<f64>,
    /// `sup_j j |Omega_corr_j - Omega_j|`
    pub big_omega: f64,
    pub big_omega_grad: Option<f64>,
}

/// Eigenfrequencies of the linear problem and their corrected versions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrequencyData {
    pub m: f64,
    pub n: usize,
    pub big_j: usize,
    /// `lambda_j`, `j = 1..n+J`.
    pub lambda: Vec<f64>,
    /// Tangential frequencies `omega_j = lambda_j`, `j = 1..n`.
    pub omega: Vec<f64>,
    /// Normal frequencies `Omega_j = lambda_{j+n}`, `j = 1..J`.
    pub big_omega: Vec<f64>,
    pub omega_corr: Vec<f64>,
    pub big_omega_corr: Vec<f64>,
    /// Derivatives of the corrected frequencies, `[j][a] = d/dxi_a`, when tracked.
    pub omega_corr_grad: Option<Vec<Vec<f64>>>,
    pub big_omega_corr_grad: Option<Vec<Vec<f64>>>,
}

/// `lambda_j = sqrt(j^2 + m + xi_j)` for the stored modes; `xi` must lie in the box.
pub fn eigen_frequencies(m: f64, xi: &ParameterPoint, n: usize, big_j: usize) -> Result<FrequencyData> {
    if xi.len() != n + big_j {
        return Err(NlwError::Config {
            path: "xi".into(),
            msg: format!("expected {} parameters, got {}", n + big_j, xi.len()),
        });
    }
    xi.validate()?;
    let lambda: Vec<f64> = (1..=n + big_j).map(|j| lambda_at(m, j, xi.get(j))).collect();
    let omega = lambda[..n].to_vec();
    let big_omega = lambda[n..].to_vec();
    Ok(FrequencyData {
        m,
        n,
        big_j,
        omega_corr: omega.clone(),
        big_omega_corr: big_omega.clone(),
        lambda,
        omega,
        big_omega,
        omega_corr_grad: None,
        big_omega_corr_grad: None,
    })
}

pub fn lambda_at(m: f64, j: usize, xi_j: f64) -> f64 {
    ((j * j) as f64 + m + xi_j).sqrt()
}

impl FrequencyData {
    /// `d lambda_j / d xi_j = 1 / (2 lambda_j)`; all other derivatives vanish.
    pub fn dlambda(&self, j: usize) -> f64 {
        0.5 / self.lambda[j - 1]
    }

    /// Corrected normal frequency for 1-based `j`. Past the truncation the bare
    /// frequency at the box midpoint is used.
    pub fn big_omega_at(&self, j: usize) -> f64 {
        if j <= self.big_j {
            self.big_omega_corr[j - 1]
        } else {
            lambda_at(self.m, j + self.n, 1.5 / (j + self.n) as f64)
        }
    }

    pub fn deviation(&self) -> FrequencyDeviation {
        let omega = self.omega.iter().zip(&self.omega_corr).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let big_omega = self
            .big_omega
            .iter()
            .zip(&self.big_omega_corr)
            .enumerate()
            .map(|(i, (a, b))| (a - b).abs() * (i + 1) as f64)
            .fold(0.0, f64::max);
        let n = self.n;
        let grad_dev = |grads: &Option<Vec<Vec<f64>>>, offset: usize, weighted: bool| {
            grads.as_ref().map(|g| {
                let mut worst: f64 = 0.0;
                for (j, row) in g.iter().enumerate() {
                    let mode = j + 1 + offset;
                    for (a, &v) in row.iter().enumerate() {
                        let bare = if a + 1 == mode { self.dlambda(mode) } else { 0.0 };
                        let w = if weighted { (j + 1) as f64 } else { 1.0 };
                        worst = worst.max((v - bare).abs() * w);
                    }
                }
                worst
            })
        };
        FrequencyDeviation {
            omega,
            omega_grad: grad_dev(&self.omega_corr_grad, 0, false),
            big_omega,
            big_omega_grad: grad_dev(&self.big_omega_corr_grad, n, true),
        }
    }

    /// CSV table `j,lambda,omega_or_Omega` with the corrected value in the last column.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("j,lambda,omega_or_Omega\n");
        for (i, l) in self.lambda.iter().enumerate() {
            let corr = if i < self.n { self.omega_corr[i] } else { self.big_omega_corr[i - self.n] };
            s.push_str(&format!("{},{:e},{:e}\n", i + 1, l, corr));
        }
        s
    }
}
