//! Splitting integrator for the truncated wave equation, the torus embedding
//! through the normal form chain and the stability experiment.

mod torus;

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{NlwError, Result};

pub use torus::{distance_to_torus, embed_torus, stability_experiment, DistanceReport, Perturbation, StabilityOptions, StabilityReport, StabilityRow, TorusChart, TorusGrid};

/// Sine coefficients of `u` and `v = u_t` in the basis `phi_a = sqrt(2/pi) sin(a x)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationState {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub t: f64,
}

impl SimulationState {
    pub fn zeros(modes: usize) -> Self {
        Self { u: vec![0.0; modes], v: vec![0.0; modes], t: 0.0 }
    }

    pub fn modes(&self) -> usize {
        self.u.len()
    }

    pub fn is_finite(&self) -> bool {
        self.u.iter().chain(&self.v).all(|x| x.is_finite())
    }

    /// `w_a = (q_a - i qt_a)/sqrt 2` with `q_a = sqrt(lambda_a) u_a` and `qt_a = v_a / sqrt(lambda_a)`.
    pub fn to_complex(&self, lambda: &[f64]) -> Vec<Complex64> {
        self.u
            .iter()
            .zip(&self.v)
            .zip(lambda)
            .map(|((u, v), l)| Complex64::new(l.sqrt() * u, -v / l.sqrt()) / 2f64.sqrt())
            .collect()
    }

    /// Inverse of [`SimulationState::to_complex`] from `w` and an independent `wbar`;
    /// the imaginary parts that a non-real pair would produce are discarded.
    pub fn from_complex(w: &[Complex64], wbar: &[Complex64], lambda: &[f64], t: f64) -> Self {
        let s2 = 2f64.sqrt();
        let i = Complex64::new(0.0, 1.0);
        let mut u = Vec::with_capacity(w.len());
        let mut v = Vec::with_capacity(w.len());
        for ((a, b), l) in w.iter().zip(wbar).zip(lambda) {
            let q = (a + b) / s2;
            let qt = (b - a) / (i * s2);
            u.push(q.re / l.sqrt());
            v.push(qt.re * l.sqrt());
        }
        Self { u, v, t }
    }

    /// `(sum_a a^{2p} u_a^2)^{1/2}`
    pub fn hp_norm(u: &[f64], p: f64) -> f64 {
        u.iter().enumerate().map(|(a, x)| ((a + 1) as f64).powf(2.0 * p) * x * x).sum::<f64>().sqrt()
    }
}

/// Integrator order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub enum SplittingOrder {
    Two,
    Four,
}

impl TryFrom<u32> for SplittingOrder {
    type Error = String;

    fn try_from(v: u32) -> std::result::Result<Self, String> {
        match v {
            2 => Ok(SplittingOrder::Two),
            4 => Ok(SplittingOrder::Four),
            _ => Err(format!("order must be 2 or 4, got {v}")),
        }
    }
}

impl From<SplittingOrder> for u32 {
    fn from(o: SplittingOrder) -> u32 {
        match o {
            SplittingOrder::Two => 2,
            SplittingOrder::Four => 4,
        }
    }
}

/// Truncated NLW `u_tt = u_xx - (m + M_xi) u + eps u^3` on the first `lambda.len()` sine modes.
///
/// The cubic term is evaluated on `2 J + 1` interior collocation points, where
/// the trapezoidal rule integrates every product of four retained sines
/// exactly; the kick is therefore the exact gradient of the truncated quartic energy.
#[derive(Clone, Debug)]
pub struct WaveSystem {
    lambda: Vec<f64>,
    eps: f64,
    /// `sin_table[k * modes + a] = phi_{a+1}(x_k)`
    sin_table: Vec<f64>,
    points: usize,
    weight: f64,
}

impl WaveSystem {
    pub fn new(lambda: Vec<f64>, eps: f64) -> Self {
        let modes = lambda.len();
        let points = 2 * modes + 1;
        let h = PI / (points + 1) as f64;
        let norm = (2.0 / PI).sqrt();
        let mut sin_table = Vec::with_capacity(points * modes);
        for k in 1..=points {
            for a in 1..=modes {
                sin_table.push(norm * ((a * k) as f64 * h).sin());
            }
        }
        Self { lambda, eps, sin_table, points, weight: h }
    }

    pub fn lambda(&self) -> &[f64] {
        &self.lambda
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn modes(&self) -> usize {
        self.lambda.len()
    }

    /// `u` at the collocation points.
    pub fn synthesize(&self, u: &[f64]) -> Vec<f64> {
        let m = self.modes();
        (0..self.points).map(|k| self.sin_table[k * m..(k + 1) * m].iter().zip(u).map(|(s, x)| s * x).sum()).collect()
    }

    /// `int u^3 phi_a dx` for every mode.
    pub fn cubic_projection(&self, u: &[f64]) -> Vec<f64> {
        let m = self.modes();
        let grid = self.synthesize(u);
        let mut out = vec![0.0; m];
        for (k, g) in grid.iter().enumerate() {
            let c = self.weight * g * g * g;
            for (o, s) in out.iter_mut().zip(&self.sin_table[k * m..(k + 1) * m]) {
                *o += c * s;
            }
        }
        out
    }

    /// `sum (v^2 + lambda^2 u^2)/2 - (eps/4) int u^4`.
    pub fn energy(&self, s: &SimulationState) -> f64 {
        let quad: f64 = s.u.iter().zip(&s.v).zip(&self.lambda).map(|((u, v), l)| 0.5 * (v * v + l * l * u * u)).sum();
        if self.eps == 0.0 {
            return quad;
        }
        let quartic: f64 = self.synthesize(&s.u).iter().map(|g| g.powi(4)).sum::<f64>() * self.weight;
        quad - self.eps / 4.0 * quartic
    }

    /// Exact linear flow over time `t`.
    pub fn rotate(&self, s: &mut SimulationState, t: f64) {
        for ((u, v), &l) in s.u.iter_mut().zip(s.v.iter_mut()).zip(&self.lambda) {
            let (sn, cs) = (l * t).sin_cos();
            let (u0, v0) = (*u, *v);
            *u = u0 * cs + v0 / l * sn;
            *v = -l * u0 * sn + v0 * cs;
        }
        s.t += t;
    }

    /// Exact flow of the quartic part over time `t`.
    pub fn kick(&self, s: &mut SimulationState, t: f64) {
        if self.eps == 0.0 {
            return;
        }
        let f = self.cubic_projection(&s.u);
        for (v, fa) in s.v.iter_mut().zip(f) {
            *v += t * self.eps * fa;
        }
    }

    fn strang(&self, s: &mut SimulationState, dt: f64) {
        self.rotate(s, 0.5 * dt);
        self.kick(s, dt);
        self.rotate(s, 0.5 * dt);
    }

    pub fn step(&self, s: &mut SimulationState, dt: f64, order: SplittingOrder) {
        match order {
            SplittingOrder::Two => self.strang(s, dt),
            SplittingOrder::Four => {
                let c = 2f64.powf(1.0 / 3.0);
                let w1 = 1.0 / (2.0 - c);
                let w0 = -c / (2.0 - c);
                self.strang(s, w1 * dt);
                self.strang(s, w0 * dt);
                self.strang(s, w1 * dt);
            }
        }
    }

    /// Advances by `duration` (either sign) in `ceil(|duration| / dt)` equal steps.
    pub fn advance(&self, s: &mut SimulationState, duration: f64, dt: f64, order: SplittingOrder) -> Result<()> {
        if !(dt > 0.0) {
            return Err(NlwError::Precondition(format!("dt must be positive, got {dt}")));
        }
        if duration == 0.0 {
            return Ok(());
        }
        let steps = (duration.abs() / dt * (1.0 - 1e-12)).ceil().max(1.0) as u64;
        let h = duration / steps as f64;
        let t0 = s.t;
        for i in 0..steps {
            let last = s.t;
            self.step(s, h, order);
            if !s.is_finite() {
                return Err(NlwError::Blowup { t_last_finite: last });
            }
            // keep the clock free of accumulated rounding
            s.t = t0 + (i + 1) as f64 * h;
        }
        Ok(())
    }
}

/// Integrates to `t_end` and returns the state at `t_end / samples * i`, `i = 0..=samples`.
pub fn integrate(system: &WaveSystem, state0: &SimulationState, t_end: f64, dt: f64, order: SplittingOrder, samples: usize) -> Result<Vec<SimulationState>> {
    if state0.modes() != system.modes() {
        return Err(NlwError::Precondition(format!("state has {} modes, system {}", state0.modes(), system.modes())));
    }
    let samples = samples.max(1);
    let mut s = state0.clone();
    let mut out = vec![s.clone()];
    for i in 1..=samples {
        let target = state0.t + t_end * i as f64 / samples as f64;
        let step = target - s.t;
        system.advance(&mut s, step, dt, order)?;
        s.t = target;
        out.push(s.clone());
    }
    Ok(out)
}

/// Trajectory table `t,distance,energy,relative_drift`.
pub fn trajectory_csv(rows: &[StabilityRow]) -> String {
    let mut s = String::from("t,distance,energy,relative_drift\n");
    for r in rows {
        s.push_str(&format!("{:e},{:e},{:e},{:e}\n", r.t, r.distance, r.energy, r.relative_drift));
    }
    s
}
