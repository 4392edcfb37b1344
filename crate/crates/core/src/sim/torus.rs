use std::sync::OnceLock;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{SimulationState, SplittingOrder, WaveSystem};
use crate::error::{NlwError, Result};
use crate::model::{eigen_frequencies, ModelConfig, ModelHamiltonian, ParameterPoint};
use crate::normal_form::{CompiledChain, Direction, FlowOptions, TransformChain};
use crate::poly::{CompiledPoly, PhasePoint, PolyHamiltonian};

/// Approximate invariant torus: the image of `{y = 0, z = 0}` under the
/// inverse of the normal form chain.
#[derive(Clone, Debug)]
pub struct TorusChart {
    pub n: usize,
    pub big_j: usize,
    pub actions: Vec<f64>,
    pub xi: ParameterPoint,
    /// Eigenfrequencies of all `n + J` modes.
    pub lambda: Vec<f64>,
    pub eps: f64,
    pub chain: TransformChain,
    /// Grid points per angle.
    pub resolution: usize,
    pub flow: FlowOptions,
    compiled: CompiledChain,
    field: Option<CompiledPoly>,
    grid: OnceLock<TorusGrid>,
}

impl TorusChart {
    /// `normal_form` is the transformed Hamiltonian; when given, its vector
    /// field on the torus is reported as the invariance residual.
    pub fn new(cfg: &ModelConfig, xi: &ParameterPoint, chain: TransformChain, normal_form: Option<&PolyHamiltonian>, resolution: usize) -> Result<Self> {
        cfg.validate()?;
        if resolution < 2 {
            return Err(NlwError::Config { path: "experiment.resolution".into(), msg: "at least 2 grid points per angle".into() });
        }
        if !cfg.action_window_ok() {
            return Err(NlwError::Config { path: "model.actions".into(), msg: "every action must exceed r^2".into() });
        }
        let freq = eigen_frequencies(cfg.m, xi, cfg.n, cfg.big_j)?;
        let compiled = chain.compile();
        let field = normal_form.map(|h| h.vector_field().compile());
        Ok(Self {
            n: cfg.n,
            big_j: cfg.big_j,
            actions: cfg.actions.clone(),
            xi: xi.clone(),
            lambda: freq.lambda,
            eps: cfg.eps,
            chain,
            resolution,
            flow: FlowOptions::default(),
            compiled,
            field,
            grid: OnceLock::new(),
        })
    }

    /// Chart without coordinate changes: the torus of the linear equation.
    pub fn linear(cfg: &ModelConfig, xi: &ParameterPoint, resolution: usize) -> Result<Self> {
        Self::new(cfg, xi, TransformChain::default(), None, resolution)
    }

    pub fn modes(&self) -> usize {
        self.n + self.big_j
    }

    pub fn system(&self) -> WaveSystem {
        WaveSystem::new(self.lambda.clone(), self.eps)
    }

    /// Normal form coordinates of the torus point with the given angles.
    pub fn torus_point(&self, angles: &[f64]) -> PhasePoint {
        PhasePoint::real(angles, &vec![0.0; self.n], &vec![Complex64::new(0.0, 0.0); self.big_j])
    }

    /// Largest `|y'|` or `|z'|` of the normal form vector field over the angle grid.
    pub fn invariance_residual(&self) -> Option<f64> {
        let field = self.field.as_ref()?;
        let pts = grid_angles(self.n, self.resolution);
        let worst = pts
            .par_iter()
            .map(|a| field.eval(&self.torus_point(a))[self.n..].iter().map(|c| c.norm()).fold(0.0, f64::max))
            .reduce(|| 0.0, f64::max);
        Some(worst)
    }

    pub fn grid(&self) -> Result<&TorusGrid> {
        if let Some(g) = self.grid.get() {
            return Ok(g);
        }
        let g = TorusGrid::build(self)?;
        Ok(self.grid.get_or_init(|| g))
    }
}

fn grid_angles(n: usize, res: usize) -> Vec<Vec<f64>> {
    let h = std::f64::consts::TAU / res as f64;
    let total = res.pow(n as u32);
    (0..total)
        .map(|mut idx| {
            (0..n)
                .map(|_| {
                    let a = (idx % res) as f64 * h;
                    idx /= res;
                    a
                })
                .collect()
        })
        .collect()
}

/// Embedded states on the angle grid.
#[derive(Clone, Debug)]
pub struct TorusGrid {
    pub angles: Vec<Vec<f64>>,
    pub states: Vec<SimulationState>,
}

impl TorusGrid {
    fn build(chart: &TorusChart) -> Result<Self> {
        let angles = grid_angles(chart.n, chart.resolution);
        let states = angles.par_iter().map(|a| embed_torus(chart, a)).collect::<Result<Vec<_>>>()?;
        Ok(Self { angles, states })
    }
}

/// Sets `(x, y, z) = (angles, 0, 0)`, maps back through the chain, undoes the
/// action-angle lift and the complex coordinates.
pub fn embed_torus(chart: &TorusChart, angles: &[f64]) -> Result<SimulationState> {
    if angles.len() != chart.n {
        return Err(NlwError::Precondition(format!("expected {} angles, got {}", chart.n, angles.len())));
    }
    let p = chart.torus_point(angles);
    let p = chart.compiled.apply(&p, Direction::Inverse, chart.flow)?;
    let (w, wb) = ModelHamiltonian::complex_point(&chart.actions, &p);
    Ok(SimulationState::from_complex(&w, &wb, &chart.lambda, 0.0))
}

/// Result of a distance evaluation. The distance is a minimum over sampled
/// torus points, hence an upper bound of the infimum.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistanceReport {
    /// `H^p` distance of `u`.
    pub distance: f64,
    /// Distance of `(u, v)` with `v` measured in `H^{p-1}`, at the angles minimising the `u` distance.
    pub phase_distance: f64,
    pub angles: Vec<f64>,
    /// Best value on the grid before refinement.
    pub grid_distance: f64,
    pub upper_bound: bool,
}

fn weighted_sq(a: &[f64], b: &[f64], p: f64) -> f64 {
    a.iter().zip(b).enumerate().map(|(i, (x, y))| ((i + 1) as f64).powf(2.0 * p) * (x - y).powi(2)).sum()
}

const GOLDEN: f64 = 0.618_033_988_749_894_9;

/// Golden-section minimisation of `f` on `[a, b]`.
fn golden<F: FnMut(f64) -> Result<f64>>(mut f: F, mut a: f64, mut b: f64, tol: f64) -> Result<(f64, f64)> {
    let mut c = b - GOLDEN * (b - a);
    let mut d = a + GOLDEN * (b - a);
    let mut fc = f(c)?;
    let mut fd = f(d)?;
    while (b - a).abs() > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - GOLDEN * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + GOLDEN * (b - a);
            fd = f(d)?;
        }
    }
    Ok(if fc < fd { (c, fc) } else { (d, fd) })
}

/// Grid minimum of the `H^p` distance of `u` to the torus followed by one
/// local refinement pass (cyclic golden-section search within one grid cell
/// of the best grid point).
pub fn distance_to_torus(state: &SimulationState, chart: &TorusChart, p: f64) -> Result<DistanceReport> {
    if !(p >= 1.0) {
        return Err(NlwError::Precondition(format!("p must be at least 1, got {p}")));
    }
    if state.modes() != chart.modes() {
        return Err(NlwError::Precondition(format!("state has {} modes, chart {}", state.modes(), chart.modes())));
    }
    let grid = chart.grid()?;
    let (best, grid_sq) = grid
        .states
        .iter()
        .map(|s| weighted_sq(&state.u, &s.u, p))
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, d)| if d < acc.1 { (i, d) } else { acc });
    let mut angles = grid.angles[best].clone();
    let mut sq = grid_sq;
    let h = std::f64::consts::TAU / chart.resolution as f64;
    if grid_sq > 0.0 {
        for _sweep in 0..if chart.n == 1 { 1 } else { 3 } {
            for dim in 0..chart.n {
                let centre = angles[dim];
                let mut trial = angles.clone();
                let (x, v) = golden(
                    |t| {
                        trial[dim] = t;
                        Ok(weighted_sq(&state.u, &embed_torus(chart, &trial)?.u, p))
                    },
                    centre - h,
                    centre + h,
                    1e-10,
                )?;
                if v < sq {
                    sq = v;
                    angles[dim] = x;
                }
            }
        }
    }
    let on = embed_torus(chart, &angles)?;
    let phase_sq = weighted_sq(&state.u, &on.u, p) + weighted_sq(&state.v, &on.v, p - 1.0);
    Ok(DistanceReport { distance: sq.sqrt(), phase_distance: phase_sq.sqrt(), angles, grid_distance: grid_sq.sqrt(), upper_bound: true })
}

/// Direction of the initial displacement.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Perturbation {
    /// Absolute mode index, default `n + 1`.
    pub mode: Option<usize>,
    /// Displace `v` instead of `u` (size measured in `H^{p-1}`).
    #[serde(default)]
    pub velocity: bool,
}

impl Default for Perturbation {
    fn default() -> Self {
        Self { mode: None, velocity: false }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StabilityOptions {
    pub delta: f64,
    pub m_exp: u32,
    pub p: f64,
    pub dt: f64,
    pub order: SplittingOrder,
    /// Replaces the horizon `delta^{-M_exp}`.
    pub t_override: Option<f64>,
    pub perturbation: Perturbation,
    /// Angles of the unperturbed starting point.
    pub angles: Vec<f64>,
    /// Points of the logarithmic sampling grid in each time direction.
    pub samples: usize,
    /// Also integrate backwards in time.
    pub backward: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityRow {
    pub t: f64,
    pub distance: f64,
    pub phase_distance: f64,
    pub energy: f64,
    pub relative_drift: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub options: StabilityOptions,
    pub horizon: f64,
    pub initial_distance: f64,
    pub max_distance: f64,
    pub max_phase_distance: f64,
    /// First sampled time (in absolute value) with distance above `2 delta`.
    pub exit_time: Option<f64>,
    pub max_relative_drift: f64,
    pub invariance_residual: Option<f64>,
    /// Time of the last finite state when the integration blew up.
    pub blowup: Option<f64>,
    /// Smallest `p` the long-time result assumes, `24 (M+7)^4 + 1`.
    pub p_required: f64,
    pub hypothesis_holds: bool,
    pub distance_is_upper_bound: bool,
    pub rows: Vec<StabilityRow>,
}

/// Logarithmic time grid on `(0, horizon]` starting near `10 dt`.
pub fn log_times(horizon: f64, dt: f64, samples: usize) -> Vec<f64> {
    let samples = samples.max(2);
    let t0 = (10.0 * dt).min(horizon);
    if t0 >= horizon {
        return vec![horizon];
    }
    let r = (horizon / t0).ln();
    (0..samples).map(|i| if i + 1 == samples { horizon } else { t0 * (r * i as f64 / (samples - 1) as f64).exp() }).collect()
}

/// Perturbs the on-torus state by `delta` (in `H^p`) along the configured
/// direction, integrates to `delta^{-M_exp}` and samples the distance to the
/// torus on a logarithmic time grid.
pub fn stability_experiment(chart: &TorusChart, opts: &StabilityOptions) -> Result<StabilityReport> {
    if !(opts.delta > 0.0) {
        return Err(NlwError::Config { path: "experiment.delta".into(), msg: format!("must be positive, got {}", opts.delta) });
    }
    if !(opts.dt > 0.0) {
        return Err(NlwError::Config { path: "experiment.dt".into(), msg: format!("must be positive, got {}", opts.dt) });
    }
    let mode = opts.perturbation.mode.unwrap_or(chart.n + 1);
    if mode == 0 || mode > chart.modes() {
        return Err(NlwError::Config { path: "experiment.perturbation.mode".into(), msg: format!("mode {mode} outside 1..={}", chart.modes()) });
    }
    let horizon = opts.t_override.unwrap_or_else(|| opts.delta.powi(-(opts.m_exp as i32)));
    let system = chart.system();
    let mut start = embed_torus(chart, &opts.angles)?;
    if opts.perturbation.velocity {
        start.v[mode - 1] += opts.delta / (mode as f64).powf(opts.p - 1.0);
    } else {
        start.u[mode - 1] += opts.delta / (mode as f64).powf(opts.p);
    }
    let e0 = system.energy(&start);
    let row = |s: &SimulationState| -> Result<StabilityRow> {
        let d = distance_to_torus(s, chart, opts.p)?;
        let e = system.energy(s);
        Ok(StabilityRow { t: s.t, distance: d.distance, phase_distance: d.phase_distance, energy: e, relative_drift: ((e - e0) / e0).abs() })
    };
    let first = row(&start)?;
    let mut rows = vec![first.clone()];
    let mut blowup = None;
    let times = log_times(horizon, opts.dt, opts.samples);
    let directions: &[f64] = if opts.backward { &[1.0, -1.0] } else { &[1.0] };
    for &sign in directions {
        let mut s = start.clone();
        for &t in &times {
            let step = sign * t - s.t;
            match system.advance(&mut s, step, opts.dt, opts.order) {
                Ok(()) => {}
                Err(NlwError::Blowup { t_last_finite }) => {
                    blowup = Some(t_last_finite);
                    break;
                }
                Err(e) => return Err(e),
            }
            s.t = sign * t;
            rows.push(row(&s)?);
        }
    }
    rows.sort_by(|a, b| a.t.abs().total_cmp(&b.t.abs()).then(a.t.total_cmp(&b.t)));
    let max_distance = rows.iter().map(|r| r.distance).fold(0.0, f64::max);
    let exit_time = rows.iter().find(|r| r.distance > 2.0 * opts.delta).map(|r| r.t.abs());
    let p_required = 24.0 * (opts.m_exp as f64 + 7.0).powi(4) + 1.0;
    Ok(StabilityReport {
        options: opts.clone(),
        horizon,
        initial_distance: first.distance,
        max_distance,
        max_phase_distance: rows.iter().map(|r| r.phase_distance).fold(0.0, f64::max),
        exit_time,
        max_relative_drift: rows.iter().map(|r| r.relative_drift).fold(0.0, f64::max),
        invariance_residual: chart.invariance_residual(),
        blowup,
        p_required,
        hypothesis_holds: opts.p >= p_required,
        distance_is_upper_bound: true,
        rows,
    })
}
