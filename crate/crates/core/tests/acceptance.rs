//! End-to-end acceptance checks. Each test prints one `PASS`/`FAIL` line.
//!
//! The long runs share a lock so that their wall-clock budgets are measured
//! without competing for cores.

mod common;

use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Instant;

use nlw_core::model::{four_sine_integral, quartic_coupling, ParameterPoint};
use nlw_core::normal_form::{normal_form_for_model, order2_for_model, select_cutoff, DivisorGate, Order2Options, PipelineOptions};
use nlw_core::norms::{norm_report, tame_vecfield_norm, weighted_l2, ProbeOptions};
use nlw_core::poly::random::{random_real, RandomSpec};
use nlw_core::poly::{poisson_bracket, Caps, PolyHamiltonian};
use nlw_core::rng::indexed_stream;
use nlw_core::runner::{self, RunConfig, RunSummary};
use nlw_core::sim::{integrate, SimulationState, SplittingOrder, WaveSystem};
use num_complex::Complex64;
use rand::Rng;
use serde_json::Value;

static HEAVY: Mutex<()> = Mutex::new(());

fn heavy() -> std::sync::MutexGuard<'static, ()> {
    HEAVY.lock().unwrap_or_else(|e| e.into_inner())
}

/// Prints the verdict past the test harness capture and fails the test when it does not hold.
fn verdict(criterion: u32, name: &str, pass: bool, detail: String) {
    let line = format!("criterion {criterion:>2} {} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
    let _ = writeln!(std::io::stderr(), "{line}");
    assert!(pass, "{line}");
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn load_config(name: &str, out: &Path) -> RunConfig {
    let mut cfg = RunConfig::load(&configs().join(name)).unwrap();
    cfg.output.dir = out.to_path_buf();
    cfg
}

fn report(s: &RunSummary) -> Value {
    let text = std::fs::read_to_string(s.dir.join(format!("{}_report.json", s.command))).unwrap();
    serde_json::from_str(&text).unwrap()
}

fn loglog_fit(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

fn sci(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.3e}")).collect::<Vec<_>>().join(" ")
}

#[test]
fn c01_coupling_coefficients_match_quadrature() {
    let t = Instant::now();
    let q = common::Quadrature::new();
    let lambda: Vec<f64> = (1..=16).map(|j| ((j * j) as f64 + 1.0 + 1.5 / j as f64).sqrt()).collect();
    let mut worst_integral: f64 = 0.0;
    let mut worst_coupling: f64 = 0.0;
    let mut cases = 0;
    for i in 1..=16 {
        for j in 1..=16 {
            for k in 1..=16 {
                for l in 1..=16 {
                    let oracle = common::four_sine_quadrature(&q, i, j, k, l);
                    worst_integral = worst_integral.max((four_sine_integral(i, j, k, l) - oracle).abs());
                    let g = oracle / (lambda[i - 1] * lambda[j - 1] * lambda[k - 1] * lambda[l - 1]).sqrt();
                    worst_coupling = worst_coupling.max((quartic_coupling(i, j, k, l, &lambda) - g).abs());
                    cases += 1;
                }
            }
        }
    }
    let secs = t.elapsed().as_secs_f64();
    verdict(
        1,
        "coupling oracle",
        cases == 65_536 && worst_integral <= 1e-10 && worst_coupling <= 1e-10 && secs < 60.0,
        format!("{cases} tuples, max error {worst_integral:.2e} (integral) {worst_coupling:.2e} (coupling), {secs:.1} s"),
    );
}

fn random_h(seed: u64, index: u64) -> PolyHamiltonian {
    // drawn with |k| <= 2, stored with room for double brackets
    let spec = RandomSpec { n: 2, j: 6, caps: Caps::new(4, 2), min_degree: 1, max_degree: 4, terms: 8 };
    let mut h = random_real(&mut indexed_stream(seed, "algebra", index), &spec);
    h.set_caps(Caps::new(12, 12));
    h
}

fn bracket(u: &PolyHamiltonian, v: &PolyHamiltonian, dropped: &mut usize) -> PolyHamiltonian {
    let (b, rep) = poisson_bracket(u, v).unwrap();
    *dropped += rep.total();
    b
}

#[test]
fn c02_algebra_laws() {
    let (mut anti, mut jacobi, mut dropped): (f64, f64, usize) = (0.0, 0.0, 0);
    for i in 0..100 {
        let (u, v, w) = (random_h(2, 3 * i), random_h(2, 3 * i + 1), random_h(2, 3 * i + 2));
        let mut s = bracket(&u, &v, &mut dropped);
        s.add_assign(&bracket(&v, &u, &mut dropped));
        anti = anti.max(s.max_magnitude());
        let mut j = bracket(&u, &bracket(&v, &w, &mut dropped), &mut dropped);
        j.add_assign(&bracket(&v, &bracket(&w, &u, &mut dropped), &mut dropped));
        j.add_assign(&bracket(&w, &bracket(&u, &v, &mut dropped), &mut dropped));
        jacobi = jacobi.max(j.max_magnitude());
    }
    verdict(
        2,
        "algebra laws",
        anti <= 1e-14 && jacobi <= 1e-12 && dropped == 0,
        format!("100 triples, antisymmetry {anti:.2e}, Jacobi {jacobi:.2e}, truncated terms {dropped}"),
    );
}

#[test]
fn c03_normal_form_residuals() {
    let _g = heavy();
    let t = Instant::now();
    let cfg = common::model(1, 16, 1e-4);
    let gate = DivisorGate { eta: 1e-3, eta_tilde: 1e-3, tau: 7.5, m: 2, n_split: 2 };
    let opts = PipelineOptions { m_order: 2, ..PipelineOptions::default() };
    let nf = normal_form_for_model(&cfg, &ParameterPoint::midpoint(17), &gate, &opts).unwrap();
    let worst = nf.max_nonintegrable(4);
    let classes = nf.check_classification();
    verdict(
        3,
        "normal form residuals",
        worst <= 1e-10 && classes.is_ok() && nf.nonresonant(),
        format!(
            "max non-integrable coefficient {worst:.2e}, classification {}, resonances {}, {} generators, {:.0} s",
            classes.err().unwrap_or_else(|| "ok".into()),
            nf.resonances.len(),
            nf.chain.len(),
            t.elapsed().as_secs_f64()
        ),
    );
}

#[test]
fn c04_frequency_shift_scaling() {
    let epss = [1e-3, 1e-4, 1e-5];
    let gate = DivisorGate { eta: 1e-3, eta_tilde: 1e-3, tau: 7.5, m: 1, n_split: 2 };
    let (mut omega, mut big) = (Vec::new(), Vec::new());
    for &eps in &epss {
        let cfg = common::model(1, 8, eps);
        let caps = Caps::new(4, 8).with_floor(1e-15);
        let nf = order2_for_model(&cfg, &ParameterPoint::midpoint(9), &gate, caps, Order2Options::default()).unwrap();
        let d = nf.freq.deviation();
        omega.push(d.omega);
        big.push(d.big_omega);
    }
    let (so, sb) = (loglog_fit(&epss, &omega), loglog_fit(&epss, &big));
    verdict(
        4,
        "frequency shift scaling",
        (so - 1.0).abs() <= 0.1 && (sb - 1.0).abs() <= 0.1,
        format!("slope {so:.4} (tangential), {sb:.4} (normal, -1 norm); shifts {} / {}", sci(&omega), sci(&big)),
    );
}

#[test]
fn c05_norm_comparison() {
    let spec = RandomSpec { n: 2, j: 6, caps: Caps::new(4, 2), min_degree: 2, max_degree: 4, terms: 8 };
    let mut violations = 0;
    let mut worst_ratio: f64 = 0.0;
    for i in 0..100 {
        let rng = &mut indexed_stream(5, "comparison", i);
        let h = random_real(rng, &spec);
        let rep = norm_report(&h, 1.0, 0.5, 0.5, 200, rng);
        let w = rep.weighted.unwrap();
        worst_ratio = worst_ratio.max(w / rep.tame.upper);
        if w > rep.tame.upper * (1.0 + 1e-12) || rep.tame.probe > rep.tame.upper * (1.0 + 1e-12) {
            violations += 1;
        }
    }
    verdict(5, "norm comparison", violations == 0, format!("100 Hamiltonians, {violations} violations, max weighted/tame {worst_ratio:.3}"));
}

/// Largest ratio of the bracket norm to the product of the factor norms over 100 pairs.
fn bracket_constant(j: usize, seed: u64) -> f64 {
    let (p, s, r) = (1.0, 0.5, 0.5);
    let (sig, sigp) = (s / 4.0, r / 4.0);
    let caps = Caps::new(8, 4);
    let opts = ProbeOptions { trials: 1, iterations: 1 };
    let rng = &mut indexed_stream(seed, "bracket-norms", j as u64);
    let mut worst: f64 = 0.0;
    for i in 0..100u64 {
        let u = common::decaying_real(seed, 2 * i, 2, j, caps, 6, 3.0);
        let v = common::decaying_real(seed, 2 * i + 1, 2, j, caps, 6, 3.0);
        let (b, _) = poisson_bracket(&u, &v).unwrap();
        let lhs = tame_vecfield_norm(&b, p, s - sig, r - sigp, rng, opts).tame.upper;
        let nu = tame_vecfield_norm(&u, p, s, r, rng, opts).tame.upper;
        let nv = tame_vecfield_norm(&v, p, s, r, rng, opts).tame.upper;
        let shape = (1.0 / sig).max(r / sigp) * nu * nv;
        if shape > 0.0 {
            worst = worst.max(lhs / shape);
        }
    }
    worst
}

/// Recorded bound on the bracket ratio for this ensemble; measured values sit near 0.065.
const BRACKET_CONSTANT: f64 = 0.08;

#[test]
fn c06_bracket_estimate() {
    let _g = heavy();
    let (c6, c12) = (bracket_constant(6, 1), bracket_constant(12, 1));
    let change = c12 / c6 - 1.0;
    verdict(
        6,
        "bracket estimate",
        c6 <= BRACKET_CONSTANT && c12 <= BRACKET_CONSTANT && change.abs() <= 0.2,
        format!("constant {c6:.4} at J = 6, {c12:.4} at J = 12 ({:+.1}%), recorded bound {BRACKET_CONSTANT}", 100.0 * change),
    );
}

#[test]
fn c07_tail_estimate() {
    let (delta, m, p) = (0.1, 1u32, 21.0);
    let cutoff = select_cutoff(delta, m, p);
    let factor = delta.powi(m as i32 + 1);
    let mut violations = 0;
    let mut worst: f64 = 0.0;
    for i in 0..1000u64 {
        let rng = &mut indexed_stream(7, "tail", i);
        let len = cutoff + rng.gen_range(1..=200);
        let decay = rng.gen_range(0.0..4.0);
        let density = rng.gen_range(0.05..1.0);
        let mut z = vec![Complex64::new(0.0, 0.0); len];
        for (a, v) in z.iter_mut().enumerate().skip(cutoff) {
            if a == cutoff || rng.gen_bool(density) {
                let scale = ((a + 1) as f64).powf(-decay);
                *v = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)) * scale;
            }
        }
        let (lhs, rhs) = (weighted_l2(&z, 1.0), factor * weighted_l2(&z, p));
        worst = worst.max(lhs / rhs);
        if lhs > rhs {
            violations += 1;
        }
    }
    verdict(
        7,
        "tail estimate",
        violations == 0,
        format!("N = {cutoff}, 1000 vectors, {violations} violations, max ratio {worst:.2e}"),
    );
}

#[test]
fn c08_measure_scaling() {
    let _g = heavy();
    let dir = tempfile::tempdir().unwrap();
    let t = Instant::now();
    let s = runner::cmd_measure(&load_config("measure.toml", dir.path())).unwrap();
    let secs = t.elapsed().as_secs_f64();
    let rep = report(&s);
    let slope = rep["result"]["slope"].as_f64().unwrap_or(f64::NAN);
    let monotone = rep["result"]["monotone"].as_bool().unwrap();
    let fractions: Vec<f64> = rep["result"]["estimates"].as_array().unwrap().iter().map(|e| e["fraction"].as_f64().unwrap()).collect();
    verdict(
        8,
        "measure scaling",
        slope >= 0.35 && monotone && secs <= 600.0,
        format!("slope {slope:.3}, monotone {monotone}, fractions {}, {secs:.0} s", sci(&fractions)),
    );
}

fn lambda(modes: usize) -> Vec<f64> {
    (1..=modes).map(|j| ((j * j) as f64 + 1.0 + 1.5 / j as f64).sqrt()).collect()
}

fn start(modes: usize, amp: f64) -> SimulationState {
    let u = (0..modes).map(|a| amp * ((a as f64 * 1.3).cos() + 0.2) / (a + 1) as f64).collect();
    let v = (0..modes).map(|a| amp * (a as f64 * 0.7).sin() / (a + 1) as f64).collect();
    SimulationState { u, v, t: 0.0 }
}

fn max_diff(a: &SimulationState, b: &SimulationState) -> f64 {
    a.u.iter().zip(&b.u).chain(a.v.iter().zip(&b.v)).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn c09_integrator_quality() {
    // linear flow against the closed-form rotation
    let l = lambda(8);
    let s0 = start(8, 0.3);
    let mut exact: f64 = 0.0;
    for s in integrate(&WaveSystem::new(l.clone(), 0.0), &s0, 10.0, 1e-3, SplittingOrder::Two, 10).unwrap() {
        for a in 0..8 {
            let (sn, cs) = (l[a] * s.t).sin_cos();
            exact = exact.max((s.u[a] - (s0.u[a] * cs + s0.v[a] / l[a] * sn)).abs());
            exact = exact.max((s.v[a] - (-l[a] * s0.u[a] * sn + s0.v[a] * cs)).abs());
        }
    }

    let sys = WaveSystem::new(lambda(8), 1.0);
    let mut s = start(8, 0.4);
    sys.advance(&mut s, 2.0, 1e-3, SplittingOrder::Two).unwrap();
    sys.advance(&mut s, -2.0, 1e-3, SplittingOrder::Two).unwrap();
    let round_trip = max_diff(&s, &start(8, 0.4));

    let sys = WaveSystem::new(lambda(6), 2.0);
    let run = |h: f64| {
        let mut s = start(6, 0.8);
        sys.advance(&mut s, 1.0, h, SplittingOrder::Two).unwrap();
        s
    };
    let reference = run(0.02 / 16.0);
    let ratio = max_diff(&run(0.02), &reference) / max_diff(&run(0.01), &reference);

    let sys = WaveSystem::new(lambda(8), 1e-3);
    let mut s = start(8, 0.5);
    let e0 = sys.energy(&s);
    let mut drift: f64 = 0.0;
    for _ in 0..100 {
        sys.advance(&mut s, 10.0, 1e-3, SplittingOrder::Two).unwrap();
        drift = drift.max(((sys.energy(&s) - e0) / e0).abs());
    }

    verdict(
        9,
        "integrator quality",
        exact <= 1e-12 && round_trip <= 1e-10 && (ratio - 4.0).abs() <= 0.8 && drift <= 1e-6,
        format!("linear error {exact:.2e}, round trip {round_trip:.2e}, halving ratio {ratio:.3}, energy drift {drift:.2e} over T = 1000"),
    );
}

#[test]
fn c10_desk_scale_stability() {
    let _g = heavy();
    let dir = tempfile::tempdir().unwrap();
    let t = Instant::now();
    let s = runner::cmd_stability(&load_config("stability.toml", dir.path())).unwrap();
    let secs = t.elapsed().as_secs_f64();
    let rep = report(&s);
    let r = &rep["result"]["reports"][0];
    let (delta, horizon, dist) = (r["options"]["delta"].as_f64().unwrap(), r["horizon"].as_f64().unwrap(), r["max_distance"].as_f64().unwrap());
    let residual = rep["result"]["invariance_residual"].as_f64();
    let hypothesis = rep["result"]["hypothesis"].as_str().unwrap_or("");
    verdict(
        10,
        "desk-scale stability",
        dist <= 2.0 * delta && horizon >= 1.0 / delta && residual.is_some_and(f64::is_finite) && hypothesis.contains("relaxed") && secs <= 900.0,
        format!("max distance {dist:.3e} over |t| <= {horizon}, bound {:.0e}, on-torus residual {:.2e}, {secs:.0} s", 2.0 * delta, residual.unwrap_or(f64::NAN)),
    );
}

const SMALL: &str = r#"
[model]
m = 1.0
n = 1
J = 3
eps = 1e-3
actions = [0.05]
taylor_order = 3
s = 1.0
r = 0.1

[parameters]
xi = "random"

[gate]
eta = 1e-3
eta_tilde = 1e-3
tau = 7.5
M = 1
N = 2

[experiment]
deltas = [1e-2]
m_exp = 1
p = 2.0
dt = 1e-2
t_override = 5.0
seed = 99
sample_count = 1000

[measure]
eta_tildes = [1e-1, 1e-3]
fast = true

[simulate]
t_end = 2.0
samples = 8
resolution = 16

[stability]
resolution = 16
samples = 6

[norms]
random = 3
samples = 50
"#;

fn run_all(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut cfg = RunConfig::from_toml(SMALL).unwrap();
    cfg.output.dir = dir.to_path_buf();
    runner::cmd_build(&cfg).unwrap();
    runner::cmd_normalform(&cfg).unwrap();
    runner::cmd_measure(&cfg).unwrap();
    runner::cmd_simulate(&cfg).unwrap();
    runner::cmd_stability(&cfg).unwrap();
    runner::cmd_norms(&cfg).unwrap();
    let mut files = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if !p.to_string_lossy().ends_with("_metadata.json") {
                files.insert(p.strip_prefix(dir).unwrap().display().to_string(), std::fs::read(&p).unwrap());
            }
        }
    }
    files
}

#[test]
fn c11_determinism() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let (fa, fb) = (run_all(a.path()), run_all(b.path()));
    let differing: Vec<&String> = fa.iter().filter(|(k, v)| fb.get(*k) != Some(*v)).map(|(k, _)| k).collect();
    verdict(
        11,
        "determinism",
        fa.len() == fb.len() && differing.is_empty() && fa.len() > 20,
        format!("6 commands, {} data files, {} differ {differing:?}", fa.len(), differing.len()),
    );
}
