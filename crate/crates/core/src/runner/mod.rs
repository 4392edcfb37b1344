//! Configuration-driven runs: each command reads a [`RunConfig`], drives one
//! module and writes plot-ready data plus a JSON report into the output
//! directory. Data files and reports are deterministic; wall-clock times go
//! to `<command>_metadata.json` only.

mod config;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::error::{NlwError, Result};
use crate::model::{build_complex_hamiltonian, lift_model};
use crate::normal_form::{normal_form_for_model, NormalFormResult};
use crate::norms::norm_report;
use crate::poly::random::{random_real, RandomSpec};
use crate::poly::{Caps, PolyHamiltonian};
use crate::resonance::{loglog_slope, measure_csv, measure_sweep, MeasureSetup};
use crate::rng;
use crate::sim::{distance_to_torus, embed_torus, integrate, stability_experiment, trajectory_csv, StabilityOptions, StabilityRow, TorusChart};

pub use config::{
    CutoffSpec, ExperimentBlock, GateBlock, MeasureBlock, NormalFormBlock, NormsBlock, OutputBlock, ParameterBlock, Resolved, RunConfig, SimulateBlock,
    StabilityBlock, XiSpec,
};

pub const TOOL: &str = "nlw";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct FileRecord {
    pub name: String,
    pub sha256: String,
}

/// What a command wrote. `failure` is set when the outputs were written but
/// the run still has to be reported as failed (a resonance in the partial
/// normal form, say).
#[derive(Debug)]
pub struct RunSummary {
    pub command: String,
    pub dir: PathBuf,
    pub files: Vec<FileRecord>,
    pub lines: Vec<String>,
    pub failure: Option<NlwError>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let d = Sha256::digest(bytes);
    let mut s = String::with_capacity(64);
    for b in d {
        let _ = write!(s, "{b:02x}");
    }
    s
}

struct Output {
    dir: PathBuf,
    files: Vec<FileRecord>,
}

impl Output {
    fn new(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(Self { dir: dir.to_path_buf(), files: Vec::new() })
    }

    fn write(&mut self, name: &str, contents: &str) -> Result<String> {
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(&path, contents)?;
        let sha = sha256_hex(contents.as_bytes());
        self.files.push(FileRecord { name: name.to_string(), sha256: sha.clone() });
        Ok(sha)
    }

    /// Writes `<command>_report.json`, `<command>.sha256` and `<command>_metadata.json`.
    fn finish(mut self, command: &str, cfg: &RunConfig, resolved: &Resolved, result: Value, started: Instant) -> Result<Vec<FileRecord>> {
        let report = json!({
            "tool": TOOL,
            "version": VERSION,
            "command": command,
            "config": cfg,
            "resolved": resolved,
            "result": result,
            "files": self.files,
        });
        let text = serde_json::to_string_pretty(&report).expect("report serializes") + "\n";
        self.write(&format!("{command}_report.json"), &text)?;
        let mut sums = String::new();
        for f in &self.files {
            let _ = writeln!(sums, "{}  {}", f.sha256, f.name);
        }
        std::fs::write(self.dir.join(format!("{command}.sha256")), sums)?;
        let now = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        let meta = json!({
            "command": command,
            "finished_unix": now,
            "elapsed_seconds": started.elapsed().as_secs_f64(),
            "threads": rayon::current_num_threads(),
        });
        std::fs::write(self.dir.join(format!("{command}_metadata.json")), serde_json::to_string_pretty(&meta).expect("metadata serializes") + "\n")?;
        Ok(self.files)
    }
}

fn summary(command: &str, cfg: &RunConfig, files: Vec<FileRecord>, lines: Vec<String>, failure: Option<NlwError>) -> RunSummary {
    RunSummary { command: command.into(), dir: cfg.output.dir.clone(), files, lines, failure }
}

fn term_counts(h: &PolyHamiltonian) -> Value {
    let mut by_degree = std::collections::BTreeMap::new();
    for (k, _) in h.iter() {
        *by_degree.entry(k.degree().to_string()).or_insert(0usize) += 1;
    }
    json!({ "total": h.len(), "by_degree": by_degree })
}

/// Complex Hamiltonian, its action-angle lift and the frequency table.
pub fn cmd_build(cfg: &RunConfig) -> Result<RunSummary> {
    let started = Instant::now();
    cfg.validate()?;
    let resolved = cfg.resolved()?;
    let xi = cfg.xi()?;
    let (h, freq) = build_complex_hamiltonian(&cfg.model, &xi, false)?;
    let lifted = lift_model(&cfg.model, &xi, cfg.pipeline().caps(), false)?;
    let mut out = Output::new(&cfg.output.dir)?;
    out.write("hamiltonian.txt", &h.to_text())?;
    out.write("lifted.txt", &lifted.h.to_text())?;
    out.write("frequencies.csv", &freq.to_csv())?;
    let result = json!({
        "complex_terms": term_counts(&h),
        "lifted_terms": term_counts(&lifted.h),
        "reality_defect": h.reality_defect(),
    });
    let lines = vec![format!("complex Hamiltonian: {} terms; lifted: {} terms", h.len(), lifted.h.len())];
    let files = out.finish("build", cfg, &resolved, result, started)?;
    Ok(summary("build", cfg, files, lines, None))
}

fn stage_of(label: &str) -> &str {
    if label.starts_with("order2") {
        "order2"
    } else {
        label
    }
}

fn write_normal_form(out: &mut Output, nf: &NormalFormResult) -> Result<Value> {
    for (name, part) in [
        ("n_breve", &nf.n_breve),
        ("z", &nf.z),
        ("p", &nf.p),
        ("q", &nf.q),
        ("remainder", &nf.remainder),
        ("low_residual", &nf.low_residual),
        ("resonant", &nf.resonant),
    ] {
        out.write(&format!("{name}.txt"), &part.to_text())?;
    }
    out.write("frequencies.csv", &nf.freq.to_csv())?;
    out.write("residuals.csv", &nf.residuals_csv())?;
    let mut entries = Vec::new();
    let mut stages: Vec<String> = Vec::new();
    for (i, e) in nf.chain.entries.iter().enumerate() {
        let file = format!("chain/{i:02}_{}.txt", e.label);
        let sha = out.write(&file, &e.generator.to_text())?;
        let stage = stage_of(&e.label).to_string();
        if stages.last() != Some(&stage) {
            stages.push(stage.clone());
        }
        entries.push(json!({
            "index": i,
            "label": e.label,
            "stage": stage,
            "time": e.time,
            "terms": e.generator.len(),
            "low_degree": e.low_degree,
            "file": file,
            "sha256": sha,
        }));
    }
    let manifest = json!({
        "semantics": "H_new = H_old o flow(generator, time); forward map applies entries in order with -time",
        "stages": stages,
        "stage_count": stages.len(),
        "entries": entries,
    });
    out.write("chain.json", &(serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n"))?;
    let max_degree = nf.order.map_or(2, |m| m + 2);
    let worst_residual = nf.residuals.iter().map(|r| r.residual).fold(0.0, f64::max);
    Ok(json!({
        "order": nf.order,
        "n_split": nf.n_split,
        "sweeps": nf.sweeps,
        "stage_count": stages.len(),
        "terms": {
            "n_breve": nf.n_breve.len(),
            "z": nf.z.len(),
            "p": nf.p.len(),
            "q": nf.q.len(),
            "remainder": nf.remainder.len(),
            "low_residual": nf.low_residual.len(),
            "resonant": nf.resonant.len(),
        },
        "max_nonintegrable": nf.max_nonintegrable(max_degree),
        "max_stage_residual": worst_residual,
        "classification": match nf.check_classification() { Ok(()) => "ok".to_string(), Err(e) => e },
        "frequency_deviation": nf.freq.deviation(),
        "resonances": nf.resonances,
        "truncation": nf.truncation,
    }))
}

/// Order-2 step plus partial normal form of order `M + 2`.
pub fn cmd_normalform(cfg: &RunConfig) -> Result<RunSummary> {
    let started = Instant::now();
    cfg.validate()?;
    let resolved = cfg.resolved()?;
    let xi = cfg.xi()?;
    let nf = normal_form_for_model(&cfg.model, &xi, &cfg.divisor_gate(), &cfg.pipeline())?;
    let mut out = Output::new(&cfg.output.dir)?;
    let result = write_normal_form(&mut out, &nf)?;
    let mut lines = vec![format!(
        "normal form of order {}: {} generators, max non-integrable coefficient {:e}",
        cfg.gate.m + 2,
        nf.chain.len(),
        result["max_nonintegrable"].as_f64().unwrap_or(f64::NAN)
    )];
    let failure = nf.resonances.first().map(|r| {
        lines.push(format!("{} resonant term(s); first at stage {}", nf.resonances.len(), r.stage));
        NlwError::ResonantTerm { key: r.monomial.clone(), divisor: r.divisor, threshold: r.threshold }
    });
    let files = out.finish("normalform", cfg, &resolved, result, started)?;
    Ok(summary("normalform", cfg, files, lines, failure))
}

pub fn measure_setup(cfg: &RunConfig) -> MeasureSetup {
    MeasureSetup { model: cfg.model.clone(), gate: cfg.divisor_gate(), k_max: cfg.k_max(), fast: cfg.measure.fast, confidence: cfg.measure.confidence }
}

/// Monte Carlo resonant fraction over the parameter box.
pub fn cmd_measure(cfg: &RunConfig) -> Result<RunSummary> {
    let started = Instant::now();
    cfg.validate()?;
    let resolved = cfg.resolved()?;
    let setup = measure_setup(cfg);
    let est = measure_sweep(&setup, &cfg.measure.eta_tildes, cfg.experiment.sample_count, cfg.experiment.seed)?;
    let slope = loglog_slope(&est);
    let monotone = est.windows(2).all(|w| (w[0].eta_tilde < w[1].eta_tilde) == (w[0].fraction <= w[1].fraction) || w[0].fraction == w[1].fraction);
    let header = json!({ "fast": setup.fast, "k_max": setup.k_max, "seed": cfg.experiment.seed, "samples": cfg.experiment.sample_count, "slope": slope });
    let mut out = Output::new(&cfg.output.dir)?;
    out.write("measure.csv", &format!("# {header}\n{}", measure_csv(&est)))?;
    let result = json!({ "estimates": est, "slope": slope, "monotone": monotone });
    let lines = vec![format!(
        "{} eta_tilde values, {} samples each, slope {}",
        est.len(),
        cfg.experiment.sample_count,
        slope.map_or("n/a".to_string(), |s| format!("{s:.3}"))
    )];
    let files = out.finish("measure", cfg, &resolved, result, started)?;
    Ok(summary("measure", cfg, files, lines, None))
}

/// Plain integration from a perturbed point of the linear torus.
pub fn cmd_simulate(cfg: &RunConfig) -> Result<RunSummary> {
    let started = Instant::now();
    cfg.validate()?;
    let resolved = cfg.resolved()?;
    let xi = cfg.xi()?;
    let sim = &cfg.simulate;
    let e = &cfg.experiment;
    let chart = TorusChart::linear(&cfg.model, &xi, sim.resolution)?;
    let system = chart.system();
    let delta = e.deltas.first().copied().unwrap_or(0.0);
    let mut start = embed_torus(&chart, &vec![0.0; cfg.model.n])?;
    let mode = sim.perturbation.mode.unwrap_or(cfg.model.n + 1);
    if mode <= start.modes() {
        if sim.perturbation.velocity {
            start.v[mode - 1] += delta / (mode as f64).powf(e.p - 1.0);
        } else {
            start.u[mode - 1] += delta / (mode as f64).powf(e.p);
        }
    }
    let states = integrate(&system, &start, sim.t_end, e.dt, e.order, sim.samples)?;
    let e0 = system.energy(&start);
    let mut rows = Vec::with_capacity(states.len());
    for s in &states {
        let d = distance_to_torus(s, &chart, e.p)?;
        let en = system.energy(s);
        rows.push(StabilityRow { t: s.t, distance: d.distance, phase_distance: d.phase_distance, energy: en, relative_drift: ((en - e0) / e0).abs() });
    }
    let mut out = Output::new(&cfg.output.dir)?;
    out.write("trajectory.csv", &trajectory_csv(&rows))?;
    let max_drift = rows.iter().map(|r| r.relative_drift).fold(0.0, f64::max);
    let max_distance = rows.iter().map(|r| r.distance).fold(0.0, f64::max);
    let result = json!({
        "delta": delta,
        "perturbed_mode": mode,
        "max_distance_to_linear_torus": max_distance,
        "max_relative_drift": max_drift,
        "final_state": states.last(),
    });
    let lines = vec![format!("t_end {}: max distance {:e}, max relative energy drift {:e}", sim.t_end, max_distance, max_drift)];
    let files = out.finish("simulate", cfg, &resolved, result, started)?;
    Ok(summary("simulate", cfg, files, lines, None))
}

/// Tube experiment around the normal-form torus, one run per `delta`.
pub fn cmd_stability(cfg: &RunConfig) -> Result<RunSummary> {
    let started = Instant::now();
    cfg.validate()?;
    let resolved = cfg.resolved()?;
    let xi = cfg.xi()?;
    let st = &cfg.stability;
    let e = &cfg.experiment;
    if e.deltas.is_empty() {
        return Err(NlwError::Config { path: "experiment.deltas".into(), msg: "stability needs at least one delta".into() });
    }
    let mut out = Output::new(&cfg.output.dir)?;
    let (chart, nf_summary) = if st.linear {
        (TorusChart::linear(&cfg.model, &xi, st.resolution)?, Value::Null)
    } else {
        let nf = normal_form_for_model(&cfg.model, &xi, &cfg.divisor_gate(), &cfg.pipeline())?;
        if let Some(r) = nf.resonances.first() {
            return Err(NlwError::ResonantTerm { key: r.monomial.clone(), divisor: r.divisor, threshold: r.threshold });
        }
        let s = json!({ "generators": nf.chain.len(), "max_nonintegrable": nf.max_nonintegrable(cfg.gate.m + 2) });
        (TorusChart::new(&cfg.model, &xi, nf.chain.clone(), Some(&nf.total()), st.resolution)?, s)
    };
    let mut reports = Vec::new();
    let mut lines = Vec::new();
    for (i, &delta) in e.deltas.iter().enumerate() {
        let opts = StabilityOptions {
            delta,
            m_exp: e.m_exp,
            p: e.p,
            dt: e.dt,
            order: e.order,
            t_override: e.t_override,
            perturbation: st.perturbation.clone(),
            angles: st.angles.clone().unwrap_or_else(|| vec![0.0; cfg.model.n]),
            samples: st.samples,
            backward: st.backward,
        };
        let r = stability_experiment(&chart, &opts)?;
        out.write(&format!("stability_{i:02}.csv"), &trajectory_csv(&r.rows))?;
        lines.push(format!(
            "delta {delta:e}: horizon {:e}, max distance {:e} ({}), exit {}",
            r.horizon,
            r.max_distance,
            if r.max_distance <= 2.0 * delta { "within 2 delta" } else { "outside 2 delta" },
            r.exit_time.map_or("none".to_string(), |t| format!("{t:e}"))
        ));
        reports.push(r);
    }
    let p_required = reports.first().map(|r| r.p_required);
    let result = json!({
        "normal_form": nf_summary,
        "invariance_residual": chart.invariance_residual(),
        "p_required": p_required,
        "hypothesis": format!(
            "the long-time result assumes p >= 24(M+7)^4+1 = {}; this run uses p = {}, so the hypothesis is relaxed",
            p_required.unwrap_or(f64::NAN),
            e.p
        ),
        "reports": reports,
    });
    let files = out.finish("stability", cfg, &resolved, result, started)?;
    Ok(summary("stability", cfg, files, lines, None))
}

fn norm_row(name: &str, h: &PolyHamiltonian, cfg: &RunConfig, seed_index: u64) -> Value {
    let m = &cfg.model;
    let mut r = rng::indexed_stream(cfg.experiment.seed, "norms", seed_index);
    let rep = norm_report(h, cfg.experiment.p, m.s, m.r, cfg.norms.samples, &mut r);
    let weighted = rep.weighted.unwrap_or(0.0);
    json!({
        "name": name,
        "terms": h.len(),
        "tame_upper": rep.tame.upper,
        "tame_probe": rep.tame.probe,
        "weighted": weighted,
        "comparison_holds": weighted <= rep.tame.upper * (1.0 + 1e-12),
        "report": rep,
    })
}

/// Tame and weighted norms of the model perturbation and of random Hamiltonians.
pub fn cmd_norms(cfg: &RunConfig) -> Result<RunSummary> {
    let started = Instant::now();
    cfg.validate()?;
    let resolved = cfg.resolved()?;
    let xi = cfg.xi()?;
    let caps = cfg.pipeline().caps();
    let lifted = lift_model(&cfg.model, &xi, caps, false)?;
    let perturbation = lifted.h.filter(|k, _| !(k.degree() <= 2 && k.is_integrable()));
    let mut rows = vec![norm_row("model_perturbation", &perturbation, cfg, 0)];
    let nb = &cfg.norms;
    let spec = RandomSpec {
        n: cfg.model.n,
        j: cfg.model.big_j,
        caps: Caps::new(nb.max_degree, 2),
        min_degree: 2.min(nb.max_degree),
        max_degree: nb.max_degree,
        terms: nb.terms,
    };
    for i in 0..nb.random {
        let h = random_real(&mut rng::indexed_stream(cfg.experiment.seed, "norms-random", i as u64), &spec);
        rows.push(norm_row(&format!("random_{i:03}"), &h, cfg, i as u64 + 1));
    }
    let mut csv = String::from("name,terms,tame_upper,tame_probe,weighted,comparison_holds\n");
    for r in &rows {
        let _ = writeln!(
            csv,
            "{},{},{:e},{:e},{:e},{}",
            r["name"].as_str().unwrap_or(""),
            r["terms"],
            r["tame_upper"].as_f64().unwrap_or(f64::NAN),
            r["tame_probe"].as_f64().unwrap_or(f64::NAN),
            r["weighted"].as_f64().unwrap_or(f64::NAN),
            r["comparison_holds"]
        );
    }
    let violations = rows.iter().filter(|r| r["comparison_holds"] != json!(true)).count();
    let mut out = Output::new(&cfg.output.dir)?;
    out.write("norms.csv", &csv)?;
    let result = json!({ "rows": rows, "violations": violations });
    let lines = vec![format!("{} rows, {} comparison violation(s)", rows.len(), violations)];
    let files = out.finish("norms", cfg, &resolved, result, started)?;
    Ok(summary("norms", cfg, files, lines, None))
}
