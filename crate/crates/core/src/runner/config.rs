use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{NlwError, Result};
use crate::model::{ModelConfig, ParameterPoint};
use crate::normal_form::{select_cutoff, DivisorGate, Order2Options, PipelineOptions};
use crate::rng;
use crate::sim::{Perturbation, SplittingOrder};

fn bad<T>(path: &str, msg: impl Into<String>) -> Result<T> {
    Err(NlwError::Config { path: path.into(), msg: msg.into() })
}

/// How the parameter point `xi` is chosen.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum XiSpec {
    /// `"midpoint"` or `"random"` (drawn from the seed's `xi` stream).
    Named(String),
    Values(Vec<f64>),
}

impl Default for XiSpec {
    fn default() -> Self {
        XiSpec::Named("midpoint".into())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParameterBlock {
    #[serde(default)]
    pub xi: XiSpec,
}

/// `N = 2` or `N = "auto"`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CutoffSpec {
    Fixed(usize),
    Auto(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GateBlock {
    pub eta: f64,
    pub eta_tilde: f64,
    pub tau: f64,
    #[serde(rename = "M")]
    pub m: u32,
    #[serde(rename = "N")]
    pub n_split: CutoffSpec,
    /// Only `"product"`: `C(N, l) = prod_{i <= N} (1 + i^2 l_i^2)`.
    #[serde(default = "default_c_weight")]
    pub c_weight: String,
}

fn default_c_weight() -> String {
    "product".into()
}

/// Truncation knobs of the normal form pipelines.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NormalFormBlock {
    pub degree_cap: Option<u32>,
    pub fourier_cap: Option<u32>,
    pub floor: f64,
    pub max_sweeps: usize,
    pub tol: f64,
}

impl Default for NormalFormBlock {
    fn default() -> Self {
        let o = Order2Options::default();
        Self { degree_cap: None, fourier_cap: None, floor: PipelineOptions::default().floor, max_sweeps: o.max_sweeps, tol: o.tol }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentBlock {
    pub deltas: Vec<f64>,
    pub m_exp: u32,
    pub p: f64,
    pub dt: f64,
    pub t_override: Option<f64>,
    pub seed: u64,
    pub sample_count: usize,
    #[serde(default = "default_order")]
    pub order: SplittingOrder,
}

fn default_order() -> SplittingOrder {
    SplittingOrder::Two
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeasureBlock {
    pub eta_tildes: Vec<f64>,
    /// Defaults to the smallest `K` with `exp(-K s/2) < 1e-12`.
    pub k_max: Option<u32>,
    pub fast: bool,
    pub confidence: f64,
}

impl Default for MeasureBlock {
    fn default() -> Self {
        Self { eta_tildes: vec![1e-1, 1e-2, 1e-3, 1e-4], k_max: None, fast: false, confidence: 0.95 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateBlock {
    pub t_end: f64,
    pub samples: usize,
    pub resolution: usize,
    pub perturbation: Perturbation,
}

impl Default for SimulateBlock {
    fn default() -> Self {
        Self { t_end: 10.0, samples: 50, resolution: 64, perturbation: Perturbation::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StabilityBlock {
    pub resolution: usize,
    pub samples: usize,
    pub backward: bool,
    pub angles: Option<Vec<f64>>,
    pub perturbation: Perturbation,
    /// Use the linear torus instead of running the normal form.
    pub linear: bool,
}

impl Default for StabilityBlock {
    fn default() -> Self {
        Self { resolution: 64, samples: 30, backward: true, angles: None, perturbation: Perturbation::default(), linear: false }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NormsBlock {
    /// Random truncated Hamiltonians added to the report.
    pub random: usize,
    pub terms: usize,
    pub max_degree: u32,
    /// Sample points of the weighted norm.
    pub samples: usize,
}

impl Default for NormsBlock {
    fn default() -> Self {
        Self { random: 20, terms: 8, max_degree: 4, samples: 200 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputBlock {
    pub dir: PathBuf,
}

impl Default for OutputBlock {
    fn default() -> Self {
        Self { dir: PathBuf::from("out") }
    }
}

/// One run, as read from a TOML file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    #[serde(default)]
    pub parameters: ParameterBlock,
    pub gate: GateBlock,
    #[serde(default)]
    pub normal_form: NormalFormBlock,
    pub experiment: ExperimentBlock,
    #[serde(default)]
    pub measure: MeasureBlock,
    #[serde(default)]
    pub simulate: SimulateBlock,
    #[serde(default)]
    pub stability: StabilityBlock,
    #[serde(default)]
    pub norms: NormsBlock,
    /// Where files go; not part of the echoed configuration.
    #[serde(default, skip_serializing)]
    pub output: OutputBlock,
}

/// Values derived from the configuration, echoed next to it in every report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Resolved {
    pub xi: Vec<f64>,
    pub n_split: usize,
    /// `select_cutoff` value before clamping to `J`, when `N = "auto"`.
    pub n_split_auto: Option<usize>,
    pub k_max: u32,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| NlwError::Config { path: "<toml>".into(), msg: e.message().to_string() })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| NlwError::Config { path: path.display().to_string(), msg: e.to_string() })?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        let g = &self.gate;
        let tau_min = 2.0 * self.model.n as f64 + 5.0;
        if !(g.tau > tau_min) {
            return bad("gate.tau", format!("must exceed 2n+5 = {tau_min}, got {}", g.tau));
        }
        if !(g.eta > 0.0 && g.eta.is_finite()) {
            return bad("gate.eta", "must be positive");
        }
        if !(g.eta_tilde > 0.0 && g.eta_tilde < 1.0) {
            return bad("gate.eta_tilde", "must lie in (0, 1)");
        }
        if g.c_weight != "product" {
            return bad("gate.c_weight", format!("unknown weight `{}`, expected `product`", g.c_weight));
        }
        match &g.n_split {
            CutoffSpec::Fixed(v) if *v > self.model.big_j => return bad("gate.N", format!("{v} exceeds J = {}", self.model.big_j)),
            CutoffSpec::Auto(s) if s != "auto" => return bad("gate.N", format!("expected an integer or \"auto\", got `{s}`")),
            _ => {}
        }
        let e = &self.experiment;
        if e.deltas.is_empty() {
            if matches!(g.n_split, CutoffSpec::Auto(_)) {
                return bad("experiment.deltas", "N = \"auto\" needs at least one delta");
            }
        }
        if let Some(i) = e.deltas.iter().position(|d| !(*d > 0.0 && *d < 1.0)) {
            return bad(&format!("experiment.deltas[{i}]"), "must lie in (0, 1)");
        }
        if !(e.p >= 1.0) {
            return bad("experiment.p", "must be at least 1");
        }
        if matches!(g.n_split, CutoffSpec::Auto(_)) && !(e.p > 1.0) {
            return bad("experiment.p", "N = \"auto\" needs p > 1");
        }
        if !(e.dt > 0.0 && e.dt.is_finite()) {
            return bad("experiment.dt", "must be positive");
        }
        if let Some(t) = e.t_override {
            if !(t > 0.0 && t.is_finite()) {
                return bad("experiment.t_override", "must be positive");
            }
        }
        if e.sample_count == 0 {
            return bad("experiment.sample_count", "must be positive");
        }
        let nf = &self.normal_form;
        if !(nf.floor >= 0.0) {
            return bad("normal_form.floor", "must be non-negative");
        }
        if let Some(d) = nf.degree_cap {
            if d < g.m + 2 {
                return bad("normal_form.degree_cap", format!("must be at least M + 2 = {}", g.m + 2));
            }
        }
        let ms = &self.measure;
        if let Some(i) = ms.eta_tildes.iter().position(|v| !(*v > 0.0 && *v < 1.0)) {
            return bad(&format!("measure.eta_tildes[{i}]"), "must lie in (0, 1)");
        }
        if !(ms.confidence > 0.0 && ms.confidence < 1.0) {
            return bad("measure.confidence", "must lie in (0, 1)");
        }
        if !(self.simulate.t_end > 0.0) {
            return bad("simulate.t_end", "must be positive");
        }
        if self.simulate.resolution < 2 {
            return bad("simulate.resolution", "at least 2 grid points per angle");
        }
        if self.stability.resolution < 2 {
            return bad("stability.resolution", "at least 2 grid points per angle");
        }
        if let Some(a) = &self.stability.angles {
            if a.len() != self.model.n {
                return bad("stability.angles", format!("expected {} angles", self.model.n));
            }
        }
        for (path, p) in [("simulate.perturbation.mode", &self.simulate.perturbation), ("stability.perturbation.mode", &self.stability.perturbation)] {
            if let Some(m) = p.mode {
                if m <= self.model.n || m > self.model.modes() {
                    return bad(path, format!("must be a normal mode in {}..={}", self.model.n + 1, self.model.modes()));
                }
            }
        }
        if let XiSpec::Named(s) = &self.parameters.xi {
            if s != "midpoint" && s != "random" {
                return bad("parameters.xi", format!("expected \"midpoint\", \"random\" or a list, got `{s}`"));
            }
        }
        self.xi()?;
        Ok(())
    }

    pub fn xi(&self) -> Result<ParameterPoint> {
        let len = self.model.modes();
        match &self.parameters.xi {
            XiSpec::Values(v) => {
                if v.len() != len {
                    return bad("parameters.xi", format!("expected {len} values, got {}", v.len()));
                }
                ParameterPoint::new(v.clone()).map_err(|e| NlwError::Config { path: "parameters.xi".into(), msg: e.to_string() })
            }
            XiSpec::Named(s) if s == "random" => Ok(ParameterPoint::random(&mut rng::stream(self.experiment.seed, "xi"), len)),
            XiSpec::Named(_) => Ok(ParameterPoint::midpoint(len)),
        }
    }

    /// `(N, auto value before clamping)`.
    pub fn n_split(&self) -> (usize, Option<usize>) {
        match self.gate.n_split {
            CutoffSpec::Fixed(v) => (v, None),
            CutoffSpec::Auto(_) => {
                let delta = self.experiment.deltas.iter().cloned().fold(f64::INFINITY, f64::min);
                let auto = select_cutoff(delta, self.gate.m, self.experiment.p);
                (auto.min(self.model.big_j), Some(auto))
            }
        }
    }

    pub fn divisor_gate(&self) -> DivisorGate {
        DivisorGate { eta: self.gate.eta, eta_tilde: self.gate.eta_tilde, tau: self.gate.tau, m: self.gate.m, n_split: self.n_split().0 }
    }

    pub fn pipeline(&self) -> PipelineOptions {
        let nf = &self.normal_form;
        PipelineOptions {
            m_order: self.gate.m,
            degree_cap: nf.degree_cap,
            fourier_cap: nf.fourier_cap,
            floor: nf.floor,
            order2: Order2Options { max_sweeps: nf.max_sweeps, tol: nf.tol },
        }
    }

    pub fn k_max(&self) -> u32 {
        self.measure.k_max.unwrap_or_else(|| crate::resonance::MeasureSetup::default_k_max(self.model.s))
    }

    pub fn resolved(&self) -> Result<Resolved> {
        let (n_split, n_split_auto) = self.n_split();
        Ok(Resolved { xi: self.xi()?.xi, n_split, n_split_auto, k_max: self.k_max() })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MIN: &str = r#"
[model]
m = 1.0
n = 1
J = 8
eps = 1e-4
actions = [0.05]
taylor_order = 3
s = 1.0
r = 0.1

[gate]
eta = 1e-3
eta_tilde = 1e-3
tau = 7.5
M = 1
N = "auto"

[experiment]
deltas = [1e-2, 1e-1]
m_exp = 1
p = 2.0
dt = 1e-2
seed = 3
sample_count = 1000
"#;

    fn expect_path(text: &str, path: &str) {
        match RunConfig::from_toml(text) {
            Err(NlwError::Config { path: p, .. }) => assert_eq!(p, path),
            other => panic!("expected config error at {path}, got {other:?}"),
        }
    }

    #[test]
    fn minimal_config_fills_defaults() {
        let c = RunConfig::from_toml(MIN).unwrap();
        assert_eq!(c.normal_form, NormalFormBlock::default());
        assert_eq!(c.output.dir, PathBuf::from("out"));
        assert_eq!(c.experiment.order, SplittingOrder::Two);
        assert_eq!(c.xi().unwrap(), ParameterPoint::midpoint(9));
    }

    #[test]
    fn auto_cutoff_uses_smallest_delta_and_clamps_to_j() {
        let c = RunConfig::from_toml(MIN).unwrap();
        // delta = 1e-2, M = 1, p = 2: N + 1 >= 1e4
        assert_eq!(c.n_split(), (8, Some(9999)));
        let c = RunConfig::from_toml(&MIN.replace("p = 2.0", "p = 21.0").replace("[1e-2, 1e-1]", "[1e-1]")).unwrap();
        assert_eq!(c.n_split(), (1, Some(1)));
    }

    #[test]
    fn random_xi_follows_the_seed() {
        let text = MIN.replace("[experiment]", "[parameters]\nxi = \"random\"\n\n[experiment]");
        let a = RunConfig::from_toml(&text).unwrap().xi().unwrap();
        let b = RunConfig::from_toml(&text).unwrap().xi().unwrap();
        let c = RunConfig::from_toml(&text.replace("seed = 3", "seed = 4")).unwrap().xi().unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        a.validate().unwrap();
    }

    #[test]
    fn invalid_fields_are_reported_by_path() {
        expect_path(&MIN.replace("tau = 7.5", "tau = 7.0"), "gate.tau");
        expect_path(&MIN.replace("eta_tilde = 1e-3", "eta_tilde = 1.5"), "gate.eta_tilde");
        expect_path(&MIN.replace("N = \"auto\"", "N = 9"), "gate.N");
        expect_path(&MIN.replace("N = \"auto\"", "N = \"big\""), "gate.N");
        expect_path(&MIN.replace("deltas = [1e-2, 1e-1]", "deltas = []"), "experiment.deltas");
        expect_path(&MIN.replace("deltas = [1e-2, 1e-1]", "deltas = [1e-2, 2.0]"), "experiment.deltas[1]");
        expect_path(&MIN.replace("actions = [0.05]", "actions = [-1.0]"), "model.actions[0]");
        expect_path(&MIN.replace("[experiment]", "[parameters]\nxi = [0.1]\n\n[experiment]"), "parameters.xi");
        expect_path(&MIN.replace("seed = 3", "seed = 3\nunknown = 1"), "<toml>");
    }
}
