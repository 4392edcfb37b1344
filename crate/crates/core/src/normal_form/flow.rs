use num_complex::Complex64;
use ode_solvers::{DVector, Dop853, OutputType, System};
use serde::{Deserialize, Serialize};

use crate::error::{NlwError, Result};
use crate::poly::{CompiledPoly, PhasePoint, PolyHamiltonian};

/// One generator of the coordinate pipeline: the new Hamiltonian is `H o flow_chi^time`.
#[derive(Clone, Debug)]
pub struct ChainEntry {
    pub label: String,
    pub generator: PolyHamiltonian,
    pub time: f64,
    /// The generator has terms of weighted degree <= 2.
    pub low_degree: bool,
}

/// Ordered list of generators. Composing the time-`t` flows in order maps
/// normal-form coordinates back to the original ones.
#[derive(Clone, Debug, Default)]
pub struct TransformChain {
    pub entries: Vec<ChainEntry>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// Original coordinates to normal-form coordinates.
    Forward,
    /// Normal-form coordinates to original coordinates.
    Inverse,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowOptions {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: u32,
}

impl Default for FlowOptions {
    fn default() -> Self {
        Self { rtol: 1e-12, atol: 1e-14, max_steps: 100_000 }
    }
}

impl TransformChain {
    pub fn push(&mut self, label: impl Into<String>, generator: PolyHamiltonian, time: f64) {
        let low_degree = generator.min_degree().map_or(false, |d| d <= 2);
        self.entries.push(ChainEntry { label: label.into(), generator, time, low_degree });
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn compile(&self) -> CompiledChain {
        let flows = self
            .entries
            .iter()
            .map(|e| {
                let vf = e.generator.vector_field();
                CompiledFlow { field: vf.compile(), n: e.generator.n(), j: e.generator.j(), time: e.time }
            })
            .collect();
        CompiledChain { flows }
    }
}

#[derive(Clone, Debug)]
struct CompiledFlow {
    field: CompiledPoly,
    n: usize,
    j: usize,
    time: f64,
}

/// A chain with pre-compiled vector fields, for repeated application.
#[derive(Clone, Debug)]
pub struct CompiledChain {
    flows: Vec<CompiledFlow>,
}

struct FlowSystem<'a> {
    field: &'a CompiledPoly,
    n: usize,
    j: usize,
    sign: f64,
}

impl System<f64, DVector<f64>> for FlowSystem<'_> {
    fn system(&self, _t: f64, y: &DVector<f64>, dy: &mut DVector<f64>) {
        let dim = 2 * self.n + 2 * self.j;
        let flat: Vec<Complex64> = (0..dim).map(|i| Complex64::new(y[2 * i], y[2 * i + 1])).collect();
        let p = PhasePoint::from_flat(self.n, self.j, &flat);
        let v = self.field.eval(&p);
        for (i, c) in v.iter().enumerate() {
            dy[2 * i] = self.sign * c.re;
            dy[2 * i + 1] = self.sign * c.im;
        }
    }
}

fn flow(f: &CompiledFlow, w: &PhasePoint, time: f64, opts: FlowOptions) -> Result<PhasePoint> {
    if time == 0.0 || f.field.n_terms() == 0 {
        return Ok(w.clone());
    }
    let flat = w.to_flat();
    let y0 = DVector::from_iterator(2 * flat.len(), flat.iter().flat_map(|c| [c.re, c.im]));
    let sys = FlowSystem { field: &f.field, n: f.n, j: f.j, sign: time.signum() };
    let span = time.abs();
    let mut solver = Dop853::from_param(
        sys, 0.0, span, span, y0, opts.rtol, opts.atol, 0.9, 0.0, 0.333, 6.0, span, 0.0, opts.max_steps, 1000,
        OutputType::Sparse,
    );
    solver.integrate().map_err(|e| NlwError::Flow(e.to_string()))?;
    let end = solver.y_out().last().ok_or_else(|| NlwError::Flow("no output".into()))?;
    if end.iter().any(|v| !v.is_finite()) {
        return Err(NlwError::Flow("non-finite state".into()));
    }
    let out: Vec<Complex64> = (0..flat.len()).map(|i| Complex64::new(end[2 * i], end[2 * i + 1])).collect();
    Ok(PhasePoint::from_flat(f.n, f.j, &out))
}

impl CompiledChain {
    pub fn apply(&self, w: &PhasePoint, direction: Direction, opts: FlowOptions) -> Result<PhasePoint> {
        let mut cur = w.clone();
        match direction {
            Direction::Forward => {
                for f in &self.flows {
                    cur = flow(f, &cur, -f.time, opts)?;
                }
            }
            Direction::Inverse => {
                for f in self.flows.iter().rev() {
                    cur = flow(f, &cur, f.time, opts)?;
                }
            }
        }
        Ok(cur)
    }
}

/// Transports a point through the chain.
///
/// With `H_new = H_old o Phi_1 o ... o Phi_m`, `Inverse` evaluates
/// `Phi_1(...Phi_m(w))` (normal-form to original coordinates) and `Forward`
/// its inverse, so that `H_old(w) = H_new(apply_chain(w, Forward))`.
pub fn apply_chain(chain: &TransformChain, w: &PhasePoint, direction: Direction, opts: FlowOptions) -> Result<PhasePoint> {
    chain.compile().apply(w, direction, opts)
}
