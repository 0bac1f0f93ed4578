//! The outer loop: build `Σ F_j²` at the current bases, reduce it to a
//! QUBO, solve, and either accept the decoded values or rebase and go again.

use std::fmt::Write as _;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::anneal::{AnnealError, Sample, Solver};
use crate::discretize::{DiscreteVar, Move, StepController};
use crate::pbp::{quadratize, to_qubo_sized, PbpError, Polynomial, VarId, VarRegistry, DEFAULT_PENALTY_SCALE};

#[derive(Debug, Error)]
pub enum IterateError {
    #[error("residual system has no residuals")]
    EmptySystem,
    #[error("residual uses {0}, which belongs to no registered variable")]
    UnknownVariable(VarId),
    #[error(transparent)]
    Backend(#[from] AnnealError),
    #[error(transparent)]
    Pbp(#[from] PbpError),
}

/// Residuals `F_j` of a root-finding problem.
pub trait ResidualModel {
    /// Residual polynomials in the bits of `vars` at their current bases.
    fn residuals(&self, vars: &[DiscreteVar]) -> Vec<Polynomial>;

    /// The same residuals in continuous arithmetic, `values` in variable order.
    fn evaluate(&self, values: &[f64]) -> Vec<f64>;
}

/// [`ResidualModel`] from a pair of closures.
pub struct FnModel<R, E> {
    pub residuals: R,
    pub evaluate: E,
}

impl<R, E> ResidualModel for FnModel<R, E>
where
    R: Fn(&[DiscreteVar]) -> Vec<Polynomial>,
    E: Fn(&[f64]) -> Vec<f64>,
{
    fn residuals(&self, vars: &[DiscreteVar]) -> Vec<Polynomial> {
        (self.residuals)(vars)
    }

    fn evaluate(&self, values: &[f64]) -> Vec<f64> {
        (self.evaluate)(values)
    }
}

pub struct ResidualSystem<M> {
    pub model: M,
    pub vars: Vec<DiscreteVar>,
    /// Rosenberg weight multiplier used when the Hamiltonian needs reduction.
    pub penalty_scale: f64,
    /// Prune threshold for the Hamiltonian. Terms of order `step²` are
    /// physical at small steps, so only exact zeros are dropped by default.
    pub prune: f64,
}

impl<M: ResidualModel> ResidualSystem<M> {
    pub fn new(model: M, vars: Vec<DiscreteVar>) -> Self {
        Self { model, vars, penalty_scale: DEFAULT_PENALTY_SCALE, prune: 0.0 }
    }

    pub fn with_penalty_scale(mut self, scale: f64) -> Self {
        assert!(scale > 0.0, "penalty scale must be positive");
        self.penalty_scale = scale;
        self
    }

    /// Number of decision bits (one past the largest bit id).
    pub fn bit_count(&self) -> usize {
        self.vars.iter().map(|v| v.bit_up.index().max(v.bit_dn.index()) + 1).max().unwrap_or(0)
    }

    /// `Σ F_j²` at the current bases.
    pub fn hamiltonian(&self) -> Result<Polynomial, IterateError> {
        self.hamiltonian_at(&self.vars)
    }

    fn hamiltonian_at(&self, vars: &[DiscreteVar]) -> Result<Polynomial, IterateError> {
        let residuals: Vec<Polynomial> =
            self.model.residuals(vars).into_iter().map(|r| r.with_prune(self.prune)).collect();
        let mut known = vec![false; self.bit_count()];
        for v in vars {
            known[v.bit_up.index()] = true;
            known[v.bit_dn.index()] = true;
        }
        for r in &residuals {
            if let Some(&bad) = r.variables().iter().find(|id| !known.get(id.index()).copied().unwrap_or(false)) {
                return Err(IterateError::UnknownVariable(bad));
            }
        }
        build_hamiltonian(&residuals)
    }

    /// Σ F_j² in continuous arithmetic.
    pub fn residual_norm_sq(&self, values: &[f64]) -> f64 {
        self.model.evaluate(values).iter().map(|r| r * r).sum()
    }
}

/// Sum of squared residuals as one polynomial.
pub fn build_hamiltonian(residuals: &[Polynomial]) -> Result<Polynomial, IterateError> {
    if residuals.is_empty() {
        return Err(IterateError::EmptySystem);
    }
    let prune = residuals.iter().map(Polynomial::prune_threshold).fold(f64::INFINITY, f64::min);
    Ok(residuals.iter().fold(Polynomial::zero().with_prune(prune), |acc, r| acc + r.square()))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceCriteria {
    pub epsilon: f64,
    pub max_iters: usize,
    pub stall_iters: usize,
}

impl Default for ConvergenceCriteria {
    fn default() -> Self {
        Self { epsilon: 1e-8, max_iters: 1000, stall_iters: 5 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VarRecord {
    pub base: f64,
    pub step: f64,
    #[serde(rename = "move")]
    pub mv: Move,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Energy reported by the backend.
    pub energy: f64,
    /// The reduced Hamiltonian evaluated at `assignment`.
    pub hamiltonian_value: f64,
    pub assignment: Vec<u8>,
    pub vars: Vec<VarRecord>,
    pub aux_count: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct IterationTrace {
    pub names: Vec<String>,
    pub records: Vec<IterationRecord>,
}

impl IterationTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// One row per (iteration, variable).
    pub fn to_csv(&self) -> String {
        let mut s = String::from("iteration,energy,var,base,step,move\n");
        for r in &self.records {
            for (name, v) in self.names.iter().zip(&r.vars) {
                let _ = writeln!(s, "{},{},{},{},{},{}", r.iteration, r.energy, name, v.base, v.step, v.mv.sign());
            }
        }
        s
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Converged,
    /// The Hamiltonian had no variable terms.
    Degenerate,
    MaxIters,
    Stalled,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub values: IndexMap<String, f64>,
    pub converged: bool,
    pub stop_reason: StopReason,
    pub final_energy: f64,
    /// Σ F_j² re-evaluated at `values` in continuous arithmetic.
    pub residual_norm_sq: f64,
    pub iterations: usize,
    pub trace: IterationTrace,
}

impl Solution {
    pub fn value(&self, name: &str) -> Option<f64> {
        self.values.get(name).copied()
    }
}

/// Runs the loop until the QUBO energy drops below `crit.epsilon`.
///
/// Non-convergence is reported in the returned [`Solution`]; only backend
/// and construction failures are errors.
pub fn run<M: ResidualModel>(
    sys: &ResidualSystem<M>,
    backend: &dyn Solver,
    crit: &ConvergenceCriteria,
    ctrl: &mut StepController,
) -> Result<Solution, IterateError> {
    assert!(crit.epsilon > 0.0, "epsilon must be positive");
    let bits = sys.bit_count();
    let mut vars = sys.vars.clone();
    let mut trace = IterationTrace { names: vars.iter().map(|v| v.name.clone()).collect(), records: Vec::new() };
    let mut stall_events = 0;
    let mut outcome: Option<(StopReason, f64, Vec<f64>)> = None;

    for iteration in 1..=crit.max_iters {
        let h = sys.hamiltonian_at(&vars)?;
        if h.is_constant() {
            let energy = h.constant_term();
            trace.records.push(IterationRecord {
                iteration,
                energy,
                hamiltonian_value: energy,
                assignment: vec![0; bits],
                vars: vars.iter().map(|v| VarRecord { base: v.base, step: v.step, mv: Move::Stay }).collect(),
                aux_count: 0,
            });
            let reason = if energy < crit.epsilon { StopReason::Converged } else { StopReason::Degenerate };
            outcome = Some((reason, energy, vars.iter().map(|v| v.base).collect()));
            break;
        }

        let (reduced, aux) = if h.degree() > 2 {
            quadratize(&h, sys.penalty_scale, &mut VarRegistry::starting_at(bits as u32))
        } else {
            (h, Vec::new())
        };
        let q = to_qubo_sized(&reduced, bits + aux.len())?;
        let mut sample = backend.solve(&q, &aux)?;
        // all zeros keeps every base; a heuristic must not do worse
        if sample.energy() > q.offset() {
            sample = Sample::new(&q, vec![0; q.n()])?;
        }
        let x = sample.assignment();

        let mut decoded = Vec::with_capacity(vars.len());
        let mut records = Vec::with_capacity(vars.len());
        for v in &vars {
            let (value, mv) = v.decode(x)?;
            decoded.push((value, mv));
            records.push(VarRecord { base: v.base, step: v.step, mv });
        }
        trace.records.push(IterationRecord {
            iteration,
            energy: sample.energy(),
            hamiltonian_value: reduced.eval(x)?,
            assignment: x.to_vec(),
            vars: records,
            aux_count: aux.len(),
        });

        if sample.energy() < crit.epsilon {
            outcome = Some((StopReason::Converged, sample.energy(), decoded.iter().map(|d| d.0).collect()));
            break;
        }

        let all_stay = decoded.iter().all(|d| d.1.is_stay());
        let mut next = Vec::with_capacity(vars.len());
        for (v, &(value, mv)) in vars.iter().zip(&decoded) {
            let moved = DiscreteVar { base: value, ..v.clone() };
            next.push(ctrl.adapt(&moved, mv));
        }
        if all_stay {
            // no ±step helps: only finer steps can
            if next.iter().all(|v| ctrl.at_floor(v.step)) {
                stall_events += 1;
                if stall_events >= crit.stall_iters {
                    vars = next;
                    outcome = Some((StopReason::Stalled, sample.energy(), vars.iter().map(|v| v.base).collect()));
                    break;
                }
            } else {
                for v in &mut next {
                    v.step = ctrl.shrunk(v.step);
                }
            }
        } else {
            stall_events = 0;
        }
        vars = next;
    }

    let (stop_reason, final_energy, values) = outcome.unwrap_or_else(|| {
        let last = trace.records.last().map_or(f64::INFINITY, |r| r.energy);
        (StopReason::MaxIters, last, vars.iter().map(|v| v.base).collect())
    });
    let residual_norm_sq = sys.residual_norm_sq(&values);
    Ok(Solution {
        values: trace.names.iter().cloned().zip(values.iter().copied()).collect(),
        converged: stop_reason == StopReason::Converged,
        stop_reason,
        final_energy,
        residual_norm_sq,
        iterations: trace.len(),
        trace,
    })
}
