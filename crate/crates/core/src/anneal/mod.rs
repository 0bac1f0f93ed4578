//! QUBO minimization backends.
//!
//! Backends implement [`Solver`]. They receive the problem together with
//! the aux variables introduced by quadratization so that exact search can
//! skip them: an aux bit is always optimal at the product of its parents.

mod exhaustive;
mod remote;
mod sa;

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pbp::{AuxVar, PbpError, QuboProblem};

pub use exhaustive::{solve_exhaustive, ExactSolver, MAX_EXHAUSTIVE_VARS};
pub use remote::RemoteSolver;
pub use sa::{solve_sa, SaConfig, SimulatedAnnealing};

#[derive(Debug, Error)]
pub enum AnnealError {
    #[error("exhaustive search limited to {max} free variables, problem has {n}")]
    TooLarge { n: usize, max: usize },
    #[error(transparent)]
    Pbp(#[from] PbpError),
    #[error("backend unavailable: {0}")]
    Unavailable(String),
    #[error("backend protocol error: {0}")]
    Protocol(String),
}

/// A bitstring with its energy, computed from scratch at construction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    assignment: Vec<u8>,
    energy: f64,
}

impl Sample {
    pub fn new(q: &QuboProblem, assignment: Vec<u8>) -> Result<Self, AnnealError> {
        if let Some(pos) = assignment.iter().position(|&b| b > 1) {
            return Err(AnnealError::Protocol(format!("bit {pos} is {}, expected 0 or 1", assignment[pos])));
        }
        let energy = q.energy(&assignment)?;
        Ok(Self { assignment, energy })
    }

    pub fn assignment(&self) -> &[u8] {
        &self.assignment
    }

    pub fn energy(&self) -> f64 {
        self.energy
    }

    /// Orders by energy, then lexicographically by bitstring.
    pub fn rank(&self, other: &Sample) -> Ordering {
        self.energy.total_cmp(&other.energy).then_with(|| self.assignment.cmp(&other.assignment))
    }
}

/// `xᵀQx + offset`.
pub fn energy(q: &QuboProblem, x: &[u8]) -> Result<f64, AnnealError> {
    Ok(q.energy(x)?)
}

pub trait Solver: Send + Sync {
    fn name(&self) -> &'static str;

    /// Minimizes `q`; `aux` lists the quadratization variables, if any.
    fn solve(&self, q: &QuboProblem, aux: &[AuxVar]) -> Result<Sample, AnnealError>;
}

/// Running assignment with local fields for O(degree) flips.
#[derive(Clone, Debug)]
pub(crate) struct FlipState<'a> {
    adj: &'a [Vec<(usize, f64)>],
    pub x: Vec<u8>,
    // field[i] = Q_ii + Σ_j Q_ij x_j
    field: Vec<f64>,
    pub energy: f64,
}

impl<'a> FlipState<'a> {
    pub fn new(q: &QuboProblem, adj: &'a [Vec<(usize, f64)>], x: Vec<u8>) -> Self {
        let mut field = q.linear().to_vec();
        for (i, row) in adj.iter().enumerate() {
            if x[i] != 0 {
                for &(j, v) in row {
                    field[j] += v;
                }
            }
        }
        let energy = q.energy_unchecked(&x);
        Self { adj, x, field, energy }
    }

    pub fn delta(&self, i: usize) -> f64 {
        if self.x[i] == 0 {
            self.field[i]
        } else {
            -self.field[i]
        }
    }

    pub fn flip(&mut self, i: usize) {
        let d = self.delta(i);
        let sign = if self.x[i] == 0 { 1.0 } else { -1.0 };
        self.x[i] ^= 1;
        for &(j, v) in &self.adj[i] {
            self.field[j] += sign * v;
        }
        self.energy += d;
    }
}
