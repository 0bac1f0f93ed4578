//! The two applications as residual systems, with their classical oracles.

mod identify;
mod powerflow;

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::powernet::CaseError;

pub use identify::{
    build_identification, ls_admittance, AdmittanceEntry, AdmittanceUnknowns, IdentificationModel, Pattern,
};
pub use powerflow::{
    build_powerflow, jacobian, mismatch, mismatch_vector, nr_powerflow, BusMismatch, NrSolution, PowerFlowModel,
    VoltageUnknowns, NR_MAX_ITER, NR_TOL,
};

#[derive(Debug, Error)]
pub enum AppError {
    #[error("admittance pattern is not identifiable from {scenarios} scenario(s); undetermined entries in rows {rows:?}")]
    NotIdentifiable { scenarios: usize, rows: Vec<usize> },
    #[error("measurements cover {got} buses, expected {expected}")]
    SizeMismatch { expected: usize, got: usize },
    #[error("masked entry ({0}, {1}) is outside the matrix")]
    BadMask(usize, usize),
    #[error("Newton-Raphson did not converge in {iterations} iterations (max mismatch {mismatch:e})")]
    NotConverged { iterations: usize, mismatch: f64 },
    #[error("singular Jacobian at Newton-Raphson iteration {0}")]
    SingularJacobian(usize),
    #[error(transparent)]
    Case(#[from] CaseError),
}

/// `|v − r| / |r|`, or `|v − r|` when the reference is exactly zero.
pub fn relative_error(value: f64, reference: f64) -> f64 {
    let d = (value - reference).abs();
    if reference == 0.0 {
        d
    } else {
        d / reference.abs()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub name: String,
    pub value: f64,
    pub reference: f64,
    pub abs_error: f64,
    pub rel_error: f64,
}

/// Estimated values against a reference, one row per quantity.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub rows: Vec<ComparisonRow>,
}

impl Comparison {
    pub fn new<'a>(items: impl IntoIterator<Item = (&'a str, f64, f64)>) -> Self {
        let rows = items
            .into_iter()
            .map(|(name, value, reference)| ComparisonRow {
                name: name.to_string(),
                value,
                reference,
                abs_error: (value - reference).abs(),
                rel_error: relative_error(value, reference),
            })
            .collect();
        Self { rows }
    }

    pub fn max_rel_error(&self) -> f64 {
        self.rows.iter().map(|r| r.rel_error).fold(0.0, f64::max)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("name,value,reference,abs_error,rel_error\n");
        for r in &self.rows {
            let _ = writeln!(s, "{},{},{},{},{}", r.name, r.value, r.reference, r.abs_error, r.rel_error);
        }
        s
    }
}
