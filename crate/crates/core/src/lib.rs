//! Iterative QUBO reformulation of power-system equations.
//!
//! Continuous unknowns are encoded as `base + step·(up − down)` with two
//! bits each, residuals are squared into a pseudo-Boolean Hamiltonian,
//! reduced to quadratic form and handed to an annealing backend. The outer
//! loop rebases and adapts the steps until the energy drops below a
//! threshold.

pub mod pbp;
pub mod discretize;
pub mod anneal;
pub mod powernet;
pub mod iterate;
pub mod apps;
pub mod cli;
