//! Multilinear pseudo-Boolean polynomials.
//!
//! A [`Polynomial`] is a real-weighted sum of [`Monomial`]s over binary
//! variables. Because every variable is 0/1, `x * x = x` and a monomial is
//! just a set of variables; multiplication merges sets. This is the common
//! currency of the whole crate: residuals, their squares, the quadratized
//! Hamiltonian and, finally, the [`QuboProblem`] handed to a solver.

mod quadratize;
mod qubo;

use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use quadratize::{quadratize, AuxVar, DEFAULT_PENALTY_SCALE};
pub use qubo::{to_qubo, to_qubo_sized, QuboProblem};

/// Coefficients with magnitude below this are dropped after every operation.
pub const DEFAULT_PRUNE: f64 = 1e-12;

/// A 0/1 assignment indexed by [`VarId::index`].
pub type Bits = [u8];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PbpError {
    #[error("assignment does not cover variable x{0} (length {1})")]
    MissingVariable(u32, usize),
    #[error("polynomial has degree {0}; a QUBO needs degree <= 2")]
    DegreeTooHigh(usize),
    #[error("assignment has length {got}, problem has {expected} variables")]
    LengthMismatch { expected: usize, got: usize },
    #[error("variable index {index} out of range for {n} variables")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

/// Identifier of one binary variable.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VarId(pub u32);

impl VarId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for VarId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "x{}", self.0)
    }
}

/// Hands out dense, increasing [`VarId`]s. Ids are never reused.
#[derive(Clone, Debug, Default)]
pub struct VarRegistry {
    next: u32,
}

impl VarRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// A registry whose first allocation is `VarId(first)`.
    pub fn starting_at(first: u32) -> Self {
        Self { next: first }
    }

    pub fn alloc(&mut self) -> VarId {
        let id = VarId(self.next);
        self.next += 1;
        id
    }

    /// Number of ids allocated so far (including any skipped prefix).
    pub fn len(&self) -> usize {
        self.next as usize
    }

    pub fn is_empty(&self) -> bool {
        self.next == 0
    }
}

/// A product of distinct binary variables, kept sorted.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Monomial(Vec<VarId>);

impl Monomial {
    pub fn constant() -> Self {
        Self(Vec::new())
    }

    pub fn var(v: VarId) -> Self {
        Self(vec![v])
    }

    /// Builds the monomial, applying `x * x = x` to repeated ids.
    pub fn from_vars<I: IntoIterator<Item = VarId>>(vars: I) -> Self {
        let mut v: Vec<VarId> = vars.into_iter().collect();
        v.sort_unstable();
        v.dedup();
        Self(v)
    }

    pub fn vars(&self) -> &[VarId] {
        &self.0
    }

    pub fn degree(&self) -> usize {
        self.0.len()
    }

    pub fn is_constant(&self) -> bool {
        self.0.is_empty()
    }

    /// Sorted-merge union of the two variable sets.
    pub fn mul(&self, other: &Monomial) -> Monomial {
        let (a, b) = (&self.0, &other.0);
        let mut out = Vec::with_capacity(a.len() + b.len());
        let (mut i, mut j) = (0, 0);
        while i < a.len() && j < b.len() {
            match a[i].cmp(&b[j]) {
                std::cmp::Ordering::Less => {
                    out.push(a[i]);
                    i += 1;
                }
                std::cmp::Ordering::Greater => {
                    out.push(b[j]);
                    j += 1;
                }
                std::cmp::Ordering::Equal => {
                    out.push(a[i]);
                    i += 1;
                    j += 1;
                }
            }
        }
        out.extend_from_slice(&a[i..]);
        out.extend_from_slice(&b[j..]);
        Monomial(out)
    }

    /// Value of the product at `bits`.
    pub fn eval(&self, bits: &Bits) -> Result<bool, PbpError> {
        let mut on = true;
        for v in &self.0 {
            match bits.get(v.index()) {
                Some(&b) => on &= b != 0,
                None => return Err(PbpError::MissingVariable(v.0, bits.len())),
            }
        }
        Ok(on)
    }
}

impl fmt::Display for Monomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return write!(f, "1");
        }
        for (k, v) in self.0.iter().enumerate() {
            if k > 0 {
                write!(f, "·")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

/// Real-coefficient multilinear polynomial in binary variables.
///
/// The prune threshold travels with the value; binary operations use the
/// smaller threshold of their operands. A threshold of `0.0` only removes
/// exact zeros.
#[derive(Clone, Debug, PartialEq)]
pub struct Polynomial {
    terms: BTreeMap<Monomial, f64>,
    prune: f64,
}

impl Default for Polynomial {
    fn default() -> Self {
        Self::zero()
    }
}

impl Polynomial {
    pub fn zero() -> Self {
        Self {
            terms: BTreeMap::new(),
            prune: DEFAULT_PRUNE,
        }
    }

    pub fn constant(c: f64) -> Self {
        Self::term(c, [])
    }

    pub fn var(v: VarId) -> Self {
        Self::term(1.0, [v])
    }

    /// `coef * Π vars`.
    pub fn term<I: IntoIterator<Item = VarId>>(coef: f64, vars: I) -> Self {
        let mut p = Self::zero();
        p.add_term(Monomial::from_vars(vars), coef);
        p
    }

    /// Same polynomial with a different prune threshold (applied immediately).
    pub fn with_prune(mut self, prune: f64) -> Self {
        self.prune = prune.max(0.0);
        let tol = self.prune;
        self.terms.retain(|_, c| keep(*c, tol));
        self
    }

    pub fn prune_threshold(&self) -> f64 {
        self.prune
    }

    /// Accumulate `coef` onto `m`, removing the entry if it becomes negligible.
    pub fn add_term(&mut self, m: Monomial, coef: f64) {
        let slot = self.terms.entry(m.clone()).or_insert(0.0);
        *slot += coef;
        if !keep(*slot, self.prune) {
            self.terms.remove(&m);
        }
    }

    pub fn coefficient(&self, m: &Monomial) -> f64 {
        self.terms.get(m).copied().unwrap_or(0.0)
    }

    pub fn constant_term(&self) -> f64 {
        self.coefficient(&Monomial::constant())
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, f64)> + '_ {
        self.terms.iter().map(|(m, c)| (m, *c))
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// True when no term depends on a variable.
    pub fn is_constant(&self) -> bool {
        self.terms.keys().all(Monomial::is_constant)
    }

    /// Degree of the highest stored monomial; 0 for constants and zero.
    pub fn degree(&self) -> usize {
        self.terms.keys().map(Monomial::degree).max().unwrap_or(0)
    }

    /// Sorted, deduplicated variables appearing in any term.
    pub fn variables(&self) -> Vec<VarId> {
        let mut v: Vec<VarId> = self.terms.keys().flat_map(|m| m.vars().iter().copied()).collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    pub fn max_var(&self) -> Option<VarId> {
        self.terms.keys().filter_map(|m| m.vars().last().copied()).max()
    }

    pub fn abs_coefficient_sum(&self) -> f64 {
        self.terms.values().map(|c| c.abs()).sum()
    }

    pub fn scale(&self, k: f64) -> Polynomial {
        let mut out = Polynomial { terms: BTreeMap::new(), prune: self.prune };
        for (m, c) in &self.terms {
            out.add_term(m.clone(), c * k);
        }
        out
    }

    fn add_scaled(&self, other: &Polynomial, k: f64) -> Polynomial {
        let mut out = self.clone();
        out.prune = self.prune.min(other.prune);
        for (m, c) in &other.terms {
            out.add_term(m.clone(), k * c);
        }
        out
    }

    /// Termwise sum.
    pub fn add(&self, other: &Polynomial) -> Polynomial {
        self.add_scaled(other, 1.0)
    }

    pub fn sub(&self, other: &Polynomial) -> Polynomial {
        self.add_scaled(other, -1.0)
    }

    /// Distributive product with idempotence; pruning happens on the final sums.
    pub fn mul(&self, other: &Polynomial) -> Polynomial {
        let prune = self.prune.min(other.prune);
        let mut acc: BTreeMap<Monomial, f64> = BTreeMap::new();
        for (ma, ca) in &self.terms {
            for (mb, cb) in &other.terms {
                *acc.entry(ma.mul(mb)).or_insert(0.0) += ca * cb;
            }
        }
        acc.retain(|_, c| keep(*c, prune));
        Polynomial { terms: acc, prune }
    }

    pub fn square(&self) -> Polynomial {
        self.mul(self)
    }

    /// Exact sum of active terms at `bits`.
    pub fn eval(&self, bits: &Bits) -> Result<f64, PbpError> {
        let mut sum = 0.0;
        for (m, c) in &self.terms {
            if m.eval(bits)? {
                sum += c;
            }
        }
        Ok(sum)
    }
}

fn keep(c: f64, tol: f64) -> bool {
    c != 0.0 && c.abs() >= tol
}

impl fmt::Display for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (k, (m, c)) in self.terms.iter().enumerate() {
            let sign = if *c < 0.0 { "-" } else { "+" };
            if k == 0 {
                if *c < 0.0 {
                    write!(f, "-")?;
                }
            } else {
                write!(f, " {sign} ")?;
            }
            if m.is_constant() {
                write!(f, "{}", c.abs())?;
            } else if c.abs() == 1.0 {
                write!(f, "{m}")?;
            } else {
                write!(f, "{}·{m}", c.abs())?;
            }
        }
        Ok(())
    }
}

macro_rules! forward_binop {
    ($tr:ident, $method:ident, $inner:ident) => {
        impl $tr<&Polynomial> for &Polynomial {
            type Output = Polynomial;
            fn $method(self, rhs: &Polynomial) -> Polynomial {
                Polynomial::$inner(self, rhs)
            }
        }
        impl $tr<Polynomial> for Polynomial {
            type Output = Polynomial;
            fn $method(self, rhs: Polynomial) -> Polynomial {
                Polynomial::$inner(&self, &rhs)
            }
        }
        impl $tr<&Polynomial> for Polynomial {
            type Output = Polynomial;
            fn $method(self, rhs: &Polynomial) -> Polynomial {
                Polynomial::$inner(&self, rhs)
            }
        }
    };
}

forward_binop!(Add, add, add);
forward_binop!(Sub, sub, sub);
forward_binop!(Mul, mul, mul);

impl Neg for &Polynomial {
    type Output = Polynomial;
    fn neg(self) -> Polynomial {
        self.scale(-1.0)
    }
}

impl Neg for Polynomial {
    type Output = Polynomial;
    fn neg(self) -> Polynomial {
        self.scale(-1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn x(i: u32) -> Polynomial {
        Polynomial::var(VarId(i))
    }

    fn c(v: f64) -> Polynomial {
        Polynomial::constant(v)
    }

    /// Compares two polynomials on every assignment of `n` bits.
    fn same_function(a: &Polynomial, b: &Polynomial, n: usize) -> bool {
        (0..1u32 << n).all(|mask| {
            let bits: Vec<u8> = (0..n).map(|i| ((mask >> i) & 1) as u8).collect();
            (a.eval(&bits).unwrap() - b.eval(&bits).unwrap()).abs() < 1e-12
        })
    }

    #[test]
    fn add_cancels_constants() {
        let p = (c(3.0) + x(0).scale(2.0)) + (c(-3.0) + x(1));
        assert_eq!(p, x(0).scale(2.0) + x(1));
        assert_eq!(p.constant_term(), 0.0);
        assert_eq!(p.num_terms(), 2);
    }

    #[test]
    fn add_zero_is_identity() {
        let p = c(1.5) + x(0) - Polynomial::term(2.0, [VarId(0), VarId(3)]);
        assert_eq!(&p + &Polynomial::zero(), p);
    }

    #[test]
    fn monomials_are_canonical() {
        let p = Polynomial::term(1.0, [VarId(0), VarId(1)]) + Polynomial::term(1.0, [VarId(1), VarId(0)]);
        assert_eq!(p.num_terms(), 1);
        assert_eq!(p.coefficient(&Monomial::from_vars([VarId(0), VarId(1)])), 2.0);
    }

    #[test]
    fn mul_applies_idempotence() {
        assert_eq!(x(0) * x(0), x(0));
    }

    #[test]
    fn square_of_difference() {
        let d = x(0) - x(1);
        let sq = d.square();
        let expected = x(0) + x(1) - Polynomial::term(2.0, [VarId(0), VarId(1)]);
        assert_eq!(sq, expected);
        // brute force: (a-b)^2 over all four assignments
        for (a, b) in [(0u8, 0u8), (0, 1), (1, 0), (1, 1)] {
            let direct = (a as f64 - b as f64).powi(2);
            assert_eq!(sq.eval(&[a, b]).unwrap(), direct);
        }
    }

    #[test]
    fn square_of_shifted_difference() {
        let f = c(1.0) - x(0) + x(1);
        let sq = f.square();
        let expected = c(1.0) - x(0) + x(1).scale(3.0) - Polynomial::term(2.0, [VarId(0), VarId(1)]);
        assert_eq!(sq, expected);
        for (a, b) in [(0u8, 0u8), (0, 1), (1, 0), (1, 1)] {
            let direct = (1.0 - a as f64 + b as f64).powi(2);
            assert_eq!(sq.eval(&[a, b]).unwrap(), direct);
        }
    }

    #[test]
    fn eval_examples() {
        let p = c(1.0) - x(0) + x(1).scale(3.0) - Polynomial::term(2.0, [VarId(0), VarId(1)]);
        assert_eq!(p.eval(&[1, 0]).unwrap(), 0.0);
        // (1 - xhat)^2 at xhat = 1
        assert_eq!((1.0f64 - 1.0).powi(2), 0.0);
        assert_eq!(p.eval(&[0, 0]).unwrap(), p.constant_term());
        let cubic = Polynomial::term(1.0, [VarId(0), VarId(1), VarId(2)]);
        assert_eq!(cubic.eval(&[1, 1, 1]).unwrap(), 1.0);
    }

    #[test]
    fn eval_missing_variable() {
        let p = x(0) + x(4);
        assert_eq!(p.eval(&[1, 0]), Err(PbpError::MissingVariable(4, 2)));
    }

    #[test]
    fn prune_removes_float_dust() {
        let p = c(0.1) + c(0.2) - c(0.3);
        assert!(p.is_zero());
        let exact = (c(0.1) + c(0.2)).with_prune(0.0) - c(0.3).with_prune(0.0);
        assert!(!exact.is_zero());
    }

    #[test]
    fn degree_and_variables() {
        let p = c(2.0) + Polynomial::term(1.0, [VarId(5), VarId(2)]) + x(7);
        assert_eq!(p.degree(), 2);
        assert_eq!(p.variables(), vec![VarId(2), VarId(5), VarId(7)]);
        assert_eq!(p.max_var(), Some(VarId(7)));
        assert_eq!(Polynomial::zero().degree(), 0);
    }

    #[test]
    fn product_matches_pointwise_product() {
        let a = c(0.5) - x(0) + Polynomial::term(2.0, [VarId(1), VarId(2)]);
        let b = x(2).scale(-3.0) + x(0) + c(1.0);
        let prod = &a * &b;
        assert!(prod.degree() <= a.degree() + b.degree());
        for mask in 0..8u32 {
            let bits: Vec<u8> = (0..3).map(|i| ((mask >> i) & 1) as u8).collect();
            let want = a.eval(&bits).unwrap() * b.eval(&bits).unwrap();
            assert!((prod.eval(&bits).unwrap() - want).abs() < 1e-12);
        }
        assert!(same_function(&prod, &(&b * &a), 3));
    }

    #[test]
    fn registry_is_dense() {
        let mut r = VarRegistry::new();
        assert_eq!(r.alloc(), VarId(0));
        assert_eq!(r.alloc(), VarId(1));
        assert_eq!(r.len(), 2);
        let mut s = VarRegistry::starting_at(10);
        assert_eq!(s.alloc(), VarId(10));
    }
}
