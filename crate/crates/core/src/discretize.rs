//! Two-bit encoding of continuous unknowns and adaptive step control.
//!
//! A [`DiscreteVar`] reads `base + step·(up − down)`: `(1,0)` moves up one
//! step, `(0,1)` moves down, `(0,0)` and `(1,1)` stay put.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::pbp::{Bits, PbpError, Polynomial, VarId, VarRegistry};

/// Direction selected for one variable in one iteration.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "i8", try_from = "i8")]
pub enum Move {
    Down,
    Stay,
    Up,
}

impl Move {
    pub fn from_bits(up: u8, dn: u8) -> Move {
        match (up != 0, dn != 0) {
            (true, false) => Move::Up,
            (false, true) => Move::Down,
            _ => Move::Stay,
        }
    }

    pub fn sign(self) -> i8 {
        match self {
            Move::Down => -1,
            Move::Stay => 0,
            Move::Up => 1,
        }
    }

    pub fn is_stay(self) -> bool {
        self == Move::Stay
    }

    fn reversed(self) -> Move {
        match self {
            Move::Down => Move::Up,
            Move::Stay => Move::Stay,
            Move::Up => Move::Down,
        }
    }
}

impl From<Move> for i8 {
    fn from(m: Move) -> i8 {
        m.sign()
    }
}

impl TryFrom<i8> for Move {
    type Error = String;
    fn try_from(v: i8) -> Result<Self, Self::Error> {
        match v {
            -1 => Ok(Move::Down),
            0 => Ok(Move::Stay),
            1 => Ok(Move::Up),
            _ => Err(format!("move must be -1, 0 or 1, got {v}")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscreteVar {
    pub name: String,
    pub base: f64,
    pub step: f64,
    pub bit_up: VarId,
    pub bit_dn: VarId,
}

impl DiscreteVar {
    /// Allocates the two bits from `registry`.
    pub fn new(name: impl Into<String>, base: f64, step: f64, registry: &mut VarRegistry) -> Self {
        assert!(step > 0.0 && step.is_finite(), "step must be positive, got {step}");
        let bit_up = registry.alloc();
        let bit_dn = registry.alloc();
        Self { name: name.into(), base, step, bit_up, bit_dn }
    }

    /// `base + step·x_up − step·x_dn`.
    pub fn as_polynomial(&self) -> Polynomial {
        Polynomial::constant(self.base) + Polynomial::term(self.step, [self.bit_up])
            - Polynomial::term(self.step, [self.bit_dn])
    }

    pub fn decode(&self, bits: &Bits) -> Result<(f64, Move), PbpError> {
        let get = |v: VarId| bits.get(v.index()).copied().ok_or(PbpError::MissingVariable(v.0, bits.len()));
        let mv = Move::from_bits(get(self.bit_up)?, get(self.bit_dn)?);
        Ok((self.value_after(mv), mv))
    }

    pub fn value_after(&self, mv: Move) -> f64 {
        match mv {
            Move::Up => self.base + self.step,
            Move::Down => self.base - self.step,
            Move::Stay => self.base,
        }
    }

    /// Moves the base to the decoded value; bits and step are kept.
    pub fn rebase(&self, bits: &Bits) -> Result<DiscreteVar, PbpError> {
        let (value, _) = self.decode(bits)?;
        Ok(DiscreteVar { base: value, ..self.clone() })
    }
}

/// Default step for voltage unknowns (per unit).
pub const VOLTAGE_STEP: f64 = 0.1;

/// Default step for an admittance unknown with the given starting value.
pub fn admittance_step(base: f64) -> f64 {
    (0.1 * base.abs()).max(0.1)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StepMode {
    #[default]
    Geometric,
    Series125,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepConfig {
    pub shrink: f64,
    pub grow: f64,
    pub step_min: f64,
    pub mode: StepMode,
}

impl Default for StepConfig {
    fn default() -> Self {
        Self { shrink: 0.5, grow: 1.0, step_min: 1e-6, mode: StepMode::Geometric }
    }
}

/// Per-variable step adaptation from the last two moves.
///
/// A variable that moved the same way twice and then reverses is
/// oscillating and has its step shrunk; three equal moves grow it (a no-op
/// at the default `grow = 1`).
#[derive(Clone, Debug, Default)]
pub struct StepController {
    pub config: StepConfig,
    // keyed by the variable's up-bit; [it-2, it-1]
    history: HashMap<VarId, [Move; 2]>,
}

impl StepController {
    pub fn new(config: StepConfig) -> Self {
        assert!(config.shrink > 0.0 && config.shrink < 1.0, "shrink must lie in (0, 1)");
        assert!(config.grow >= 1.0, "grow must be >= 1");
        assert!(config.step_min > 0.0, "step_min must be positive");
        Self { config, history: HashMap::new() }
    }

    pub fn history(&self, v: &DiscreteVar) -> [Move; 2] {
        self.history.get(&v.bit_up).copied().unwrap_or([Move::Stay; 2])
    }

    /// Applies the adaptation rule for `current` and records it.
    pub fn adapt(&mut self, v: &DiscreteVar, current: Move) -> DiscreteVar {
        let [older, prev] = self.history(v);
        let mut out = v.clone();
        if !prev.is_stay() && older == prev {
            if current == prev.reversed() {
                out.step = self.shrunk(v.step);
            } else if current == prev && self.config.grow > 1.0 {
                out.step = self.snap(v.step * self.config.grow);
            }
        }
        self.history.insert(v.bit_up, [prev, current]);
        out
    }

    /// One shrink of `step`, floored at `step_min`.
    pub fn shrunk(&self, step: f64) -> f64 {
        self.snap(step * self.config.shrink)
    }

    pub fn at_floor(&self, step: f64) -> bool {
        step <= self.config.step_min
    }

    fn snap(&self, target: f64) -> f64 {
        let s = match self.config.mode {
            StepMode::Geometric => target,
            StepMode::Series125 => snap_125(target),
        };
        s.max(self.config.step_min)
    }
}

/// Largest value of the form {1, 2, 5}·10ᵏ not exceeding `x`.
pub fn snap_125(x: f64) -> f64 {
    assert!(x > 0.0 && x.is_finite());
    let mut decade = 10f64.powf(x.log10().floor());
    // guard against log10 rounding at exact powers of ten
    if decade > x {
        decade /= 10.0;
    } else if decade * 10.0 <= x {
        decade *= 10.0;
    }
    [5.0, 2.0, 1.0]
        .into_iter()
        .map(|m| m * decade)
        .find(|&c| c <= x * (1.0 + 1e-12))
        .unwrap_or(decade)
}
