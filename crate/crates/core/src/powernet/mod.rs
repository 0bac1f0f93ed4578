//! Network model shared by both applications.
//!
//! Buses are indexed `0..N`; all quantities are per unit. The bus
//! admittance matrix is returned as its real and imaginary parts,
//! `Y = G + jB`.

mod case;
mod measure;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use case::{bundled_case, load_case, parse_case, save_case, BUNDLED_CASES};
pub use measure::{
    default_scenarios, load_measurements, parse_measurements, save_measurements, synthesize_measurements,
    MeasurementSet, Scenario,
};

#[derive(Debug, Error)]
pub enum CaseError {
    #[error("cannot read {path}")]
    Io { path: String, source: std::io::Error },
    #[error("parse error at line {line}, column {column}: {msg}")]
    Parse { line: usize, column: usize, msg: String },
    #[error("invalid input:\n  - {}", .0.join("\n  - "))]
    Invalid(Vec<String>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BusKind {
    Slack,
    Pq,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bus {
    pub id: usize,
    pub kind: BusKind,
    pub p_gen: f64,
    pub q_gen: f64,
    pub p_load: f64,
    pub q_load: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v_re: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v_im: Option<f64>,
}

impl Bus {
    pub fn slack(id: usize, v: Complex64) -> Self {
        Self {
            id,
            kind: BusKind::Slack,
            p_gen: 0.0,
            q_gen: 0.0,
            p_load: 0.0,
            q_load: 0.0,
            v_re: Some(v.re),
            v_im: Some(v.im),
        }
    }

    pub fn pq(id: usize, p_load: f64, q_load: f64) -> Self {
        Self { id, kind: BusKind::Pq, p_gen: 0.0, q_gen: 0.0, p_load, q_load, v_re: None, v_im: None }
    }

    /// Scheduled net injection `P^G − P^D`.
    pub fn p_net(&self) -> f64 {
        self.p_gen - self.p_load
    }

    pub fn q_net(&self) -> f64 {
        self.q_gen - self.q_load
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Branch {
    pub from: usize,
    pub to: usize,
    pub g_series: f64,
    pub b_series: f64,
    #[serde(default)]
    pub b_shunt_half: f64,
}

/// Real and imaginary parts of the bus admittance matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Admittance {
    pub g: DMatrix<f64>,
    pub b: DMatrix<f64>,
}

impl Admittance {
    pub fn zeros(n: usize) -> Self {
        Self { g: DMatrix::zeros(n, n), b: DMatrix::zeros(n, n) }
    }

    pub fn n(&self) -> usize {
        self.g.nrows()
    }

    pub fn get(&self, i: usize, k: usize) -> Complex64 {
        Complex64::new(self.g[(i, k)], self.b[(i, k)])
    }

    /// `Y·v`.
    pub fn apply(&self, v: &[Complex64]) -> Vec<Complex64> {
        let n = self.n();
        (0..n).map(|i| (0..n).map(|k| self.get(i, k) * v[k]).sum()).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Network {
    pub buses: Vec<Bus>,
    pub branches: Vec<Branch>,
}

impl Network {
    /// Validated network; every violation is reported at once.
    pub fn new(buses: Vec<Bus>, branches: Vec<Branch>) -> Result<Self, CaseError> {
        let net = Self { buses, branches };
        let problems = net.violations();
        if problems.is_empty() {
            Ok(net)
        } else {
            Err(CaseError::Invalid(problems))
        }
    }

    pub fn n(&self) -> usize {
        self.buses.len()
    }

    pub fn slack(&self) -> usize {
        self.buses.iter().position(|b| b.kind == BusKind::Slack).expect("validated network has a slack bus")
    }

    pub fn slack_voltage(&self) -> Complex64 {
        let s = &self.buses[self.slack()];
        Complex64::new(s.v_re.unwrap_or(1.0), s.v_im.unwrap_or(0.0))
    }

    pub fn pq_buses(&self) -> Vec<usize> {
        self.buses.iter().filter(|b| b.kind == BusKind::Pq).map(|b| b.id).collect()
    }

    /// `Y_kk = Σ (y_series + j·b_shunt_half)` over incident branches,
    /// `Y_km = −y_series`.
    pub fn ybus(&self) -> Admittance {
        let mut y = Admittance::zeros(self.n());
        for br in &self.branches {
            let (f, t) = (br.from, br.to);
            for k in [f, t] {
                y.g[(k, k)] += br.g_series;
                y.b[(k, k)] += br.b_series + br.b_shunt_half;
            }
            y.g[(f, t)] -= br.g_series;
            y.g[(t, f)] -= br.g_series;
            y.b[(f, t)] -= br.b_series;
            y.b[(t, f)] -= br.b_series;
        }
        y
    }

    /// Flat start: slack at its set point, every other bus at `1 + j0`.
    pub fn flat_start(&self) -> Vec<Complex64> {
        let slack = self.slack();
        (0..self.n())
            .map(|i| if i == slack { self.slack_voltage() } else { Complex64::new(1.0, 0.0) })
            .collect()
    }

    fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let n = self.buses.len();
        if n == 0 {
            out.push("network has no buses".to_string());
        }
        for (pos, bus) in self.buses.iter().enumerate() {
            if bus.id != pos {
                out.push(format!("bus at position {pos} has id {}, ids must be 0..{n} in order", bus.id));
            }
            let nums = [("p_gen", bus.p_gen), ("q_gen", bus.q_gen), ("p_load", bus.p_load), ("q_load", bus.q_load)];
            for (field, v) in nums {
                if !v.is_finite() {
                    out.push(format!("bus {}: {field} is not finite", bus.id));
                }
            }
            for (field, v) in [("v_re", bus.v_re), ("v_im", bus.v_im)] {
                match (bus.kind, v) {
                    (BusKind::Slack, None) => out.push(format!("slack bus {} is missing {field}", bus.id)),
                    (BusKind::Pq, Some(_)) => out.push(format!("pq bus {} must not set {field}", bus.id)),
                    (_, Some(x)) if !x.is_finite() => out.push(format!("bus {}: {field} is not finite", bus.id)),
                    _ => {}
                }
            }
        }
        let slacks: Vec<usize> = self.buses.iter().filter(|b| b.kind == BusKind::Slack).map(|b| b.id).collect();
        match slacks.len() {
            0 if n > 0 => out.push("network has no slack bus".to_string()),
            0 | 1 => {}
            _ => out.push(format!("network has {} slack buses (ids {:?}), exactly one is required", slacks.len(), slacks)),
        }
        for (k, br) in self.branches.iter().enumerate() {
            for (end, idx) in [("from", br.from), ("to", br.to)] {
                if idx >= n {
                    out.push(format!("branch {k}: {end} bus {idx} does not exist"));
                }
            }
            if br.from == br.to {
                out.push(format!("branch {k}: from and to are both bus {}", br.from));
            }
            for (field, v) in [("g_series", br.g_series), ("b_series", br.b_series), ("b_shunt_half", br.b_shunt_half)] {
                if !v.is_finite() {
                    out.push(format!("branch {k}: {field} is not finite"));
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_bus(shunt: f64) -> Network {
        Network::new(
            vec![Bus::slack(0, Complex64::new(1.0, 0.0)), Bus::pq(1, 0.0, 0.0)],
            vec![Branch { from: 0, to: 1, g_series: 1.0, b_series: -5.0, b_shunt_half: shunt }],
        )
        .unwrap()
    }

    #[test]
    fn two_bus_ybus() {
        let y = two_bus(0.0).ybus();
        assert_eq!(y.g, DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]));
        assert_eq!(y.b, DMatrix::from_row_slice(2, 2, &[-5.0, 5.0, 5.0, -5.0]));
    }

    #[test]
    fn shunt_adds_to_diagonal() {
        let y = two_bus(0.05).ybus();
        assert_eq!(y.b[(0, 0)], -4.95);
        assert_eq!(y.b[(1, 1)], -4.95);
        assert_eq!(y.b[(0, 1)], 5.0);
    }

    #[test]
    fn no_branches_gives_zero_matrix() {
        let net = Network::new(vec![Bus::slack(0, Complex64::new(1.0, 0.0)), Bus::pq(1, 0.1, 0.0)], vec![]).unwrap();
        let y = net.ybus();
        assert!(y.g.iter().chain(y.b.iter()).all(|&v| v == 0.0));
    }

    #[test]
    fn collects_every_violation() {
        let err = Network::new(
            vec![Bus::slack(0, Complex64::new(1.0, 0.0)), Bus::slack(1, Complex64::new(1.0, 0.0)), Bus::pq(5, 0.0, 0.0)],
            vec![
                Branch { from: 0, to: 0, g_series: 1.0, b_series: 0.0, b_shunt_half: 0.0 },
                Branch { from: 1, to: 7, g_series: f64::NAN, b_series: 0.0, b_shunt_half: 0.0 },
            ],
        )
        .unwrap_err();
        let CaseError::Invalid(list) = err else { panic!("expected validation error") };
        assert!(list.iter().any(|m| m.contains("2 slack buses")));
        assert!(list.iter().any(|m| m.contains("position 2 has id 5")));
        assert!(list.iter().any(|m| m.contains("from and to are both bus 0")));
        assert!(list.iter().any(|m| m.contains("bus 7 does not exist")));
        assert!(list.iter().any(|m| m.contains("g_series is not finite")));
    }

    #[test]
    fn slack_needs_voltage() {
        let mut s = Bus::slack(0, Complex64::new(1.0, 0.0));
        s.v_im = None;
        assert!(matches!(Network::new(vec![s], vec![]), Err(CaseError::Invalid(_))));
    }
}
