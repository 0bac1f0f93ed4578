use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::AppError;
use crate::discretize::{admittance_step, DiscreteVar};
use crate::iterate::{ResidualModel, ResidualSystem};
use crate::pbp::{Polynomial, VarRegistry};
use crate::powernet::{Admittance, MeasurementSet, Scenario};

/// Which admittance entries are unknown.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pattern {
    /// Every `Y_ik` independently.
    Full,
    /// `Y_ik = Y_ki`; one unknown per unordered pair.
    Symmetric,
    /// Only the listed `(i, k)`; the rest are taken from the prior (zero
    /// without one).
    Masked(Vec<(usize, usize)>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdmittanceEntry {
    pub i: usize,
    pub k: usize,
    pub g_var: DiscreteVar,
    pub b_var: DiscreteVar,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdmittanceUnknowns {
    pub n: usize,
    pub pattern: Pattern,
    pub entries: Vec<AdmittanceEntry>,
    /// Values of the known entries; unknown positions are ignored.
    pub known: Admittance,
    slot: Vec<Option<usize>>,
}

impl AdmittanceUnknowns {
    /// Bases come from `prior` (zero without one). Steps are `step_init`
    /// when given, otherwise [`admittance_step`] of the base.
    pub fn new(
        n: usize,
        pattern: Pattern,
        prior: Option<&Admittance>,
        step_init: Option<f64>,
        registry: &mut VarRegistry,
    ) -> Result<Self, AppError> {
        if let Some(p) = prior {
            if p.n() != n {
                return Err(AppError::SizeMismatch { expected: n, got: p.n() });
            }
        }
        let positions: Vec<(usize, usize)> = match &pattern {
            Pattern::Full => (0..n).flat_map(|i| (0..n).map(move |k| (i, k))).collect(),
            Pattern::Symmetric => (0..n).flat_map(|i| (i..n).map(move |k| (i, k))).collect(),
            Pattern::Masked(list) => {
                if let Some(&(i, k)) = list.iter().find(|&&(i, k)| i >= n || k >= n) {
                    return Err(AppError::BadMask(i, k));
                }
                let mut list = list.clone();
                list.sort_unstable();
                list.dedup();
                list
            }
        };
        let known = prior.cloned().unwrap_or_else(|| Admittance::zeros(n));
        let mut slot = vec![None; n * n];
        let mut entries = Vec::with_capacity(positions.len());
        for (e, (i, k)) in positions.into_iter().enumerate() {
            let y = known.get(i, k);
            let var = |name: String, base: f64, reg: &mut VarRegistry| {
                DiscreteVar::new(name, base, step_init.unwrap_or_else(|| admittance_step(base)), reg)
            };
            let g_var = var(format!("G[{i},{k}]"), y.re, registry);
            let b_var = var(format!("B[{i},{k}]"), y.im, registry);
            entries.push(AdmittanceEntry { i, k, g_var, b_var });
            slot[i * n + k] = Some(e);
            if pattern == Pattern::Symmetric {
                slot[k * n + i] = Some(e);
            }
        }
        Ok(Self { n, pattern, entries, known, slot })
    }

    /// Entry index holding `Y_ik`, if it is unknown.
    pub fn entry_at(&self, i: usize, k: usize) -> Option<usize> {
        self.slot[i * self.n + k]
    }

    /// `G` then `B` of each entry, in entry order.
    pub fn vars(&self) -> Vec<DiscreteVar> {
        self.entries.iter().flat_map(|e| [e.g_var.clone(), e.b_var.clone()]).collect()
    }

    /// The full matrix with unknowns set from `values` (ordered as [`vars`](Self::vars)).
    pub fn assemble(&self, values: &[f64]) -> Admittance {
        let mut y = self.known.clone();
        for i in 0..self.n {
            for k in 0..self.n {
                if let Some(e) = self.entry_at(i, k) {
                    y.g[(i, k)] = values[2 * e];
                    y.b[(i, k)] = values[2 * e + 1];
                }
            }
        }
        y
    }

    fn rows_with_unknowns(&self) -> Vec<usize> {
        (0..self.n).filter(|&k| (0..self.n).any(|i| self.entry_at(k, i).is_some())).collect()
    }

    /// Stacked real equations `A·θ = r` over all scenarios, with `θ` in
    /// [`vars`](Self::vars) order.
    fn linear_system(&self, scenarios: &[Scenario]) -> (DMatrix<f64>, DVector<f64>) {
        let rows = self.rows_with_unknowns();
        let m = 2 * scenarios.len() * rows.len();
        let cols = 2 * self.entries.len();
        let mut a = DMatrix::zeros(m, cols);
        let mut r = DVector::zeros(m);
        let mut row = 0;
        for s in scenarios {
            for &k in &rows {
                let mut re = s.i[k].re;
                let mut im = s.i[k].im;
                for (i, v) in s.v.iter().enumerate() {
                    match self.entry_at(k, i) {
                        Some(e) => {
                            a[(row, 2 * e)] += v.re;
                            a[(row, 2 * e + 1)] -= v.im;
                            a[(row + 1, 2 * e)] += v.im;
                            a[(row + 1, 2 * e + 1)] += v.re;
                        }
                        None => {
                            let y = self.known.get(k, i);
                            re -= v.re * y.re - v.im * y.im;
                            im -= v.im * y.re + v.re * y.im;
                        }
                    }
                }
                r[row] = re;
                r[row + 1] = im;
                row += 2;
            }
        }
        (a, r)
    }

    /// Least-squares estimate of the unknowns, or the Y rows they cannot be
    /// pinned down in.
    fn solve_linear(&self, meas: &MeasurementSet) -> Result<Vec<f64>, AppError> {
        let cols = 2 * self.entries.len();
        if cols == 0 {
            return Ok(Vec::new());
        }
        let (a, r) = self.linear_system(&meas.scenarios);
        // pad so the SVD exposes the whole null space
        let m = a.nrows().max(cols);
        let mut padded = DMatrix::zeros(m, cols);
        padded.view_mut((0, 0), (a.nrows(), cols)).copy_from(&a);
        let mut rhs = DVector::zeros(m);
        rhs.rows_mut(0, r.len()).copy_from(&r);

        let svd = padded.svd(true, true);
        let smax = svd.singular_values.max();
        let tol = 1e-10 * smax.max(1.0) * m as f64;
        let v_t = svd.v_t.as_ref().expect("requested V");
        let mut undetermined = vec![0.0; cols];
        for (s, sigma) in svd.singular_values.iter().enumerate() {
            if *sigma <= tol {
                for (c, u) in undetermined.iter_mut().enumerate() {
                    *u += v_t[(s, c)].powi(2);
                }
            }
        }
        let mut rows: Vec<usize> = undetermined
            .iter()
            .enumerate()
            .filter(|(_, &w)| w > 1e-12)
            .map(|(c, _)| self.entries[c / 2].i)
            .collect();
        if !rows.is_empty() {
            rows.sort_unstable();
            rows.dedup();
            return Err(AppError::NotIdentifiable { scenarios: meas.len(), rows });
        }
        let theta = svd.solve(&rhs, tol).expect("SVD has both factors");
        Ok(theta.iter().copied().collect())
    }
}

fn check_size(meas: &MeasurementSet, n: usize) -> Result<(), AppError> {
    meas.validate()?;
    match meas.n() {
        Some(got) if got != n => Err(AppError::SizeMismatch { expected: n, got }),
        _ => Ok(()),
    }
}

/// Minimum-norm least-squares `Y` from `I = Y·V` over all scenarios.
pub fn ls_admittance(meas: &MeasurementSet, unknowns: &AdmittanceUnknowns) -> Result<Admittance, AppError> {
    check_size(meas, unknowns.n)?;
    let theta = unknowns.solve_linear(meas)?;
    Ok(unknowns.assemble(&theta))
}

/// Real and imaginary current balance per scenario and bus.
#[derive(Clone, Debug)]
pub struct IdentificationModel {
    n: usize,
    scenarios: Vec<Scenario>,
    slot: Vec<Option<usize>>,
    known: Admittance,
    rows: Vec<usize>,
}

impl IdentificationModel {
    fn entry(&self, k: usize, i: usize) -> Option<usize> {
        self.slot[k * self.n + i]
    }
}

impl ResidualModel for IdentificationModel {
    fn residuals(&self, vars: &[DiscreteVar]) -> Vec<Polynomial> {
        let lin = |v: &DiscreteVar| v.as_polynomial().with_prune(0.0);
        let mut out = Vec::with_capacity(2 * self.scenarios.len() * self.rows.len());
        for s in &self.scenarios {
            for &k in &self.rows {
                let mut re = Polynomial::constant(s.i[k].re).with_prune(0.0);
                let mut im = Polynomial::constant(s.i[k].im).with_prune(0.0);
                let mut known = Complex64::new(0.0, 0.0);
                for (i, v) in s.v.iter().enumerate() {
                    match self.entry(k, i) {
                        Some(e) => {
                            let (g, b) = (lin(&vars[2 * e]), lin(&vars[2 * e + 1]));
                            re = re - g.scale(v.re) + b.scale(v.im);
                            im = im - g.scale(v.im) - b.scale(v.re);
                        }
                        None => known += self.known.get(k, i) * v,
                    }
                }
                out.push(re - Polynomial::constant(known.re));
                out.push(im - Polynomial::constant(known.im));
            }
        }
        out
    }

    fn evaluate(&self, values: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(2 * self.scenarios.len() * self.rows.len());
        for s in &self.scenarios {
            for &k in &self.rows {
                let mut yv = Complex64::new(0.0, 0.0);
                for (i, v) in s.v.iter().enumerate() {
                    let y = match self.entry(k, i) {
                        Some(e) => Complex64::new(values[2 * e], values[2 * e + 1]),
                        None => self.known.get(k, i),
                    };
                    yv += y * v;
                }
                out.push(s.i[k].re - yv.re);
                out.push(s.i[k].im - yv.im);
            }
        }
        out
    }
}

/// Residual system for `I = Ŷ·V`; degree 2 once squared.
pub fn build_identification(
    meas: &MeasurementSet,
    unknowns: &AdmittanceUnknowns,
) -> Result<ResidualSystem<IdentificationModel>, AppError> {
    check_size(meas, unknowns.n)?;
    unknowns.solve_linear(meas)?;
    let model = IdentificationModel {
        n: unknowns.n,
        scenarios: meas.scenarios.clone(),
        slot: unknowns.slot.clone(),
        known: unknowns.known.clone(),
        rows: unknowns.rows_with_unknowns(),
    };
    Ok(ResidualSystem::new(model, unknowns.vars()))
}
