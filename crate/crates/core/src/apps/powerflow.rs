use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::AppError;
use crate::discretize::{DiscreteVar, VOLTAGE_STEP};
use crate::iterate::{ResidualModel, ResidualSystem};
use crate::pbp::{Polynomial, VarRegistry};
use crate::powernet::{Admittance, Network};

pub const NR_TOL: f64 = 1e-8;
pub const NR_MAX_ITER: usize = 30;

/// `μ̂_i, ω̂_i` for every non-slack bus.
#[derive(Clone, Debug, PartialEq)]
pub struct VoltageUnknowns {
    pub buses: Vec<usize>,
    pub mu: Vec<DiscreteVar>,
    pub omega: Vec<DiscreteVar>,
    pub slack: usize,
    pub slack_voltage: Complex64,
}

impl VoltageUnknowns {
    /// Bases from `start`, or flat start. `step` defaults to [`VOLTAGE_STEP`].
    pub fn new(
        net: &Network,
        start: Option<&[Complex64]>,
        step: Option<f64>,
        registry: &mut VarRegistry,
    ) -> Result<Self, AppError> {
        let flat = net.flat_start();
        let start = start.unwrap_or(&flat);
        if start.len() != net.n() {
            return Err(AppError::SizeMismatch { expected: net.n(), got: start.len() });
        }
        let step = step.unwrap_or(VOLTAGE_STEP);
        let buses = net.pq_buses();
        let mut mu = Vec::with_capacity(buses.len());
        let mut omega = Vec::with_capacity(buses.len());
        for &i in &buses {
            mu.push(DiscreteVar::new(format!("mu[{i}]"), start[i].re, step, registry));
            omega.push(DiscreteVar::new(format!("omega[{i}]"), start[i].im, step, registry));
        }
        Ok(Self { buses, mu, omega, slack: net.slack(), slack_voltage: net.slack_voltage() })
    }

    /// `μ` then `ω` of each non-slack bus.
    pub fn vars(&self) -> Vec<DiscreteVar> {
        self.mu.iter().zip(&self.omega).flat_map(|(m, w)| [m.clone(), w.clone()]).collect()
    }

    /// Full voltage vector from values ordered as [`vars`](Self::vars).
    pub fn voltages(&self, values: &[f64]) -> Vec<Complex64> {
        let n = self.buses.len() + 1;
        let mut v = vec![self.slack_voltage; n];
        for (j, &i) in self.buses.iter().enumerate() {
            v[i] = Complex64::new(values[2 * j], values[2 * j + 1]);
        }
        v
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BusMismatch {
    pub bus: usize,
    pub dp: f64,
    pub dq: f64,
}

/// `P_i − P_i^G + P_i^D` and `Q_i − Q_i^G + Q_i^D` at each non-slack bus.
pub fn mismatch(net: &Network, v: &[Complex64]) -> Vec<BusMismatch> {
    mismatch_with(net, &net.ybus(), v)
}

fn mismatch_with(net: &Network, y: &Admittance, v: &[Complex64]) -> Vec<BusMismatch> {
    let current = y.apply(v);
    net.pq_buses()
        .into_iter()
        .map(|i| {
            // S_i = V_i · conj(I_i)
            let (a, b) = (current[i].re, current[i].im);
            let p = v[i].re * a + v[i].im * b;
            let q = v[i].im * a - v[i].re * b;
            let bus = &net.buses[i];
            BusMismatch { bus: i, dp: p - bus.p_net(), dq: q - bus.q_net() }
        })
        .collect()
}

/// `[ΔP, ΔQ]` per non-slack bus, flattened.
pub fn mismatch_vector(net: &Network, v: &[Complex64]) -> Vec<f64> {
    mismatch(net, v).iter().flat_map(|m| [m.dp, m.dq]).collect()
}

/// Derivative of [`mismatch_vector`] with respect to `[μ, ω]` of each
/// non-slack bus, in the same order.
pub fn jacobian(net: &Network, v: &[Complex64]) -> DMatrix<f64> {
    jacobian_with(net, &net.ybus(), v)
}

fn jacobian_with(net: &Network, y: &Admittance, v: &[Complex64]) -> DMatrix<f64> {
    let pq = net.pq_buses();
    let current = y.apply(v);
    let m = pq.len();
    let mut j = DMatrix::zeros(2 * m, 2 * m);
    for (r, &i) in pq.iter().enumerate() {
        let (mu, om) = (v[i].re, v[i].im);
        let (a, b) = (current[i].re, current[i].im);
        for (c, &k) in pq.iter().enumerate() {
            let (g, bb) = (y.g[(i, k)], y.b[(i, k)]);
            let d = if i == k { 1.0 } else { 0.0 };
            j[(2 * r, 2 * c)] = d * a + mu * g + om * bb;
            j[(2 * r, 2 * c + 1)] = d * b - mu * bb + om * g;
            j[(2 * r + 1, 2 * c)] = -d * b + om * g - mu * bb;
            j[(2 * r + 1, 2 * c + 1)] = d * a - om * bb - mu * g;
        }
    }
    j
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NrSolution {
    #[serde(with = "complex_vec")]
    pub voltages: Vec<Complex64>,
    pub iterations: usize,
    pub max_mismatch: f64,
}

/// Rectangular-coordinate Newton-Raphson; converged once every
/// `|ΔP|, |ΔQ| < tol`. `iterations` counts Jacobian solves.
pub fn nr_powerflow(
    net: &Network,
    tol: f64,
    max_iter: usize,
    start: Option<&[Complex64]>,
) -> Result<NrSolution, AppError> {
    let y = net.ybus();
    let pq = net.pq_buses();
    let mut v = match start {
        Some(s) if s.len() != net.n() => return Err(AppError::SizeMismatch { expected: net.n(), got: s.len() }),
        Some(s) => {
            let mut v = s.to_vec();
            v[net.slack()] = net.slack_voltage();
            v
        }
        None => net.flat_start(),
    };
    for it in 0..=max_iter {
        let f = mismatch_with(net, &y, &v);
        let worst = f.iter().map(|m| m.dp.abs().max(m.dq.abs())).fold(0.0, f64::max);
        if worst < tol {
            return Ok(NrSolution { voltages: v, iterations: it, max_mismatch: worst });
        }
        if it == max_iter {
            return Err(AppError::NotConverged { iterations: it, mismatch: worst });
        }
        let rhs = DVector::from_iterator(2 * f.len(), f.iter().flat_map(|m| [-m.dp, -m.dq]));
        let dx = jacobian_with(net, &y, &v).lu().solve(&rhs).ok_or(AppError::SingularJacobian(it + 1))?;
        if dx.iter().any(|d| !d.is_finite()) {
            return Err(AppError::SingularJacobian(it + 1));
        }
        for (c, &k) in pq.iter().enumerate() {
            v[k] += Complex64::new(dx[2 * c], dx[2 * c + 1]);
        }
    }
    unreachable!("loop returns on its last iteration")
}

/// Power balance at each non-slack bus.
#[derive(Clone, Debug)]
pub struct PowerFlowModel {
    net: Network,
    y: Admittance,
    unknowns: VoltageUnknowns,
}

impl ResidualModel for PowerFlowModel {
    fn residuals(&self, vars: &[DiscreteVar]) -> Vec<Polynomial> {
        let n = self.net.n();
        let u = &self.unknowns;
        let mut mu: Vec<Polynomial> = vec![Polynomial::constant(u.slack_voltage.re).with_prune(0.0); n];
        let mut om: Vec<Polynomial> = vec![Polynomial::constant(u.slack_voltage.im).with_prune(0.0); n];
        for (j, &i) in u.buses.iter().enumerate() {
            mu[i] = vars[2 * j].as_polynomial().with_prune(0.0);
            om[i] = vars[2 * j + 1].as_polynomial().with_prune(0.0);
        }
        let mut out = Vec::with_capacity(2 * u.buses.len());
        for &i in &u.buses {
            // Re and Im of I_i = Σ_k Y_ik V_k
            let mut a = Polynomial::zero().with_prune(0.0);
            let mut b = Polynomial::zero().with_prune(0.0);
            for k in 0..n {
                let (g, bb) = (self.y.g[(i, k)], self.y.b[(i, k)]);
                if g != 0.0 {
                    a = a + mu[k].scale(g);
                    b = b + om[k].scale(g);
                }
                if bb != 0.0 {
                    a = a - om[k].scale(bb);
                    b = b + mu[k].scale(bb);
                }
            }
            let bus = &self.net.buses[i];
            let p = &mu[i] * &a + &om[i] * &b - Polynomial::constant(bus.p_net());
            let q = &om[i] * &a - &mu[i] * &b - Polynomial::constant(bus.q_net());
            out.push(p);
            out.push(q);
        }
        out
    }

    fn evaluate(&self, values: &[f64]) -> Vec<f64> {
        let v = self.unknowns.voltages(values);
        mismatch_with(&self.net, &self.y, &v).iter().flat_map(|m| [m.dp, m.dq]).collect()
    }
}

/// Residual system for the power balance; degree 4 once squared.
pub fn build_powerflow(net: &Network, unknowns: &VoltageUnknowns) -> ResidualSystem<PowerFlowModel> {
    let model = PowerFlowModel { net: net.clone(), y: net.ybus(), unknowns: unknowns.clone() };
    ResidualSystem::new(model, unknowns.vars())
}

mod complex_vec {
    use num_complex::Complex64;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &[Complex64], s: S) -> Result<S::Ok, S::Error> {
        v.iter().map(|z| [z.re, z.im]).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Complex64>, D::Error> {
        Ok(Vec::<[f64; 2]>::deserialize(d)?.into_iter().map(|[re, im]| Complex64::new(re, im)).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::anneal::ExactSolver;
    use crate::discretize::{StepConfig, StepController};
    use crate::iterate::{build_hamiltonian, run, ConvergenceCriteria};
    use crate::powernet::{bundled_case, Branch, Bus};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn no_load() -> Network {
        let br = |from, to| Branch { from, to, g_series: 2.0, b_series: -8.0, b_shunt_half: 0.0 };
        Network::new(
            vec![Bus::slack(0, Complex64::new(1.0, 0.0)), Bus::pq(1, 0.0, 0.0), Bus::pq(2, 0.0, 0.0)],
            vec![br(0, 1), br(1, 2)],
        )
        .unwrap()
    }

    fn solve(net: &Network) -> crate::iterate::Solution {
        let u = VoltageUnknowns::new(net, None, None, &mut VarRegistry::new()).unwrap();
        let sys = build_powerflow(net, &u);
        let mut ctrl = StepController::new(StepConfig::default());
        run(&sys, &ExactSolver, &ConvergenceCriteria::default(), &mut ctrl).unwrap()
    }

    /// Closed form for the lossless two-bus case: with V1 = μ + jω,
    /// P1 = 10·ω and Q1 = 10·(μ² + ω² − μ).
    #[test]
    fn two_bus_closed_form_mismatch() {
        let net = bundled_case("case2").unwrap();
        let v = [Complex64::new(1.0, 0.0), Complex64::new(0.97, -0.05)];
        let m = mismatch(&net, &v);
        assert_eq!(m.len(), 1);
        assert!((m[0].dp - (10.0 * -0.05 + 0.5)).abs() < 1e-12);
        assert!((m[0].dq - 10.0 * (0.97 * 0.97 + 0.05 * 0.05 - 0.97)).abs() < 1e-12);
    }

    #[test]
    fn flat_no_load_is_a_solution() {
        let net = no_load();
        assert!(mismatch(&net, &net.flat_start()).iter().all(|m| m.dp.abs() < 1e-15 && m.dq.abs() < 1e-15));
        let nr = nr_powerflow(&net, NR_TOL, NR_MAX_ITER, None).unwrap();
        assert!(nr.iterations <= 1);
        let sol = solve(&net);
        assert!(sol.converged);
        assert_eq!(sol.iterations, 1);
        assert_eq!(sol.final_energy, 0.0);
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        for name in ["case2", "case3", "case4"] {
            let net = bundled_case(name).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(4);
            let v: Vec<Complex64> = net
                .flat_start()
                .iter()
                .enumerate()
                .map(|(i, &z)| {
                    if i == net.slack() {
                        z
                    } else {
                        Complex64::new(rng.random_range(0.9..1.1), rng.random_range(-0.2..0.2))
                    }
                })
                .collect();
            let j = jacobian(&net, &v);
            let h = 1e-6;
            for (c, &k) in net.pq_buses().iter().enumerate() {
                for (part, dz) in [(0, Complex64::new(h, 0.0)), (1, Complex64::new(0.0, h))] {
                    let (mut up, mut dn) = (v.clone(), v.clone());
                    up[k] += dz;
                    dn[k] -= dz;
                    let fu = mismatch_vector(&net, &up);
                    let fd = mismatch_vector(&net, &dn);
                    for r in 0..fu.len() {
                        let fd_val = (fu[r] - fd[r]) / (2.0 * h);
                        let exact = j[(r, 2 * c + part)];
                        let err = (fd_val - exact).abs() / exact.abs().max(1.0);
                        assert!(err < 1e-5, "{name} J[{r},{}] = {exact} vs {fd_val}", 2 * c + part);
                    }
                }
            }
        }
    }

    #[test]
    fn nr_solves_bundled_cases() {
        for name in ["case2", "case3", "case4"] {
            let net = bundled_case(name).unwrap();
            let nr = nr_powerflow(&net, NR_TOL, NR_MAX_ITER, None).unwrap();
            assert!(nr.max_mismatch < 1e-8);
            assert!(mismatch(&net, &nr.voltages).iter().all(|m| m.dp.abs() < 1e-8 && m.dq.abs() < 1e-8));
        }
    }

    #[test]
    fn nr_reproduces_published_four_bus_solution() {
        let net = bundled_case("case4").unwrap();
        let nr = nr_powerflow(&net, NR_TOL, NR_MAX_ITER, None).unwrap();
        for (i, mag, deg) in [(1, 0.982421, -0.976), (2, 0.969005, -1.872), (3, 1.02, 1.523)] {
            let v = nr.voltages[i];
            assert!((v.norm() - mag).abs() < 1e-4, "bus {i}: |V| = {}", v.norm());
            assert!((v.arg().to_degrees() - deg).abs() < 1e-2, "bus {i}: angle {}", v.arg().to_degrees());
        }
    }

    #[test]
    fn nr_errors() {
        let net = bundled_case("case4").unwrap();
        assert!(matches!(nr_powerflow(&net, 1e-30, 2, None), Err(AppError::NotConverged { iterations: 2, .. })));
        let island = Network::new(vec![Bus::slack(0, Complex64::new(1.0, 0.0)), Bus::pq(1, 0.3, 0.0)], vec![]).unwrap();
        assert!(matches!(nr_powerflow(&island, NR_TOL, NR_MAX_ITER, None), Err(AppError::SingularJacobian(1))));
    }

    #[test]
    fn bit_level_matches_continuous() {
        for name in ["case2", "case3", "case4"] {
            let net = bundled_case(name).unwrap();
            let mut reg = VarRegistry::new();
            let mut rng = ChaCha8Rng::seed_from_u64(21);
            let start: Vec<Complex64> = net
                .flat_start()
                .iter()
                .map(|z| z + Complex64::new(rng.random_range(-0.05..0.05), rng.random_range(-0.05..0.05)))
                .collect();
            let u = VoltageUnknowns::new(&net, Some(&start), Some(0.03), &mut reg).unwrap();
            let sys = build_powerflow(&net, &u);
            let polys = sys.model.residuals(&sys.vars);
            assert!(polys.iter().all(|p| p.degree() <= 2));
            let h = build_hamiltonian(&polys).unwrap();
            for _ in 0..100 {
                let bits: Vec<u8> = (0..reg.len()).map(|_| rng.random_range(0..2)).collect();
                let values: Vec<f64> = sys.vars.iter().map(|v| v.decode(&bits).unwrap().0).collect();
                let dv = mismatch_vector(&net, &u.voltages(&values));
                for (p, d) in polys.iter().zip(&dv) {
                    assert!((p.eval(&bits).unwrap() - d).abs() < 1e-9);
                }
                let want: f64 = dv.iter().map(|d| d * d).sum();
                assert!((h.eval(&bits).unwrap() - want).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn two_bus_framework_matches_nr() {
        let net = bundled_case("case2").unwrap();
        let nr = nr_powerflow(&net, NR_TOL, NR_MAX_ITER, None).unwrap();
        let sol = solve(&net);
        assert!(sol.converged, "{:?}", sol.stop_reason);
        let v1 = Complex64::new(sol.value("mu[1]").unwrap(), sol.value("omega[1]").unwrap());
        assert!((v1 - nr.voltages[1]).norm() / nr.voltages[1].norm() < 3e-3);
        assert!(sol.trace.records[0].aux_count > 0);
    }
}
