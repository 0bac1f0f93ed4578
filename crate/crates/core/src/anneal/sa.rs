use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{AnnealError, FlipState, Sample, Solver};
use crate::pbp::{AuxVar, QuboProblem};

/// Simulated-annealing schedule. Temperatures left as `None` scale with the
/// problem: `t_initial = max|Q_ij|`, `t_final = 1e-3 · t_initial`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SaConfig {
    pub sweeps: usize,
    pub restarts: usize,
    pub t_initial: Option<f64>,
    pub t_final: Option<f64>,
    pub seed: u64,
}

impl Default for SaConfig {
    fn default() -> Self {
        Self { sweeps: 2000, restarts: 8, t_initial: None, t_final: None, seed: 0 }
    }
}

impl SaConfig {
    pub fn with_seed(seed: u64) -> Self {
        Self { seed, ..Self::default() }
    }

    fn temperatures(&self, q: &QuboProblem) -> (f64, f64) {
        let t0 = self.t_initial.unwrap_or_else(|| q.max_abs_coefficient());
        let t1 = self.t_final.unwrap_or(1e-3 * t0);
        (t0, t1)
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct SimulatedAnnealing {
    pub config: SaConfig,
}

impl Solver for SimulatedAnnealing {
    fn name(&self) -> &'static str {
        "sa"
    }

    fn solve(&self, q: &QuboProblem, _aux: &[AuxVar]) -> Result<Sample, AnnealError> {
        solve_sa(q, &self.config)
    }
}

/// Single-bit-flip Metropolis annealing, best sample over all restarts.
///
/// Restarts run in parallel; merging by (energy, bitstring) keeps the result
/// independent of scheduling.
pub fn solve_sa(q: &QuboProblem, cfg: &SaConfig) -> Result<Sample, AnnealError> {
    let n = q.n();
    let (t0, t1) = cfg.temperatures(q);
    if n == 0 || t0 <= 0.0 {
        // nothing to anneal: every assignment has energy `offset`
        return Sample::new(q, vec![0; n]);
    }
    assert!(cfg.sweeps > 0 && cfg.restarts > 0, "sweeps and restarts must be positive");
    assert!(t1 > 0.0 && t1 < t0, "need t_initial > t_final > 0");
    let adj = q.adjacency();
    let best = (0..cfg.restarts)
        .into_par_iter()
        .map(|r| anneal_once(q, &adj, cfg, r as u64, t0, t1))
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .min_by(Sample::rank)
        .expect("at least one restart");
    Ok(best)
}

fn anneal_once(
    q: &QuboProblem,
    adj: &[Vec<(usize, f64)>],
    cfg: &SaConfig,
    restart: u64,
    t0: f64,
    t1: f64,
) -> Result<Sample, AnnealError> {
    let n = q.n();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(restart);
    let x0: Vec<u8> = (0..n).map(|_| rng.random_range(0..2u8)).collect();
    let mut st = FlipState::new(q, adj, x0);
    let mut best_x = st.x.clone();
    let mut best_e = st.energy;

    let ratio = if cfg.sweeps > 1 { (t1 / t0).powf(1.0 / (cfg.sweeps - 1) as f64) } else { 1.0 };
    let mut t = t0;
    for _ in 0..cfg.sweeps {
        for i in 0..n {
            let d = st.delta(i);
            if d <= 0.0 || rng.random::<f64>() < (-d / t).exp() {
                st.flip(i);
                if st.energy < best_e {
                    best_e = st.energy;
                    best_x.copy_from_slice(&st.x);
                }
            }
        }
        t *= ratio;
    }

    // zero-temperature descent from the best state seen
    let mut st = FlipState::new(q, adj, best_x);
    loop {
        let mut improved = false;
        for i in 0..n {
            if st.delta(i) < 0.0 {
                st.flip(i);
                improved = true;
            }
        }
        if !improved {
            break;
        }
    }
    Sample::new(q, st.x)
}
