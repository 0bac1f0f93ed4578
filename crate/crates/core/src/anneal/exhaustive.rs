use std::collections::HashMap;

use super::{AnnealError, FlipState, Sample, Solver};
use crate::pbp::{AuxVar, QuboProblem};

pub const MAX_EXHAUSTIVE_VARS: usize = 24;

/// Global minimum by Gray-code enumeration of all `2ⁿ` assignments.
///
/// Ties go to the lexicographically smallest bitstring (bit 0 first).
pub fn solve_exhaustive(q: &QuboProblem) -> Result<Sample, AnnealError> {
    let n = q.n();
    if n > MAX_EXHAUSTIVE_VARS {
        return Err(AnnealError::TooLarge { n, max: MAX_EXHAUSTIVE_VARS });
    }
    let adj = q.adjacency();
    let all: Vec<usize> = (0..n).collect();
    let x = search_component(q, &adj, &all, &all, &[]);
    Sample::new(q, x)
}

/// Exact backend for iterated problems.
///
/// The interaction graph is split into connected components which are
/// minimized independently, and aux bits are pinned to the product of their
/// parents instead of being enumerated. With the Rosenberg weight used by
/// [`crate::pbp::quadratize`] every minimizer is aux-consistent, so this is
/// still the exact minimum of the full problem. The size limit applies to
/// the free bits of each component.
#[derive(Clone, Copy, Debug, Default)]
pub struct ExactSolver;

impl Solver for ExactSolver {
    fn name(&self) -> &'static str {
        "exhaustive"
    }

    fn solve(&self, q: &QuboProblem, aux: &[AuxVar]) -> Result<Sample, AnnealError> {
        let n = q.n();
        let adj = q.adjacency();
        let aux_of: HashMap<usize, usize> = aux.iter().enumerate().map(|(k, a)| (a.id.index(), k)).collect();

        let mut x = vec![0u8; n];
        for members in components(n, &adj) {
            let free: Vec<usize> = members.iter().copied().filter(|i| !aux_of.contains_key(i)).collect();
            if free.len() > MAX_EXHAUSTIVE_VARS {
                return Err(AnnealError::TooLarge { n: free.len(), max: MAX_EXHAUSTIVE_VARS });
            }
            let mut order: Vec<usize> = members.iter().filter_map(|i| aux_of.get(i).copied()).collect();
            // parents must be settled before their children
            order.sort_unstable();
            let pinned: Vec<(usize, usize, usize)> = order
                .into_iter()
                .map(|k| (aux[k].id.index(), aux[k].parents.0.index(), aux[k].parents.1.index()))
                .collect();
            let best = search_component(q, &adj, &members, &free, &pinned);
            for &i in &members {
                x[i] = best[i];
            }
        }
        Sample::new(q, x)
    }
}

/// Connected components of the coupling graph, each sorted.
fn components(n: usize, adj: &[Vec<(usize, f64)>]) -> Vec<Vec<usize>> {
    let mut seen = vec![false; n];
    let mut out = Vec::new();
    for start in 0..n {
        if seen[start] {
            continue;
        }
        seen[start] = true;
        let mut stack = vec![start];
        let mut members = Vec::new();
        while let Some(i) = stack.pop() {
            members.push(i);
            for &(j, _) in &adj[i] {
                if !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        members.sort_unstable();
        out.push(members);
    }
    out
}

/// Best full-length bitstring with everything outside `members` at zero.
fn search_component(
    q: &QuboProblem,
    adj: &[Vec<(usize, f64)>],
    members: &[usize],
    free: &[usize],
    pinned: &[(usize, usize, usize)],
) -> Vec<u8> {
    let n = q.n();
    let mut in_comp = vec![false; n];
    for &i in members {
        in_comp[i] = true;
    }
    let linear: Vec<(usize, f64)> = members.iter().map(|&i| (i, q.linear()[i])).filter(|e| e.1 != 0.0).collect();
    let quad: Vec<(usize, usize, f64)> =
        q.quadratic().iter().copied().filter(|&(i, j, _)| in_comp[i] && in_comp[j]).collect();
    let exact = |x: &[u8]| -> f64 {
        let mut e = 0.0;
        for &(i, v) in &linear {
            if x[i] != 0 {
                e += v;
            }
        }
        for &(i, j, v) in &quad {
            if x[i] != 0 && x[j] != 0 {
                e += v;
            }
        }
        e
    };
    let scale: f64 = linear.iter().map(|e| e.1.abs()).sum::<f64>() + quad.iter().map(|e| e.2.abs()).sum::<f64>();
    // incremental drift stays far below `recheck`; exact energies closer than `tie` are ties
    let recheck = 1e-9 * scale;
    let tie = 1e-13 * scale;

    let mut st = FlipState::new(q, adj, vec![0u8; n]);
    let mut best_x = st.x.clone();
    let mut best_e = st.energy;
    let mut best_exact: Option<f64> = None;

    let k = free.len();
    for g in 1u64..(1u64 << k) {
        st.flip(free[g.trailing_zeros() as usize]);
        for &(z, a, b) in pinned {
            if st.x[z] != st.x[a] & st.x[b] {
                st.flip(z);
            }
        }
        let e = st.energy;
        if e < best_e - recheck {
            best_x.copy_from_slice(&st.x);
            best_e = e;
            best_exact = None;
        } else if e <= best_e + recheck {
            let cand = exact(&st.x);
            let cur = *best_exact.get_or_insert_with(|| exact(&best_x));
            if cand < cur - tie || ((cand - cur).abs() <= tie && st.x < best_x) {
                best_x.copy_from_slice(&st.x);
                best_e = e;
                best_exact = Some(cand);
            }
        }
    }
    best_x
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::anneal::tests::random_qubo;
    use crate::pbp::{quadratize, to_qubo_sized, Polynomial, VarId, VarRegistry};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// plain loop over all assignments in lexicographic order
    fn brute(q: &QuboProblem) -> (f64, Vec<u8>) {
        let n = q.n();
        let mut best: Option<(f64, Vec<u8>)> = None;
        for mask in 0..1u64 << n {
            // bit 0 is the most significant position
            let x: Vec<u8> = (0..n).map(|i| ((mask >> (n - 1 - i)) & 1) as u8).collect();
            let e = q.energy(&x).unwrap();
            if best.as_ref().is_none_or(|(b, _)| e < *b - 1e-12) {
                best = Some((e, x));
            }
        }
        best.unwrap()
    }

    #[test]
    fn empty_problem() {
        let s = solve_exhaustive(&QuboProblem::empty(0, 2.5)).unwrap();
        assert!(s.assignment().is_empty());
        assert_eq!(s.energy(), 2.5);
    }

    #[test]
    fn degenerate_tie_breaks_lexicographically() {
        let q = QuboProblem::from_entries(2, 0.0, [(0, 0, -1.0), (1, 1, -1.0), (0, 1, 2.0)]).unwrap();
        // enumerate: 00 -> 0, 01 -> -1, 10 -> -1, 11 -> 0
        for _ in 0..5 {
            let s = solve_exhaustive(&q).unwrap();
            assert_eq!(s.assignment(), &[0, 1]);
            assert_eq!(s.energy(), -1.0);
        }
        let s = ExactSolver.solve(&q, &[]).unwrap();
        assert_eq!(s.assignment(), &[0, 1]);
    }

    #[test]
    fn nonnegative_coefficients_give_zero_vector() {
        let q = QuboProblem::from_entries(4, 0.0, [(0, 0, 1.0), (1, 3, 2.0), (2, 2, 0.5)]).unwrap();
        let s = solve_exhaustive(&q).unwrap();
        assert_eq!(s.assignment(), &[0, 0, 0, 0]);
        assert_eq!(s.energy(), 0.0);
    }

    #[test]
    fn size_limit() {
        let q = QuboProblem::empty(25, 0.0);
        assert!(matches!(solve_exhaustive(&q), Err(AnnealError::TooLarge { n: 25, max: 24 })));
    }

    #[test]
    fn matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..40 {
            let n = rng.random_range(1..11);
            let q = random_qubo(n, &mut rng);
            let (e, x) = brute(&q);
            let s = solve_exhaustive(&q).unwrap();
            assert!((s.energy() - e).abs() < 1e-9);
            assert_eq!(s.assignment(), &x[..]);
        }
    }

    #[test]
    fn decomposed_search_matches_whole_search() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            // two independent blocks interleaved over 10 variables
            let mut entries = Vec::new();
            for i in 0..10 {
                for j in (i..10).filter(|j| (j - i) % 2 == 0) {
                    entries.push((i, j, rng.random_range(-10.0..10.0)));
                }
            }
            let q = QuboProblem::from_entries(10, 1.0, entries).unwrap();
            let whole = solve_exhaustive(&q).unwrap();
            let split = ExactSolver.solve(&q, &[]).unwrap();
            assert!((whole.energy() - split.energy()).abs() < 1e-9);
            assert_eq!(whole.assignment(), split.assignment());
        }
    }

    #[test]
    fn pinned_aux_gives_full_minimum() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..30 {
            let mut p = Polynomial::zero();
            for _ in 0..8 {
                let deg = rng.random_range(0..5);
                let vars: Vec<VarId> = (0..deg).map(|_| VarId(rng.random_range(0..5))).collect();
                p = p + Polynomial::term(rng.random_range(-10.0..10.0), vars);
            }
            let mut reg = VarRegistry::starting_at(5);
            let (reduced, aux) = quadratize(&p, 2.0, &mut reg);
            let q = to_qubo_sized(&reduced, reg.len()).unwrap();
            if q.n() > 20 {
                continue;
            }
            let full = solve_exhaustive(&q).unwrap();
            let fast = ExactSolver.solve(&q, &aux).unwrap();
            assert!((full.energy() - fast.energy()).abs() < 1e-9);
            assert!(aux.iter().all(|a| a.is_consistent(fast.assignment())));
        }
    }

    #[test]
    fn free_bit_limit_per_component() {
        let entries: Vec<_> = (0..29).map(|i| (i, i + 1, 1.0)).collect();
        let q = QuboProblem::from_entries(30, 0.0, entries).unwrap();
        assert!(matches!(ExactSolver.solve(&q, &[]), Err(AnnealError::TooLarge { n: 30, .. })));
        let sparse = QuboProblem::from_entries(30, 0.0, [(0, 0, -1.0)]).unwrap();
        assert_eq!(ExactSolver.solve(&sparse, &[]).unwrap().energy(), -1.0);
    }
}
