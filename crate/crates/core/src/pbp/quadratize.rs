//! Degree reduction by pairwise substitution.
//!
//! Each step picks a variable pair `(a, b)` that occurs in the most
//! monomials of degree three or more, replaces `a·b` in those monomials by a
//! fresh variable `z`, and adds the Rosenberg penalty
//! `M·(a·b − 2a·z − 2b·z + 3z)`, which is zero exactly when `z = a·b` and at
//! least `M` otherwise.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::{Monomial, Polynomial, VarId, VarRegistry};

pub const DEFAULT_PENALTY_SCALE: f64 = 2.0;

/// An auxiliary variable standing for the product of `parents`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuxVar {
    pub id: VarId,
    pub parents: (VarId, VarId),
    pub penalty: f64,
}

impl AuxVar {
    /// Whether the aux bit agrees with the product of its parents.
    pub fn is_consistent(&self, bits: &[u8]) -> bool {
        let (a, b) = self.parents;
        let prod = bits[a.index()] & bits[b.index()];
        bits[self.id.index()] == prod
    }
}

/// Reduce `p` to degree at most two.
///
/// The penalty weight is `M = penalty_scale × (1 + Σ|coefficients of p|)`,
/// shared by every substitution. Aux ids come from `registry`, which must not
/// hand out ids already used in `p`. Polynomials of degree ≤ 2 are returned
/// unchanged with no aux variables.
pub fn quadratize(
    p: &Polynomial,
    penalty_scale: f64,
    registry: &mut VarRegistry,
) -> (Polynomial, Vec<AuxVar>) {
    if p.degree() <= 2 {
        return (p.clone(), Vec::new());
    }
    debug_assert!(p.max_var().is_none_or(|v| v.index() < registry.len()));
    let penalty = penalty_scale * (1.0 + p.abs_coefficient_sum());

    let mut low = Polynomial::zero().with_prune(p.prune_threshold());
    let mut high: BTreeMap<Vec<VarId>, f64> = BTreeMap::new();
    for (m, c) in p.terms() {
        if m.degree() <= 2 {
            low.add_term(m.clone(), c);
        } else {
            high.insert(m.vars().to_vec(), c);
        }
    }

    let mut aux = Vec::new();
    while !high.is_empty() {
        let (a, b) = most_common_pair(&high);
        let z = registry.alloc();
        let mut next: BTreeMap<Vec<VarId>, f64> = BTreeMap::new();
        for (vars, c) in std::mem::take(&mut high) {
            let reduced = if vars.binary_search(&a).is_ok() && vars.binary_search(&b).is_ok() {
                let mut v: Vec<VarId> = vars.into_iter().filter(|&v| v != a && v != b).collect();
                // z is the newest id, so it sorts last
                v.push(z);
                v
            } else {
                vars
            };
            if reduced.len() <= 2 {
                low.add_term(Monomial::from_vars(reduced), c);
            } else {
                *next.entry(reduced).or_insert(0.0) += c;
            }
        }
        high = next;

        low.add_term(Monomial::from_vars([a, b]), penalty);
        low.add_term(Monomial::from_vars([a, z]), -2.0 * penalty);
        low.add_term(Monomial::from_vars([b, z]), -2.0 * penalty);
        low.add_term(Monomial::var(z), 3.0 * penalty);
        aux.push(AuxVar { id: z, parents: (a, b), penalty });
    }
    (low, aux)
}

/// Pair occurring in the most high-degree monomials; ties go to the
/// lexicographically smallest pair.
fn most_common_pair(high: &BTreeMap<Vec<VarId>, f64>) -> (VarId, VarId) {
    let mut counts: HashMap<(VarId, VarId), usize> = HashMap::new();
    for vars in high.keys() {
        for (i, &a) in vars.iter().enumerate() {
            for &b in &vars[i + 1..] {
                *counts.entry((a, b)).or_insert(0) += 1;
            }
        }
    }
    counts
        .into_iter()
        .max_by(|(pa, ca), (pb, cb)| ca.cmp(cb).then_with(|| pb.cmp(pa)))
        .map(|(pair, _)| pair)
        .expect("high-degree monomials always contain a pair")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn all_bits(n: usize) -> impl Iterator<Item = Vec<u8>> {
        (0..1u64 << n).map(move |mask| (0..n).map(|i| ((mask >> i) & 1) as u8).collect())
    }

    /// brute-force minimum over `n` variables
    fn brute_min(p: &Polynomial, n: usize) -> f64 {
        all_bits(n).map(|b| p.eval(&b).unwrap()).fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn quadratic_input_is_untouched() {
        let p = Polynomial::term(3.0, [VarId(0), VarId(1)]) + Polynomial::var(VarId(2));
        let mut reg = VarRegistry::starting_at(3);
        let (q, aux) = quadratize(&p, 2.0, &mut reg);
        assert_eq!(q, p);
        assert!(aux.is_empty());
        assert_eq!(reg.len(), 3);
    }

    #[test]
    fn cubic_monomial() {
        let p = Polynomial::term(1.0, [VarId(0), VarId(1), VarId(2)]);
        let mut reg = VarRegistry::starting_at(3);
        let (q, aux) = quadratize(&p, 2.0, &mut reg);
        assert_eq!(aux.len(), 1);
        let z = aux[0].id;
        assert_eq!(z, VarId(3));
        assert_eq!(aux[0].parents, (VarId(0), VarId(1)));
        assert_eq!(aux[0].penalty, 4.0);

        let m = 4.0;
        let expected = Polynomial::term(1.0, [z, VarId(2)])
            + Polynomial::term(m, [VarId(0), VarId(1)])
            + Polynomial::term(-2.0 * m, [VarId(0), z])
            + Polynomial::term(-2.0 * m, [VarId(1), z])
            + Polynomial::term(3.0 * m, [z]);
        assert_eq!(q, expected);
        assert!(q.degree() <= 2);
        assert_eq!(brute_min(&q, 4), 0.0);
        assert_eq!(brute_min(&p, 3), 0.0);
    }

    #[test]
    fn quartic_monomial_needs_two_aux() {
        let p = Polynomial::term(-1.0, [VarId(0), VarId(1), VarId(2), VarId(3)]);
        let mut reg = VarRegistry::starting_at(4);
        let (q, aux) = quadratize(&p, 2.0, &mut reg);
        assert_eq!(aux.len(), 2);
        assert_eq!(aux[0].parents, (VarId(0), VarId(1)));
        assert_eq!(aux[1].parents, (VarId(2), VarId(3)));
        assert!(q.degree() <= 2);
        assert_eq!(brute_min(&q, 6), brute_min(&p, 4));
        assert_eq!(brute_min(&p, 4), -1.0);
    }

    #[test]
    fn penalty_vanishes_on_consistent_assignments() {
        let p = Polynomial::term(2.5, [VarId(0), VarId(1), VarId(2)])
            - Polynomial::term(1.5, [VarId(1), VarId(2), VarId(3)])
            + Polynomial::constant(0.7);
        let mut reg = VarRegistry::starting_at(4);
        let (q, aux) = quadratize(&p, 2.0, &mut reg);
        let n = reg.len();
        for orig in all_bits(4) {
            let mut bits = orig.clone();
            bits.resize(n, 0);
            for a in &aux {
                bits[a.id.index()] = bits[a.parents.0.index()] & bits[a.parents.1.index()];
            }
            let diff = q.eval(&bits).unwrap() - p.eval(&orig).unwrap();
            assert!(diff.abs() < 1e-12);
        }
    }

    #[test]
    fn shared_pair_is_substituted_once() {
        // (1,2) occurs in both cubic terms and should be chosen first
        let p = Polynomial::term(1.0, [VarId(0), VarId(1), VarId(2)])
            + Polynomial::term(1.0, [VarId(1), VarId(2), VarId(3)]);
        let mut reg = VarRegistry::starting_at(4);
        let (_, aux) = quadratize(&p, 2.0, &mut reg);
        assert_eq!(aux.len(), 1);
        assert_eq!(aux[0].parents, (VarId(1), VarId(2)));
    }
}
