use proptest::prelude::*;

use num_complex::Complex64;
use qubo_grid::pbp::{quadratize, to_qubo, Polynomial, QuboProblem, VarId, VarRegistry};
use qubo_grid::powernet::{parse_case, parse_measurements, save_case, save_measurements, Branch, Bus, MeasurementSet, Network, Scenario};

const VARS: u32 = 5;

fn polynomial(max_degree: usize) -> impl Strategy<Value = Polynomial> {
    let term = (-10i32..=10, prop::collection::btree_set(0..VARS, 0..=max_degree));
    prop::collection::vec(term, 0..8).prop_map(|terms| {
        terms.into_iter().fold(Polynomial::zero(), |acc, (c, vars)| {
            acc + Polynomial::term(c as f64, vars.into_iter().map(VarId))
        })
    })
}

fn assignments(n: usize) -> impl Iterator<Item = Vec<u8>> {
    (0..1u32 << n).map(move |m| (0..n).map(|i| ((m >> i) & 1) as u8).collect())
}

proptest! {
    #[test]
    fn ring_laws(a in polynomial(3), b in polynomial(3), c in polynomial(3)) {
        prop_assert_eq!(&a + &b, &b + &a);
        prop_assert_eq!(&a * &b, &b * &a);
        prop_assert_eq!((&a + &b) + &c, &a + &(&b + &c));
        prop_assert_eq!(&a - &a, Polynomial::zero());
        // integer coefficients keep these exact
        prop_assert_eq!(&a * &(&b + &c), &(&a * &b) + &(&a * &c));
        prop_assert_eq!((&a * &b) * &c, &a * &(&b * &c));
    }

    #[test]
    fn evaluation_is_a_homomorphism(a in polynomial(3), b in polynomial(3)) {
        for x in assignments(VARS as usize) {
            let (ea, eb) = (a.eval(&x).unwrap(), b.eval(&x).unwrap());
            prop_assert_eq!((&a + &b).eval(&x).unwrap(), ea + eb);
            prop_assert_eq!((&a * &b).eval(&x).unwrap(), ea * eb);
            prop_assert_eq!(a.square().eval(&x).unwrap(), ea * ea);
        }
    }

    #[test]
    fn variables_are_idempotent(v in 0..VARS) {
        let x = Polynomial::var(VarId(v));
        prop_assert_eq!(&x * &x, x);
    }

    #[test]
    fn qubo_text_round_trip(p in polynomial(2), offset in -5.0f64..5.0) {
        let q = to_qubo(&(p + Polynomial::constant(offset))).unwrap();
        let back = QuboProblem::from_text(&q.to_text()).unwrap();
        prop_assert_eq!(&back, &q);
        prop_assert_eq!(back.to_text(), q.to_text());
    }

    #[test]
    fn quadratized_minimum_preserved(p in polynomial(4)) {
        let n = VARS as usize;
        let mut reg = VarRegistry::starting_at(VARS);
        let (r, aux) = quadratize(&p, 2.0, &mut reg);
        prop_assert!(r.degree() <= 2);
        let total = n + aux.len();
        let orig = assignments(n).map(|x| p.eval(&x).unwrap()).fold(f64::INFINITY, f64::min);
        let red = assignments(total).map(|x| r.eval(&x).unwrap()).fold(f64::INFINITY, f64::min);
        prop_assert!((orig - red).abs() < 1e-9);
    }
}

fn network() -> impl Strategy<Value = Network> {
    (2usize..6).prop_flat_map(|n| {
        let loads = prop::collection::vec((-2.0f64..2.0, -2.0f64..2.0), n - 1);
        let branches = prop::collection::vec((0..n, 1..n, 0.0f64..10.0, -40.0f64..0.0, 0.0f64..0.1), 1..8);
        (Just(n), -0.1f64..0.1, loads, branches)
    })
    .prop_map(|(n, angle, loads, branches)| {
        let mut buses = vec![Bus::slack(0, Complex64::from_polar(1.0, angle))];
        buses.extend(loads.into_iter().enumerate().map(|(k, (p, q))| Bus::pq(k + 1, p, q)));
        let branches = branches
            .into_iter()
            .map(|(f, off, g, b, sh)| Branch { from: f, to: (f + off) % n, g_series: g, b_series: b, b_shunt_half: sh })
            .collect();
        Network::new(buses, branches).unwrap()
    })
}

proptest! {
    #[test]
    fn case_round_trip(net in network()) {
        let text = save_case(&net);
        let back = parse_case(&text).unwrap();
        prop_assert_eq!(&back, &net);
        prop_assert_eq!(save_case(&back), text);
    }

    #[test]
    fn measurement_round_trip(values in prop::collection::vec(prop::collection::vec(-2.0f64..2.0, 12), 1..4)) {
        let z = |s: &[f64]| s.chunks(2).map(|c| Complex64::new(c[0], c[1])).collect::<Vec<_>>();
        let set = MeasurementSet {
            scenarios: values.iter().map(|v| Scenario { v: z(&v[..6]), i: z(&v[6..]) }).collect(),
        };
        let text = save_measurements(&set);
        prop_assert_eq!(parse_measurements(&text).unwrap(), set);
    }
}
