mod common;

use common::{assert_close, binary_network, brute_force_total, random_assignment, small_network};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use yodo::engine::{backward_counted, MinDegree, MinWeight, OrderingHeuristic, WeightedMinFill};
use yodo::oracle::joint_enumeration_probability;
use yodo::{backward, elimination_order, marginalize, moralize, BayesianNetwork, EliminationOrder, VarId};

fn engine_g(bn: &BayesianNetwork, assignment: &[(VarId, usize)]) -> f64 {
    let m = moralize(bn).apply_evidence(assignment);
    marginalize(&m, &elimination_order(&m)).unwrap().0
}

#[test]
fn gradient_matches_central_differences_on_50_networks() {
    let h = 1e-5;
    let mut checked = 0;
    for seed in 0..50 {
        let bn = small_network(seed);
        let a = random_assignment(&bn, seed);
        let m = moralize(&bn).apply_evidence(&a);
        let (_, tape) = marginalize(&m, &elimination_order(&m)).unwrap();
        let grad = backward(&tape, &m).unwrap();
        for p in bn.param_enumerate() {
            let theta = bn.param_value(p).unwrap();
            let at = |x: f64| {
                let mut copy = bn.clone();
                copy.set_param_value(p, x).unwrap();
                joint_enumeration_probability(&copy, &a).unwrap()
            };
            let fd = (at(theta + h) - at(theta - h)) / (2.0 * h);
            let g = grad.get(&bn, p).unwrap();
            let err = (g - fd).abs();
            assert!(
                err <= 1e-9 || err <= 1e-5 * fd.abs(),
                "seed {seed}, {}: backward {g} vs difference {fd}",
                bn.param_label(p)
            );
            checked += 1;
        }
    }
    assert!(checked > 500);
}

#[test]
fn marginalize_equals_enumeration_on_binary_networks() {
    for n in 1..=12 {
        for seed in 0..4 {
            let bn = binary_network(n, seed);
            for k in 0..3 {
                let a = if k == 0 {
                    Vec::new()
                } else {
                    random_assignment(&bn, seed * 7 + k)
                };
                let exact = joint_enumeration_probability(&bn, &a).unwrap();
                assert_close(engine_g(&bn, &a), exact, 1e-12, &format!("n={n} seed={seed} {a:?}"));
            }
        }
    }
}

#[test]
fn masked_field_sums_to_evidence_probability() {
    for seed in 0..20 {
        let bn = binary_network(2 + (seed % 9) as usize, seed);
        let a = random_assignment(&bn, seed);
        let m = moralize(&bn).apply_evidence(&a);
        let exact = joint_enumeration_probability(&bn, &a).unwrap();
        assert_close(brute_force_total(&m), exact, 1e-12, &format!("seed {seed}"));
        assert_eq!(m.apply_evidence(&a), m, "masking twice changed the field");
    }
}

#[test]
fn masked_entries_do_not_move_the_probability() {
    for seed in 0..20 {
        let bn = small_network(seed);
        let a = random_assignment(&bn, seed);
        let m = moralize(&bn).apply_evidence(&a);
        let (g, tape) = marginalize(&m, &elimination_order(&m)).unwrap();
        let grad = backward(&tape, &m).unwrap();
        for (i, f) in m.potentials().iter().enumerate() {
            for e in 0..f.len() {
                if !m.is_masked(i, e) {
                    continue;
                }
                let p = m.provenance(i, e).param();
                assert_eq!(grad.get(&bn, p), Some(0.0));
                let mut copy = bn.clone();
                let theta = copy.param_value(p).unwrap();
                copy.set_param_value(p, 0.5 * theta + 0.25).unwrap();
                assert_close(engine_g(&copy, &a), g, 1e-9, &bn.param_label(p));
            }
        }
    }
}

#[test]
fn homogeneity_of_degree_potential_count() {
    let mut nets: Vec<BayesianNetwork> = (0..30).map(small_network).collect();
    nets.push(common::x_to_y());
    for (i, bn) in nets.iter().enumerate() {
        let a = random_assignment(bn, i as u64);
        let m = moralize(bn).apply_evidence(&a);
        let (g, tape) = marginalize(&m, &elimination_order(&m)).unwrap();
        let grad = backward(&tape, &m).unwrap();
        let weighted: f64 = bn
            .param_enumerate()
            .into_iter()
            .map(|p| bn.param_value(p).unwrap() * grad.get(bn, p).unwrap())
            .sum();
        let n = m.potentials().len() as f64;
        assert_close(
            weighted,
            n * g,
            1e-9 * (n * g).abs().max(f64::MIN_POSITIVE),
            &format!("net {i}"),
        );
    }
}

#[test]
fn backward_costs_at_most_four_forward_passes() {
    for seed in 0..30 {
        let bn = small_network(seed);
        let a = random_assignment(&bn, seed);
        let m = moralize(&bn).apply_evidence(&a);
        let (_, tape) = marginalize(&m, &elimination_order(&m)).unwrap();
        let (_, ops) = backward_counted(&tape, &m).unwrap();
        assert!(
            ops <= 4 * tape.forward_ops(),
            "seed {seed}: {ops} vs {}",
            tape.forward_ops()
        );
    }
}

#[test]
fn heuristics_agree_on_probability() {
    for seed in 0..20 {
        let bn = small_network(seed);
        let m = moralize(&bn).apply_evidence(&random_assignment(&bn, seed));
        let reference = marginalize(&m, &elimination_order(&m)).unwrap().0;
        let heuristics: [&dyn OrderingHeuristic; 3] = [&MinDegree, &MinWeight, &WeightedMinFill];
        for h in heuristics {
            let g = marginalize(&m, &h.order(&m)).unwrap().0;
            assert_close(g, reference, 1e-12 * reference.abs(), &format!("seed {seed}"));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn any_order_gives_the_same_probability(seed in 0u64..10_000, shuffle in any::<u64>()) {
        let bn = small_network(seed);
        let m = moralize(&bn).apply_evidence(&random_assignment(&bn, seed));
        let reference = marginalize(&m, &elimination_order(&m)).unwrap().0;
        let mut perm: Vec<VarId> = (0..bn.num_variables()).map(VarId).collect();
        perm.shuffle(&mut ChaCha8Rng::seed_from_u64(shuffle));
        let order = EliminationOrder::new(&m, perm).unwrap();
        let g = marginalize(&m, &order).unwrap().0;
        prop_assert!((g - reference).abs() <= 1e-12 * reference.abs().max(1e-300));
    }

    #[test]
    fn gradient_is_independent_of_order(seed in 0u64..10_000, shuffle in any::<u64>()) {
        let bn = small_network(seed);
        let m = moralize(&bn).apply_evidence(&random_assignment(&bn, seed));
        let (_, t1) = marginalize(&m, &elimination_order(&m)).unwrap();
        let mut perm: Vec<VarId> = (0..bn.num_variables()).map(VarId).collect();
        perm.shuffle(&mut ChaCha8Rng::seed_from_u64(shuffle));
        let (_, t2) = marginalize(&m, &EliminationOrder::new(&m, perm).unwrap()).unwrap();
        let (g1, g2) = (backward(&t1, &m).unwrap(), backward(&t2, &m).unwrap());
        for (a, b) in g1.as_slice().iter().zip(g2.as_slice()) {
            prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }
    }
}
