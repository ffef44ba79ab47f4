mod common;

use common::{assert_close, random_query, small_network, x_to_y};
use proptest::prelude::*;
use yodo::oracle::{
    covary, finite_difference_sensitivity, query_probability, reinference_curve, standard_grid, DEFAULT_STEP,
};
use yodo::synth::NetworkSpec;
use yodo::{analyze_all, parse_query, BayesianNetwork, Execution, ParamRef, Query};

fn check_curves(bn: &BayesianNetwork, q: &Query, what: &str) -> usize {
    let r = analyze_all(bn, q).unwrap();
    let grid = standard_grid();
    let mut checked = 0;
    for row in &r.rows {
        let Some(m) = row.metrics else { continue };
        for s in reinference_curve(bn, q, row.param, &grid).unwrap() {
            assert_close(
                m.function.eval(s.theta),
                s.f,
                1e-9,
                &format!("{what} {} at {}", row.label, s.theta),
            );
        }
        assert_close(
            m.function.eval(row.value),
            r.probability,
            1e-9,
            &format!("{what} {} at θ0", row.label),
        );
        checked += 1;
    }
    checked
}

#[test]
fn curves_match_reinference_on_the_two_node_fixture() {
    let bn = x_to_y();
    for (t, e) in [
        ("X=1", vec!["Y=1"]),
        ("Y=1", vec![]),
        ("X=0", vec!["Y=0"]),
        ("Y=0", vec!["X=1"]),
    ] {
        let q = parse_query(&bn, t, &e).unwrap();
        assert_eq!(check_curves(&bn, &q, t), 6);
    }
}

#[test]
fn curves_match_reinference_on_random_six_node_networks() {
    for seed in 0..10 {
        let bn = NetworkSpec::dag(6, 3, 3).generate(100 + seed);
        let q = random_query(&bn, seed);
        assert_eq!(check_curves(&bn, &q, &format!("seed {seed}")), bn.param_count());
    }
}

#[test]
fn vertex_has_unit_slope() {
    let mut seen = 0;
    for seed in 0..40 {
        let bn = small_network(seed);
        let q = random_query(&bn, seed);
        let r = analyze_all(&bn, &q).unwrap();
        for row in &r.rows {
            let Some(m) = row.metrics else { continue };
            let Some(v) = m.vertex else { continue };
            assert_close(m.function.derivative(v.theta).abs(), 1.0, 1e-8, &row.label);
            if v.in_unit_interval && v.theta > 1e-3 && v.theta < 1.0 - 1e-3 {
                let moved = covary(&bn, row.param, v.theta).unwrap();
                let fd = finite_difference_sensitivity(&moved, &q, row.param, DEFAULT_STEP).unwrap();
                assert_close(fd.abs(), 1.0, 1e-5, &format!("{} by differences", row.label));
                seen += 1;
            }
        }
    }
    assert!(seen > 0, "no vertex inside the unit interval was exercised");
}

#[test]
fn binary_siblings_have_opposite_slopes_for_marginals() {
    for seed in 0..20 {
        let bn = NetworkSpec::dag(6, 2, 2).generate(seed);
        let q = Query::new(&bn, random_query(&bn, seed).target, vec![]).unwrap();
        let r = analyze_all(&bn, &q).unwrap();
        for pair in r.rows.chunks(2) {
            let (a, b) = (pair[0].metrics.unwrap(), pair[1].metrics.unwrap());
            assert_eq!(pair[0].param.config, pair[1].param.config);
            assert_close(a.fprime_signed, -b.fprime_signed, 1e-12, &pair[0].label);
        }
    }
}

#[test]
fn sensitivity_set_matches_brute_force() {
    let thetas = [0.1, 0.3, 0.5, 0.7, 0.9];
    let (mut constant, mut moving) = (0, 0);
    for seed in 0..25 {
        let bn = small_network(seed);
        let q = random_query(&bn, seed);
        let r = analyze_all(&bn, &q).unwrap();
        for row in &r.rows {
            let Some(m) = row.metrics else { continue };
            let values: Vec<f64> = thetas
                .iter()
                .map(|&t| query_probability(&covary(&bn, row.param, t).unwrap(), &q).unwrap())
                .collect();
            let flat = values.iter().all(|v| (v - values[0]).abs() <= 1e-10);
            assert_eq!(!m.in_sensitivity_set, flat, "seed {seed} {}: {values:?}", row.label);
            if flat {
                constant += 1;
            } else {
                moving += 1;
            }
        }
    }
    assert!(constant > 0 && moving > 0);
}

#[test]
fn disconnected_component_is_outside_the_sensitivity_set() {
    let text = "network n {}
variable A { type discrete [ 2 ] { a0, a1 }; }
variable B { type discrete [ 2 ] { b0, b1 }; }
variable C { type discrete [ 2 ] { c0, c1 }; }
probability ( A ) { table 0.3, 0.7; }
probability ( B | A ) { (a0) 0.9, 0.1; (a1) 0.4, 0.6; }
probability ( C ) { table 0.2, 0.8; }
";
    let bn = yodo::parse_bif(text).unwrap();
    let q = parse_query(&bn, "B=b1", &["A=a1"]).unwrap();
    let r = analyze_all(&bn, &q).unwrap();
    for row in &r.rows {
        let m = row.metrics.unwrap();
        let relevant = row.label.starts_with("B=") && row.label.ends_with("A=a1");
        assert_eq!(m.in_sensitivity_set, relevant, "{}", row.label);
    }
}

#[test]
fn sequential_and_parallel_reports_agree() {
    for seed in 0..10 {
        let bn = small_network(seed);
        let q = random_query(&bn, seed);
        let a = yodo::sensmetrics::analyze_all_with(&bn, &q, Execution::Sequential).unwrap();
        let b = yodo::sensmetrics::analyze_all_with(&bn, &q, Execution::Parallel).unwrap();
        assert_eq!(a, b);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn slope_matches_finite_differences(seed in 0u64..100_000) {
        let bn = small_network(seed);
        let q = random_query(&bn, seed);
        let r = analyze_all(&bn, &q).unwrap();
        for row in &r.rows {
            let Some(m) = row.metrics else { continue };
            let fd = finite_difference_sensitivity(&bn, &q, row.param, DEFAULT_STEP).unwrap();
            prop_assert!((m.fprime_signed - fd).abs() <= 1e-5 * fd.abs().max(1.0), "{}: {} vs {}", row.label, m.fprime_signed, fd);
        }
    }

    #[test]
    fn function_passes_through_the_query_probability(seed in 0u64..100_000) {
        let bn = small_network(seed);
        let q = random_query(&bn, seed);
        let r = analyze_all(&bn, &q).unwrap();
        prop_assert!((r.probability - query_probability(&bn, &q).unwrap()).abs() <= 1e-12);
        for row in &r.rows {
            if let Some(m) = row.metrics {
                prop_assert!((m.function.eval(row.value) - r.probability).abs() <= 1e-9);
                prop_assert!(m.sens_value >= 0.0 && m.max_first_deriv >= m.sens_value - 1e-12);
            }
        }
    }
}

#[test]
fn degenerate_parameter_rows_are_flagged() {
    let mut bn = x_to_y();
    let p = ParamRef::new(yodo::VarId(1), 1, 1);
    bn.set_param_value(p, 1.0).unwrap();
    bn.set_param_value(ParamRef::new(yodo::VarId(1), 0, 1), 0.0).unwrap();
    let q = parse_query(&bn, "X=1", &["Y=1"]).unwrap();
    let r = analyze_all(&bn, &q).unwrap();
    let row = r.rows.iter().find(|row| row.param == p).unwrap();
    assert!(row.metrics.is_none());
    assert_eq!(r.rows.iter().filter(|row| row.metrics.is_none()).count(), 1);
}
