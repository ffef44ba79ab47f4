#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use yodo::synth::NetworkSpec;
use yodo::{BayesianNetwork, Cpt, Mrf, Query, VarId, Variable};

pub fn x_to_y() -> BayesianNetwork {
    BayesianNetwork::new(
        vec![Variable::new("X", ["0", "1"]), Variable::new("Y", ["0", "1"])],
        vec![
            Cpt::new(VarId(0), vec![], vec![0.6, 0.4]),
            Cpt::new(VarId(1), vec![VarId(0)], vec![0.8, 0.2, 0.1, 0.9]),
        ],
    )
    .unwrap()
}

/// Random DAG with 2 to 8 variables of 2 or 3 states.
pub fn small_network(seed: u64) -> BayesianNetwork {
    let nodes = 2 + (seed % 7) as usize;
    NetworkSpec::dag(nodes, 3, 3).generate(seed)
}

/// Random DAG over `nodes` binary variables.
pub fn binary_network(nodes: usize, seed: u64) -> BayesianNetwork {
    NetworkSpec::dag(nodes, 3, 2).generate(seed)
}

/// Target plus up to two evidence variables, all distinct.
pub fn random_assignment(bn: &BayesianNetwork, seed: u64) -> Vec<(VarId, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9);
    let n = bn.num_variables();
    let k = rng.gen_range(1..=n.min(3));
    let vars = rand::seq::index::sample(&mut rng, n, k);
    vars.iter()
        .map(|v| (VarId(v), rng.gen_range(0..bn.cardinality(VarId(v)))))
        .collect()
}

pub fn random_query(bn: &BayesianNetwork, seed: u64) -> Query {
    let mut a = random_assignment(bn, seed);
    let target = a.remove(0);
    Query::new(bn, target, a).unwrap()
}

/// Sum over every configuration of the product of the field's potentials.
pub fn brute_force_total(m: &Mrf) -> f64 {
    let cards = m.cards();
    let mut state = vec![0usize; cards.len()];
    let mut total = 0.0;
    loop {
        let mut prod = 1.0;
        for f in m.potentials() {
            let local: Vec<usize> = f.scope().iter().map(|v| state[v.0]).collect();
            prod *= f.get(&local);
        }
        total += prod;
        let mut i = 0;
        loop {
            if i == cards.len() {
                return total;
            }
            state[i] += 1;
            if state[i] < cards[i] {
                break;
            }
            state[i] = 0;
            i += 1;
        }
    }
}

pub fn assert_close(actual: f64, expected: f64, tol: f64, what: &str) {
    assert!(
        (actual - expected).abs() <= tol,
        "{what}: {actual} vs {expected} (tolerance {tol:e})"
    );
}
