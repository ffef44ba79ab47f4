//! Seeded random networks for tests and benchmarks.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::model::{BayesianNetwork, Cpt, VarId, Variable};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Topology {
    /// Arbitrary DAG: each node draws parents among earlier nodes.
    Dag,
    /// Singly connected: the undirected skeleton is a tree.
    Polytree,
}

/// Shape of a synthetic network. Parses from `KIND:NODES:MAX_PARENTS:MAX_STATES`,
/// e.g. `polytree:2000:3:4`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NetworkSpec {
    pub topology: Topology,
    pub nodes: usize,
    pub max_parents: usize,
    pub min_states: usize,
    pub max_states: usize,
}

impl NetworkSpec {
    pub fn dag(nodes: usize, max_parents: usize, max_states: usize) -> Self {
        NetworkSpec {
            topology: Topology::Dag,
            nodes,
            max_parents,
            min_states: 2,
            max_states,
        }
    }

    pub fn polytree(nodes: usize, max_parents: usize, max_states: usize) -> Self {
        NetworkSpec {
            topology: Topology::Polytree,
            ..NetworkSpec::dag(nodes, max_parents, max_states)
        }
    }

    pub fn generate(&self, seed: u64) -> BayesianNetwork {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let min_states = self.min_states.max(1);
        let max_states = self.max_states.max(min_states);
        let cards: Vec<usize> = (0..self.nodes)
            .map(|_| rng.gen_range(min_states..=max_states))
            .collect();
        let parents = match self.topology {
            Topology::Dag => dag_parents(&mut rng, self.nodes, self.max_parents),
            Topology::Polytree => polytree_parents(&mut rng, self.nodes, self.max_parents),
        };
        let variables = cards
            .iter()
            .enumerate()
            .map(|(i, &c)| Variable::new(format!("V{i}"), (0..c).map(|s| format!("s{s}"))))
            .collect();
        let cpts = parents
            .into_iter()
            .enumerate()
            .map(|(i, ps)| {
                let configs: usize = ps.iter().map(|p| cards[p.0]).product();
                let mut table = Vec::with_capacity(configs * cards[i]);
                for _ in 0..configs {
                    let column: Vec<f64> = (0..cards[i]).map(|_| rng.gen_range(0.05..1.0)).collect();
                    let sum: f64 = column.iter().sum();
                    table.extend(column.into_iter().map(|x| x / sum));
                }
                Cpt::new(VarId(i), ps, table)
            })
            .collect();
        BayesianNetwork::new(variables, cpts)
            .expect("generated networks are well formed")
            .with_name(self.to_string())
    }
}

fn dag_parents(rng: &mut ChaCha8Rng, n: usize, max_parents: usize) -> Vec<Vec<VarId>> {
    (0..n)
        .map(|i| {
            let k = rng.gen_range(0..=max_parents.min(i));
            let mut pool: Vec<usize> = (0..i).collect();
            pool.shuffle(rng);
            let mut ps: Vec<VarId> = pool.into_iter().take(k).map(VarId).collect();
            ps.sort();
            ps
        })
        .collect()
}

/// Random recursive tree, each edge oriented at random subject to the
/// in-degree cap.
fn polytree_parents(rng: &mut ChaCha8Rng, n: usize, max_parents: usize) -> Vec<Vec<VarId>> {
    let mut parents: Vec<Vec<VarId>> = vec![Vec::new(); n];
    for i in 1..n {
        let j = rng.gen_range(0..i);
        let i_can = parents[i].len() < max_parents;
        let j_can = parents[j].len() < max_parents;
        let j_to_i = match (i_can, j_can) {
            (true, true) => rng.gen_bool(0.5),
            (true, false) => true,
            (false, true) => false,
            // no room either way; leave the two components unconnected
            (false, false) => continue,
        };
        if j_to_i {
            parents[i].push(VarId(j));
        } else {
            parents[j].push(VarId(i));
        }
    }
    parents
}

impl fmt::Display for NetworkSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.topology {
            Topology::Dag => "dag",
            Topology::Polytree => "polytree",
        };
        write!(f, "{kind}:{}:{}:{}", self.nodes, self.max_parents, self.max_states)
    }
}

impl FromStr for NetworkSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(':').collect();
        let [kind, nodes, max_parents, max_states] = parts[..] else {
            return Err(format!("expected KIND:NODES:MAX_PARENTS:MAX_STATES, got `{s}`"));
        };
        let num = |x: &str| {
            x.parse::<usize>()
                .map_err(|_| format!("`{x}` is not a non-negative integer in `{s}`"))
        };
        let (nodes, max_parents, max_states) = (num(nodes)?, num(max_parents)?, num(max_states)?);
        if max_states < 2 {
            return Err(format!("MAX_STATES must be at least 2 in `{s}`"));
        }
        match kind {
            "dag" => Ok(NetworkSpec::dag(nodes, max_parents, max_states)),
            "polytree" => Ok(NetworkSpec::polytree(nodes, max_parents, max_states)),
            _ => Err(format!("unknown topology `{kind}` (expected dag or polytree)")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::validate_network;

    #[test]
    fn generated_networks_validate() {
        for seed in 0..10 {
            for spec in [NetworkSpec::dag(8, 3, 3), NetworkSpec::polytree(30, 2, 4)] {
                let bn = spec.generate(seed);
                let report = validate_network(&bn);
                assert!(report.is_valid(), "{spec} seed {seed}: {report}");
                assert!(bn.cpts().iter().all(|c| c.parents().len() <= spec.max_parents));
            }
        }
    }

    #[test]
    fn same_seed_same_network() {
        let spec = NetworkSpec::dag(6, 2, 3);
        assert_eq!(spec.generate(4), spec.generate(4));
        assert_ne!(spec.generate(4), spec.generate(5));
    }

    #[test]
    fn polytree_skeleton_is_a_forest() {
        let bn = NetworkSpec::polytree(200, 3, 3).generate(1);
        let mut root: Vec<usize> = (0..200).collect();
        fn find(root: &mut [usize], mut v: usize) -> usize {
            while root[v] != v {
                root[v] = root[root[v]];
                v = root[v];
            }
            v
        }
        for c in bn.cpts() {
            for p in c.parents() {
                let (a, b) = (find(&mut root, p.0), find(&mut root, c.child().0));
                assert_ne!(a, b, "skeleton has a cycle");
                root[a] = b;
            }
        }
    }

    #[test]
    fn spec_round_trips_through_strings() {
        let spec: NetworkSpec = "polytree:2000:3:4".parse().unwrap();
        assert_eq!(spec, NetworkSpec::polytree(2000, 3, 4));
        assert_eq!(spec.to_string(), "polytree:2000:3:4");
        assert!("tree:1:1:2".parse::<NetworkSpec>().is_err());
        assert!("dag:1:1".parse::<NetworkSpec>().is_err());
        assert!("dag:4:1:1".parse::<NetworkSpec>().is_err());
    }
}
