//! Plain bucket elimination over explicit tables.

use crate::model::{BayesianNetwork, VarId};

struct Table {
    vars: Vec<usize>,
    data: Vec<f64>,
}

impl Table {
    fn index(&self, cards: &[usize], state: &[usize]) -> usize {
        self.vars.iter().fold(0, |acc, &v| acc * cards[v] + state[v])
    }
}

/// Advance `state` over `vars` like an odometer; false after the last
/// configuration.
fn advance(vars: &[usize], cards: &[usize], state: &mut [usize]) -> bool {
    for &v in vars.iter().rev() {
        state[v] += 1;
        if state[v] < cards[v] {
            return true;
        }
        state[v] = 0;
    }
    false
}

/// `P(assignment)` by eliminating one variable at a time, always picking
/// the variable whose joined table is smallest.
pub fn naive_elimination_probability(bn: &BayesianNetwork, assignment: &[(VarId, usize)]) -> f64 {
    let n = bn.num_variables();
    let cards = bn.cardinalities();
    let mut fixed: Vec<Option<usize>> = vec![None; n];
    for &(v, s) in assignment {
        if fixed[v.0].is_some_and(|t| t != s) {
            return 0.0;
        }
        fixed[v.0] = Some(s);
    }
    let consistent = |state: &[usize], vars: &[usize]| vars.iter().all(|&v| fixed[v].is_none_or(|s| s == state[v]));

    let mut state = vec![0usize; n];
    let mut tables: Vec<Table> = Vec::with_capacity(n);
    for v in 0..n {
        let id = VarId(v);
        let mut vars = vec![v];
        vars.extend(bn.parents(id).iter().map(|p| p.0));
        let size: usize = vars.iter().map(|&u| cards[u]).product();
        let mut data = Vec::with_capacity(size);
        loop {
            let entry = if consistent(&state, &vars) {
                let config = bn.parents(id).iter().fold(0, |acc, p| acc * cards[p.0] + state[p.0]);
                bn.column(id, config)[state[v]]
            } else {
                0.0
            };
            data.push(entry);
            if !advance(&vars, &cards, &mut state) {
                break;
            }
        }
        tables.push(Table { vars, data });
    }

    let mut remaining: Vec<usize> = (0..n).collect();
    while !remaining.is_empty() {
        let joined_vars = |v: usize| {
            let mut vars: Vec<usize> = Vec::new();
            for t in tables.iter().filter(|t| t.vars.contains(&v)) {
                for &u in &t.vars {
                    if !vars.contains(&u) {
                        vars.push(u);
                    }
                }
            }
            vars
        };
        let (pos, _) = remaining
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                let size: f64 = joined_vars(v).iter().map(|&u| cards[u] as f64).product();
                (i, size)
            })
            .fold((0, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best });
        let v = remaining.remove(pos);
        let mut out_vars = joined_vars(v);
        out_vars.retain(|&u| u != v);
        let (bucket, rest): (Vec<Table>, Vec<Table>) = tables.into_iter().partition(|t| t.vars.contains(&v));
        tables = rest;

        let size: usize = out_vars.iter().map(|&u| cards[u]).product();
        let mut data = Vec::with_capacity(size);
        state.iter_mut().for_each(|s| *s = 0);
        loop {
            let mut sum = 0.0;
            for s in 0..cards[v] {
                state[v] = s;
                sum += bucket.iter().map(|t| t.data[t.index(&cards, &state)]).product::<f64>();
            }
            state[v] = 0;
            data.push(sum);
            if !advance(&out_vars, &cards, &mut state) {
                break;
            }
        }
        tables.push(Table { vars: out_vars, data });
    }
    tables.iter().map(|t| t.data[0]).product()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::joint_enumeration_probability;
    use crate::synth::NetworkSpec;

    #[test]
    fn agrees_with_enumeration() {
        for seed in 0..20 {
            let bn = NetworkSpec::dag(7, 3, 3).generate(seed);
            for assignment in [vec![], vec![(VarId(6), 1)], vec![(VarId(0), 0), (VarId(5), 1)]] {
                let a = naive_elimination_probability(&bn, &assignment);
                let b = joint_enumeration_probability(&bn, &assignment).unwrap();
                assert!((a - b).abs() < 1e-13, "seed {seed}: {a} vs {b}");
            }
        }
    }
}
