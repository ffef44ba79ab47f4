//! Elimination orders over the interaction graph of a field.

use std::collections::{BTreeSet, HashSet};

use super::EngineError;
use crate::model::VarId;
use crate::mrf::Mrf;

/// A permutation of all field variables, with the induced width it yields.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EliminationOrder {
    order: Vec<VarId>,
    induced_width: usize,
    cluster_entries: u128,
}

impl EliminationOrder {
    /// Check that `order` is a permutation of `m`'s variables and compute
    /// its induced width.
    pub fn new(m: &Mrf, order: Vec<VarId>) -> Result<Self, EngineError> {
        let n = m.num_variables();
        let mut seen = vec![false; n];
        for v in &order {
            if v.0 >= n || std::mem::replace(&mut seen[v.0], true) {
                return Err(EngineError::NotPermutation);
            }
        }
        if order.len() != n {
            return Err(EngineError::NotPermutation);
        }
        let mut adj = interaction_graph(m);
        let (mut induced_width, mut cluster_entries) = (0, 0u128);
        for v in &order {
            let nbrs = eliminate(&mut adj, v.0);
            induced_width = induced_width.max(nbrs.len());
            cluster_entries = cluster_entries.saturating_add(cluster_size(m.cards(), v.0, &nbrs));
        }
        Ok(EliminationOrder {
            order,
            induced_width,
            cluster_entries,
        })
    }

    pub fn as_slice(&self) -> &[VarId] {
        &self.order
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    /// Largest scope created during elimination, minus one.
    pub fn induced_width(&self) -> usize {
        self.induced_width
    }

    /// Total size of the tables joined during elimination: a proxy for the
    /// time and memory one pass will take.
    pub fn cluster_entries(&self) -> u128 {
        self.cluster_entries
    }
}

fn cluster_size(cards: &[usize], v: usize, nbrs: &[usize]) -> u128 {
    nbrs.iter()
        .fold(cards[v] as u128, |acc, &u| acc.saturating_mul(cards[u] as u128))
}

/// Anything that can propose an elimination order for a field.
pub trait OrderingHeuristic {
    fn order(&self, m: &Mrf) -> EliminationOrder;
}

/// Greedy min-fill; ties go to the smaller degree, then the smaller index.
#[derive(Clone, Copy, Debug, Default)]
pub struct MinFill;

/// Greedy min-degree with smallest-index tie-break.
#[derive(Clone, Copy, Debug, Default)]
pub struct MinDegree;

/// Greedy min-weight: the smallest joined table (product of the
/// cardinalities of a vertex and its neighbours) goes first.
#[derive(Clone, Copy, Debug, Default)]
pub struct MinWeight;

/// Greedy weighted min-fill: each missing edge costs the product of its
/// endpoints' cardinalities.
#[derive(Clone, Copy, Debug, Default)]
pub struct WeightedMinFill;

/// Min-fill order for `m`.
pub fn elimination_order(m: &Mrf) -> EliminationOrder {
    MinFill.order(m)
}

/// Undirected graph with an edge between any two variables sharing a
/// potential.
pub fn interaction_graph(m: &Mrf) -> Vec<HashSet<usize>> {
    let mut adj = vec![HashSet::new(); m.num_variables()];
    for pot in m.potentials() {
        let scope = pot.scope();
        for (i, a) in scope.iter().enumerate() {
            for b in &scope[i + 1..] {
                adj[a.0].insert(b.0);
                adj[b.0].insert(a.0);
            }
        }
    }
    adj
}

fn fill_in(adj: &[HashSet<usize>], v: usize) -> usize {
    let nbrs: Vec<usize> = adj[v].iter().copied().collect();
    let mut missing = 0;
    for (i, a) in nbrs.iter().enumerate() {
        for b in &nbrs[i + 1..] {
            if !adj[*a].contains(b) {
                missing += 1;
            }
        }
    }
    missing
}

/// Connect all neighbours of `v`, then detach it. Returns its former
/// neighbours.
fn eliminate(adj: &mut [HashSet<usize>], v: usize) -> Vec<usize> {
    let mut nbrs: Vec<usize> = adj[v].drain().collect();
    nbrs.sort_unstable();
    for (i, &a) in nbrs.iter().enumerate() {
        adj[a].remove(&v);
        for &b in &nbrs[i + 1..] {
            adj[a].insert(b);
            adj[b].insert(a);
        }
    }
    nbrs
}

/// Greedy elimination driven by a score; lower scores go first and the
/// vertex index breaks remaining ties.
fn greedy<S, F>(m: &Mrf, score: F) -> EliminationOrder
where
    S: Ord + Copy,
    F: Fn(&[HashSet<usize>], usize) -> S,
{
    let n = m.num_variables();
    let mut adj = interaction_graph(m);
    let mut scores: Vec<S> = (0..n).map(|v| score(&adj, v)).collect();
    let mut queue: BTreeSet<(S, usize)> = (0..n).map(|v| (scores[v], v)).collect();
    let mut done = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut width = 0;
    let mut entries = 0u128;
    while let Some((_, v)) = queue.pop_first() {
        done[v] = true;
        order.push(VarId(v));
        let nbrs = eliminate(&mut adj, v);
        width = width.max(nbrs.len());
        entries = entries.saturating_add(cluster_size(m.cards(), v, &nbrs));
        let mut touched: BTreeSet<usize> = nbrs.iter().copied().collect();
        for &a in &nbrs {
            touched.extend(adj[a].iter().copied());
        }
        for u in touched {
            if done[u] {
                continue;
            }
            let s = score(&adj, u);
            if s != scores[u] {
                queue.remove(&(scores[u], u));
                scores[u] = s;
                queue.insert((s, u));
            }
        }
    }
    EliminationOrder {
        order,
        induced_width: width,
        cluster_entries: entries,
    }
}

impl OrderingHeuristic for MinFill {
    fn order(&self, m: &Mrf) -> EliminationOrder {
        greedy(m, |adj, v| (fill_in(adj, v), adj[v].len()))
    }
}

impl OrderingHeuristic for MinDegree {
    fn order(&self, m: &Mrf) -> EliminationOrder {
        greedy(m, |adj, v| adj[v].len())
    }
}

/// `log2` of a table size, scaled so that it orders exactly enough as an
/// integer.
fn log_weight(cards: &[usize], vars: impl Iterator<Item = usize>) -> u64 {
    let bits: f64 = vars.map(|u| (cards[u] as f64).log2()).sum();
    (bits * 1024.0).round() as u64
}

impl OrderingHeuristic for MinWeight {
    fn order(&self, m: &Mrf) -> EliminationOrder {
        let cards = m.cards();
        greedy(m, |adj, v| log_weight(cards, adj[v].iter().copied().chain([v])))
    }
}

impl OrderingHeuristic for WeightedMinFill {
    fn order(&self, m: &Mrf) -> EliminationOrder {
        let cards = m.cards();
        greedy(m, |adj, v| {
            let nbrs: Vec<usize> = adj[v].iter().copied().collect();
            let mut fill = 0u64;
            for (i, a) in nbrs.iter().enumerate() {
                for b in &nbrs[i + 1..] {
                    if !adj[*a].contains(b) {
                        fill += (cards[*a] * cards[*b]) as u64;
                    }
                }
            }
            (fill, log_weight(cards, nbrs.iter().copied().chain([v])))
        })
    }
}
