//! Variable elimination recorded on a tape, and the reverse sweep over it.

use std::fmt;

use super::{EliminationOrder, EngineError};
use crate::factor::{self, Factor};
use crate::model::{BayesianNetwork, ParamRef, VarId};
use crate::mrf::Mrf;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub usize);

#[derive(Clone, Debug, PartialEq)]
pub enum Op {
    /// Potential `potential` of the field the tape was recorded on.
    Leaf {
        potential: usize,
    },
    Product {
        lhs: NodeId,
        rhs: NodeId,
    },
    SumOut {
        input: NodeId,
        var: VarId,
    },
}

#[derive(Clone, Debug)]
pub struct TapeNode {
    pub op: Op,
    /// `None` for leaves, whose values live in the field.
    value: Option<Factor>,
}

/// Operations of one forward pass in execution order; the last node is the
/// scalar result.
#[derive(Clone, Debug)]
pub struct Tape {
    nodes: Vec<TapeNode>,
    potential_sizes: Vec<usize>,
    forward_ops: u64,
    warnings: Vec<String>,
}

impl Tape {
    pub fn nodes(&self) -> &[TapeNode] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn root(&self) -> NodeId {
        NodeId(self.nodes.len() - 1)
    }

    /// Entry updates performed by the forward pass (one per product cell
    /// and one per summed input cell).
    pub fn forward_ops(&self) -> u64 {
        self.forward_ops
    }

    /// Underflow diagnostics collected during the forward pass.
    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    /// Value of node `id`; leaves are read from `m`.
    pub fn value<'a>(&'a self, m: &'a Mrf, id: NodeId) -> &'a Factor {
        match (&self.nodes[id.0].op, &self.nodes[id.0].value) {
            (_, Some(f)) => f,
            (Op::Leaf { potential }, None) => &m.potentials()[*potential],
            _ => unreachable!("interior nodes always hold a value"),
        }
    }

    fn check_field(&self, m: &Mrf) -> Result<(), EngineError> {
        let sizes: Vec<usize> = m.potentials().iter().map(Factor::len).collect();
        if sizes != self.potential_sizes {
            return Err(EngineError::TapeMismatch);
        }
        Ok(())
    }
}

/// `∂g/∂θ` for every network parameter, indexed like `param_enumerate`.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradient {
    values: Vec<f64>,
}

impl Gradient {
    pub fn from_values(values: Vec<f64>) -> Self {
        Gradient { values }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, bn: &BayesianNetwork, p: ParamRef) -> Option<f64> {
        bn.param_index(p).ok().map(|i| self.values[i])
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "node {}", self.0)
    }
}

struct Recorder<'a> {
    m: &'a Mrf,
    tape: Tape,
}

impl Recorder<'_> {
    fn push(&mut self, op: Op, value: Option<Factor>) -> NodeId {
        self.tape.nodes.push(TapeNode { op, value });
        NodeId(self.tape.nodes.len() - 1)
    }

    fn value(&self, id: NodeId) -> &Factor {
        self.tape.value(self.m, id)
    }

    fn product(&mut self, lhs: NodeId, rhs: NodeId) -> Result<NodeId, EngineError> {
        let (value, underflows) = factor::product_counting_underflow(self.value(lhs), self.value(rhs))?;
        self.tape.forward_ops += value.len() as u64;
        let id = NodeId(self.tape.nodes.len());
        if underflows > 0 {
            let msg =
                format!("{underflows} entries of intermediate {id} (product of {lhs} and {rhs}) underflowed to zero");
            log::warn!("{msg}");
            self.tape.warnings.push(msg);
        }
        Ok(self.push(Op::Product { lhs, rhs }, Some(value)))
    }

    fn sum_out(&mut self, input: NodeId, var: VarId) -> Result<NodeId, EngineError> {
        let value = factor::sum_out(self.value(input), var)?;
        self.tape.forward_ops += self.value(input).len() as u64;
        Ok(self.push(Op::SumOut { input, var }, Some(value)))
    }

    /// Multiply a bucket down to one factor, always combining the pair
    /// whose product is smallest.
    fn combine(&mut self, mut bucket: Vec<NodeId>) -> Result<NodeId, EngineError> {
        while bucket.len() > 1 {
            let mut best = (usize::MAX, 0, 1);
            for i in 0..bucket.len() {
                for j in i + 1..bucket.len() {
                    let size = union_size(self.value(bucket[i]), self.value(bucket[j]));
                    if size < best.0 {
                        best = (size, i, j);
                    }
                }
            }
            let (_, i, j) = best;
            let rhs = bucket.remove(j);
            let lhs = bucket.remove(i);
            let c = self.product(lhs, rhs)?;
            bucket.push(c);
        }
        Ok(bucket[0])
    }
}

fn union_size(a: &Factor, b: &Factor) -> usize {
    let mut size = a.len();
    for (v, &c) in b.scope().iter().zip(b.cards()) {
        if !a.contains(*v) {
            size = size.saturating_mul(c);
        }
    }
    size
}

/// Largest total cluster size `marginalize` will attempt. The tape keeps
/// every intermediate table, so memory grows with this sum.
pub const TAPE_ENTRY_LIMIT: u128 = 1 << 26;

/// Sum the product of all potentials of `m` over every configuration by
/// eliminating variables in `order`, recording each step.
pub fn marginalize(m: &Mrf, order: &EliminationOrder) -> Result<(f64, Tape), EngineError> {
    if order.len() != m.num_variables() {
        return Err(EngineError::NotPermutation);
    }
    if order.cluster_entries() > TAPE_ENTRY_LIMIT {
        return Err(EngineError::TooLarge {
            entries: order.cluster_entries(),
            limit: TAPE_ENTRY_LIMIT,
        });
    }
    if m.potentials().is_empty() {
        return Err(EngineError::Empty);
    }
    let mut rec = Recorder {
        m,
        tape: Tape {
            nodes: Vec::with_capacity(3 * m.potentials().len()),
            potential_sizes: m.potentials().iter().map(Factor::len).collect(),
            forward_ops: 0,
            warnings: Vec::new(),
        },
    };
    // Each table waits in the bucket of its first variable to be eliminated;
    // tables with empty scope go straight to the root.
    let mut position = vec![0; m.num_variables()];
    for (i, v) in order.as_slice().iter().enumerate() {
        position[v.0] = i;
    }
    let mut buckets: Vec<Vec<NodeId>> = vec![Vec::new(); order.len()];
    let mut active: Vec<NodeId> = Vec::new();
    let place = |rec: &Recorder, id: NodeId, buckets: &mut Vec<Vec<NodeId>>, active: &mut Vec<NodeId>| match rec
        .value(id)
        .scope()
        .iter()
        .map(|v| position[v.0])
        .min()
    {
        Some(i) => buckets[i].push(id),
        None => active.push(id),
    };
    for potential in 0..m.potentials().len() {
        let id = rec.push(Op::Leaf { potential }, None);
        place(&rec, id, &mut buckets, &mut active);
    }

    for (i, &var) in order.as_slice().iter().enumerate() {
        let bucket = std::mem::take(&mut buckets[i]);
        if bucket.is_empty() {
            continue;
        }
        let joined = rec.combine(bucket)?;
        let summed = rec.sum_out(joined, var)?;
        place(&rec, summed, &mut buckets, &mut active);
    }
    let root = rec.combine(active)?;
    let value = rec.value(root);
    if !value.is_scalar() {
        return Err(EngineError::NotScalarRoot);
    }
    let g = value.values()[0];
    if !g.is_finite() {
        return Err(EngineError::Overflow { node: root });
    }
    Ok((g, rec.tape))
}

/// Reverse sweep: seed the root adjoint with 1, propagate through every
/// recorded operation, and route leaf adjoints to parameters. Entries
/// masked by evidence get gradient 0.
pub fn backward(t: &Tape, m: &Mrf) -> Result<Gradient, EngineError> {
    backward_counted(t, m).map(|(g, _)| g)
}

/// [`backward`] plus the number of entry updates it performed.
pub fn backward_counted(t: &Tape, m: &Mrf) -> Result<(Gradient, u64), EngineError> {
    t.check_field(m)?;
    let root = t.root();
    if !t.value(m, root).is_scalar() {
        return Err(EngineError::NotScalarRoot);
    }
    let mut ops = 0u64;
    let mut adjoints: Vec<Option<Vec<f64>>> = vec![None; t.nodes.len()];
    adjoints[root.0] = Some(vec![1.0]);

    for idx in (0..t.nodes.len()).rev() {
        let Some(adj) = adjoints[idx].take() else {
            continue;
        };
        match t.nodes[idx].op {
            Op::Leaf { .. } => {
                adjoints[idx] = Some(adj);
            }
            Op::Product { lhs, rhs } => {
                let (a, b) = (t.value(m, lhs), t.value(m, rhs));
                let mut ga = adjoints[lhs.0].take().unwrap_or_else(|| vec![0.0; a.len()]);
                let mut gb = adjoints[rhs.0].take().unwrap_or_else(|| vec![0.0; b.len()]);
                factor::product_backward(a, b, &adj, &mut ga, &mut gb)?;
                ops += 2 * adj.len() as u64;
                adjoints[lhs.0] = Some(ga);
                adjoints[rhs.0] = Some(gb);
            }
            Op::SumOut { input, var } => {
                let a = t.value(m, input);
                let mut ga = adjoints[input.0].take().unwrap_or_else(|| vec![0.0; a.len()]);
                factor::sum_out_backward(a, var, &adj, &mut ga)?;
                ops += a.len() as u64;
                adjoints[input.0] = Some(ga);
            }
        }
    }

    let mut grad = vec![0.0; m.param_count()];
    for (idx, node) in t.nodes.iter().enumerate() {
        if let Op::Leaf { potential } = node.op {
            let Some(adj) = &adjoints[idx] else {
                continue;
            };
            let offset = m.param_offset(potential);
            for (k, &g) in adj.iter().enumerate() {
                if !m.is_masked(potential, k) {
                    grad[offset + k] = g;
                }
            }
        }
    }
    Ok((Gradient { values: grad }, ops))
}
