//! Exact marginalization by variable elimination on a differentiation tape,
//! and the reverse pass that yields `∂g/∂θ` for every parameter at once.

mod order;
mod tape;

use thiserror::Error;

pub use order::{
    elimination_order, interaction_graph, EliminationOrder, MinDegree, MinFill, MinWeight, OrderingHeuristic,
    WeightedMinFill,
};
pub use tape::{backward, backward_counted, marginalize, Gradient, NodeId, Op, Tape, TapeNode, TAPE_ENTRY_LIMIT};

use crate::factor::{self, Factor, FactorError};
use crate::model::VarId;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum EngineError {
    #[error(transparent)]
    Factor(#[from] FactorError),
    #[error("elimination order is not a permutation of the field's variables")]
    NotPermutation,
    #[error("field has no potentials")]
    Empty,
    #[error("tape does not end in a scalar")]
    NotScalarRoot,
    #[error("marginal overflowed to a non-finite value at {node}")]
    Overflow { node: NodeId },
    #[error("tape was recorded on a field with different potentials")]
    TapeMismatch,
    #[error("elimination would build {entries} table entries, above the limit of {limit}")]
    TooLarge { entries: u128, limit: u128 },
}

/// Pointwise product of two factors over the ordered union of their scopes.
pub fn factor_product(a: &Factor, b: &Factor) -> Result<Factor, EngineError> {
    Ok(factor::product(a, b)?)
}

/// Sum `v` out of `a`.
pub fn factor_sum_out(a: &Factor, v: VarId) -> Result<Factor, EngineError> {
    Ok(factor::sum_out(a, v)?)
}
