//! Markov random field view of a Bayesian network: one potential per CPT,
//! normalization dropped, evidence imposed by zeroing incompatible entries.

use crate::factor::Factor;
use crate::model::{BayesianNetwork, ParamRef, VarId};

/// Where a potential entry came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Provenance {
    /// The entry still holds its parameter value.
    Param(ParamRef),
    /// The entry was zeroed by evidence; the originating parameter is kept
    /// so covariation can still reference its original value.
    Masked(ParamRef),
}

impl Provenance {
    pub fn param(self) -> ParamRef {
        match self {
            Provenance::Param(p) | Provenance::Masked(p) => p,
        }
    }

    pub fn is_masked(self) -> bool {
        matches!(self, Provenance::Masked(_))
    }
}

#[derive(Clone, Debug, PartialEq)]
struct Origin {
    cpt: VarId,
    offset: usize,
}

/// Potentials are ordered like the network's parameter enumeration, so
/// concatenating their tables yields the flat parameter vector.
#[derive(Clone, Debug, PartialEq)]
pub struct Mrf {
    cards: Vec<usize>,
    potentials: Vec<Factor>,
    origins: Vec<Origin>,
    masks: Vec<Option<Vec<bool>>>,
    param_count: usize,
}

/// Moralize: each CPT becomes a potential over `parents ++ [child]` holding
/// the same entries, so entry `config * card + state` maps back to the
/// parameter `(cpt, state, config)`.
pub fn moralize(bn: &BayesianNetwork) -> Mrf {
    let cards = bn.cardinalities();
    let mut potentials = Vec::with_capacity(bn.num_variables());
    let mut origins = Vec::with_capacity(bn.num_variables());
    for &v in bn.topological_order() {
        let cpt = bn.cpt(v);
        let mut scope = cpt.parents().to_vec();
        scope.push(v);
        let pcards = scope.iter().map(|s| cards[s.0]).collect();
        let factor = Factor::new(scope, pcards, cpt.table().to_vec()).expect("CPT tables are sized by construction");
        potentials.push(factor);
        origins.push(Origin {
            cpt: v,
            offset: bn.param_offset(v),
        });
    }
    Mrf {
        cards,
        masks: vec![None; potentials.len()],
        potentials,
        origins,
        param_count: bn.param_count(),
    }
}

impl Mrf {
    /// Copy of this field with every entry inconsistent with `assignment`
    /// set to zero. The receiver is left untouched.
    pub fn apply_evidence(&self, assignment: &[(VarId, usize)]) -> Mrf {
        let mut out = self.clone();
        if assignment.is_empty() {
            return out;
        }
        for (i, pot) in out.potentials.iter_mut().enumerate() {
            let checks: Vec<(usize, usize)> = assignment
                .iter()
                .filter_map(|&(var, state)| pot.position(var).map(|pos| (pos, state)))
                .collect();
            if checks.is_empty() {
                continue;
            }
            let strides = pot.strides();
            let cards = pot.cards().to_vec();
            let mask = out.masks[i].get_or_insert_with(|| vec![false; pot.len()]);
            for (k, value) in pot.values_mut().iter_mut().enumerate() {
                let consistent = checks
                    .iter()
                    .all(|&(pos, state)| (k / strides[pos]) % cards[pos] == state);
                if !consistent {
                    *value = 0.0;
                    mask[k] = true;
                }
            }
        }
        out
    }

    pub fn num_variables(&self) -> usize {
        self.cards.len()
    }

    pub fn cards(&self) -> &[usize] {
        &self.cards
    }

    pub fn potentials(&self) -> &[Factor] {
        &self.potentials
    }

    pub fn param_count(&self) -> usize {
        self.param_count
    }

    /// The CPT a potential was built from.
    pub fn origin(&self, potential: usize) -> VarId {
        self.origins[potential].cpt
    }

    /// Flat parameter index of a potential's first entry.
    pub fn param_offset(&self, potential: usize) -> usize {
        self.origins[potential].offset
    }

    pub fn is_masked(&self, potential: usize, entry: usize) -> bool {
        self.masks[potential].as_ref().is_some_and(|m| m[entry])
    }

    pub fn provenance(&self, potential: usize, entry: usize) -> Provenance {
        let cpt = self.origins[potential].cpt;
        let card = self.cards[cpt.0];
        let p = ParamRef::new(cpt, entry % card, entry / card);
        if self.is_masked(potential, entry) {
            Provenance::Masked(p)
        } else {
            Provenance::Param(p)
        }
    }
}
