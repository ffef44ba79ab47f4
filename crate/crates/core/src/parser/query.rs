use std::fmt;

use thiserror::Error;

use crate::model::{BayesianNetwork, VarId};

/// `P(target | evidence)`; marginal when `evidence` is empty.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Query {
    pub target: (VarId, usize),
    pub evidence: Vec<(VarId, usize)>,
}

#[derive(Error, Debug, Clone, PartialEq, Eq)]
pub enum QueryError {
    #[error("`{0}` is not of the form VAR=state")]
    Malformed(String),
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),
    #[error("variable `{variable}` has no state `{state}`")]
    UnknownState { variable: String, state: String },
    #[error("variable `{0}` appears twice in the evidence")]
    DuplicateEvidence(String),
    #[error("target variable `{0}` is also listed as evidence")]
    TargetInEvidence(String),
    #[error("variable or state index out of range")]
    OutOfRange,
}

impl Query {
    /// Check indices and the query invariants against `bn`.
    pub fn new(
        bn: &BayesianNetwork,
        target: (VarId, usize),
        evidence: Vec<(VarId, usize)>,
    ) -> Result<Self, QueryError> {
        let in_range = |&(v, s): &(VarId, usize)| v.0 < bn.num_variables() && s < bn.cardinality(v);
        if !in_range(&target) || !evidence.iter().all(in_range) {
            return Err(QueryError::OutOfRange);
        }
        for (i, (v, _)) in evidence.iter().enumerate() {
            let name = || bn.variable(*v).name().to_string();
            if *v == target.0 {
                return Err(QueryError::TargetInEvidence(name()));
            }
            if evidence[..i].iter().any(|(w, _)| w == v) {
                return Err(QueryError::DuplicateEvidence(name()));
            }
        }
        Ok(Query { target, evidence })
    }

    pub fn is_marginal(&self) -> bool {
        self.evidence.is_empty()
    }

    /// Target and evidence together: the mask of the numerator pass.
    pub fn joint_assignment(&self) -> Vec<(VarId, usize)> {
        let mut all = self.evidence.clone();
        all.push(self.target);
        all
    }

    pub fn display<'a>(&'a self, bn: &'a BayesianNetwork) -> QueryDisplay<'a> {
        QueryDisplay { q: self, bn }
    }
}

pub struct QueryDisplay<'a> {
    q: &'a Query,
    bn: &'a BayesianNetwork,
}

impl fmt::Display for QueryDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let label = |(v, s): (VarId, usize)| {
            let var = self.bn.variable(v);
            format!("{}={}", var.name(), var.states()[s])
        };
        write!(f, "P({}", label(self.q.target))?;
        if !self.q.evidence.is_empty() {
            let ev: Vec<String> = self.q.evidence.iter().map(|&e| label(e)).collect();
            write!(f, " | {}", ev.join(", "))?;
        }
        write!(f, ")")
    }
}

fn resolve(bn: &BayesianNetwork, spec: &str) -> Result<(VarId, usize), QueryError> {
    let (name, state) = spec
        .split_once('=')
        .ok_or_else(|| QueryError::Malformed(spec.to_string()))?;
    let (name, state) = (name.trim(), state.trim());
    if name.is_empty() || state.is_empty() {
        return Err(QueryError::Malformed(spec.to_string()));
    }
    let v = bn
        .var_id(name)
        .ok_or_else(|| QueryError::UnknownVariable(name.to_string()))?;
    let s = bn
        .variable(v)
        .state_index(state)
        .ok_or_else(|| QueryError::UnknownState {
            variable: name.to_string(),
            state: state.to_string(),
        })?;
    Ok((v, s))
}

/// Resolve `"VAR=state"` strings against `bn`. Only the first `=` separates
/// name from state, so labels such as `>=7.5` work.
pub fn parse_query<S: AsRef<str>>(bn: &BayesianNetwork, target: &str, evidence: &[S]) -> Result<Query, QueryError> {
    let target = resolve(bn, target)?;
    let evidence = evidence
        .iter()
        .map(|e| resolve(bn, e.as_ref()))
        .collect::<Result<Vec<_>, _>>()?;
    Query::new(bn, target, evidence)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Cpt, Variable};

    fn net() -> BayesianNetwork {
        BayesianNetwork::new(
            vec![
                Variable::new("FLOOD", ["low", "high"]),
                Variable::new("RISK", ["low", "high"]),
                Variable::new("C", ["<5", ">=7.5"]),
            ],
            vec![
                Cpt::new(VarId(0), vec![], vec![0.7, 0.3]),
                Cpt::new(VarId(1), vec![VarId(0)], vec![0.9, 0.1, 0.2, 0.8]),
                Cpt::new(VarId(2), vec![], vec![0.5, 0.5]),
            ],
        )
        .unwrap()
    }

    #[test]
    fn conditional_and_marginal() {
        let bn = net();
        let q = parse_query(&bn, "RISK=high", &["FLOOD=high"]).unwrap();
        assert_eq!(q.target, (VarId(1), 1));
        assert_eq!(q.evidence, vec![(VarId(0), 1)]);
        assert_eq!(q.display(&bn).to_string(), "P(RISK=high | FLOOD=high)");
        let q = parse_query::<&str>(&bn, "RISK=low", &[]).unwrap();
        assert!(q.is_marginal());
    }

    #[test]
    fn splits_on_first_equals() {
        let bn = net();
        assert_eq!(parse_query::<&str>(&bn, "C=>=7.5", &[]).unwrap().target, (VarId(2), 1));
    }

    #[test]
    fn errors() {
        let bn = net();
        let e = |t: &str, ev: &[&str]| parse_query(&bn, t, ev).unwrap_err();
        assert_eq!(
            e("RISK=high", &["RISK=low"]),
            QueryError::TargetInEvidence("RISK".into())
        );
        assert_eq!(
            e("RISK=high", &["FLOOD=low", "FLOOD=high"]),
            QueryError::DuplicateEvidence("FLOOD".into())
        );
        assert_eq!(e("NOPE=x", &[]), QueryError::UnknownVariable("NOPE".into()));
        assert!(matches!(e("RISK=mid", &[]), QueryError::UnknownState { .. }));
        assert!(matches!(e("RISK", &[]), QueryError::Malformed(_)));
        assert!(matches!(e("=x", &[]), QueryError::Malformed(_)));
    }
}
