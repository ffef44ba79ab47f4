//! Slow, independent reference computations.
//!
//! Nothing here touches the engine: probabilities come from full joint
//! enumeration or from a separate, deliberately plain bucket elimination,
//! and derivatives come from finite differences on perturbed copies of the
//! network.

mod naive;
mod verify;

use thiserror::Error;

use crate::exec::Execution;
use crate::model::{BayesianNetwork, ModelError, ParamRef, VarId};
use crate::parser::Query;

pub use naive::naive_elimination_probability;
pub use verify::{verify_report, Check, Discrepancy, VerifyConfig, VerifySummary};

/// Largest number of joint configurations enumeration will visit.
pub const ENUMERATION_LIMIT: u128 = 1 << 24;

/// Default finite-difference step.
pub const DEFAULT_STEP: f64 = 1e-5;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum OracleError {
    #[error("{configurations} joint configurations exceed the enumeration limit of {ENUMERATION_LIMIT}")]
    TooLarge { configurations: u128 },
    #[error("evidence has probability zero")]
    ZeroEvidence,
    #[error("parameter {0} equals 1, so proportional covariation is undefined")]
    Degenerate(ParamRef),
    #[error("value {0} is outside the unit interval")]
    OutOfRange(f64),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CurveSample {
    pub theta: f64,
    pub f: f64,
}

/// Sum of the joint over all configurations consistent with `assignment`,
/// evaluating the chain-rule product directly.
pub fn joint_enumeration_probability(bn: &BayesianNetwork, assignment: &[(VarId, usize)]) -> Result<f64, OracleError> {
    let n = bn.num_variables();
    let mut fixed: Vec<Option<usize>> = vec![None; n];
    for &(v, s) in assignment {
        match fixed[v.0] {
            Some(t) if t != s => return Ok(0.0),
            _ => fixed[v.0] = Some(s),
        }
    }
    let free: Vec<usize> = (0..n).filter(|&v| fixed[v].is_none()).collect();
    let configurations: u128 = free
        .iter()
        .map(|&v| bn.cardinality(VarId(v)) as u128)
        .try_fold(1u128, |acc, c| acc.checked_mul(c))
        .unwrap_or(u128::MAX);
    if configurations > ENUMERATION_LIMIT {
        return Err(OracleError::TooLarge { configurations });
    }
    let mut state: Vec<usize> = fixed.iter().map(|s| s.unwrap_or(0)).collect();
    let mut total = 0.0;
    'outer: loop {
        let mut joint = 1.0;
        for v in 0..n {
            let id = VarId(v);
            let mut config = 0;
            for p in bn.parents(id) {
                config = config * bn.cardinality(*p) + state[p.0];
            }
            joint *= bn.column(id, config)[state[v]];
        }
        total += joint;
        for &v in free.iter().rev() {
            state[v] += 1;
            if state[v] < bn.cardinality(VarId(v)) {
                continue 'outer;
            }
            state[v] = 0;
        }
        break;
    }
    Ok(total)
}

/// `P(assignment)` by enumeration when that is cheap, otherwise by the
/// naive elimination.
pub fn probability(bn: &BayesianNetwork, assignment: &[(VarId, usize)]) -> f64 {
    const SMALL: u128 = 1 << 12;
    let free: u128 = (0..bn.num_variables())
        .filter(|&v| !assignment.iter().any(|(w, _)| w.0 == v))
        .map(|v| bn.cardinality(VarId(v)) as u128)
        .try_fold(1u128, |acc, c| acc.checked_mul(c))
        .unwrap_or(u128::MAX);
    if free <= SMALL {
        if let Ok(p) = joint_enumeration_probability(bn, assignment) {
            return p;
        }
    }
    naive_elimination_probability(bn, assignment)
}

/// `P(target | evidence)` from scratch.
pub fn query_probability(bn: &BayesianNetwork, q: &Query) -> Result<f64, OracleError> {
    let joint = probability(bn, &q.joint_assignment());
    if q.is_marginal() {
        return Ok(joint);
    }
    let evidence = probability(bn, &q.evidence);
    if evidence <= 0.0 {
        return Err(OracleError::ZeroEvidence);
    }
    Ok(joint / evidence)
}

/// Copy of `bn` with `θ_p = theta` and its siblings rescaled by
/// `(1 - theta) / (1 - θ_p^0)`.
pub fn covary(bn: &BayesianNetwork, p: ParamRef, theta: f64) -> Result<BayesianNetwork, OracleError> {
    let theta0 = bn.param_value(p)?;
    if theta0 >= 1.0 {
        return Err(OracleError::Degenerate(p));
    }
    if !(0.0..=1.0).contains(&theta) {
        return Err(OracleError::OutOfRange(theta));
    }
    let scale = (1.0 - theta) / (1.0 - theta0);
    let mut out = bn.clone();
    out.set_param_value(p, theta)?;
    for sibling in bn.cpt_group(p)? {
        out.set_param_value(sibling, bn.param_value(sibling)? * scale)?;
    }
    Ok(out)
}

fn covaried_query(bn: &BayesianNetwork, q: &Query, p: ParamRef, theta: f64) -> Result<f64, OracleError> {
    query_probability(&covary(bn, p, theta)?, q)
}

/// Derivative of the query probability in `θ_p` under proportional
/// covariation. Central difference with step `h`; near a boundary `h` is
/// shrunk tenfold once, and failing that a second-order one-sided
/// difference is used.
pub fn finite_difference_sensitivity(bn: &BayesianNetwork, q: &Query, p: ParamRef, h: f64) -> Result<f64, OracleError> {
    let theta0 = bn.param_value(p)?;
    if theta0 >= 1.0 {
        return Err(OracleError::Degenerate(p));
    }
    let f = |t: f64| covaried_query(bn, q, p, t);
    for step in [h, h / 10.0] {
        if theta0 - step >= 0.0 && theta0 + step <= 1.0 {
            return Ok((f(theta0 + step)? - f(theta0 - step)?) / (2.0 * step));
        }
    }
    let step = if theta0 + 2.0 * h <= 1.0 { h } else { -h };
    let (f0, f1, f2) = (f(theta0)?, f(theta0 + step)?, f(theta0 + 2.0 * step)?);
    Ok((-3.0 * f0 + 4.0 * f1 - f2) / (2.0 * step))
}

/// The query probability re-inferred at every grid point.
pub fn reinference_curve(
    bn: &BayesianNetwork,
    q: &Query,
    p: ParamRef,
    grid: &[f64],
) -> Result<Vec<CurveSample>, OracleError> {
    reinference_curve_with(bn, q, p, grid, Execution::default())
}

pub fn reinference_curve_with(
    bn: &BayesianNetwork,
    q: &Query,
    p: ParamRef,
    grid: &[f64],
    exec: Execution,
) -> Result<Vec<CurveSample>, OracleError> {
    if bn.param_value(p)? >= 1.0 {
        return Err(OracleError::Degenerate(p));
    }
    if let Some(&bad) = grid.iter().find(|t| !(0.0..1.0).contains(*t)) {
        return Err(OracleError::OutOfRange(bad));
    }
    exec.map(grid, |&theta| {
        covaried_query(bn, q, p, theta).map(|f| CurveSample { theta, f })
    })
    .into_iter()
    .collect()
}

/// Finite-difference derivative for every parameter (`None` where the
/// parameter is degenerate): the baseline that costs two re-inferences per
/// parameter.
pub fn finite_difference_sweep(
    bn: &BayesianNetwork,
    q: &Query,
    h: f64,
    exec: Execution,
) -> Result<Vec<Option<f64>>, OracleError> {
    let params = bn.param_enumerate();
    exec.map(&params, |&p| match finite_difference_sensitivity(bn, q, p, h) {
        Ok(d) => Ok(Some(d)),
        Err(OracleError::Degenerate(_)) => Ok(None),
        Err(e) => Err(e),
    })
    .into_iter()
    .collect()
}

/// The grid `0.05, 0.10, ..., 0.95`.
pub fn standard_grid() -> Vec<f64> {
    (1..=19).map(|i| i as f64 / 20.0).collect()
}
