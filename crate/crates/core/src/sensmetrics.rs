//! Sensitivity functions and the metrics derived from them.
//!
//! Under proportional covariation the query probability, seen as a function
//! of one parameter θ, is `f(θ) = (c1 θ + c2) / (c3 θ + c4)`. The numerator
//! pass (target and evidence masked) gives `c1, c2`; the denominator pass
//! (evidence only) gives `c3, c4`. Marginal queries have `c3 = 0, c4 = 1`.

use std::sync::Arc;

use thiserror::Error;

use crate::engine::{backward, elimination_order, marginalize, EngineError, Gradient};
use crate::exec::Execution;
use crate::model::{validate_network, BayesianNetwork, ModelError, ParamRef, ValidationReport};
use crate::mrf::moralize;
use crate::parser::Query;

/// Relative tolerance for treating a computed quantity as exactly zero.
pub const ZERO_TOLERANCE: f64 = 1e-12;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("evidence has probability zero")]
    ZeroEvidence,
    #[error("parameter {0} equals 1, so proportional covariation is undefined")]
    DegenerateParameter(ParamRef),
    #[error("a conditional query needs the gradient of the evidence probability")]
    MissingDenominator,
    #[error("network is not well formed:\n{0}")]
    InvalidNetwork(ValidationReport),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Kind {
    /// `c3 = 0, c4 = 1`.
    Linear,
    Hyperbolic,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SensFunction {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
    pub kind: Kind,
    /// Magnitude below which `c1 c4 - c2 c3` counts as zero.
    det_tolerance: f64,
}

impl SensFunction {
    pub fn linear(c1: f64, c2: f64) -> Self {
        Self::build(c1, c2, 0.0, 1.0, 0.0)
    }

    /// General form; `c3 == 0` is normalized to the linear kind by dividing
    /// through by `c4`.
    pub fn new(c1: f64, c2: f64, c3: f64, c4: f64) -> Self {
        Self::build(c1, c2, c3, c4, 0.0)
    }

    fn build(c1: f64, c2: f64, c3: f64, c4: f64, noise: f64) -> Self {
        let (c1, c2, c3, c4, kind) = if c3 == 0.0 {
            (c1 / c4, c2 / c4, 0.0, 1.0, Kind::Linear)
        } else {
            (c1, c2, c3, c4, Kind::Hyperbolic)
        };
        let scale = (c1 * c4)
            .abs()
            .max((c2 * c3).abs())
            .max(c4 * c4)
            .max((c3 + c4) * (c3 + c4))
            .max(noise);
        SensFunction {
            c1,
            c2,
            c3,
            c4,
            kind,
            det_tolerance: ZERO_TOLERANCE * scale,
        }
    }

    pub fn eval(&self, theta: f64) -> f64 {
        (self.c1 * theta + self.c2) / (self.c3 * theta + self.c4)
    }

    /// `c1 c4 - c2 c3`; its sign is the direction of monotonicity.
    pub fn determinant(&self) -> f64 {
        self.c1 * self.c4 - self.c2 * self.c3
    }

    /// True when `f` is constant up to round-off.
    pub fn is_constant(&self) -> bool {
        self.determinant().abs() <= self.det_tolerance
    }

    /// Signed first derivative.
    pub fn derivative(&self, theta: f64) -> f64 {
        let d = self.c3 * theta + self.c4;
        self.determinant() / (d * d)
    }

    fn hyperbolic(&self) -> Option<()> {
        (self.kind == Kind::Hyperbolic).then_some(())
    }

    /// Horizontal asymptote offset `-c4 / c3`.
    pub fn s(&self) -> Option<f64> {
        self.hyperbolic().map(|_| -self.c4 / self.c3)
    }

    pub fn t(&self) -> Option<f64> {
        self.hyperbolic().map(|_| self.c1 / self.c3)
    }

    pub fn r(&self) -> Option<f64> {
        let (s, t) = (self.s()?, self.t()?);
        Some(self.c2 / self.c3 + s * t)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Monotonicity {
    Increasing,
    Decreasing,
    Constant,
}

impl Monotonicity {
    pub fn as_str(self) -> &'static str {
        match self {
            Monotonicity::Increasing => "increasing",
            Monotonicity::Decreasing => "decreasing",
            Monotonicity::Constant => "constant",
        }
    }
}

/// The point where `|f'| = 1`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Vertex {
    pub theta: f64,
    pub proximity: f64,
    /// False when the vertex lies outside `[0, 1]`; the proximity is still
    /// reported.
    pub in_unit_interval: bool,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Metrics {
    pub function: SensFunction,
    pub fprime_signed: f64,
    pub sens_value: f64,
    pub vertex: Option<Vertex>,
    pub second_deriv_signed: f64,
    pub second_deriv_abs: f64,
    /// `f64::INFINITY` when the pole lies in `[0, 1]`.
    pub max_first_deriv: f64,
    pub monotonicity: Monotonicity,
    pub in_sensitivity_set: bool,
}

impl Metrics {
    pub fn proximity(&self) -> Option<f64> {
        self.vertex.map(|v| v.proximity)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricRow {
    pub param: ParamRef,
    pub label: Arc<str>,
    pub value: f64,
    /// `None` for a degenerate parameter (`θ = 1`).
    pub metrics: Option<Metrics>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SensitivityReport {
    pub query: Query,
    pub probability: f64,
    /// One row per parameter, in parameter order.
    pub rows: Vec<MetricRow>,
    pub induced_width: usize,
    /// Underflow diagnostics from the forward passes.
    pub warnings: Vec<String>,
}

/// Covaried derivative of one entry given the gradient over its column, plus
/// the magnitude of the summed terms (for round-off estimates).
fn covaried_in_column(grad: &[f64], theta: &[f64], state: usize) -> Option<(f64, f64)> {
    let t0 = theta[state];
    if t0 >= 1.0 {
        return None;
    }
    let mut others = 0.0;
    let mut mag = 0.0;
    for (j, (&g, &t)) in grad.iter().zip(theta).enumerate() {
        if j != state {
            others += g * t;
            mag += (g * t).abs();
        }
    }
    let rest = 1.0 - t0;
    Some((grad[state] - others / rest, grad[state].abs() + mag / rest))
}

fn column_slices<'a>(bn: &'a BayesianNetwork, grad: &'a Gradient, p: ParamRef) -> (&'a [f64], &'a [f64]) {
    let card = bn.cardinality(p.cpt);
    let start = bn.param_offset(p.cpt) + p.config * card;
    (&grad.as_slice()[start..start + card], bn.column(p.cpt, p.config))
}

fn covaried_parts(grad: &Gradient, p: ParamRef, bn: &BayesianNetwork) -> Result<(f64, f64), AnalysisError> {
    bn.param_index(p)?;
    let (g, t) = column_slices(bn, grad, p);
    covaried_in_column(g, t, p.state).ok_or(AnalysisError::DegenerateParameter(p))
}

/// `df/dθ_p` with every sibling in the column scaled by `(1 - θ)/(1 - θ0)`.
pub fn covaried_derivative(grad: &Gradient, p: ParamRef, bn: &BayesianNetwork) -> Result<f64, AnalysisError> {
    covaried_parts(grad, p, bn).map(|(v, _)| v)
}

/// `(c1, c2)` of the line through `(θ0, g_value)` with slope `fprime`.
pub fn linear_coefficients(g_value: f64, fprime: f64, theta0: f64) -> (f64, f64) {
    (fprime, g_value - fprime * theta0)
}

/// Coefficients of `f` for parameter `p`. `denominator_grad` is `None` for a
/// marginal query, in which case `denominator_value` is ignored.
pub fn sensitivity_function(
    bn: &BayesianNetwork,
    query: &Query,
    p: ParamRef,
    numerator_grad: &Gradient,
    denominator_grad: Option<&Gradient>,
    numerator_value: f64,
    denominator_value: f64,
) -> Result<SensFunction, AnalysisError> {
    let theta0 = bn.param_value(p)?;
    let (f1, mag1) = covaried_parts(numerator_grad, p, bn)?;
    let (c1, c2) = linear_coefficients(numerator_value, f1, theta0);
    let (c3, c4, mag3) = match (query.is_marginal(), denominator_grad) {
        (true, _) => (0.0, 1.0, 0.0),
        (false, None) => return Err(AnalysisError::MissingDenominator),
        (false, Some(dg)) => {
            if denominator_value <= 0.0 {
                return Err(AnalysisError::ZeroEvidence);
            }
            let (f3, mag3) = covaried_parts(dg, p, bn)?;
            // a slope at round-off level is a flat denominator
            let f3 = if f3.abs() <= ZERO_TOLERANCE * mag3 { 0.0 } else { f3 };
            let (c3, c4) = linear_coefficients(denominator_value, f3, theta0);
            (c3, c4, mag3)
        }
    };
    let noise = (mag1 * c4).abs().max((mag3 * c2).abs());
    let sf = SensFunction::build(c1, c2, c3, c4, noise);
    if sf.is_constant() {
        return Ok(SensFunction::linear(0.0, sf.eval(theta0)));
    }
    Ok(sf)
}

/// `|f'(θ0)|`.
pub fn sensitivity_value(sf: &SensFunction, theta0: f64) -> f64 {
    sf.derivative(theta0).abs()
}

/// Vertex of the hyperbola and its distance from `θ0`; `None` for linear
/// functions and when `s` or `r` is zero.
pub fn vertex_proximity(sf: &SensFunction, theta0: f64) -> Option<Vertex> {
    let (s, r) = (sf.s()?, sf.r()?);
    if s == 0.0 || r == 0.0 {
        return None;
    }
    let theta = if s < 0.0 {
        s + r.abs().sqrt()
    } else {
        s - r.abs().sqrt()
    };
    Some(Vertex {
        theta,
        proximity: (theta0 - theta).abs(),
        in_unit_interval: (0.0..=1.0).contains(&theta),
    })
}

/// `(f''(θ0), |f''(θ0)|)`.
pub fn second_derivative(sf: &SensFunction, theta0: f64) -> (f64, f64) {
    let d = sf.c3 * theta0 + sf.c4;
    let signed = -2.0 * sf.c3 * sf.determinant() / (d * d * d);
    (signed, signed.abs())
}

/// `max |f'|` over `[0, 1]`; infinite when the pole lies inside.
pub fn max_abs_derivative(sf: &SensFunction) -> f64 {
    if let Some(pole) = sf.s() {
        if (0.0..=1.0).contains(&pole) {
            return f64::INFINITY;
        }
    }
    let det = sf.determinant().abs();
    let at_one = sf.c3 + sf.c4;
    (det / (sf.c4 * sf.c4)).max(det / (at_one * at_one))
}

pub fn metrics(sf: SensFunction, theta0: f64) -> Metrics {
    let fprime_signed = sf.derivative(theta0);
    let (second_deriv_signed, second_deriv_abs) = second_derivative(&sf, theta0);
    let det = sf.determinant();
    let monotonicity = if sf.is_constant() {
        Monotonicity::Constant
    } else if det > 0.0 {
        Monotonicity::Increasing
    } else {
        Monotonicity::Decreasing
    };
    Metrics {
        function: sf,
        fprime_signed,
        sens_value: fprime_signed.abs(),
        vertex: vertex_proximity(&sf, theta0),
        second_deriv_signed,
        second_deriv_abs,
        max_first_deriv: max_abs_derivative(&sf),
        monotonicity,
        in_sensitivity_set: monotonicity != Monotonicity::Constant,
    }
}

/// Every metric for every parameter, using the default execution strategy.
pub fn analyze_all(bn: &BayesianNetwork, q: &Query) -> Result<SensitivityReport, AnalysisError> {
    analyze_all_with(bn, q, Execution::default())
}

/// One moralization and one elimination order; a forward and reverse pass
/// with target and evidence masked and, for conditional queries, another
/// with only the evidence masked. Per-parameter rows are computed with
/// `exec`.
pub fn analyze_all_with(bn: &BayesianNetwork, q: &Query, exec: Execution) -> Result<SensitivityReport, AnalysisError> {
    let validation = validate_network(bn);
    if !validation.is_valid() {
        return Err(AnalysisError::InvalidNetwork(validation));
    }
    let m = moralize(bn);
    let order = elimination_order(&m);
    let mut warnings = Vec::new();

    let denominator = if q.is_marginal() {
        None
    } else {
        let masked = m.apply_evidence(&q.evidence);
        let (value, tape) = marginalize(&masked, &order)?;
        if value <= 0.0 {
            return Err(AnalysisError::ZeroEvidence);
        }
        warnings.extend_from_slice(tape.warnings());
        Some((backward(&tape, &masked)?, value))
    };
    let masked = m.apply_evidence(&q.joint_assignment());
    let (num_value, tape) = marginalize(&masked, &order)?;
    warnings.extend_from_slice(tape.warnings());
    let num_grad = backward(&tape, &masked)?;
    drop(tape);

    let den_value = denominator.as_ref().map_or(1.0, |d| d.1);
    let den_grad = denominator.as_ref().map(|d| &d.0);
    let params = bn.param_enumerate();
    let labels = bn.param_labels();
    let rows = exec.map_range(params.len(), |i| {
        let p = params[i];
        let value = bn.param_value(p).expect("enumerated parameters exist");
        let metrics = match sensitivity_function(bn, q, p, &num_grad, den_grad, num_value, den_value) {
            Ok(sf) => Some(metrics(sf, value)),
            Err(AnalysisError::DegenerateParameter(_)) => None,
            Err(e) => unreachable!("inputs were checked above: {e}"),
        };
        MetricRow {
            param: p,
            label: labels[i].clone(),
            value,
            metrics,
        }
    });
    Ok(SensitivityReport {
        query: q.clone(),
        probability: num_value / den_value,
        rows,
        induced_width: order.induced_width(),
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Cpt, VarId, Variable};
    use crate::parser::parse_query;

    fn close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b}");
    }

    fn single() -> BayesianNetwork {
        BayesianNetwork::new(
            vec![Variable::new("Y", ["0", "1"])],
            vec![Cpt::new(VarId(0), vec![], vec![0.7, 0.3])],
        )
        .unwrap()
    }

    fn x_to_y() -> BayesianNetwork {
        BayesianNetwork::new(
            vec![Variable::new("X", ["0", "1"]), Variable::new("Y", ["0", "1"])],
            vec![
                Cpt::new(VarId(0), vec![], vec![0.6, 0.4]),
                Cpt::new(VarId(1), vec![VarId(0)], vec![0.8, 0.2, 0.1, 0.9]),
            ],
        )
        .unwrap()
    }

    #[test]
    fn covaried_derivative_single_node() {
        let bn = single();
        // g = P(Y=1) = θ_{Y=1}: gradient is the indicator of that entry
        let grad = Gradient::from_values(vec![0.0, 1.0]);
        close(
            covaried_derivative(&grad, ParamRef::new(VarId(0), 1, 0), &bn).unwrap(),
            1.0,
            0.0,
        );
        close(
            covaried_derivative(&grad, ParamRef::new(VarId(0), 0, 0), &bn).unwrap(),
            -1.0,
            1e-15,
        );
    }

    #[test]
    fn degenerate_parameter() {
        let bn = BayesianNetwork::new(
            vec![Variable::new("Y", ["0", "1"])],
            vec![Cpt::new(VarId(0), vec![], vec![0.0, 1.0])],
        )
        .unwrap();
        let grad = Gradient::from_values(vec![0.0, 1.0]);
        let p = ParamRef::new(VarId(0), 1, 0);
        assert_eq!(
            covaried_derivative(&grad, p, &bn),
            Err(AnalysisError::DegenerateParameter(p))
        );
    }

    #[test]
    fn linear_coefficient_examples() {
        assert_eq!(linear_coefficients(0.3, 1.0, 0.3), (1.0, 0.0));
        let (c1, c2) = linear_coefficients(0.3, -1.0, 0.7);
        assert_eq!(c1, -1.0);
        close(c2, 1.0, 1e-15);
        let (c1, c2) = linear_coefficients(0.48, 0.4, 0.9);
        assert_eq!(c1, 0.4);
        close(c2, 0.12, 1e-15);
    }

    #[test]
    fn hyperbola_parameters() {
        let sf = SensFunction::new(0.4, 0.0, 0.4, 0.12);
        close(sf.s().unwrap(), -0.3, 1e-15);
        close(sf.t().unwrap(), 1.0, 1e-15);
        close(sf.r().unwrap(), -0.3, 1e-15);
        close(sensitivity_value(&sf, 0.9), 0.2083333333, 1e-9);
        let v = vertex_proximity(&sf, 0.9).unwrap();
        close(v.theta, 0.3f64.sqrt() - 0.3, 1e-15);
        close(v.proximity, 0.652277, 1e-6);
        close(sensitivity_value(&sf, v.theta), 1.0, 1e-12);
        let (signed, abs) = second_derivative(&sf, 0.9);
        close(abs, 0.347222, 1e-6);
        assert!(signed < 0.0);
        close(max_abs_derivative(&sf), 10.0 / 3.0, 1e-9);
    }

    #[test]
    fn linear_and_constant_functions() {
        let id = SensFunction::linear(1.0, 0.0);
        assert_eq!(sensitivity_value(&id, 0.4), 1.0);
        assert!(vertex_proximity(&id, 0.4).is_none());
        assert!(id.s().is_none() && id.r().is_none() && id.t().is_none());
        assert_eq!(second_derivative(&id, 0.4), (0.0, 0.0));
        assert_eq!(max_abs_derivative(&id), 1.0);
        let flat = SensFunction::linear(0.0, 0.5);
        assert_eq!(sensitivity_value(&flat, 0.4), 0.0);
        assert_eq!(max_abs_derivative(&flat), 0.0);
        assert_eq!(metrics(flat, 0.4).monotonicity, Monotonicity::Constant);
    }

    #[test]
    fn pole_inside_unit_interval() {
        assert_eq!(
            max_abs_derivative(&SensFunction::new(1.0, 0.0, 1.0, -0.5)),
            f64::INFINITY
        );
    }

    #[test]
    fn zero_c3_normalizes_to_linear() {
        let sf = SensFunction::new(0.2, 0.1, 0.0, 0.5);
        assert_eq!(sf.kind, Kind::Linear);
        assert_eq!((sf.c1, sf.c2, sf.c3, sf.c4), (0.4, 0.2, 0.0, 1.0));
    }

    #[test]
    fn worked_conditional_example() {
        let bn = x_to_y();
        let q = parse_query(&bn, "X=1", &["Y=1"]).unwrap();
        let r = analyze_all(&bn, &q).unwrap();
        close(r.probability, 0.75, 1e-12);
        assert_eq!(r.rows.len(), 6);
        let row = &r.rows[bn.param_index(ParamRef::new(VarId(1), 1, 1)).unwrap()];
        let m = row.metrics.unwrap();
        let f = m.function;
        close(f.c1, 0.4, 1e-12);
        close(f.c2, 0.0, 1e-12);
        close(f.c3, 0.4, 1e-12);
        close(f.c4, 0.12, 1e-12);
        close(m.sens_value, 0.208333, 1e-6);
        close(m.proximity().unwrap(), 0.652277, 1e-6);
        assert_eq!(m.monotonicity, Monotonicity::Increasing);
        assert!(m.in_sensitivity_set);
    }

    #[test]
    fn marginal_siblings_are_opposite() {
        let bn = x_to_y();
        let q = parse_query::<&str>(&bn, "Y=1", &[]).unwrap();
        let r = analyze_all(&bn, &q).unwrap();
        close(r.probability, 0.48, 1e-12);
        for pair in r.rows.chunks(2) {
            let (a, b) = (pair[0].metrics.unwrap(), pair[1].metrics.unwrap());
            close(a.fprime_signed, -b.fprime_signed, 1e-12);
            assert_eq!(a.function.kind, Kind::Linear);
            assert!(a.vertex.is_none());
        }
    }

    #[test]
    fn disconnected_parameters_are_constant() {
        let bn = BayesianNetwork::new(
            vec![Variable::new("A", ["0", "1"]), Variable::new("B", ["0", "1"])],
            vec![
                Cpt::new(VarId(0), vec![], vec![0.3, 0.7]),
                Cpt::new(VarId(1), vec![], vec![0.6, 0.4]),
            ],
        )
        .unwrap();
        let q = parse_query::<&str>(&bn, "A=1", &[]).unwrap();
        let r = analyze_all(&bn, &q).unwrap();
        for row in &r.rows[2..] {
            let m = row.metrics.unwrap();
            assert_eq!(m.monotonicity, Monotonicity::Constant);
            assert!(!m.in_sensitivity_set);
            assert_eq!(m.sens_value, 0.0);
        }
        assert!(r.rows[..2].iter().all(|row| row.metrics.unwrap().in_sensitivity_set));
    }

    #[test]
    fn zero_evidence_is_an_error() {
        let bn = BayesianNetwork::new(
            vec![Variable::new("X", ["0", "1"]), Variable::new("Y", ["0", "1"])],
            vec![
                Cpt::new(VarId(0), vec![], vec![1.0, 0.0]),
                Cpt::new(VarId(1), vec![VarId(0)], vec![1.0, 0.0, 0.5, 0.5]),
            ],
        )
        .unwrap();
        let q = parse_query(&bn, "X=1", &["Y=1"]).unwrap();
        assert_eq!(analyze_all(&bn, &q).unwrap_err(), AnalysisError::ZeroEvidence);
    }

    #[test]
    fn degenerate_rows_are_flagged_not_fatal() {
        let bn = BayesianNetwork::new(
            vec![Variable::new("X", ["0", "1"]), Variable::new("Y", ["0", "1"])],
            vec![
                Cpt::new(VarId(0), vec![], vec![0.5, 0.5]),
                Cpt::new(VarId(1), vec![VarId(0)], vec![1.0, 0.0, 0.3, 0.7]),
            ],
        )
        .unwrap();
        let q = parse_query(&bn, "X=1", &["Y=0"]).unwrap();
        let r = analyze_all(&bn, &q).unwrap();
        let degenerate: Vec<usize> = (0..r.rows.len()).filter(|&i| r.rows[i].metrics.is_none()).collect();
        assert_eq!(degenerate, vec![2]);
    }

    #[test]
    fn strategies_give_identical_reports() {
        let bn = x_to_y();
        let q = parse_query(&bn, "X=0", &["Y=0"]).unwrap();
        assert_eq!(
            analyze_all_with(&bn, &q, Execution::Sequential).unwrap(),
            analyze_all_with(&bn, &q, Execution::Parallel).unwrap()
        );
    }
}
