//! Check a computed report against finite differences and re-inference.

use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{finite_difference_sensitivity, reinference_curve_with, standard_grid, OracleError, DEFAULT_STEP};
use crate::exec::Execution;
use crate::model::{BayesianNetwork, ParamRef};
use crate::sensmetrics::{MetricRow, SensitivityReport};

#[derive(Clone, Debug)]
pub struct VerifyConfig {
    /// Check only this many randomly chosen parameters.
    pub sample: Option<usize>,
    pub seed: u64,
    pub step: f64,
    /// Bound on `|engine - fd| / max(1, |fd|)`.
    pub derivative_tolerance: f64,
    /// Bound on `|f(θ) - reinference(θ)|` over the grid.
    pub curve_tolerance: f64,
    pub grid: Vec<f64>,
    pub exec: Execution,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            sample: None,
            seed: 0,
            step: DEFAULT_STEP,
            derivative_tolerance: 1e-5,
            curve_tolerance: 1e-9,
            grid: standard_grid(),
            exec: Execution::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Check {
    Derivative,
    Curve,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Discrepancy {
    pub param: ParamRef,
    pub label: String,
    pub check: Check,
    pub theta: f64,
    pub engine: f64,
    pub oracle: f64,
    pub error: f64,
}

impl fmt::Display for Discrepancy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let what = match self.check {
            Check::Derivative => "derivative",
            Check::Curve => "curve",
        };
        write!(
            f,
            "{} ({what} at θ={}): engine {:e}, oracle {:e}, error {:e}",
            self.label, self.theta, self.engine, self.oracle, self.error
        )
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct VerifySummary {
    pub checked: usize,
    /// Degenerate parameters, which have no metrics to check.
    pub skipped: usize,
    pub worst_derivative: Option<Discrepancy>,
    pub worst_curve: Option<Discrepancy>,
    /// Every check outside tolerance, worst first.
    pub failures: Vec<Discrepancy>,
}

impl VerifySummary {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }

    fn record(&mut self, d: Discrepancy, tolerance: f64) {
        let worst = match d.check {
            Check::Derivative => &mut self.worst_derivative,
            Check::Curve => &mut self.worst_curve,
        };
        if worst.as_ref().is_none_or(|w| d.error > w.error) {
            *worst = Some(d.clone());
        }
        if d.error > tolerance {
            self.failures.push(d);
        }
    }
}

fn check_row(
    bn: &BayesianNetwork,
    r: &SensitivityReport,
    row: &MetricRow,
    cfg: &VerifyConfig,
) -> Result<Vec<(Discrepancy, f64)>, OracleError> {
    let Some(m) = &row.metrics else {
        return Ok(Vec::new());
    };
    let fd = finite_difference_sensitivity(bn, &r.query, row.param, cfg.step)?;
    let mut out = vec![(
        Discrepancy {
            param: row.param,
            label: row.label.to_string(),
            check: Check::Derivative,
            theta: row.value,
            engine: m.fprime_signed,
            oracle: fd,
            error: (m.fprime_signed - fd).abs() / fd.abs().max(1.0),
        },
        cfg.derivative_tolerance,
    )];
    // grid points are already spread over the pool by the caller
    for s in reinference_curve_with(bn, &r.query, row.param, &cfg.grid, Execution::Sequential)? {
        let engine = m.function.eval(s.theta);
        out.push((
            Discrepancy {
                param: row.param,
                label: row.label.to_string(),
                check: Check::Curve,
                theta: s.theta,
                engine,
                oracle: s.f,
                error: (engine - s.f).abs(),
            },
            cfg.curve_tolerance,
        ));
    }
    Ok(out)
}

/// Compare each (or a seeded random sample of) row of `r` against finite
/// differences and against re-inference over `cfg.grid`.
pub fn verify_report(
    bn: &BayesianNetwork,
    r: &SensitivityReport,
    cfg: &VerifyConfig,
) -> Result<VerifySummary, OracleError> {
    let n = r.rows.len();
    let mut picked: Vec<usize> = match cfg.sample {
        Some(k) if k < n => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rand::seq::index::sample(&mut rng, n, k).into_vec()
        }
        _ => (0..n).collect(),
    };
    picked.sort_unstable();
    let results = cfg.exec.map(&picked, |&i| check_row(bn, r, &r.rows[i], cfg));
    let mut summary = VerifySummary::default();
    for (&i, result) in picked.iter().zip(results) {
        if r.rows[i].metrics.is_none() {
            summary.skipped += 1;
            continue;
        }
        summary.checked += 1;
        for (d, tol) in result? {
            summary.record(d, tol);
        }
    }
    summary
        .failures
        .sort_by(|a, b| b.error.partial_cmp(&a.error).unwrap_or(std::cmp::Ordering::Equal));
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Cpt, VarId, Variable};
    use crate::parser::parse_query;
    use crate::sensmetrics::{analyze_all, metrics, SensFunction};

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
    fn correct_report_passes() {
        let bn = x_to_y();
        let q = parse_query(&bn, "X=1", &["Y=1"]).unwrap();
        let r = analyze_all(&bn, &q).unwrap();
        let s = verify_report(&bn, &r, &VerifyConfig::default()).unwrap();
        assert!(s.passed(), "{:?}", s.failures);
        assert_eq!(s.checked, 6);
    }

    #[test]
    fn corrupted_report_fails() {
        let bn = x_to_y();
        let q = parse_query(&bn, "X=1", &["Y=1"]).unwrap();
        let mut r = analyze_all(&bn, &q).unwrap();
        let row = &mut r.rows[5];
        let f = row.metrics.unwrap().function;
        row.metrics = Some(metrics(SensFunction::new(f.c1 * 1.01, f.c2, f.c3, f.c4), row.value));
        let s = verify_report(&bn, &r, &VerifyConfig::default()).unwrap();
        assert!(!s.passed());
        assert_eq!(s.failures[0].param, r.rows[5].param);
    }

    #[test]
    fn sampling_is_seeded() {
        let bn = x_to_y();
        let q = parse_query(&bn, "X=1", &["Y=1"]).unwrap();
        let r = analyze_all(&bn, &q).unwrap();
        let cfg = VerifyConfig {
            sample: Some(3),
            seed: 9,
            ..VerifyConfig::default()
        };
        let a = verify_report(&bn, &r, &cfg).unwrap();
        assert_eq!(a.checked + a.skipped, 3);
        assert_eq!(a, verify_report(&bn, &r, &cfg).unwrap());
    }
}
