//! One-pass sensitivity analysis for discrete Bayesian networks.
//!
//! The network is moralized once, the query probability is computed by
//! variable elimination on a differentiation tape, and a single reverse
//! sweep yields the derivative of that probability with respect to every
//! CPT entry. Proportional covariation turns those partial derivatives into
//! the coefficients of each parameter's sensitivity function
//! `f(θ) = (c1 θ + c2) / (c3 θ + c4)`, from which the sensitivity value,
//! vertex proximity, second derivative and maximum slope follow in closed
//! form.
//!
//! The [`oracle`] module re-derives the same quantities by brute force and
//! finite differences so the fast path can be checked independently.

pub mod engine;
pub mod exec;
pub mod factor;
pub mod model;
pub mod mrf;
pub mod numfmt;
pub mod oracle;
pub mod parser;
pub mod sensmetrics;
pub mod synth;

pub use engine::{backward, elimination_order, marginalize, EliminationOrder, Gradient, Tape};
pub use exec::Execution;
pub use factor::Factor;
pub use model::{validate_network, BayesianNetwork, Cpt, ParamRef, ValidationReport, VarId, Variable};
pub use mrf::{moralize, Mrf};
pub use parser::{parse_bif, parse_query, serialize_report, write_bif, Query, ReportFormat};
pub use sensmetrics::{analyze_all, MetricRow, SensFunction, SensitivityReport};
