//! Network files, query strings and report output.

mod bif;
mod query;
mod report;

pub use bif::{parse_bif, write_bif, LocatedViolation, ParseError, ParseErrorKind, ROUNDING_TOLERANCE};
pub use query::{parse_query, Query, QueryDisplay, QueryError};
pub use report::{ranked_rows, serialize_report, ReportFormat, COLUMNS};
