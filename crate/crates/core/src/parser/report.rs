use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde_json::{json, Map, Value};

use crate::numfmt::format_sig;
use crate::sensmetrics::{MetricRow, SensitivityReport};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum ReportFormat {
    #[default]
    Csv,
    Json,
}

impl FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            _ => Err(format!("unknown report format `{s}` (expected csv or json)")),
        }
    }
}

impl fmt::Display for ReportFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ReportFormat::Csv => "csv",
            ReportFormat::Json => "json",
        })
    }
}

pub const COLUMNS: [&str; 8] = [
    "parameter",
    "value",
    "sens_value",
    "proximity",
    "second_deriv",
    "max_first_deriv",
    "monotonicity",
    "in_sensitivity_set",
];

const SIG: usize = 6;

/// One rendered cell; `None` is undefined.
#[derive(Clone, Debug, PartialEq)]
enum Cell {
    Text(String),
    Num(f64),
    Bool(bool),
    Undefined,
}

fn cells(row: &MetricRow) -> [Cell; 8] {
    let mut out = [
        Cell::Text(row.label.to_string()),
        Cell::Num(row.value),
        Cell::Undefined,
        Cell::Undefined,
        Cell::Undefined,
        Cell::Undefined,
        Cell::Undefined,
        Cell::Undefined,
    ];
    if let Some(m) = &row.metrics {
        out[2] = Cell::Num(m.sens_value);
        out[3] = m.proximity().map_or(Cell::Undefined, Cell::Num);
        out[4] = Cell::Num(m.second_deriv_signed);
        out[5] = Cell::Num(m.max_first_deriv);
        out[6] = Cell::Text(m.monotonicity.as_str().to_string());
        out[7] = Cell::Bool(m.in_sensitivity_set);
    }
    out
}

/// Rows by sensitivity value, largest first; the sort is stable, so ties
/// keep parameter order. Degenerate rows go last.
pub fn ranked_rows(r: &SensitivityReport) -> Vec<&MetricRow> {
    let mut rows: Vec<&MetricRow> = r.rows.iter().collect();
    rows.sort_by(|a, b| {
        let key = |row: &MetricRow| row.metrics.map(|m| m.sens_value);
        match (key(a), key(b)) {
            (Some(x), Some(y)) => y.partial_cmp(&x).unwrap_or(Ordering::Equal),
            (Some(_), None) => Ordering::Less,
            (None, Some(_)) => Ordering::Greater,
            (None, None) => Ordering::Equal,
        }
    });
    rows
}

/// Render the report. Floats carry 6 significant digits; undefined cells
/// are `undefined` in CSV and `null` in JSON; infinite maxima are `inf`.
pub fn serialize_report(r: &SensitivityReport, f: ReportFormat) -> Vec<u8> {
    let rows = ranked_rows(r);
    match f {
        ReportFormat::Csv => {
            let mut out = COLUMNS.join(",");
            out.push('\n');
            for row in rows {
                let line: Vec<String> = cells(row)
                    .into_iter()
                    .map(|c| match c {
                        Cell::Text(s) => s,
                        Cell::Num(x) => format_sig(x, SIG),
                        Cell::Bool(b) => b.to_string(),
                        Cell::Undefined => "undefined".to_string(),
                    })
                    .collect();
                out.push_str(&line.join(","));
                out.push('\n');
            }
            out.into_bytes()
        }
        ReportFormat::Json => {
            let rows: Vec<Value> = rows
                .into_iter()
                .map(|row| {
                    let mut obj = Map::new();
                    for (name, c) in COLUMNS.iter().zip(cells(row)) {
                        obj.insert(name.to_string(), json_cell(c));
                    }
                    Value::Object(obj)
                })
                .collect();
            let doc = json!({
                "probability": json_cell(Cell::Num(r.probability)),
                "rows": rows,
            });
            let mut out = serde_json::to_vec_pretty(&doc).expect("a JSON value always serializes");
            out.push(b'\n');
            out
        }
    }
}

fn json_cell(c: Cell) -> Value {
    match c {
        Cell::Text(s) => Value::String(s),
        Cell::Bool(b) => Value::Bool(b),
        Cell::Undefined => Value::Null,
        Cell::Num(x) if !x.is_finite() => Value::String(format_sig(x, SIG)),
        Cell::Num(x) => {
            let rounded: f64 = format_sig(x, SIG).parse().expect("formatted floats parse");
            serde_json::Number::from_f64(rounded).map_or(Value::Null, Value::Number)
        }
    }
}
