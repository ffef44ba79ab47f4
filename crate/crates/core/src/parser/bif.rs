//! Reader and writer for the textual Bayesian Interchange Format.
//!
//! Supported blocks: `network`, `variable` with `type discrete`, and
//! `probability` with `table`, `default` and per-configuration rows.
//! `property` lines are kept as opaque strings. `//` and `/* */` comments
//! are skipped.

use std::collections::HashMap;
use std::fmt;
use std::fmt::Write as _;

use thiserror::Error;

use crate::model::{BayesianNetwork, Cpt, ModelError, VarId, Variable, Violation};

#[derive(Debug, Clone, PartialEq)]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub kind: ParseErrorKind,
}

#[derive(Error, Debug, Clone, PartialEq)]
pub enum ParseErrorKind {
    #[error("syntax error: {0}")]
    Syntax(String),
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),
    #[error("unknown state `{state}` of variable `{variable}`")]
    UnknownState { variable: String, state: String },
    #[error("{what}: expected {expected} entries, found {found}")]
    Arity {
        what: String,
        expected: usize,
        found: usize,
    },
    #[error("duplicate {what} `{name}`")]
    Duplicate { what: &'static str, name: String },
    #[error("CPT of `{variable}` has no row for parent configuration ({configuration}) and no default")]
    MissingRow { variable: String, configuration: String },
    #[error("variable `{0}` has no probability block")]
    MissingProbability(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("network is not well formed:\n{}", format_violations(.0))]
    Invalid(Vec<LocatedViolation>),
}

/// A validation failure tied to the line of the block it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct LocatedViolation {
    pub line: usize,
    pub violation: Violation,
}

fn format_violations(v: &[LocatedViolation]) -> String {
    v.iter()
        .map(|lv| format!("  line {}: {}", lv.line, lv.violation))
        .collect::<Vec<_>>()
        .join("\n")
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}, column {}: {}", self.line, self.column, self.kind)
    }
}

impl std::error::Error for ParseError {}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Word(String),
    Punct(char),
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    line: usize,
    column: usize,
    start: usize,
    end: usize,
}

const PUNCT: &[char] = &['{', '}', '(', ')', '[', ']', ',', ';', '|'];

fn err(line: usize, column: usize, kind: ParseErrorKind) -> ParseError {
    ParseError { line, column, kind }
}

fn tokenize(text: &str) -> Result<Vec<Token>, ParseError> {
    let mut tokens = Vec::new();
    let mut chars = text.char_indices().peekable();
    let (mut line, mut line_start) = (1usize, 0usize);
    while let Some(&(i, c)) = chars.peek() {
        let column = text[line_start..i].chars().count() + 1;
        if c == '\n' {
            chars.next();
            line += 1;
            line_start = i + 1;
        } else if c.is_whitespace() {
            chars.next();
        } else if text[i..].starts_with("//") {
            while let Some(&(_, c)) = chars.peek() {
                if c == '\n' {
                    break;
                }
                chars.next();
            }
        } else if text[i..].starts_with("/*") {
            let Some(len) = text[i + 2..].find("*/") else {
                return Err(err(line, column, ParseErrorKind::Syntax("unterminated comment".into())));
            };
            let end = i + 2 + len + 2;
            while let Some(&(j, c)) = chars.peek() {
                if j >= end {
                    break;
                }
                if c == '\n' {
                    line += 1;
                    line_start = j + 1;
                }
                chars.next();
            }
        } else if c == '"' {
            chars.next();
            let mut word = String::new();
            let mut closed = None;
            for (j, c) in chars.by_ref() {
                if c == '"' {
                    closed = Some(j + 1);
                    break;
                }
                if c == '\n' {
                    break;
                }
                word.push(c);
            }
            let Some(end) = closed else {
                return Err(err(line, column, ParseErrorKind::Syntax("unterminated string".into())));
            };
            tokens.push(Token {
                tok: Tok::Word(word),
                line,
                column,
                start: i,
                end,
            });
        } else if PUNCT.contains(&c) {
            chars.next();
            tokens.push(Token {
                tok: Tok::Punct(c),
                line,
                column,
                start: i,
                end: i + 1,
            });
        } else {
            let mut end = i;
            while let Some(&(j, c)) = chars.peek() {
                if c.is_whitespace()
                    || PUNCT.contains(&c)
                    || c == '"'
                    || text[j..].starts_with("//")
                    || text[j..].starts_with("/*")
                {
                    break;
                }
                end = j + c.len_utf8();
                chars.next();
            }
            tokens.push(Token {
                tok: Tok::Word(text[i..end].to_string()),
                line,
                column,
                start: i,
                end,
            });
        }
    }
    Ok(tokens)
}

struct VariableDecl {
    name: String,
    states: Vec<String>,
    properties: Vec<String>,
    line: usize,
    column: usize,
}

enum RowKey {
    Table,
    Default,
    Config(Vec<(String, usize, usize)>),
}

struct Row {
    key: RowKey,
    values: Vec<f64>,
    line: usize,
    column: usize,
}

struct ProbabilityDecl {
    child: (String, usize, usize),
    parents: Vec<(String, usize, usize)>,
    rows: Vec<Row>,
    properties: Vec<String>,
    line: usize,
}

struct Parser<'a> {
    text: &'a str,
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn location(&self) -> (usize, usize) {
        match self.peek().or_else(|| self.tokens.last()) {
            Some(t) => (t.line, t.column),
            None => (1, 1),
        }
    }

    fn syntax<T>(&self, msg: impl Into<String>) -> Result<T, ParseError> {
        let (line, column) = self.location();
        Err(err(line, column, ParseErrorKind::Syntax(msg.into())))
    }

    fn next(&mut self) -> Result<Token, ParseError> {
        match self.tokens.get(self.pos) {
            Some(t) => {
                self.pos += 1;
                Ok(t.clone())
            }
            None => self.syntax("unexpected end of input"),
        }
    }

    fn at_punct(&self, c: char) -> bool {
        matches!(self.peek(), Some(Token { tok: Tok::Punct(p), .. }) if *p == c)
    }

    fn at_word(&self, w: &str) -> bool {
        matches!(self.peek(), Some(Token { tok: Tok::Word(x), .. }) if x == w)
    }

    fn expect_punct(&mut self, c: char) -> Result<Token, ParseError> {
        if self.at_punct(c) {
            return self.next();
        }
        let found = self.describe_next();
        self.syntax(format!("expected `{c}`, found {found}"))
    }

    fn expect_keyword(&mut self, w: &str) -> Result<(), ParseError> {
        if self.at_word(w) {
            self.pos += 1;
            return Ok(());
        }
        let found = self.describe_next();
        self.syntax(format!("expected `{w}`, found {found}"))
    }

    fn word(&mut self, what: &str) -> Result<(String, usize, usize), ParseError> {
        match self.peek() {
            Some(Token {
                tok: Tok::Word(w),
                line,
                column,
                ..
            }) => {
                let out = (w.clone(), *line, *column);
                self.pos += 1;
                Ok(out)
            }
            _ => {
                let found = self.describe_next();
                self.syntax(format!("expected {what}, found {found}"))
            }
        }
    }

    fn describe_next(&self) -> String {
        match self.peek() {
            Some(Token { tok: Tok::Word(w), .. }) => format!("`{w}`"),
            Some(Token { tok: Tok::Punct(c), .. }) => format!("`{c}`"),
            None => "end of input".to_string(),
        }
    }

    fn number(&mut self) -> Result<f64, ParseError> {
        let (w, line, column) = self.word("a number")?;
        w.parse::<f64>()
            .map_err(|_| err(line, column, ParseErrorKind::Syntax(format!("`{w}` is not a number"))))
    }

    /// Numbers up to `;`, separated by commas and/or whitespace.
    fn numbers(&mut self) -> Result<Vec<f64>, ParseError> {
        let mut out = Vec::new();
        loop {
            if self.at_punct(';') {
                self.pos += 1;
                return Ok(out);
            }
            if !out.is_empty() && self.at_punct(',') {
                self.pos += 1;
            }
            out.push(self.number()?);
        }
    }

    /// Raw text after `property` up to the terminating `;`.
    fn property(&mut self) -> Result<String, ParseError> {
        self.expect_keyword("property")?;
        let start = self.peek().map(|t| t.start);
        let mut end = start;
        while !self.at_punct(';') {
            let t = self.next()?;
            end = Some(t.end);
        }
        self.pos += 1;
        Ok(match (start, end) {
            (Some(s), Some(e)) if e > s => self.text[s..e].trim().to_string(),
            _ => String::new(),
        })
    }

    fn network(&mut self) -> Result<(String, Vec<String>), ParseError> {
        self.expect_keyword("network")?;
        let name = if self.at_punct('{') {
            "unknown".to_string()
        } else {
            self.word("a network name")?.0
        };
        self.expect_punct('{')?;
        let mut props = Vec::new();
        while !self.at_punct('}') {
            props.push(self.property()?);
        }
        self.pos += 1;
        Ok((name, props))
    }

    fn variable(&mut self) -> Result<VariableDecl, ParseError> {
        self.expect_keyword("variable")?;
        let (name, line, column) = self.word("a variable name")?;
        self.expect_punct('{')?;
        let mut states = None;
        let mut properties = Vec::new();
        while !self.at_punct('}') {
            if self.at_word("property") {
                properties.push(self.property()?);
                continue;
            }
            let (type_line, type_col) = self.location();
            self.expect_keyword("type")?;
            self.expect_keyword("discrete")?;
            self.expect_punct('[')?;
            let (count, cl, cc) = self.word("a state count")?;
            let count: usize = count.parse().map_err(|_| {
                err(
                    cl,
                    cc,
                    ParseErrorKind::Syntax(format!("`{count}` is not a state count")),
                )
            })?;
            self.expect_punct(']')?;
            self.expect_punct('{')?;
            let mut labels = Vec::new();
            while !self.at_punct('}') {
                if !labels.is_empty() {
                    self.expect_punct(',')?;
                }
                let (label, sl, sc) = self.word("a state label")?;
                if labels.contains(&label) {
                    return Err(err(
                        sl,
                        sc,
                        ParseErrorKind::Duplicate {
                            what: "state",
                            name: label,
                        },
                    ));
                }
                labels.push(label);
            }
            self.pos += 1;
            self.expect_punct(';')?;
            if labels.len() != count {
                return Err(err(
                    type_line,
                    type_col,
                    ParseErrorKind::Arity {
                        what: format!("states of `{name}`"),
                        expected: count,
                        found: labels.len(),
                    },
                ));
            }
            if states.replace(labels).is_some() {
                return Err(err(
                    type_line,
                    type_col,
                    ParseErrorKind::Duplicate {
                        what: "type declaration of",
                        name,
                    },
                ));
            }
        }
        self.pos += 1;
        let Some(states) = states else {
            return Err(err(
                line,
                column,
                ParseErrorKind::Syntax(format!("variable `{name}` has no type declaration")),
            ));
        };
        Ok(VariableDecl {
            name,
            states,
            properties,
            line,
            column,
        })
    }

    fn probability(&mut self) -> Result<ProbabilityDecl, ParseError> {
        let (line, _) = self.location();
        self.expect_keyword("probability")?;
        self.expect_punct('(')?;
        let child = self.word("a variable name")?;
        let mut parents = Vec::new();
        if self.at_punct('|') {
            self.pos += 1;
            loop {
                parents.push(self.word("a parent name")?);
                if self.at_punct(',') {
                    self.pos += 1;
                } else {
                    break;
                }
            }
        }
        self.expect_punct(')')?;
        self.expect_punct('{')?;
        let mut rows = Vec::new();
        let mut properties = Vec::new();
        while !self.at_punct('}') {
            let (rl, rc) = self.location();
            if self.at_word("property") {
                properties.push(self.property()?);
            } else if self.at_word("table") || self.at_word("default") {
                let key = if self.at_word("table") {
                    RowKey::Table
                } else {
                    RowKey::Default
                };
                self.pos += 1;
                let values = self.numbers()?;
                rows.push(Row {
                    key,
                    values,
                    line: rl,
                    column: rc,
                });
            } else if self.at_punct('(') {
                self.pos += 1;
                let mut states = Vec::new();
                while !self.at_punct(')') {
                    if !states.is_empty() {
                        self.expect_punct(',')?;
                    }
                    states.push(self.word("a parent state")?);
                }
                self.pos += 1;
                let values = self.numbers()?;
                rows.push(Row {
                    key: RowKey::Config(states),
                    values,
                    line: rl,
                    column: rc,
                });
            } else {
                let found = self.describe_next();
                return self.syntax(format!(
                    "expected `table`, `default`, `property` or a parent configuration, found {found}"
                ));
            }
        }
        self.pos += 1;
        Ok(ProbabilityDecl {
            child,
            parents,
            rows,
            properties,
            line,
        })
    }
}

/// Column sums within this distance of 1 are treated as rounding in the
/// file and renormalized before validation. Published networks print
/// entries with about seven digits.
pub const ROUNDING_TOLERANCE: f64 = 1e-6;

/// Parse a BIF document, validate it, and renormalize columns within
/// tolerance. Validation failures are reported with the line of the
/// offending block.
pub fn parse_bif(text: &str) -> Result<BayesianNetwork, ParseError> {
    let tokens = tokenize(text)?;
    let mut p = Parser { text, tokens, pos: 0 };
    let mut network: Option<(String, Vec<String>)> = None;
    let mut variables: Vec<VariableDecl> = Vec::new();
    let mut probabilities: Vec<ProbabilityDecl> = Vec::new();
    while p.peek().is_some() {
        if p.at_word("network") {
            let (line, column) = p.location();
            let parsed = p.network()?;
            if network.replace(parsed).is_some() {
                return Err(err(
                    line,
                    column,
                    ParseErrorKind::Duplicate {
                        what: "network block",
                        name: "network".into(),
                    },
                ));
            }
        } else if p.at_word("variable") {
            variables.push(p.variable()?);
        } else if p.at_word("probability") {
            probabilities.push(p.probability()?);
        } else {
            let found = p.describe_next();
            return p.syntax(format!(
                "expected `network`, `variable` or `probability`, found {found}"
            ));
        }
    }

    let mut index: HashMap<String, usize> = HashMap::new();
    for (i, v) in variables.iter().enumerate() {
        if index.insert(v.name.clone(), i).is_some() {
            return Err(err(
                v.line,
                v.column,
                ParseErrorKind::Duplicate {
                    what: "variable",
                    name: v.name.clone(),
                },
            ));
        }
    }
    let resolve = |(name, line, column): &(String, usize, usize)| {
        index
            .get(name)
            .copied()
            .ok_or_else(|| err(*line, *column, ParseErrorKind::UnknownVariable(name.clone())))
    };

    let mut cpts: Vec<Option<(Cpt, usize)>> = vec![None; variables.len()];
    for decl in &probabilities {
        let child = resolve(&decl.child)?;
        let parents = decl.parents.iter().map(resolve).collect::<Result<Vec<_>, _>>()?;
        if cpts[child].is_some() {
            let (name, line, column) = &decl.child;
            return Err(err(
                *line,
                *column,
                ParseErrorKind::Duplicate {
                    what: "probability block for",
                    name: name.clone(),
                },
            ));
        }
        let table = assemble_table(decl, child, &parents, &variables)?;
        let cpt = Cpt::new(VarId(child), parents.into_iter().map(VarId).collect(), table)
            .with_properties(decl.properties.clone());
        cpts[child] = Some((cpt, decl.line));
    }

    let mut lines = vec![0; variables.len()];
    let mut table_list = Vec::with_capacity(variables.len());
    for (i, slot) in cpts.into_iter().enumerate() {
        let Some((cpt, line)) = slot else {
            let v = &variables[i];
            return Err(err(
                v.line,
                v.column,
                ParseErrorKind::MissingProbability(v.name.clone()),
            ));
        };
        lines[i] = line;
        table_list.push(cpt);
    }
    let first_line = variables.first().map_or(1, |v| v.line);
    let vars: Vec<Variable> = variables
        .into_iter()
        .map(|v| Variable::new(v.name, v.states).with_properties(v.properties))
        .collect();
    let (name, props) = network.unwrap_or_else(|| ("unknown".to_string(), Vec::new()));
    let mut bn = BayesianNetwork::new(vars, table_list)
        .map_err(|e| err(first_line, 1, e.into()))?
        .with_name(name)
        .with_properties(props);
    let rounded = bn.renormalize_within(ROUNDING_TOLERANCE);
    if rounded > 0 {
        log::warn!("renormalized {rounded} CPT columns whose sums were off by rounding in the file");
    }
    bn.validated().map_err(|report| {
        let located: Vec<LocatedViolation> = report
            .violations
            .into_iter()
            .map(|violation| LocatedViolation {
                line: violation.cpt().map_or(first_line, |v| lines[v.0]),
                violation,
            })
            .collect();
        let line = located.first().map_or(first_line, |l| l.line);
        err(line, 1, ParseErrorKind::Invalid(located))
    })
}

/// Lay the block's rows out as a configuration-major table.
fn assemble_table(
    decl: &ProbabilityDecl,
    child: usize,
    parents: &[usize],
    vars: &[VariableDecl],
) -> Result<Vec<f64>, ParseError> {
    let card = vars[child].states.len();
    let pcards: Vec<usize> = parents.iter().map(|&p| vars[p].states.len()).collect();
    let configs: usize = pcards.iter().product();
    let mut table: Vec<Option<f64>> = vec![None; configs * card];
    let mut default: Option<&[f64]> = None;
    let arity = |row: &Row, expected: usize, what: String| -> Result<(), ParseError> {
        if row.values.len() != expected {
            return Err(err(
                row.line,
                row.column,
                ParseErrorKind::Arity {
                    what,
                    expected,
                    found: row.values.len(),
                },
            ));
        }
        Ok(())
    };
    let child_name = &vars[child].name;
    for row in &decl.rows {
        match &row.key {
            RowKey::Table => {
                arity(row, configs * card, format!("table of `{child_name}`"))?;
                // child state varies slowest in a `table` list
                for state in 0..card {
                    for config in 0..configs {
                        table[config * card + state] = Some(row.values[state * configs + config]);
                    }
                }
            }
            RowKey::Default => {
                arity(row, card, format!("default row of `{child_name}`"))?;
                default = Some(&row.values);
            }
            RowKey::Config(states) => {
                if states.len() != parents.len() {
                    return Err(err(
                        row.line,
                        row.column,
                        ParseErrorKind::Arity {
                            what: format!("parent configuration of `{child_name}`"),
                            expected: parents.len(),
                            found: states.len(),
                        },
                    ));
                }
                arity(row, card, format!("row of `{child_name}`"))?;
                let mut config = 0;
                for ((label, line, column), &p) in states.iter().zip(parents) {
                    let var = &vars[p];
                    let s = var.states.iter().position(|x| x == label).ok_or_else(|| {
                        err(
                            *line,
                            *column,
                            ParseErrorKind::UnknownState {
                                variable: var.name.clone(),
                                state: label.clone(),
                            },
                        )
                    })?;
                    config = config * var.states.len() + s;
                }
                let slot = &mut table[config * card..(config + 1) * card];
                if slot[0].is_some() {
                    let labels: Vec<&str> = states.iter().map(|s| s.0.as_str()).collect();
                    return Err(err(
                        row.line,
                        row.column,
                        ParseErrorKind::Duplicate {
                            what: "row for configuration",
                            name: labels.join(", "),
                        },
                    ));
                }
                for (dst, &v) in slot.iter_mut().zip(&row.values) {
                    *dst = Some(v);
                }
            }
        }
    }
    let mut out = Vec::with_capacity(table.len());
    for config in 0..configs {
        for state in 0..card {
            match (table[config * card + state], default) {
                (Some(v), _) => out.push(v),
                (None, Some(d)) => out.push(d[state]),
                (None, None) => {
                    let mut rest = config;
                    let mut labels = vec![""; parents.len()];
                    for (slot, &p) in labels.iter_mut().zip(parents).rev() {
                        let c = vars[p].states.len();
                        *slot = &vars[p].states[rest % c];
                        rest /= c;
                    }
                    return Err(err(
                        decl.line,
                        1,
                        ParseErrorKind::MissingRow {
                            variable: child_name.clone(),
                            configuration: labels.join(", "),
                        },
                    ));
                }
            }
        }
    }
    Ok(out)
}

fn quoted(name: &str) -> String {
    let plain = !name.is_empty()
        && !name
            .chars()
            .any(|c| c.is_whitespace() || PUNCT.contains(&c) || c == '"' || c == '/');
    if plain {
        name.to_string()
    } else {
        format!("\"{name}\"")
    }
}

/// Render `bn` as BIF. Floats use Rust's shortest round-trip formatting, so
/// `parse_bif(&write_bif(bn))` reproduces every entry exactly.
pub fn write_bif(bn: &BayesianNetwork) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "network {} {{", quoted(bn.name()));
    for p in bn.properties() {
        let _ = writeln!(out, "  property {p};");
    }
    out.push_str("}\n");
    for v in bn.variables() {
        let states: Vec<String> = v.states().iter().map(|s| quoted(s)).collect();
        let _ = writeln!(out, "variable {} {{", quoted(v.name()));
        let _ = writeln!(
            out,
            "  type discrete [ {} ] {{ {} }};",
            v.cardinality(),
            states.join(", ")
        );
        for p in v.properties() {
            let _ = writeln!(out, "  property {p};");
        }
        out.push_str("}\n");
    }
    for (i, cpt) in bn.cpts().iter().enumerate() {
        let id = VarId(i);
        let child = quoted(bn.variable(id).name());
        let values = |config: usize| -> String {
            bn.column(id, config)
                .iter()
                .map(|x| format!("{x:?}"))
                .collect::<Vec<_>>()
                .join(", ")
        };
        if cpt.parents().is_empty() {
            let _ = writeln!(out, "probability ( {child} ) {{");
            let _ = writeln!(out, "  table {};", values(0));
        } else {
            let parents: Vec<String> = cpt.parents().iter().map(|p| quoted(bn.variable(*p).name())).collect();
            let _ = writeln!(out, "probability ( {child} | {} ) {{", parents.join(", "));
            for config in 0..bn.configurations(id) {
                let labels: Vec<String> = bn
                    .configuration_states(id, config)
                    .iter()
                    .zip(cpt.parents())
                    .map(|(&s, p)| quoted(&bn.variable(*p).states()[s]))
                    .collect();
                let _ = writeln!(out, "  ({}) {};", labels.join(", "), values(config));
            }
        }
        for p in cpt.properties() {
            let _ = writeln!(out, "  property {p};");
        }
        out.push_str("}\n");
    }
    out
}
