//! Discrete Bayesian networks: variable catalog, one CPT per variable, and the
//! flat parameter vector built from all CPT entries.
//!
//! A CPT table is stored configuration-major: entry `config * card + state`
//! holds `P(child = state | parents = config)`, where parent configurations
//! are enumerated row-major in parent order (last parent varies fastest).
//! Parameters are enumerated CPT by CPT in topological order, then by
//! configuration, then by child state, which makes the flat parameter index
//! `offset(cpt) + config * card + state`.

use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap, HashMap, HashSet};
use std::fmt;
use std::sync::{Arc, OnceLock};

use thiserror::Error;

use crate::numfmt::format_sig;

/// Tolerance on `|sum - 1|` for a CPT column to count as normalized.
pub const SUM_TOLERANCE: f64 = 1e-9;

/// Index of a variable in its network's catalog.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VarId(pub usize);

impl VarId {
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for VarId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Variable {
    name: String,
    states: Vec<String>,
    properties: Vec<String>,
}

impl Variable {
    pub fn new<S: Into<String>>(name: impl Into<String>, states: impl IntoIterator<Item = S>) -> Self {
        Variable {
            name: name.into(),
            states: states.into_iter().map(Into::into).collect(),
            properties: Vec::new(),
        }
    }

    /// Attach opaque `property` lines carried over from a BIF file.
    pub fn with_properties(mut self, properties: Vec<String>) -> Self {
        self.properties = properties;
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn states(&self) -> &[String] {
        &self.states
    }

    pub fn properties(&self) -> &[String] {
        &self.properties
    }

    pub fn cardinality(&self) -> usize {
        self.states.len()
    }

    pub fn state_index(&self, label: &str) -> Option<usize> {
        self.states.iter().position(|s| s == label)
    }
}

/// Conditional probability table of one variable given its ordered parents.
#[derive(Clone, Debug, PartialEq)]
pub struct Cpt {
    child: VarId,
    parents: Vec<VarId>,
    table: Vec<f64>,
    properties: Vec<String>,
}

impl Cpt {
    pub fn new(child: VarId, parents: Vec<VarId>, table: Vec<f64>) -> Self {
        Cpt {
            child,
            parents,
            table,
            properties: Vec::new(),
        }
    }

    pub fn with_properties(mut self, properties: Vec<String>) -> Self {
        self.properties = properties;
        self
    }

    pub fn child(&self) -> VarId {
        self.child
    }

    pub fn parents(&self) -> &[VarId] {
        &self.parents
    }

    pub fn table(&self) -> &[f64] {
        &self.table
    }

    pub fn properties(&self) -> &[String] {
        &self.properties
    }
}

/// One entry of one CPT: `P(cpt = state | parents = config)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ParamRef {
    pub cpt: VarId,
    pub state: usize,
    pub config: usize,
}

impl ParamRef {
    pub fn new(cpt: VarId, state: usize, config: usize) -> Self {
        ParamRef { cpt, state, config }
    }
}

impl fmt::Display for ParamRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(cpt {}, state {}, config {})", self.cpt.0, self.state, self.config)
    }
}

#[derive(Error, Debug, Clone, PartialEq)]
pub enum ModelError {
    #[error("variable name is empty (variable {0})")]
    EmptyName(usize),
    #[error("duplicate variable `{0}`")]
    DuplicateVariable(String),
    #[error("variable `{0}` has no states")]
    NoStates(String),
    #[error("variable `{variable}` repeats state `{state}`")]
    DuplicateState { variable: String, state: String },
    #[error("variable `{0}` has no CPT")]
    MissingCpt(String),
    #[error("variable `{0}` has more than one CPT")]
    DuplicateCpt(String),
    #[error("CPT refers to unknown variable index {0}")]
    UnknownVariable(usize),
    #[error("CPT of `{0}` lists a parent twice or lists the child as its own parent")]
    BadParents(String),
    #[error("CPT of `{variable}` has {found} entries, expected {expected}")]
    TableSize {
        variable: String,
        expected: usize,
        found: usize,
    },
    #[error("parameter {0} is out of bounds")]
    ParamOutOfBounds(ParamRef),
    #[error("parameter index {0} is out of bounds")]
    ParamIndexOutOfBounds(usize),
}

/// A discrete Bayesian network. Immutable once built except through the
/// explicit `set_param_value` used by perturbation oracles.
#[derive(Clone, Debug, PartialEq)]
pub struct BayesianNetwork {
    name: String,
    properties: Vec<String>,
    variables: Vec<Variable>,
    cpts: Vec<Cpt>,
    by_name: HashMap<String, VarId>,
    topo: Vec<VarId>,
    offsets: Vec<usize>,
    param_count: usize,
    labels: LabelCache,
}

/// Lazily built parameter labels. Derived from names only, so it never
/// affects equality.
#[derive(Clone, Default)]
struct LabelCache(OnceLock<Vec<Arc<str>>>);

impl PartialEq for LabelCache {
    fn eq(&self, _: &Self) -> bool {
        true
    }
}

impl fmt::Debug for LabelCache {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("LabelCache")
    }
}

fn csv_safe(label: String) -> String {
    if !label.contains([',', '\n', '\r', '"']) {
        return label;
    }
    label
        .chars()
        .map(|c| if matches!(c, ',' | '\n' | '\r' | '"') { '_' } else { c })
        .collect()
}

impl BayesianNetwork {
    /// Assemble a network, checking only structure (names, table sizes,
    /// parent indices). Probability well-formedness and acyclicity are the
    /// job of [`validate_network`].
    pub fn new(variables: Vec<Variable>, cpts: Vec<Cpt>) -> Result<Self, ModelError> {
        let mut by_name = HashMap::with_capacity(variables.len());
        for (i, v) in variables.iter().enumerate() {
            if v.name.is_empty() {
                return Err(ModelError::EmptyName(i));
            }
            if v.states.is_empty() {
                return Err(ModelError::NoStates(v.name.clone()));
            }
            let mut seen = HashSet::new();
            for s in &v.states {
                if !seen.insert(s.as_str()) {
                    return Err(ModelError::DuplicateState {
                        variable: v.name.clone(),
                        state: s.clone(),
                    });
                }
            }
            if by_name.insert(v.name.clone(), VarId(i)).is_some() {
                return Err(ModelError::DuplicateVariable(v.name.clone()));
            }
        }

        let mut slots: Vec<Option<Cpt>> = vec![None; variables.len()];
        for cpt in cpts {
            let child = cpt.child.0;
            if child >= variables.len() {
                return Err(ModelError::UnknownVariable(child));
            }
            let name = &variables[child].name;
            let mut seen = HashSet::new();
            for p in &cpt.parents {
                if p.0 >= variables.len() {
                    return Err(ModelError::UnknownVariable(p.0));
                }
                if *p == cpt.child || !seen.insert(*p) {
                    return Err(ModelError::BadParents(name.clone()));
                }
            }
            let expected = variables[child].cardinality()
                * cpt
                    .parents
                    .iter()
                    .map(|p| variables[p.0].cardinality())
                    .product::<usize>();
            if cpt.table.len() != expected {
                return Err(ModelError::TableSize {
                    variable: name.clone(),
                    expected,
                    found: cpt.table.len(),
                });
            }
            if slots[child].is_some() {
                return Err(ModelError::DuplicateCpt(name.clone()));
            }
            slots[child] = Some(cpt);
        }
        let cpts = slots
            .into_iter()
            .enumerate()
            .map(|(i, c)| c.ok_or_else(|| ModelError::MissingCpt(variables[i].name.clone())))
            .collect::<Result<Vec<_>, _>>()?;

        let (topo, _) = topological_sort(&cpts);
        let mut offsets = vec![0; variables.len()];
        let mut param_count = 0;
        for &v in &topo {
            offsets[v.0] = param_count;
            param_count += cpts[v.0].table.len();
        }

        Ok(BayesianNetwork {
            name: "unknown".to_string(),
            properties: Vec::new(),
            variables,
            cpts,
            by_name,
            topo,
            offsets,
            param_count,
            labels: LabelCache::default(),
        })
    }

    /// Validate, renormalize columns that are within tolerance, and return
    /// the network, or the full list of violations.
    pub fn validated(mut self) -> Result<Self, ValidationReport> {
        let report = validate_network(&self);
        if !report.is_valid() {
            return Err(report);
        }
        for w in &report.warnings {
            log::warn!("{w}");
        }
        self.renormalize();
        Ok(self)
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn with_properties(mut self, properties: Vec<String>) -> Self {
        self.properties = properties;
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn properties(&self) -> &[String] {
        &self.properties
    }

    pub fn variables(&self) -> &[Variable] {
        &self.variables
    }

    pub fn variable(&self, id: VarId) -> &Variable {
        &self.variables[id.0]
    }

    pub fn var_id(&self, name: &str) -> Option<VarId> {
        self.by_name.get(name).copied()
    }

    pub fn num_variables(&self) -> usize {
        self.variables.len()
    }

    pub fn cardinality(&self, id: VarId) -> usize {
        self.variables[id.0].cardinality()
    }

    pub fn cardinalities(&self) -> Vec<usize> {
        self.variables.iter().map(Variable::cardinality).collect()
    }

    pub fn cpt(&self, id: VarId) -> &Cpt {
        &self.cpts[id.0]
    }

    pub fn cpts(&self) -> &[Cpt] {
        &self.cpts
    }

    pub fn parents(&self, id: VarId) -> &[VarId] {
        &self.cpts[id.0].parents
    }

    /// Topological order with smallest-index tie-break. Variables on a cycle
    /// (invalid networks only) are appended in index order.
    pub fn topological_order(&self) -> &[VarId] {
        &self.topo
    }

    /// Number of directed edges in the DAG.
    pub fn arc_count(&self) -> usize {
        self.cpts.iter().map(|c| c.parents.len()).sum()
    }

    /// Number of undirected edges in the moral graph (parents married,
    /// directions dropped).
    pub fn moral_edge_count(&self) -> usize {
        let mut edges = BTreeSet::new();
        for c in &self.cpts {
            let mut scope: Vec<usize> = c.parents.iter().map(|p| p.0).collect();
            scope.push(c.child.0);
            for (i, &a) in scope.iter().enumerate() {
                for &b in &scope[i + 1..] {
                    edges.insert((a.min(b), a.max(b)));
                }
            }
        }
        edges.len()
    }

    /// Number of parent configurations of a CPT.
    pub fn configurations(&self, id: VarId) -> usize {
        self.cpts[id.0].table.len() / self.cardinality(id)
    }

    /// Parent states of configuration `config`, in parent order.
    pub fn configuration_states(&self, id: VarId, config: usize) -> Vec<usize> {
        let parents = &self.cpts[id.0].parents;
        let mut states = vec![0; parents.len()];
        let mut rest = config;
        for (slot, p) in states.iter_mut().zip(parents).rev() {
            let card = self.cardinality(*p);
            *slot = rest % card;
            rest /= card;
        }
        states
    }

    pub fn param_count(&self) -> usize {
        self.param_count
    }

    /// Flat index of the first entry of `id`'s CPT.
    pub fn param_offset(&self, id: VarId) -> usize {
        self.offsets[id.0]
    }

    pub fn param_index(&self, p: ParamRef) -> Result<usize, ModelError> {
        self.check(p)?;
        Ok(self.offsets[p.cpt.0] + p.config * self.cardinality(p.cpt) + p.state)
    }

    pub fn param_ref(&self, index: usize) -> Result<ParamRef, ModelError> {
        if index >= self.param_count {
            return Err(ModelError::ParamIndexOutOfBounds(index));
        }
        // offsets are increasing along the topological order
        let pos = self.topo.partition_point(|v| self.offsets[v.0] <= index) - 1;
        let var = self.topo[pos];
        let local = index - self.offsets[var.0];
        let card = self.cardinality(var);
        Ok(ParamRef::new(var, local % card, local / card))
    }

    pub fn param_value(&self, p: ParamRef) -> Result<f64, ModelError> {
        self.check(p)?;
        Ok(self.cpts[p.cpt.0].table[p.config * self.cardinality(p.cpt) + p.state])
    }

    /// Every parameter, in CPT (topological) order, then configuration,
    /// then child state.
    pub fn param_enumerate(&self) -> Vec<ParamRef> {
        let mut out = Vec::with_capacity(self.param_count);
        for &v in &self.topo {
            let card = self.cardinality(v);
            for config in 0..self.configurations(v) {
                out.extend((0..card).map(|state| ParamRef::new(v, state, config)));
            }
        }
        out
    }

    /// The other entries of `p`'s CPT column, in child-state order.
    pub fn cpt_group(&self, p: ParamRef) -> Result<Vec<ParamRef>, ModelError> {
        self.check(p)?;
        Ok((0..self.cardinality(p.cpt))
            .filter(|&s| s != p.state)
            .map(|s| ParamRef::new(p.cpt, s, p.config))
            .collect())
    }

    /// The column containing `p`, including `p` itself.
    pub fn column(&self, id: VarId, config: usize) -> &[f64] {
        let card = self.cardinality(id);
        &self.cpts[id.0].table[config * card..(config + 1) * card]
    }

    /// Overwrite one raw entry. No covariation and no validation: callers
    /// use this to build perturbed copies.
    pub fn set_param_value(&mut self, p: ParamRef, value: f64) -> Result<(), ModelError> {
        let idx = p.config * self.cardinality(p.cpt) + p.state;
        self.check(p)?;
        self.cpts[p.cpt.0].table[idx] = value;
        Ok(())
    }

    /// Human-readable parameter name such as `Y=yes|X=no;Z=hi`, with
    /// characters unsafe for unquoted CSV replaced by `_`.
    pub fn param_label(&self, p: ParamRef) -> String {
        let child = self.variable(p.cpt);
        let mut label = format!("{}={}", child.name(), child.states()[p.state]);
        let parents = self.parents(p.cpt);
        if !parents.is_empty() {
            label.push('|');
            label.push_str(&self.configuration_label(p.cpt, p.config));
        }
        csv_safe(label)
    }

    fn configuration_label(&self, id: VarId, config: usize) -> String {
        let parts: Vec<String> = self
            .parents(id)
            .iter()
            .zip(self.configuration_states(id, config))
            .map(|(v, s)| {
                let var = self.variable(*v);
                format!("{}={}", var.name(), var.states()[s])
            })
            .collect();
        parts.join(";")
    }

    /// `param_label` for every parameter in enumeration order, built once
    /// and shared.
    pub fn param_labels(&self) -> &[Arc<str>] {
        self.labels.0.get_or_init(|| {
            let mut out = Vec::with_capacity(self.param_count);
            for &id in &self.topo {
                let child = self.variable(id);
                let heads: Vec<String> = child.states().iter().map(|s| format!("{}={s}", child.name())).collect();
                for config in 0..self.configurations(id) {
                    let tail = if self.parents(id).is_empty() {
                        String::new()
                    } else {
                        format!("|{}", self.configuration_label(id, config))
                    };
                    for head in &heads {
                        out.push(Arc::from(csv_safe(format!("{head}{tail}"))));
                    }
                }
            }
            out
        })
    }

    /// Divide every column by its sum, skipping columns already within a
    /// few ulps of 1 so that repeated renormalization is a no-op.
    pub fn renormalize(&mut self) {
        self.renormalize_within(f64::INFINITY);
    }

    /// Renormalize only columns whose sum is within `tolerance` of 1;
    /// returns how many columns changed.
    pub fn renormalize_within(&mut self, tolerance: f64) -> usize {
        let mut changed = 0;
        for v in 0..self.variables.len() {
            let card = self.variables[v].cardinality();
            let skip = 4.0 * card as f64 * f64::EPSILON;
            for column in self.cpts[v].table.chunks_mut(card) {
                let sum: f64 = column.iter().sum();
                let off = (sum - 1.0).abs();
                if sum > 0.0 && off > skip && off <= tolerance {
                    column.iter_mut().for_each(|x| *x /= sum);
                    changed += 1;
                }
            }
        }
        changed
    }

    fn check(&self, p: ParamRef) -> Result<(), ModelError> {
        if p.cpt.0 >= self.variables.len()
            || p.state >= self.cardinality(p.cpt)
            || p.config >= self.configurations(p.cpt)
        {
            return Err(ModelError::ParamOutOfBounds(p));
        }
        Ok(())
    }
}

/// Kahn's algorithm with a min-heap; returns the order and the variables left
/// over because they sit on (or downstream of) a cycle.
fn topological_sort(cpts: &[Cpt]) -> (Vec<VarId>, Vec<VarId>) {
    let n = cpts.len();
    let mut indegree = vec![0usize; n];
    let mut children = vec![Vec::new(); n];
    for c in cpts {
        indegree[c.child.0] = c.parents.len();
        for p in &c.parents {
            children[p.0].push(c.child.0);
        }
    }
    let mut heap: BinaryHeap<Reverse<usize>> = (0..n).filter(|&v| indegree[v] == 0).map(Reverse).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(Reverse(v)) = heap.pop() {
        order.push(VarId(v));
        for &c in &children[v] {
            indegree[c] -= 1;
            if indegree[c] == 0 {
                heap.push(Reverse(c));
            }
        }
    }
    let stuck: Vec<VarId> = (0..n).filter(|&v| indegree[v] > 0).map(VarId).collect();
    order.extend(stuck.iter().copied());
    (order, stuck)
}

#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    ColumnSum {
        variable: String,
        cpt: VarId,
        config: usize,
        sum: f64,
    },
    NegativeEntry {
        variable: String,
        param: ParamRef,
        value: f64,
    },
    EntryAboveOne {
        variable: String,
        param: ParamRef,
        value: f64,
    },
    NotFinite {
        variable: String,
        param: ParamRef,
    },
    Cycle {
        variables: Vec<String>,
    },
}

impl Violation {
    /// The CPT the violation belongs to, if any.
    pub fn cpt(&self) -> Option<VarId> {
        match self {
            Violation::ColumnSum { cpt, .. } => Some(*cpt),
            Violation::NegativeEntry { param, .. }
            | Violation::EntryAboveOne { param, .. }
            | Violation::NotFinite { param, .. } => Some(param.cpt),
            Violation::Cycle { .. } => None,
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::ColumnSum {
                variable, config, sum, ..
            } => write!(
                f,
                "column sum {} in CPT of `{variable}` (parent configuration {config})",
                format_sig(*sum, 6)
            ),
            Violation::NegativeEntry { variable, param, value } => write!(
                f,
                "negative entry {} in CPT of `{variable}` (state {}, configuration {})",
                format_sig(*value, 6),
                param.state,
                param.config
            ),
            Violation::EntryAboveOne { variable, param, value } => write!(
                f,
                "entry {} above 1 in CPT of `{variable}` (state {}, configuration {})",
                format_sig(*value, 6),
                param.state,
                param.config
            ),
            Violation::NotFinite { variable, param } => write!(
                f,
                "non-finite entry in CPT of `{variable}` (state {}, configuration {})",
                param.state, param.config
            ),
            Violation::Cycle { variables } => write!(f, "cycle through {}", variables.join(", ")),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
    pub warnings: Vec<String>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

/// List every well-formedness violation of `bn`. An empty violation list
/// means the network is valid.
pub fn validate_network(bn: &BayesianNetwork) -> ValidationReport {
    let mut report = ValidationReport::default();
    for &v in bn.topological_order() {
        let var = bn.variable(v);
        if var.cardinality() == 1 {
            report
                .warnings
                .push(format!("variable `{}` has a single state", var.name()));
        }
        for config in 0..bn.configurations(v) {
            let column = bn.column(v, config);
            let mut entries_ok = true;
            for (state, &x) in column.iter().enumerate() {
                let param = ParamRef::new(v, state, config);
                let variable = var.name().to_string();
                if !x.is_finite() {
                    report.violations.push(Violation::NotFinite { variable, param });
                    entries_ok = false;
                } else if x < 0.0 {
                    report.violations.push(Violation::NegativeEntry {
                        variable,
                        param,
                        value: x,
                    });
                    entries_ok = false;
                } else if x > 1.0 + SUM_TOLERANCE {
                    report.violations.push(Violation::EntryAboveOne {
                        variable,
                        param,
                        value: x,
                    });
                    entries_ok = false;
                }
            }
            let sum: f64 = column.iter().sum();
            if entries_ok && (sum - 1.0).abs() > SUM_TOLERANCE {
                report.violations.push(Violation::ColumnSum {
                    variable: var.name().to_string(),
                    cpt: v,
                    config,
                    sum,
                });
            }
        }
    }
    let (_, stuck) = topological_sort(bn.cpts());
    if !stuck.is_empty() {
        report.violations.push(Violation::Cycle {
            variables: on_cycle(bn, &stuck)
                .into_iter()
                .map(|v| bn.variable(v).name().to_string())
                .collect(),
        });
    }
    report
}

/// Of the variables Kahn's algorithm could not order, keep those that can
/// reach themselves.
fn on_cycle(bn: &BayesianNetwork, stuck: &[VarId]) -> Vec<VarId> {
    let stuck_set: HashSet<VarId> = stuck.iter().copied().collect();
    stuck
        .iter()
        .copied()
        .filter(|&start| {
            let mut seen = HashSet::new();
            let mut stack: Vec<VarId> = bn.parents(start).to_vec();
            while let Some(v) = stack.pop() {
                if v == start {
                    return true;
                }
                if stuck_set.contains(&v) && seen.insert(v) {
                    stack.extend_from_slice(bn.parents(v));
                }
            }
            false
        })
        .collect()
}
