//! Discrete Bayesian networks over binned variables.
//!
//! A network is a DAG of categorical variables, each carrying a conditional
//! probability table indexed by the joint assignment of its parents. Rows are
//! laid out in mixed radix over the parent list, first parent most
//! significant. Exactly one variable (the hidden root) has no parents; its
//! own table is kept for completeness but likelihood queries always condition
//! on an explicit root value.
//!
//! Construction never fails: a malformed network can be built and inspected
//! with [`DiscreteBayesNet::validate`], which reports every problem it finds.

mod family;
mod file;
mod inference;

pub use family::{discretize, ContinuousFamily, FamilyKind, FamilyParams, HybridNetwork};
pub use file::{NetworkFile, VariableEntry};

use std::collections::HashMap;
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors raised by network queries and construction helpers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum BayesNetError {
    #[error("network contains a cycle: {}", .0.join(" -> "))]
    Cycle(Vec<String>),
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),
    #[error("evidence on the root variable `{0}` is not allowed")]
    EvidenceOnRoot(String),
    #[error("value {value} out of range for `{variable}` (cardinality {cardinality})")]
    ValueOutOfRange {
        variable: String,
        value: usize,
        cardinality: usize,
    },
    #[error("variable `{0}` has no bin edges")]
    MissingBinEdges(String),
    #[error("sample {value} of `{variable}` falls outside [{lo}, {hi}]")]
    SampleOutOfRange {
        variable: String,
        value: f64,
        lo: f64,
        hi: f64,
    },
    #[error("family for `{variable}` is invalid: {reason}")]
    InvalidFamily { variable: String, reason: String },
    #[error("network is malformed: {0}")]
    Malformed(String),
    #[error("network file: {0}")]
    File(String),
}

/// A categorical variable with optional native-unit bin layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariableSpec {
    pub id: String,
    pub cardinality: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bin_edges: Option<Vec<f64>>,
    #[serde(default)]
    pub parents: Vec<String>,
}

impl VariableSpec {
    pub fn new(id: impl Into<String>, cardinality: usize, parents: &[&str]) -> Self {
        VariableSpec {
            id: id.into(),
            cardinality,
            bin_edges: None,
            parents: parents.iter().map(|p| p.to_string()).collect(),
        }
    }

    pub fn with_edges(mut self, edges: Vec<f64>) -> Self {
        self.bin_edges = Some(edges);
        self
    }

    /// Native-unit range `[first edge, last edge]`, when edges are present.
    pub fn range(&self) -> Option<(f64, f64)> {
        let edges = self.bin_edges.as_ref()?;
        Some((*edges.first()?, *edges.last()?))
    }

    /// Bin index of a native value. Bins are half-open `[e_i, e_{i+1})`
    /// except the last one, which also contains the upper edge.
    pub fn bin_of(&self, value: f64) -> Option<usize> {
        let edges = self.bin_edges.as_ref()?;
        let (lo, hi) = (*edges.first()?, *edges.last()?);
        if !(value >= lo && value <= hi) {
            return None;
        }
        let bins = edges.len() - 1;
        Some(edges[1..bins].iter().take_while(|&&e| value >= e).count())
    }
}

/// Conditional probability table: one probability vector per joint parent
/// assignment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionalTable {
    pub variable: String,
    pub rows: Vec<Vec<f64>>,
}

impl ConditionalTable {
    pub fn new(variable: impl Into<String>, rows: Vec<Vec<f64>>) -> Self {
        ConditionalTable {
            variable: variable.into(),
            rows,
        }
    }
}

/// One problem found by [`DiscreteBayesNet::validate`].
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    DuplicateVariable(String),
    BadCardinality { variable: String, cardinality: usize },
    BadBinEdges { variable: String, reason: String },
    UnknownParent { variable: String, parent: String },
    DuplicateParent { variable: String, parent: String },
    SelfParent(String),
    UnknownRoot(String),
    RootHasParents(String),
    ExtraParentless(Vec<String>),
    MissingTable(String),
    UnknownTable(String),
    MissingRows {
        variable: String,
        expected: usize,
        found: usize,
    },
    RowLength {
        variable: String,
        row: usize,
        expected: usize,
        found: usize,
    },
    NegativeEntry { variable: String, row: usize },
    RowSum { variable: String, row: usize, sum: f64 },
    Cycle(Vec<String>),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use Violation::*;
        match self {
            DuplicateVariable(v) => write!(f, "variable `{v}` declared more than once"),
            BadCardinality { variable, cardinality } => {
                write!(f, "`{variable}` has cardinality {cardinality} (need >= 2)")
            }
            BadBinEdges { variable, reason } => write!(f, "`{variable}` bin edges: {reason}"),
            UnknownParent { variable, parent } => {
                write!(f, "`{variable}` lists unknown parent `{parent}`")
            }
            DuplicateParent { variable, parent } => {
                write!(f, "`{variable}` lists parent `{parent}` twice")
            }
            SelfParent(v) => write!(f, "`{v}` lists itself as a parent"),
            UnknownRoot(v) => write!(f, "root `{v}` is not a declared variable"),
            RootHasParents(v) => write!(f, "root `{v}` has parents"),
            ExtraParentless(vs) => write!(f, "non-root variables without parents: {}", vs.join(", ")),
            MissingTable(v) => write!(f, "no table for `{v}`"),
            UnknownTable(v) => write!(f, "table for undeclared variable `{v}`"),
            MissingRows { variable, expected, found } => {
                write!(f, "`{variable}` table has {found} rows, expected {expected}")
            }
            RowLength { variable, row, expected, found } => {
                write!(f, "`{variable}` row {row} has {found} entries, expected {expected}")
            }
            NegativeEntry { variable, row } => write!(f, "`{variable}` row {row} has a negative entry"),
            RowSum { variable, row, sum } => write!(f, "`{variable}` row {row} sums to {sum}"),
            Cycle(path) => write!(f, "cycle {}", path.join(" -> ")),
        }
    }
}

/// Result of [`DiscreteBayesNet::validate`]; empty iff the network is well formed.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

pub(crate) const ROW_SUM_TOL: f64 = 1e-9;

/// A discrete Bayesian network with a single hidden root.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteBayesNet {
    variables: Vec<VariableSpec>,
    tables: Vec<ConditionalTable>,
    root: String,
    index: HashMap<String, usize>,
    // parent indices per variable; unknown parents are dropped here and
    // reported by `validate`
    parent_idx: Vec<Vec<usize>>,
    // table position per variable
    table_of: Vec<Option<usize>>,
}

impl DiscreteBayesNet {
    pub fn new(variables: Vec<VariableSpec>, tables: Vec<ConditionalTable>, root: impl Into<String>) -> Self {
        let mut index = HashMap::new();
        for (i, v) in variables.iter().enumerate() {
            index.entry(v.id.clone()).or_insert(i);
        }
        let parent_idx = variables
            .iter()
            .map(|v| v.parents.iter().filter_map(|p| index.get(p).copied()).collect())
            .collect();
        let table_of = variables
            .iter()
            .map(|v| tables.iter().position(|t| t.variable == v.id))
            .collect();
        DiscreteBayesNet {
            variables,
            tables,
            root: root.into(),
            index,
            parent_idx,
            table_of,
        }
    }

    pub fn variables(&self) -> &[VariableSpec] {
        &self.variables
    }

    pub fn tables(&self) -> &[ConditionalTable] {
        &self.tables
    }

    pub fn root(&self) -> &str {
        &self.root
    }

    pub fn root_index(&self) -> Option<usize> {
        self.index_of(&self.root)
    }

    pub fn len(&self) -> usize {
        self.variables.len()
    }

    pub fn is_empty(&self) -> bool {
        self.variables.is_empty()
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn variable(&self, id: &str) -> Option<&VariableSpec> {
        self.index_of(id).map(|i| &self.variables[i])
    }

    pub fn table(&self, id: &str) -> Option<&ConditionalTable> {
        let i = self.index_of(id)?;
        self.table_of[i].map(|t| &self.tables[t])
    }

    pub(crate) fn parents_of(&self, var: usize) -> &[usize] {
        &self.parent_idx[var]
    }

    pub(crate) fn cardinality(&self, var: usize) -> usize {
        self.variables[var].cardinality
    }

    /// Row of `var`'s table selected by a full assignment (bin index per variable).
    pub(crate) fn row_index(&self, var: usize, assignment: &[usize]) -> usize {
        self.parent_idx[var]
            .iter()
            .fold(0, |acc, &p| acc * self.cardinality(p) + assignment[p])
    }

    pub(crate) fn cpt(&self, var: usize) -> Result<&[Vec<f64>], BayesNetError> {
        self.table_of[var]
            .map(|t| self.tables[t].rows.as_slice())
            .ok_or_else(|| BayesNetError::Malformed(format!("no table for `{}`", self.variables[var].id)))
    }

    /// Number of edges in the graph.
    pub fn edge_count(&self) -> usize {
        self.parent_idx.iter().map(Vec::len).sum()
    }

    /// Checks structure and tables, collecting every violation found.
    pub fn validate(&self) -> ValidationReport {
        let mut out = Vec::new();
        let mut seen = HashMap::new();
        for v in &self.variables {
            if seen.insert(v.id.as_str(), ()).is_some() {
                out.push(Violation::DuplicateVariable(v.id.clone()));
            }
        }
        for v in &self.variables {
            if v.cardinality < 2 {
                out.push(Violation::BadCardinality {
                    variable: v.id.clone(),
                    cardinality: v.cardinality,
                });
            }
            if let Some(edges) = &v.bin_edges {
                if edges.len() != v.cardinality + 1 {
                    out.push(Violation::BadBinEdges {
                        variable: v.id.clone(),
                        reason: format!("{} edges for {} bins", edges.len(), v.cardinality),
                    });
                } else if edges.windows(2).any(|w| !(w[0] < w[1])) {
                    out.push(Violation::BadBinEdges {
                        variable: v.id.clone(),
                        reason: "edges are not strictly ascending".into(),
                    });
                }
            }
            let mut listed = Vec::new();
            for p in &v.parents {
                if p == &v.id {
                    out.push(Violation::SelfParent(v.id.clone()));
                } else if !self.index.contains_key(p) {
                    out.push(Violation::UnknownParent {
                        variable: v.id.clone(),
                        parent: p.clone(),
                    });
                }
                if listed.contains(&p) {
                    out.push(Violation::DuplicateParent {
                        variable: v.id.clone(),
                        parent: p.clone(),
                    });
                }
                listed.push(p);
            }
        }

        match self.variable(&self.root) {
            None => out.push(Violation::UnknownRoot(self.root.clone())),
            Some(r) if !r.parents.is_empty() => out.push(Violation::RootHasParents(self.root.clone())),
            Some(_) => {}
        }
        let orphans: Vec<String> = self
            .variables
            .iter()
            .filter(|v| v.id != self.root && v.parents.is_empty())
            .map(|v| v.id.clone())
            .collect();
        if !orphans.is_empty() {
            out.push(Violation::ExtraParentless(orphans));
        }

        for t in &self.tables {
            if !self.index.contains_key(&t.variable) {
                out.push(Violation::UnknownTable(t.variable.clone()));
            }
        }
        for (i, v) in self.variables.iter().enumerate() {
            let Some(t) = self.table_of[i] else {
                out.push(Violation::MissingTable(v.id.clone()));
                continue;
            };
            let rows = &self.tables[t].rows;
            let expected: usize = self.parent_idx[i].iter().map(|&p| self.cardinality(p)).product();
            if rows.len() != expected {
                out.push(Violation::MissingRows {
                    variable: v.id.clone(),
                    expected,
                    found: rows.len(),
                });
            }
            for (r, row) in rows.iter().enumerate() {
                if row.len() != v.cardinality {
                    out.push(Violation::RowLength {
                        variable: v.id.clone(),
                        row: r,
                        expected: v.cardinality,
                        found: row.len(),
                    });
                }
                if row.iter().any(|&p| !(p >= 0.0)) {
                    out.push(Violation::NegativeEntry {
                        variable: v.id.clone(),
                        row: r,
                    });
                }
                let sum: f64 = row.iter().sum();
                if !((sum - 1.0).abs() <= ROW_SUM_TOL) {
                    out.push(Violation::RowSum {
                        variable: v.id.clone(),
                        row: r,
                        sum,
                    });
                }
            }
        }

        if let Err(BayesNetError::Cycle(path)) = self.topological_order() {
            out.push(Violation::Cycle(path));
        }
        ValidationReport { violations: out }
    }

    /// Variable indices such that every variable follows all of its parents.
    /// Ties are broken by declaration order, so the result is deterministic.
    pub fn topological_indices(&self) -> Result<Vec<usize>, BayesNetError> {
        let n = self.variables.len();
        let mut indegree: Vec<usize> = self.parent_idx.iter().map(Vec::len).collect();
        let mut children = vec![Vec::new(); n];
        for (c, ps) in self.parent_idx.iter().enumerate() {
            for &p in ps {
                children[p].push(c);
            }
        }
        let mut order = Vec::with_capacity(n);
        let mut done = vec![false; n];
        while order.len() < n {
            let Some(next) = (0..n).find(|&i| !done[i] && indegree[i] == 0) else {
                return Err(BayesNetError::Cycle(self.find_cycle(&done)));
            };
            done[next] = true;
            order.push(next);
            for &c in &children[next] {
                indegree[c] -= 1;
            }
        }
        Ok(order)
    }

    /// Variable ids in topological order.
    pub fn topological_order(&self) -> Result<Vec<String>, BayesNetError> {
        Ok(self
            .topological_indices()?
            .into_iter()
            .map(|i| self.variables[i].id.clone())
            .collect())
    }

    // Walk parent links among unplaced variables until a variable repeats.
    fn find_cycle(&self, placed: &[bool]) -> Vec<String> {
        let Some(start) = (0..self.variables.len()).find(|&i| !placed[i]) else {
            return Vec::new();
        };
        let mut path = vec![start];
        let mut cur = start;
        loop {
            let Some(&p) = self.parent_idx[cur].iter().find(|&&p| !placed[p]) else {
                return path.iter().map(|&i| self.variables[i].id.clone()).collect();
            };
            if let Some(pos) = path.iter().position(|&i| i == p) {
                // path is child -> parent; report it in edge direction
                let mut cyc: Vec<String> = path[pos..].iter().rev().map(|&i| self.variables[i].id.clone()).collect();
                cyc.push(cyc[0].clone());
                return cyc;
            }
            path.push(p);
            cur = p;
        }
    }

    /// Draws a full assignment of bin indices, root fixed to `root_value`.
    pub fn sample_ancestral<R: Rng + ?Sized>(&self, root_value: usize, rng: &mut R) -> Result<Vec<usize>, BayesNetError> {
        let root = self
            .root_index()
            .ok_or_else(|| BayesNetError::UnknownVariable(self.root.clone()))?;
        if root_value >= self.cardinality(root) {
            return Err(BayesNetError::ValueOutOfRange {
                variable: self.root.clone(),
                value: root_value,
                cardinality: self.cardinality(root),
            });
        }
        let order = self.topological_indices()?;
        let mut assignment = vec![0usize; self.variables.len()];
        for var in order {
            if var == root {
                assignment[var] = root_value;
                continue;
            }
            let row = &self.cpt(var)?[self.row_index(var, &assignment)];
            assignment[var] = sample_categorical(row, rng);
        }
        Ok(assignment)
    }

    /// Resolves `(id, bin)` evidence into index form, checking ids and ranges.
    pub fn resolve_evidence(&self, evidence: &[(&str, usize)]) -> Result<Vec<(usize, usize)>, BayesNetError> {
        evidence
            .iter()
            .map(|&(id, value)| {
                let var = self
                    .index_of(id)
                    .ok_or_else(|| BayesNetError::UnknownVariable(id.to_string()))?;
                Ok((var, value))
            })
            .collect()
    }

    /// `P(evidence | root = root_value)` with all other non-root variables
    /// summed out by variable elimination.
    pub fn evidence_likelihood(&self, evidence: &[(&str, usize)], root_value: usize) -> Result<f64, BayesNetError> {
        let ev = self.resolve_evidence(evidence)?;
        self.evidence_likelihood_indexed(&ev, root_value)
    }

    pub fn evidence_likelihood_indexed(&self, evidence: &[(usize, usize)], root_value: usize) -> Result<f64, BayesNetError> {
        inference::evidence_likelihood(self, evidence, root_value)
    }
}

pub(crate) fn sample_categorical<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // u landed in the rounding slack above the cumulative sum
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}
