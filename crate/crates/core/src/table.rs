//! Dense contingency tables over finite product state spaces.
//!
//! A [`TableSchema`] fixes the variable order and the enumeration convention of the flat
//! count vector. Levels are 0-based everywhere inside the crate; documents and reports use
//! the variable's labels, which default to the 1-based level numbers.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A set of variable names, ordered by name.
pub type VarSet = BTreeSet<String>;

/// Builds a [`VarSet`] from anything yielding names.
pub fn var_set<I, S>(names: I) -> VarSet
where
    I: IntoIterator<Item = S>,
    S: Into<String>,
{
    names.into_iter().map(Into::into).collect()
}

/// Builds a [`VarSet`] from single-character variable names, e.g. `vars("ABC")`.
pub fn vars(letters: &str) -> VarSet {
    letters
        .chars()
        .filter(|c| !c.is_whitespace())
        .map(String::from)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VariableSpec {
    pub name: String,
    pub levels: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<String>>,
}

impl VariableSpec {
    pub fn new(name: impl Into<String>, levels: usize) -> Self {
        VariableSpec {
            name: name.into(),
            levels,
            labels: None,
        }
    }

    pub fn with_labels<I, S>(name: impl Into<String>, labels: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        VariableSpec {
            name: name.into(),
            levels: labels.len(),
            labels: Some(labels),
        }
    }

    /// External label of a 0-based level.
    pub fn label(&self, level: usize) -> String {
        match &self.labels {
            Some(labels) if level < labels.len() => labels[level].clone(),
            _ => (level + 1).to_string(),
        }
    }

    /// 0-based level for an external label.
    pub fn level_of(&self, label: &str) -> Option<usize> {
        match &self.labels {
            Some(labels) => labels.iter().position(|l| l == label),
            None => label
                .parse::<usize>()
                .ok()
                .filter(|&l| l >= 1 && l <= self.levels)
                .map(|l| l - 1),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.name.is_empty() {
            return Err(Error::Schema("variable name must not be empty".into()));
        }
        if self.levels < 2 {
            return Err(Error::Schema(format!(
                "variable {} has {} levels, at least 2 required",
                self.name, self.levels
            )));
        }
        if let Some(labels) = &self.labels {
            if labels.len() != self.levels {
                return Err(Error::Schema(format!(
                    "variable {} declares {} levels but {} labels",
                    self.name,
                    self.levels,
                    labels.len()
                )));
            }
            let distinct: BTreeSet<&String> = labels.iter().collect();
            if distinct.len() != labels.len() {
                return Err(Error::Schema(format!(
                    "variable {} has duplicate labels",
                    self.name
                )));
            }
        }
        Ok(())
    }
}

/// Order in which the flat count vector enumerates cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IndexConvention {
    /// The last variable changes fastest (row-major).
    LastFastest,
    /// The first variable changes fastest (column-major).
    FirstFastest,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TableSchema {
    variables: Vec<VariableSpec>,
    index_convention: IndexConvention,
    strides: Vec<usize>,
    cell_count: usize,
}

impl TableSchema {
    pub fn new(variables: Vec<VariableSpec>, index_convention: IndexConvention) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for v in &variables {
            v.validate()?;
            if !seen.insert(v.name.as_str()) {
                return Err(Error::Schema(format!("duplicate variable name {}", v.name)));
            }
        }
        let mut strides = vec![0; variables.len()];
        let mut acc: usize = 1;
        let order: Vec<usize> = match index_convention {
            IndexConvention::FirstFastest => (0..variables.len()).collect(),
            IndexConvention::LastFastest => (0..variables.len()).rev().collect(),
        };
        for pos in order {
            strides[pos] = acc;
            acc = acc
                .checked_mul(variables[pos].levels)
                .ok_or_else(|| Error::Schema("state space too large".into()))?;
        }
        Ok(TableSchema {
            variables,
            index_convention,
            strides,
            cell_count: acc,
        })
    }

    /// Schema of binary variables named by the characters of `letters`.
    pub fn binary(letters: &str) -> Result<Self> {
        let variables = letters
            .chars()
            .map(|c| VariableSpec::new(c.to_string(), 2))
            .collect();
        TableSchema::new(variables, IndexConvention::LastFastest)
    }

    pub fn variables(&self) -> &[VariableSpec] {
        &self.variables
    }

    pub fn index_convention(&self) -> IndexConvention {
        self.index_convention
    }

    pub fn cell_count(&self) -> usize {
        self.cell_count
    }

    pub fn len(&self) -> usize {
        self.variables.len()
    }

    pub fn is_empty(&self) -> bool {
        self.variables.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.variables.iter().map(|v| v.name.as_str())
    }

    pub fn var_set(&self) -> VarSet {
        self.names().map(String::from).collect()
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.variables.iter().position(|v| v.name == name)
    }

    pub fn variable(&self, name: &str) -> Option<&VariableSpec> {
        self.variables.iter().find(|v| v.name == name)
    }

    pub(crate) fn require(&self, name: &str) -> Result<(usize, &VariableSpec)> {
        self.variables
            .iter()
            .enumerate()
            .find(|(_, v)| v.name == name)
            .ok_or_else(|| Error::Schema(format!("unknown variable {name}")))
    }

    /// Members of `set` in schema order; names outside the schema go last.
    pub fn ordered<'a>(&self, set: &'a VarSet) -> Vec<&'a String> {
        let mut out: Vec<&String> = set.iter().collect();
        out.sort_by_key(|v| (self.position(v).unwrap_or(usize::MAX), v.as_str()));
        out
    }

    pub fn levels(&self, name: &str) -> Option<usize> {
        self.variable(name).map(|v| v.levels)
    }

    /// Number of joint configurations of a variable subset.
    pub fn configurations(&self, vars: &VarSet) -> Result<usize> {
        vars.iter()
            .map(|v| self.require(v).map(|(_, spec)| spec.levels))
            .product()
    }

    pub fn cell_index(&self, cell: &Cell) -> Result<usize> {
        if cell.levels.len() != self.variables.len() {
            return Err(Error::InvalidCell(format!(
                "cell has {} entries, schema has {} variables",
                cell.levels.len(),
                self.variables.len()
            )));
        }
        let mut index = 0;
        for (pos, (&level, spec)) in cell.levels.iter().zip(&self.variables).enumerate() {
            if level >= spec.levels {
                return Err(Error::InvalidCell(format!(
                    "level {} out of range for {} ({} levels)",
                    level, spec.name, spec.levels
                )));
            }
            index += level * self.strides[pos];
        }
        Ok(index)
    }

    pub fn cell_at(&self, index: usize) -> Result<Cell> {
        if index >= self.cell_count {
            return Err(Error::InvalidCell(format!(
                "index {index} out of range for {} cells",
                self.cell_count
            )));
        }
        let mut levels = vec![0; self.variables.len()];
        self.decode(index, &mut levels);
        Ok(Cell { levels })
    }

    /// Writes the levels of cell `index` into `levels` (schema order).
    pub(crate) fn decode(&self, index: usize, levels: &mut [usize]) {
        for (pos, spec) in self.variables.iter().enumerate() {
            levels[pos] = (index / self.strides[pos]) % spec.levels;
        }
    }

    /// Schema restricted to `vars`, keeping this schema's relative order and convention.
    pub fn restrict(&self, vars: &VarSet) -> Result<TableSchema> {
        for v in vars {
            self.require(v)?;
        }
        let variables = self
            .variables
            .iter()
            .filter(|v| vars.contains(&v.name))
            .cloned()
            .collect();
        TableSchema::new(variables, self.index_convention)
    }

    /// For every cell, the index of its restriction in `target` (which must be a restriction of
    /// this schema).
    pub(crate) fn projection(&self, target: &TableSchema) -> Result<Vec<usize>> {
        let mut map = Vec::with_capacity(target.len());
        for (tpos, spec) in target.variables.iter().enumerate() {
            let (pos, own) = self.require(&spec.name)?;
            if own.levels != spec.levels {
                return Err(Error::Schema(format!("level mismatch for {}", spec.name)));
            }
            map.push((pos, target.strides[tpos]));
        }
        let mut levels = vec![0; self.len()];
        Ok((0..self.cell_count)
            .map(|i| {
                self.decode(i, &mut levels);
                map.iter().map(|&(pos, stride)| levels[pos] * stride).sum()
            })
            .collect())
    }

    /// Per cell: `Some(index into the joint configurations of head)` when the cell lies in the
    /// slice given by `context`, else `None`. Head configurations are enumerated in the
    /// restricted schema's order.
    pub(crate) fn bucket_map(&self, head: &VarSet, context: &Context) -> Result<Vec<Option<usize>>> {
        let head_schema = self.restrict(head)?;
        let mut head_map = Vec::new();
        for (tpos, spec) in head_schema.variables.iter().enumerate() {
            head_map.push((self.require(&spec.name)?.0, head_schema.strides[tpos]));
        }
        let ctx = self.context_positions(context)?;
        let mut levels = vec![0; self.len()];
        Ok((0..self.cell_count)
            .map(|i| {
                self.decode(i, &mut levels);
                if ctx.iter().all(|&(pos, level)| levels[pos] == level) {
                    Some(head_map.iter().map(|&(pos, stride)| levels[pos] * stride).sum())
                } else {
                    None
                }
            })
            .collect())
    }

    pub(crate) fn context_positions(&self, context: &Context) -> Result<Vec<(usize, usize)>> {
        context
            .iter()
            .map(|(name, level)| {
                let (pos, spec) = self.require(name)?;
                if level >= spec.levels {
                    return Err(Error::Schema(format!(
                        "level {} out of range for {} ({} levels)",
                        level + 1,
                        name,
                        spec.levels
                    )));
                }
                Ok((pos, level))
            })
            .collect()
    }

    pub fn validate_context(&self, context: &Context) -> Result<()> {
        self.context_positions(context).map(|_| ())
    }

    /// Every context over `vars`, in this schema's enumeration order restricted to `vars`.
    pub fn contexts_over(&self, vars: &VarSet) -> Result<Vec<Context>> {
        let sub = self.restrict(vars)?;
        (0..sub.cell_count())
            .map(|i| {
                let cell = sub.cell_at(i)?;
                Ok(Context::from_cell(&sub, &cell))
            })
            .collect::<Result<Vec<_>>>()
            .map(|mut all| {
                all.sort_by(|a, b| a.ordering_key(self).cmp(&b.ordering_key(self)));
                all
            })
    }
}

/// A full assignment of levels, in schema order.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Cell {
    levels: Vec<usize>,
}

impl Cell {
    pub fn new(levels: Vec<usize>) -> Self {
        Cell { levels }
    }

    pub fn from_assignment(schema: &TableSchema, assignment: &BTreeMap<String, usize>) -> Result<Self> {
        if assignment.len() != schema.len() {
            return Err(Error::InvalidCell(format!(
                "assignment covers {} of {} variables",
                assignment.len(),
                schema.len()
            )));
        }
        let levels = schema
            .variables()
            .iter()
            .map(|spec| {
                assignment
                    .get(&spec.name)
                    .copied()
                    .ok_or_else(|| Error::InvalidCell(format!("{} not assigned", spec.name)))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Cell { levels })
    }

    pub fn levels(&self) -> &[usize] {
        &self.levels
    }
}

/// A partial assignment of levels to variables; possibly empty.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Context(BTreeMap<String, usize>);

impl Context {
    pub fn new() -> Self {
        Context(BTreeMap::new())
    }

    pub fn single(name: impl Into<String>, level: usize) -> Self {
        let mut c = Context::new();
        c.0.insert(name.into(), level);
        c
    }

    pub fn from_pairs<I, S>(pairs: I) -> Self
    where
        I: IntoIterator<Item = (S, usize)>,
        S: Into<String>,
    {
        Context(pairs.into_iter().map(|(k, v)| (k.into(), v)).collect())
    }

    fn from_cell(schema: &TableSchema, cell: &Cell) -> Self {
        Context(
            schema
                .names()
                .zip(cell.levels())
                .map(|(n, &l)| (n.to_string(), l))
                .collect(),
        )
    }

    /// Parses `C=1,D=2` using the schema's level labels.
    pub fn parse(text: &str, schema: &TableSchema) -> Result<Self> {
        let mut ctx = Context::new();
        let trimmed = text.trim().trim_start_matches('(').trim_end_matches(')');
        for (k, part) in trimmed.split(',').enumerate() {
            let part = part.trim();
            if part.is_empty() {
                continue;
            }
            let (name, label) = part
                .split_once('=')
                .ok_or_else(|| Error::parse(format!("context item {}", k + 1), format!("expected VAR=LABEL, got {part:?}")))?;
            let (name, label) = (name.trim(), label.trim());
            let (_, spec) = schema.require(name)?;
            let level = spec.level_of(label).ok_or_else(|| {
                Error::parse(
                    format!("context item {}", k + 1),
                    format!("unknown level {label:?} for {name}"),
                )
            })?;
            if ctx.0.insert(name.to_string(), level).is_some() {
                return Err(Error::parse(
                    format!("context item {}", k + 1),
                    format!("{name} assigned twice"),
                ));
            }
        }
        Ok(ctx)
    }

    pub fn get(&self, name: &str) -> Option<usize> {
        self.0.get(name).copied()
    }

    pub fn insert(&mut self, name: impl Into<String>, level: usize) -> Option<usize> {
        self.0.insert(name.into(), level)
    }

    pub fn remove(&mut self, name: &str) -> Option<usize> {
        self.0.remove(name)
    }

    pub fn with(&self, name: impl Into<String>, level: usize) -> Self {
        let mut c = self.clone();
        c.insert(name, level);
        c
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, usize)> {
        self.0.iter().map(|(k, &v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.0.contains_key(name)
    }

    pub fn domain(&self) -> VarSet {
        self.0.keys().cloned().collect()
    }

    /// True when both contexts assign the same level to every shared variable.
    pub fn compatible(&self, other: &Context) -> bool {
        self.0
            .iter()
            .all(|(k, v)| other.0.get(k).map_or(true, |w| w == v))
    }

    /// True when every assignment of `self` also appears in `other`.
    pub fn is_subcontext_of(&self, other: &Context) -> bool {
        self.0.iter().all(|(k, v)| other.0.get(k) == Some(v))
    }

    /// Context restricted to `vars`.
    pub fn restrict(&self, vars: &VarSet) -> Context {
        Context(
            self.0
                .iter()
                .filter(|(k, _)| vars.contains(*k))
                .map(|(k, v)| (k.clone(), *v))
                .collect(),
        )
    }

    /// Context with the variables in `vars` removed.
    pub fn without(&self, vars: &VarSet) -> Context {
        Context(
            self.0
                .iter()
                .filter(|(k, _)| !vars.contains(*k))
                .map(|(k, v)| (k.clone(), *v))
                .collect(),
        )
    }

    /// Renders as `C=1,B=2` in schema variable order using level labels.
    pub fn display(&self, schema: &TableSchema) -> String {
        let mut parts: Vec<(usize, String)> = self
            .0
            .iter()
            .map(|(k, &v)| match schema.variable(k) {
                Some(spec) => (schema.position(k).unwrap_or(usize::MAX), format!("{}={}", k, spec.label(v))),
                None => (usize::MAX, format!("{}={}", k, v + 1)),
            })
            .collect();
        parts.sort();
        parts.into_iter().map(|(_, s)| s).collect::<Vec<_>>().join(",")
    }

    fn ordering_key(&self, schema: &TableSchema) -> Vec<(usize, usize)> {
        let mut key: Vec<(usize, usize)> = self
            .0
            .iter()
            .map(|(k, &v)| (schema.position(k).unwrap_or(usize::MAX), v))
            .collect();
        key.sort();
        key
    }
}

impl fmt::Display for Context {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|(k, v)| format!("{}={}", k, v + 1)).collect();
        write!(f, "{}", parts.join(","))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContingencyTable {
    schema: TableSchema,
    counts: Vec<u64>,
    total: u64,
}

impl ContingencyTable {
    pub fn new(schema: TableSchema, counts: Vec<u64>) -> Result<Self> {
        if counts.len() != schema.cell_count() {
            return Err(Error::Schema(format!(
                "expected {} counts, got {}",
                schema.cell_count(),
                counts.len()
            )));
        }
        let total = counts.iter().sum();
        Ok(ContingencyTable {
            schema,
            counts,
            total,
        })
    }

    pub fn schema(&self) -> &TableSchema {
        &self.schema
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    /// Total count N.
    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn count(&self, cell: &Cell) -> Result<u64> {
        Ok(self.counts[self.schema.cell_index(cell)?])
    }

    /// Marginal table over `vars` (kept in this table's variable order).
    pub fn marginalize(&self, vars: &VarSet) -> Result<ContingencyTable> {
        let target = self.schema.restrict(vars)?;
        if target.len() == self.schema.len() {
            return Ok(self.clone());
        }
        let proj = self.schema.projection(&target)?;
        let mut counts = vec![0u64; target.cell_count()];
        for (i, &c) in self.counts.iter().enumerate() {
            counts[proj[i]] += c;
        }
        ContingencyTable::new(target, counts)
    }

    /// Slice at `context`; the context variables are dropped from the result.
    pub fn slice(&self, context: &Context) -> Result<ContingencyTable> {
        if context.is_empty() {
            return Ok(self.clone());
        }
        let ctx = self.schema.context_positions(context)?;
        let keep: VarSet = self
            .schema
            .names()
            .filter(|n| !context.contains(n))
            .map(String::from)
            .collect();
        let target = self.schema.restrict(&keep)?;
        let proj = self.schema.projection(&target)?;
        let mut counts = vec![0u64; target.cell_count()];
        let mut levels = vec![0; self.schema.len()];
        for (i, &c) in self.counts.iter().enumerate() {
            self.schema.decode(i, &mut levels);
            if ctx.iter().all(|&(pos, level)| levels[pos] == level) {
                counts[proj[i]] += c;
            }
        }
        ContingencyTable::new(target, counts)
    }

    /// Parses the JSON table document.
    pub fn from_json(document: &str) -> Result<Self> {
        let doc: TableDocument = serde_json::from_str(document).map_err(|e| {
            Error::parse(format!("line {}, column {}", e.line(), e.column()), e.to_string())
        })?;
        let schema = TableSchema::new(doc.variables, doc.index_convention).map_err(|e| match e {
            Error::Schema(m) => Error::parse("variables", m),
            other => other,
        })?;
        if doc.counts.len() != schema.cell_count() {
            return Err(Error::parse(
                "counts",
                format!(
                    "expected {} counts for the declared variables, got {}",
                    schema.cell_count(),
                    doc.counts.len()
                ),
            ));
        }
        let counts = doc
            .counts
            .iter()
            .enumerate()
            .map(|(i, &c)| {
                u64::try_from(c).map_err(|_| Error::parse(format!("counts[{i}]"), format!("negative count {c}")))
            })
            .collect::<Result<Vec<_>>>()?;
        ContingencyTable::new(schema, counts)
    }

    /// Canonical JSON document for this table.
    pub fn to_json(&self) -> String {
        let doc = TableDocument {
            description: None,
            variables: self.schema.variables.clone(),
            index_convention: self.schema.index_convention,
            counts: self.counts.iter().map(|&c| c as i64).collect(),
        };
        serde_json::to_string_pretty(&doc).expect("table document serializes")
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TableDocument {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    description: Option<String>,
    variables: Vec<VariableSpec>,
    index_convention: IndexConvention,
    counts: Vec<i64>,
}
