//! Model selection: backward edge elimination, edge tests partitioned by context, and the
//! search for split models with per-context elimination.

use std::collections::BTreeSet;

use serde::Serialize;

use crate::csi::GeneratingClass;
use crate::error::{Error, Result};
use crate::fit::{self, TestResult};
use crate::graph::{cliques_text_in, edges_within, Edge, Graph};
use crate::split::{context_table, SplitGraph, Step};
use crate::table::{Context, ContingencyTable, TableSchema, VarSet};

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionOptions {
    pub p_accepted: f64,
    /// Iterate elimination to a fixed point; otherwise a single sweep.
    pub recursive: bool,
    /// Only remove edges whose removal keeps the graph decomposable.
    pub decomposable_mode: bool,
    pub fixed_edges: BTreeSet<Edge>,
    pub excluded_split_vars: VarSet,
    /// Clique collections to be split as a unit.
    pub collections: Vec<Vec<VarSet>>,
    /// Also search for further splits inside the children of adopted splits.
    pub nested: bool,
}

impl Default for SelectionOptions {
    fn default() -> Self {
        SelectionOptions {
            p_accepted: 0.05,
            recursive: true,
            decomposable_mode: true,
            fixed_edges: BTreeSet::new(),
            excluded_split_vars: VarSet::new(),
            collections: Vec::new(),
            nested: false,
        }
    }
}

impl SelectionOptions {
    /// Fixes every edge among `vars`.
    pub fn fix_complete(&mut self, vars: &VarSet) {
        self.fixed_edges.extend(edges_within(vars));
    }

    fn validate(&self, schema: &TableSchema) -> Result<()> {
        if !(self.p_accepted > 0.0 && self.p_accepted <= 1.0) {
            return Err(Error::Argument(format!("p_accepted must lie in (0, 1], got {}", self.p_accepted)));
        }
        for e in &self.fixed_edges {
            for v in e.vertices() {
                schema.require(&v)?;
            }
        }
        for v in &self.excluded_split_vars {
            schema.require(v)?;
        }
        Ok(())
    }
}

/// One backward elimination step.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Removal {
    pub edge: Edge,
    pub test: TestResult,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Elimination {
    pub graph: Graph,
    pub removed: Vec<Removal>,
}

/// Test for removing `e` from `g`. In decomposable mode the test runs on the marginal over
/// the union of the cliques containing `e`; otherwise it compares the two graphical models on
/// the full table.
pub fn edge_removal_test(table: &ContingencyTable, g: &Graph, e: &Edge, decomposable_mode: bool) -> Result<TestResult> {
    let small = g.without_edge(e)?;
    let mut r = if decomposable_mode {
        let vars = union_of_cliques_with(g, e);
        let marginal = table.marginalize(&vars)?;
        let big = g.induced_subgraph(&vars)?;
        fit::test_graphs(&marginal, &big.without_edge(e)?, &big)?
    } else {
        fit::test_graphs(table, &small, g)?
    };
    r.label = e.to_string();
    Ok(r)
}

fn union_of_cliques_with(g: &Graph, e: &Edge) -> VarSet {
    let ends = e.vertices();
    g.cliques()
        .into_iter()
        .filter(|c| ends.is_subset(c))
        .flatten()
        .collect()
}

fn check_graph(table: &ContingencyTable, g: &Graph) -> Result<()> {
    if g.vertex_set() != table.schema().var_set() {
        return Err(Error::Argument("graph vertices must be the table's variables".into()));
    }
    Ok(())
}

/// Backward elimination: repeatedly remove the removable edge with the largest p-value
/// while it exceeds `p_accepted`. Ties go to the lexicographically smallest edge.
pub fn drop_least(table: &ContingencyTable, g: &Graph, opts: &SelectionOptions) -> Result<Graph> {
    Ok(eliminate(table, g, opts, |_| true)?.graph)
}

/// [`drop_least`] with the removal record, restricted to edges accepted by `eligible`.
pub fn eliminate(
    table: &ContingencyTable,
    g: &Graph,
    opts: &SelectionOptions,
    eligible: impl Fn(&Edge) -> bool,
) -> Result<Elimination> {
    check_graph(table, g)?;
    opts.validate(table.schema())?;
    if opts.decomposable_mode && !g.is_decomposable() {
        return Err(Error::Argument("decomposable mode needs a decomposable starting graph".into()));
    }
    if let Some(e) = opts
        .fixed_edges
        .iter()
        .find(|e| e.within(&g.vertex_set()) && !g.has_edge(e))
    {
        return Err(Error::Argument(format!("fixed edge {e} is not in the graph")));
    }
    let removable = |g: &Graph, e: &Edge| -> Result<bool> {
        Ok(!opts.fixed_edges.contains(e) && eligible(e) && (!opts.decomposable_mode || g.drop_edge_decomposable(e)?))
    };
    let mut graph = g.clone();
    let mut removed = Vec::new();

    if opts.recursive {
        loop {
            let mut best: Option<(Edge, TestResult)> = None;
            for e in graph.edges() {
                if !removable(&graph, &e)? {
                    continue;
                }
                let test = edge_removal_test(table, &graph, &e, opts.decomposable_mode)?;
                if best.as_ref().is_none_or(|(_, b)| test.p_value > b.p_value) {
                    best = Some((e, test));
                }
            }
            match best {
                Some((edge, test)) if test.p_value > opts.p_accepted => {
                    graph.remove_edge(&edge)?;
                    removed.push(Removal { edge, test });
                }
                _ => break,
            }
        }
    } else {
        let mut tests = Vec::new();
        for e in graph.edges() {
            if removable(&graph, &e)? {
                let test = edge_removal_test(table, &graph, &e, opts.decomposable_mode)?;
                if test.p_value > opts.p_accepted {
                    tests.push((e, test));
                }
            }
        }
        // stable sort keeps edge order among equal p-values
        tests.sort_by(|a, b| b.1.p_value.total_cmp(&a.1.p_value));
        for (edge, test) in tests {
            if removable(&graph, &edge)? {
                graph.remove_edge(&edge)?;
                removed.push(Removal { edge, test });
            }
        }
    }
    Ok(Elimination { graph, removed })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Partition {
    /// One report per conditioning variable.
    Single,
    /// One report over the joint levels of all conditioning variables.
    Joint,
}

/// Edge tests in the slices of one partition, with their sum.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PartitionReport {
    pub variables: Vec<String>,
    pub rows: Vec<TestResult>,
    pub total: TestResult,
}

/// Tests removal of `e` separately in every slice given by the other variables of the
/// cliques containing `e`.
pub fn split_test_edge(table: &ContingencyTable, g: &Graph, e: &Edge, mode: Partition) -> Result<Vec<PartitionReport>> {
    check_graph(table, g)?;
    let schema = table.schema();
    let vars = union_of_cliques_with(g, e);
    if vars.is_empty() {
        return Err(Error::Argument(format!("edge {e} is not in any clique of the graph")));
    }
    let marginal = table.marginalize(&vars)?;
    let local = g.induced_subgraph(&vars)?;
    let others: Vec<String> = schema
        .ordered(&vars)
        .into_iter()
        .filter(|v| !e.contains(v))
        .cloned()
        .collect();

    let partitions: Vec<Vec<String>> = match mode {
        Partition::Single => others.iter().map(|v| vec![v.clone()]).collect(),
        Partition::Joint => vec![others.clone()],
    };
    let mut reports = Vec::new();
    for part in partitions {
        let fixed: VarSet = part.iter().cloned().collect();
        let big = local.remove_vertices(&fixed);
        let small = big.without_edge(e)?;
        let mut rows = Vec::new();
        for ctx in schema.contexts_over(&fixed)? {
            let slice = marginal.slice(&ctx)?;
            let mut r = fit::test_graphs(&slice, &small, &big)?;
            r.label = ctx.display(schema);
            rows.push(r);
        }
        let total = TestResult::total("Total", marginal.total(), &rows);
        reports.push(PartitionReport {
            variables: part,
            rows,
            total,
        });
    }
    Ok(reports)
}

/// A split considered during the search.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SplitCandidate {
    /// Context of the node whose cliques were split.
    pub context: String,
    pub collection: Vec<String>,
    pub split_variable: String,
    /// Edges removed per child context.
    pub removed: Vec<(String, Vec<Edge>)>,
    pub deviance: f64,
    pub df: usize,
    pub aic: f64,
    pub adopted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SplitSelection {
    #[serde(skip)]
    pub model: SplitGraph,
    pub candidates: Vec<SplitCandidate>,
}

/// Searches for splits of each atom of `g` (a user collection or a remaining clique).
///
/// Every legal split variable is tried; each child graph then undergoes backward
/// elimination on its slice of the atom's marginal table, removing only meaningful context
/// edges. The split with the smallest total AIC is adopted, provided it removed at least one
/// edge.
pub fn split_drop_least(table: &ContingencyTable, g: &Graph, opts: &SelectionOptions) -> Result<SplitSelection> {
    check_graph(table, g)?;
    opts.validate(table.schema())?;
    if opts.decomposable_mode && !g.is_decomposable() {
        return Err(Error::Argument("decomposable mode needs a decomposable graph".into()));
    }
    let cliques = g.cliques();
    let mut used: Vec<&VarSet> = Vec::new();
    let mut atoms: Vec<Vec<VarSet>> = Vec::new();
    for coll in &opts.collections {
        let mut atom = Vec::new();
        for c in coll {
            if !cliques.contains(c) {
                return Err(Error::Argument(format!(
                    "collection member {} is not a clique of the graph",
                    cliques_text_in(table.schema(), std::slice::from_ref(c))
                )));
            }
            if used.contains(&c) {
                return Err(Error::Argument("collections must be disjoint".into()));
            }
            used.push(c);
            atom.push(c.clone());
        }
        if !atom.is_empty() {
            atoms.push(atom);
        }
    }
    for c in &cliques {
        if !used.contains(&c) {
            atoms.push(vec![c.clone()]);
        }
    }
    let mut search = Search {
        table,
        opts,
        candidates: Vec::new(),
    };
    let model = search.run(SplitGraph::new(g.clone()), &[], atoms)?;
    Ok(SplitSelection {
        model,
        candidates: search.candidates,
    })
}

struct Search<'a> {
    table: &'a ContingencyTable,
    opts: &'a SelectionOptions,
    candidates: Vec<SplitCandidate>,
}

struct Trial {
    model: SplitGraph,
    aic: f64,
    candidate: SplitCandidate,
    removals: usize,
}

impl Search<'_> {
    fn run(&mut self, mut sg: SplitGraph, path: &[Step], atoms: Vec<Vec<VarSet>>) -> Result<SplitGraph> {
        let schema = self.table.schema();
        for atom in atoms {
            let node = sg.node(path)?;
            let tree_index = node.trees().len();
            let common: VarSet = atom
                .iter()
                .skip(1)
                .fold(atom[0].clone(), |acc, c| acc.intersection(c).cloned().collect());
            if atom.iter().flatten().collect::<BTreeSet<_>>().len() < 2 {
                continue;
            }
            let mut best: Option<Trial> = None;
            let first = self.candidates.len();
            for s in schema.ordered(&common) {
                if self.opts.excluded_split_vars.contains(s) {
                    continue;
                }
                let trial = self.try_split(&sg, path, &atom, s)?;
                self.candidates.push(trial.candidate.clone());
                if trial.removals > 0 && best.as_ref().is_none_or(|b| trial.aic < b.aic) {
                    best = Some(trial);
                }
            }
            if let Some(best) = best {
                let s = best.candidate.split_variable.clone();
                for c in &mut self.candidates[first..] {
                    c.adopted = c.split_variable == s;
                }
                sg = best.model;
                if self.opts.nested {
                    let levels = schema.levels(&s).unwrap_or(0);
                    for level in 0..levels {
                        let mut child_path = path.to_vec();
                        child_path.push((tree_index, level));
                        let child_atoms = sg.node(&child_path)?.graph().cliques().into_iter().map(|c| vec![c]).collect();
                        sg = self.run(sg, &child_path, child_atoms)?;
                    }
                }
            }
        }
        Ok(sg)
    }

    fn try_split(&self, sg: &SplitGraph, path: &[Step], atom: &[VarSet], s: &str) -> Result<Trial> {
        let schema = self.table.schema();
        let split = sg.make_split_at(schema, path, atom, s)?;
        let tree_index = split.node(path)?.trees().len() - 1;
        let tree = &split.node(path)?.trees()[tree_index];
        let vars = tree.variables();
        let mut model = split.clone();
        let mut rows = Vec::new();
        let mut removed = Vec::new();
        let mut removals = 0;
        for (level, child) in tree.children().iter().enumerate() {
            let mut child_path = path.to_vec();
            child_path.push((tree_index, level));
            let slice = context_table(self.table, &vars, child.context())?;
            let mut child_opts = self.opts.clone();
            child_opts.fixed_edges = self
                .opts
                .fixed_edges
                .iter()
                .filter(|e| e.within(&child.graph().vertex_set()))
                .cloned()
                .collect();
            child_opts.excluded_split_vars.clear();
            child_opts.collections.clear();
            let result = eliminate(&slice, child.graph(), &child_opts, |e| {
                split.check_removal(&child_path, e).is_ok()
            })?;
            for r in &result.removed {
                model = model.remove_context_edge(&child_path, &r.edge)?;
            }
            removals += result.removed.len();
            rows.push(fit::test_graphs(&slice, &result.graph, child.graph())?);
            removed.push((
                child.context().display(schema),
                result.removed.into_iter().map(|r| r.edge).collect(),
            ));
        }
        let total = TestResult::total("", self.table.total(), &rows);
        let candidate = SplitCandidate {
            context: split.node(path)?.context().display(schema),
            collection: atom.iter().map(|c| cliques_text_in(schema, std::slice::from_ref(c))).collect(),
            split_variable: s.to_string(),
            removed,
            deviance: total.deviance,
            df: total.df,
            aic: total.aic,
            adopted: false,
        };
        Ok(Trial {
            model,
            aic: total.aic,
            candidate,
            removals,
        })
    }
}

/// Rows of one split tree: each child's final model tested against the child graph the
/// split started from.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TreeSummary {
    /// Split variable followed by the tree's other variables.
    pub label: String,
    pub rows: Vec<TestResult>,
    pub total: TestResult,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryReport {
    pub trees: Vec<TreeSummary>,
    /// The root graph against the saturated model.
    pub graph: TestResult,
    pub total: TestResult,
}

/// Per-context deviance decomposition of a split model. The grand total is the deviance of
/// the whole split model against the saturated model.
pub fn summary(table: &ContingencyTable, sg: &SplitGraph) -> Result<SummaryReport> {
    let schema = table.schema();
    sg.validate(schema)?;
    let base = context_table(table, &sg.graph().vertex_set(), sg.context())?;
    let mut trees = Vec::new();
    for tree in sg.trees() {
        let vars = tree.variables();
        let split_var: VarSet = std::iter::once(tree.split_variable().to_string()).collect();
        let initial = sg.graph().induced_subgraph(&vars)?.remove_vertices(&split_var);
        let big = GeneratingClass::from_graph(&initial);
        let mut rows = Vec::new();
        for child in tree.children() {
            let slice = context_table(table, &vars, child.context())?;
            let small = child.raw_class().restrict_to_slice(child.context());
            let mut r = fit::test_nested(&slice, &small, &big)?;
            let model = if child.trees().is_empty() {
                cliques_text_in(schema, &child.graph().cliques())
            } else {
                small.display(slice.schema())
            };
            r.label = format!("{}: {}", child.context().display(schema), model);
            rows.push(r);
        }
        let mut label = tree.split_variable().to_string();
        let rest: VarSet = vars.difference(&split_var).cloned().collect();
        label.extend(schema.ordered(&rest).into_iter().map(String::as_str));
        let total = TestResult::total("Total", base.total(), &rows);
        trees.push(TreeSummary { label, rows, total });
    }
    let fit = fit::fit_graph(&base, sg.graph())?;
    let graph = TestResult::new(cliques_text_in(schema, &sg.graph().cliques()), base.total(), fit.deviance, fit.df);
    let total = TestResult::total(
        "Total",
        base.total(),
        std::iter::once(&graph).chain(trees.iter().map(|t| &t.total)),
    );
    Ok(SummaryReport { trees, graph, total })
}

/// Every context of `vars`, for instantiating a model once per level combination.
pub fn all_contexts(schema: &TableSchema, vars: &VarSet) -> Result<Vec<Context>> {
    schema.contexts_over(vars)
}
