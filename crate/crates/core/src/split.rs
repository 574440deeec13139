//! Split graphs and split trees.
//!
//! A [`SplitGraph`] is a context, a graph over the variables not fixed by the context, and a
//! list of [`SplitTree`]s. Each tree replaces a collection of cliques of the graph by one
//! child split graph per level of its split variable. Nodes are addressed by paths of
//! `(tree index, level)` pairs from the root.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::csi::{Generator, GeneratingClass};
use crate::error::{Error, Result};
use crate::fit::{self, TestResult};
use crate::graph::{cliques_text_in, Edge, Graph};
use crate::table::{Context, ContingencyTable, TableSchema, VarSet, VariableSpec};

/// One step of a node address: tree index within the node, then level of the split variable.
pub type Step = (usize, usize);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitGraph {
    context: Context,
    graph: Graph,
    trees: Vec<SplitTree>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitTree {
    split_variable: String,
    collection: Vec<VarSet>,
    children: Vec<SplitGraph>,
}

impl SplitTree {
    pub fn split_variable(&self) -> &str {
        &self.split_variable
    }

    pub fn collection(&self) -> &[VarSet] {
        &self.collection
    }

    pub fn children(&self) -> &[SplitGraph] {
        &self.children
    }

    /// Union of the collection's cliques, split variable included.
    pub fn variables(&self) -> VarSet {
        self.collection.iter().flatten().cloned().collect()
    }
}

impl SplitGraph {
    /// A plain graph: empty context, no trees.
    pub fn new(graph: Graph) -> Self {
        SplitGraph {
            context: Context::new(),
            graph,
            trees: Vec::new(),
        }
    }

    pub fn with_context(context: Context, graph: Graph) -> Result<Self> {
        if context.iter().any(|(v, _)| graph.has_vertex(v)) {
            return Err(Error::Argument("context variables must not be graph vertices".into()));
        }
        Ok(SplitGraph {
            context,
            graph,
            trees: Vec::new(),
        })
    }

    pub fn context(&self) -> &Context {
        &self.context
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn trees(&self) -> &[SplitTree] {
        &self.trees
    }

    /// Cliques of the graph that belong to some tree.
    pub fn consumed(&self) -> Vec<VarSet> {
        self.trees.iter().flat_map(|t| t.collection.iter().cloned()).collect()
    }

    /// Cliques of the graph not taken over by a tree.
    pub fn free_cliques(&self) -> Vec<VarSet> {
        let consumed = self.consumed();
        self.graph
            .cliques()
            .into_iter()
            .filter(|c| !consumed.contains(c))
            .collect()
    }

    pub fn node(&self, path: &[Step]) -> Result<&SplitGraph> {
        let mut node = self;
        for &(t, level) in path {
            node = node
                .trees
                .get(t)
                .and_then(|tree| tree.children.get(level))
                .ok_or_else(|| Error::Argument(format!("no node at {}", path_text(path))))?;
        }
        Ok(node)
    }

    fn node_mut(&mut self, path: &[Step]) -> Result<&mut SplitGraph> {
        let mut node = self;
        for &(t, level) in path {
            node = node
                .trees
                .get_mut(t)
                .and_then(|tree| tree.children.get_mut(level))
                .ok_or_else(|| Error::Argument(format!("no node at {}", path_text(path))))?;
        }
        Ok(node)
    }

    /// Every node with its path, parents before children.
    pub fn nodes(&self) -> Vec<(Vec<Step>, &SplitGraph)> {
        let mut out = vec![(Vec::new(), self)];
        let mut i = 0;
        while i < out.len() {
            let (path, node) = out[i].clone();
            for (t, tree) in node.trees.iter().enumerate() {
                for (level, child) in tree.children.iter().enumerate() {
                    let mut p = path.clone();
                    p.push((t, level));
                    out.push((p, child));
                }
            }
            i += 1;
        }
        out
    }

    /// Splits `collection` of the root graph by `s`.
    pub fn make_split(&self, schema: &TableSchema, collection: &[VarSet], s: &str) -> Result<SplitGraph> {
        self.make_split_at(schema, &[], collection, s)
    }

    /// Splits `collection` of the node at `path` by `s`. The model is unchanged.
    pub fn make_split_at(&self, schema: &TableSchema, path: &[Step], collection: &[VarSet], s: &str) -> Result<SplitGraph> {
        let mut out = self.clone();
        let node = out.node_mut(path)?;
        let (_, spec) = schema.require(s)?;
        if collection.is_empty() {
            return Err(Error::Argument("empty collection".into()));
        }
        if node.context.contains(s) {
            return Err(Error::IllegalSplit(format!("{s} is already fixed by the context")));
        }
        let cliques = node.graph.cliques();
        let consumed = node.consumed();
        let mut sorted: Vec<VarSet> = Vec::new();
        for c in collection {
            if !cliques.contains(c) {
                return Err(Error::Argument(format!("[{}] is not a clique of the graph", join(c))));
            }
            if consumed.contains(c) {
                return Err(Error::Conflict(format!("[{}] already belongs to another split tree", join(c))));
            }
            if !sorted.contains(c) {
                sorted.push(c.clone());
            }
        }
        if let Some(c) = sorted.iter().find(|c| !c.contains(s)) {
            return Err(Error::IllegalSplit(format!(
                "{s} is not in clique [{}]; the split would change the model",
                join(c)
            )));
        }
        sorted.sort();
        let union: VarSet = sorted.iter().flatten().cloned().collect();
        let fixed: VarSet = std::iter::once(s.to_string()).collect();
        if union.len() < 2 {
            return Err(Error::Argument(format!("splitting [{s}] by {s} leaves nothing to split")));
        }
        let child_graph = node.graph.induced_subgraph(&union)?.remove_vertices(&fixed);
        let children = (0..spec.levels)
            .map(|level| SplitGraph {
                context: node.context.with(s, level),
                graph: child_graph.clone(),
                trees: Vec::new(),
            })
            .collect();
        node.trees.push(SplitTree {
            split_variable: s.to_string(),
            collection: sorted,
            children,
        });
        Ok(out)
    }

    /// Checks that removing `edge` from the node at `path` would be a meaningful context edge
    /// removal, without performing it.
    pub fn check_removal(&self, path: &[Step], edge: &Edge) -> Result<()> {
        if path.is_empty() {
            return Err(Error::Argument("the root graph has no context edges".into()));
        }
        let node = self.node(path)?;
        if !node.graph.has_edge(edge) {
            return Err(Error::Argument(format!("edge {edge} is not in the graph at {}", path_text(path))));
        }
        let ends = edge.vertices();
        if node.consumed().iter().any(|c| ends.is_subset(c)) {
            return Err(Error::Argument(format!(
                "edge {edge} lies inside a split tree at {}",
                path_text(path)
            )));
        }
        for (owner, g) in self.tagged_generators() {
            if owner.as_slice() == path {
                continue;
            }
            if ends.is_subset(&g.support()) && g.context().compatible(&node.context) {
                return Err(Error::MeaninglessSplit(format!(
                    "edge {edge} in context {} is still present in the generator over {} with context {}",
                    node.context,
                    join(&g.support()),
                    g.context()
                )));
            }
        }
        Ok(())
    }

    /// Removes the context edge `edge` from the node at `path`.
    pub fn remove_context_edge(&self, path: &[Step], edge: &Edge) -> Result<SplitGraph> {
        self.check_removal(path, edge)?;
        let mut out = self.clone();
        out.node_mut(path)?.graph.remove_edge(edge)?;
        Ok(out)
    }

    /// Generators of every node, tagged with the node's path. Not reduced.
    pub fn tagged_generators(&self) -> Vec<(Vec<Step>, Generator)> {
        let mut out = Vec::new();
        for (path, node) in self.nodes() {
            let ctx_vars = node.context.domain();
            for c in node.free_cliques() {
                let head: VarSet = c.difference(&ctx_vars).cloned().collect();
                if let Ok(g) = Generator::new(head, node.context.clone()) {
                    out.push((path.clone(), g));
                }
            }
        }
        out
    }

    /// All generators of the structure, before reduction.
    pub fn raw_class(&self) -> GeneratingClass {
        self.tagged_generators().into_iter().map(|(_, g)| g).collect()
    }

    /// The reduced generating class of the split model.
    pub fn generating_class(&self, schema: &TableSchema) -> Result<GeneratingClass> {
        self.raw_class().reduce(schema)
    }

    /// Checks the structural invariants against `schema`.
    pub fn validate(&self, schema: &TableSchema) -> Result<()> {
        schema.validate_context(&self.context)?;
        for v in self.graph.vertices() {
            schema.require(v)?;
            if self.context.contains(v) {
                return Err(Error::Argument(format!("context variable {v} is also a graph vertex")));
            }
        }
        let cliques = self.graph.cliques();
        let mut seen: Vec<&VarSet> = Vec::new();
        for tree in &self.trees {
            let (_, spec) = schema.require(&tree.split_variable)?;
            for c in &tree.collection {
                if !cliques.contains(c) {
                    return Err(Error::Argument(format!("[{}] is not a clique of the graph", join(c))));
                }
                if seen.contains(&c) {
                    return Err(Error::Conflict(format!("[{}] belongs to two split trees", join(c))));
                }
                if !c.contains(&tree.split_variable) {
                    return Err(Error::IllegalSplit(format!(
                        "{} is not in clique [{}]",
                        tree.split_variable,
                        join(c)
                    )));
                }
                seen.push(c);
            }
            if tree.children.len() != spec.levels {
                return Err(Error::Argument(format!(
                    "split by {} needs {} children, found {}",
                    tree.split_variable,
                    spec.levels,
                    tree.children.len()
                )));
            }
            let mut vertices = tree.variables();
            vertices.remove(&tree.split_variable);
            let induced = self.graph.induced_subgraph(&tree.variables())?;
            for (level, child) in tree.children.iter().enumerate() {
                if child.context != self.context.with(tree.split_variable.clone(), level) {
                    return Err(Error::Argument(format!("child {level} of the split by {} has the wrong context", tree.split_variable)));
                }
                if child.graph.vertex_set() != vertices {
                    return Err(Error::Argument(format!(
                        "child {} graph must span {}",
                        child.context,
                        join(&vertices)
                    )));
                }
                if let Some(e) = child.graph.edges().into_iter().find(|e| !induced.has_edge(e)) {
                    return Err(Error::Argument(format!("child {} has edge {e} absent from the parent", child.context)));
                }
                child.validate(schema)?;
            }
        }
        Ok(())
    }

    /// Context model listing, one line per child of every tree followed by the root graph:
    ///
    /// ```text
    /// C=1: [ABE][DE]
    /// C=2: [AB][BDE]
    /// graph: [ABEC][BDEC][DEFC]
    /// ```
    pub fn listing(&self, schema: &TableSchema) -> String {
        let mut out = String::new();
        for (path, node) in self.nodes().into_iter().skip(1) {
            let _ = path;
            out.push_str(&format!(
                "{}: {}\n",
                node.context.display(schema),
                cliques_text_in(schema, &node.free_cliques())
            ));
        }
        out.push_str(&format!("graph: {}\n", cliques_text_in(schema, &self.graph.cliques())));
        out
    }

    pub fn to_json(&self, schema: &TableSchema) -> String {
        let doc = SplitModelDocument {
            variables: schema.variables().to_vec(),
            model: NodeDoc::from_node(self, schema),
        };
        serde_json::to_string_pretty(&doc).expect("split model serializes")
    }

    /// Reads a split model saved by [`SplitGraph::to_json`]; its variables must match
    /// `schema`.
    pub fn from_json(text: &str, schema: &TableSchema) -> Result<SplitGraph> {
        let doc: SplitModelDocument =
            serde_json::from_str(text).map_err(|e| Error::parse(format!("line {} column {}", e.line(), e.column()), e.to_string()))?;
        if doc.variables.iter().map(|v| v.name.as_str()).ne(schema.names()) {
            return Err(Error::Schema("split model variables do not match the table".into()));
        }
        let sg = doc.model.into_node(schema)?;
        sg.validate(schema)?;
        Ok(sg)
    }
}

fn join(set: &VarSet) -> String {
    set.iter().map(String::as_str).collect::<Vec<_>>().join(",")
}

fn path_text(path: &[Step]) -> String {
    let steps: Vec<String> = path.iter().map(|(t, l)| format!("{t}:{l}")).collect();
    format!("({})", steps.join(", "))
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SplitModelDocument {
    variables: Vec<VariableSpec>,
    model: NodeDoc,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NodeDoc {
    #[serde(default)]
    context: BTreeMap<String, String>,
    graph: Graph,
    #[serde(default)]
    trees: Vec<TreeDoc>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TreeDoc {
    split_variable: String,
    collection: Vec<Vec<String>>,
    children: Vec<NodeDoc>,
}

impl NodeDoc {
    fn from_node(node: &SplitGraph, schema: &TableSchema) -> Self {
        NodeDoc {
            context: node
                .context
                .iter()
                .map(|(v, l)| {
                    let label = schema.variable(v).map_or_else(|| (l + 1).to_string(), |s| s.label(l));
                    (v.to_string(), label)
                })
                .collect(),
            graph: node.graph.clone(),
            trees: node
                .trees
                .iter()
                .map(|t| TreeDoc {
                    split_variable: t.split_variable.clone(),
                    collection: t.collection.iter().map(|c| c.iter().cloned().collect()).collect(),
                    children: t.children.iter().map(|c| NodeDoc::from_node(c, schema)).collect(),
                })
                .collect(),
        }
    }

    fn into_node(self, schema: &TableSchema) -> Result<SplitGraph> {
        let mut context = Context::new();
        for (v, label) in self.context {
            let (_, spec) = schema.require(&v)?;
            let level = spec
                .level_of(&label)
                .ok_or_else(|| Error::Schema(format!("variable {v} has no level {label}")))?;
            context.insert(v, level);
        }
        let trees = self
            .trees
            .into_iter()
            .map(|t| {
                Ok(SplitTree {
                    split_variable: t.split_variable,
                    collection: t.collection.into_iter().map(|c| c.into_iter().collect()).collect(),
                    children: t
                        .children
                        .into_iter()
                        .map(|c| c.into_node(schema))
                        .collect::<Result<Vec<_>>>()?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(SplitGraph {
            context,
            graph: self.graph,
            trees,
        })
    }
}

/// Slice of the marginal table over `vars` plus the context variables, at `context`.
pub(crate) fn context_table(table: &ContingencyTable, vars: &VarSet, context: &Context) -> Result<ContingencyTable> {
    let mut keep = vars.clone();
    keep.extend(context.domain());
    table.marginalize(&keep)?.slice(context)
}

/// Tests `after` against `before`, where `after` differs from `before` only by context edge
/// removals inside split trees of the root. Each changed tree yields one test per child, on
/// the child's slice of the marginal table over the tree's variables.
pub fn decompose_test(table: &ContingencyTable, before: &SplitGraph, after: &SplitGraph) -> Result<Vec<TestResult>> {
    let schema = table.schema();
    before.validate(schema)?;
    after.validate(schema)?;
    if before.context != after.context || before.graph != after.graph || before.trees.len() != after.trees.len() {
        return Err(Error::Argument("split graphs differ outside their split trees".into()));
    }
    let mut rows = Vec::new();
    for (tb, ta) in before.trees.iter().zip(&after.trees) {
        if tb.split_variable != ta.split_variable || tb.collection != ta.collection {
            return Err(Error::Argument("split trees do not correspond".into()));
        }
        if tb == ta {
            continue;
        }
        let vars = tb.variables();
        for (cb, ca) in tb.children.iter().zip(&ta.children) {
            let slice = context_table(table, &vars, &cb.context)?;
            let big = cb.raw_class().restrict_to_slice(&cb.context);
            let small = ca.raw_class().restrict_to_slice(&ca.context);
            let mut row = fit::test_nested(&slice, &small, &big)?;
            row.label = cb.context.display(schema);
            rows.push(row);
        }
    }
    Ok(rows)
}
