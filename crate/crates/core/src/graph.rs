//! Undirected graphs over named variables.
//!
//! Graphs here are interaction graphs of models with at most a few dozen variables, so the
//! representation is a sorted adjacency map and every output is canonically ordered.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::syntax;
use crate::table::{TableSchema, VarSet};

/// An unordered vertex pair, stored with the smaller name first.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "[String; 2]", try_from = "[String; 2]")]
pub struct Edge(String, String);

impl Edge {
    pub fn new(a: impl Into<String>, b: impl Into<String>) -> Result<Self> {
        let (a, b) = (a.into(), b.into());
        match a.cmp(&b) {
            std::cmp::Ordering::Less => Ok(Edge(a, b)),
            std::cmp::Ordering::Greater => Ok(Edge(b, a)),
            std::cmp::Ordering::Equal => Err(Error::Argument(format!("edge endpoints must differ ({a})"))),
        }
    }

    /// Parses `BD` (two single-character names) or `X1,Y2` / `X1 Y2`.
    pub fn parse(text: &str, vocabulary: Option<&[String]>) -> Result<Self> {
        let names = syntax::split_names(text, vocabulary, 0)?;
        match names.as_slice() {
            [a, b] => Edge::new(a.clone(), b.clone()),
            _ => Err(Error::parse("edge", format!("expected two variable names, got {text:?}"))),
        }
    }

    pub fn first(&self) -> &str {
        &self.0
    }

    pub fn second(&self) -> &str {
        &self.1
    }

    pub fn vertices(&self) -> VarSet {
        [self.0.clone(), self.1.clone()].into_iter().collect()
    }

    pub fn contains(&self, v: &str) -> bool {
        self.0 == v || self.1 == v
    }

    /// True when both endpoints lie in `set`.
    pub fn within(&self, set: &VarSet) -> bool {
        set.contains(&self.0) && set.contains(&self.1)
    }
}

impl From<Edge> for [String; 2] {
    fn from(e: Edge) -> Self {
        [e.0, e.1]
    }
}

impl TryFrom<[String; 2]> for Edge {
    type Error = Error;
    fn try_from(v: [String; 2]) -> Result<Self> {
        let [a, b] = v;
        Edge::new(a, b)
    }
}

impl fmt::Display for Edge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.chars().count() == 1 && self.1.chars().count() == 1 {
            write!(f, "{}{}", self.0, self.1)
        } else {
            write!(f, "{},{}", self.0, self.1)
        }
    }
}

/// All edges among the vertices of `set`.
pub fn edges_within(set: &VarSet) -> BTreeSet<Edge> {
    let v: Vec<&String> = set.iter().collect();
    let mut out = BTreeSet::new();
    for i in 0..v.len() {
        for j in i + 1..v.len() {
            out.insert(Edge(v[i].clone(), v[j].clone()));
        }
    }
    out
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "GraphDocument", try_from = "GraphDocument")]
pub struct Graph {
    adj: BTreeMap<String, BTreeSet<String>>,
}

#[derive(Serialize, Deserialize)]
struct GraphDocument {
    vertices: Vec<String>,
    edges: Vec<Edge>,
}

impl From<Graph> for GraphDocument {
    fn from(g: Graph) -> Self {
        GraphDocument {
            vertices: g.adj.keys().cloned().collect(),
            edges: g.edges(),
        }
    }
}

impl TryFrom<GraphDocument> for Graph {
    type Error = Error;
    fn try_from(doc: GraphDocument) -> Result<Self> {
        let mut g = Graph::empty(doc.vertices);
        for e in doc.edges {
            g.add_edge(&e)?;
        }
        Ok(g)
    }
}

impl Graph {
    /// Edgeless graph on `vertices`.
    pub fn empty<I, S>(vertices: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Graph {
            adj: vertices.into_iter().map(|v| (v.into(), BTreeSet::new())).collect(),
        }
    }

    pub fn complete(vertices: &VarSet) -> Self {
        let mut g = Graph::empty(vertices.iter().cloned());
        for e in edges_within(vertices) {
            g.insert_unchecked(&e);
        }
        g
    }

    /// The graph whose cliques are generated by `sets` (each set made complete).
    pub fn from_cliques<'a, I>(sets: I) -> Self
    where
        I: IntoIterator<Item = &'a VarSet>,
    {
        let mut g = Graph::default();
        for set in sets {
            for v in set {
                g.adj.entry(v.clone()).or_default();
            }
            for e in edges_within(set) {
                g.insert_unchecked(&e);
            }
        }
        g
    }

    /// Parses the bracketed clique form `[ABD][ACD]`.
    pub fn parse(text: &str, vocabulary: Option<&[String]>) -> Result<Self> {
        let groups = syntax::bracket_groups(text)?;
        let mut sets = Vec::new();
        for (inner, offset) in groups {
            sets.push(syntax::split_names(&inner, vocabulary, offset)?.into_iter().collect::<VarSet>());
        }
        Ok(Graph::from_cliques(&sets))
    }

    fn insert_unchecked(&mut self, e: &Edge) {
        self.adj.entry(e.0.clone()).or_default().insert(e.1.clone());
        self.adj.entry(e.1.clone()).or_default().insert(e.0.clone());
    }

    pub fn add_vertex(&mut self, v: impl Into<String>) {
        self.adj.entry(v.into()).or_default();
    }

    pub fn add_edge(&mut self, e: &Edge) -> Result<()> {
        if !self.adj.contains_key(&e.0) || !self.adj.contains_key(&e.1) {
            return Err(Error::Argument(format!("edge {e} has an endpoint outside the graph")));
        }
        self.insert_unchecked(e);
        Ok(())
    }

    pub fn remove_edge(&mut self, e: &Edge) -> Result<()> {
        if !self.has_edge(e) {
            return Err(Error::Argument(format!("edge {e} is not in the graph")));
        }
        self.adj.get_mut(&e.0).map(|s| s.remove(&e.1));
        self.adj.get_mut(&e.1).map(|s| s.remove(&e.0));
        Ok(())
    }

    pub fn without_edge(&self, e: &Edge) -> Result<Graph> {
        let mut g = self.clone();
        g.remove_edge(e)?;
        Ok(g)
    }

    pub fn has_edge(&self, e: &Edge) -> bool {
        self.adj.get(&e.0).is_some_and(|n| n.contains(&e.1))
    }

    pub fn has_vertex(&self, v: &str) -> bool {
        self.adj.contains_key(v)
    }

    pub fn vertices(&self) -> impl Iterator<Item = &String> {
        self.adj.keys()
    }

    pub fn vertex_set(&self) -> VarSet {
        self.adj.keys().cloned().collect()
    }

    pub fn vertex_count(&self) -> usize {
        self.adj.len()
    }

    pub fn neighbors(&self, v: &str) -> Option<&BTreeSet<String>> {
        self.adj.get(v)
    }

    /// Edges in canonical order.
    pub fn edges(&self) -> Vec<Edge> {
        self.adj
            .iter()
            .flat_map(|(a, ns)| ns.iter().filter(move |b| a < *b).map(move |b| Edge(a.clone(), b.clone())))
            .collect()
    }

    pub fn edge_count(&self) -> usize {
        self.adj.values().map(BTreeSet::len).sum::<usize>() / 2
    }

    pub fn is_complete_on(&self, set: &VarSet) -> bool {
        edges_within(set).iter().all(|e| self.has_edge(e))
    }

    /// Maximal cliques, each sorted, in lexicographic order of their member lists.
    pub fn cliques(&self) -> Vec<VarSet> {
        let mut out = Vec::new();
        let p: BTreeSet<String> = self.adj.keys().cloned().collect();
        self.bron_kerbosch(BTreeSet::new(), p, BTreeSet::new(), &mut out);
        out.sort_by(|a, b| a.iter().cmp(b.iter()));
        out
    }

    fn bron_kerbosch(
        &self,
        r: BTreeSet<String>,
        mut p: BTreeSet<String>,
        mut x: BTreeSet<String>,
        out: &mut Vec<VarSet>,
    ) {
        if p.is_empty() {
            if x.is_empty() {
                out.push(r);
            }
            return;
        }
        let pivot = p
            .iter()
            .chain(x.iter())
            .max_by_key(|u| (self.adj[*u].intersection(&p).count(), std::cmp::Reverse((*u).clone())))
            .cloned()
            .expect("p is non-empty");
        let candidates: Vec<String> = p.difference(&self.adj[&pivot]).cloned().collect();
        for v in candidates {
            let nv = &self.adj[&v];
            let mut r2 = r.clone();
            r2.insert(v.clone());
            let p2 = p.intersection(nv).cloned().collect();
            let x2 = x.intersection(nv).cloned().collect();
            self.bron_kerbosch(r2, p2, x2, out);
            p.remove(&v);
            x.insert(v);
        }
    }

    /// True iff every path from `a` to `b` meets `s`.
    pub fn separates(&self, s: &VarSet, a: &VarSet, b: &VarSet) -> Result<bool> {
        if a.is_empty() || b.is_empty() {
            return Err(Error::Argument("separated sets must be non-empty".into()));
        }
        if !a.is_disjoint(b) || !a.is_disjoint(s) || !b.is_disjoint(s) {
            return Err(Error::Argument("separation sets must be pairwise disjoint".into()));
        }
        for v in a.iter().chain(b).chain(s) {
            if !self.has_vertex(v) {
                return Err(Error::Argument(format!("unknown vertex {v}")));
            }
        }
        let mut seen: BTreeSet<&String> = a.iter().collect();
        let mut queue: VecDeque<&String> = a.iter().collect();
        while let Some(v) = queue.pop_front() {
            for w in &self.adj[v] {
                if s.contains(w) || seen.contains(w) {
                    continue;
                }
                if b.contains(w) {
                    return Ok(false);
                }
                seen.insert(w);
                queue.push_back(w);
            }
        }
        Ok(true)
    }

    /// Maximum cardinality search order; ties go to the smallest name.
    pub fn mcs_order(&self) -> Vec<String> {
        let mut weight: BTreeMap<&String, usize> = self.adj.keys().map(|v| (v, 0)).collect();
        let mut order = Vec::with_capacity(self.adj.len());
        while !weight.is_empty() {
            let (&next, _) = weight
                .iter()
                .max_by(|x, y| x.1.cmp(y.1).then(y.0.cmp(x.0)))
                .expect("non-empty");
            weight.remove(next);
            for w in &self.adj[next] {
                if let Some(c) = weight.get_mut(w) {
                    *c += 1;
                }
            }
            order.push(next.clone());
        }
        order
    }

    /// Chordality via maximum cardinality search: the graph is decomposable iff, in the
    /// search order, every vertex's previously visited neighbours form a clique.
    pub fn is_decomposable(&self) -> bool {
        self.perfect_sequence().is_some()
    }

    /// Cliques in an order with the running intersection property, or `None` when the graph
    /// is not decomposable.
    pub fn perfect_sequence(&self) -> Option<Vec<VarSet>> {
        let order = self.mcs_order();
        let mut visited: BTreeSet<&String> = BTreeSet::new();
        let mut ladder: Vec<VarSet> = Vec::new();
        for v in &order {
            let earlier: VarSet = self.adj[v].iter().filter(|w| visited.contains(w)).cloned().collect();
            if !self.is_complete_on(&earlier) {
                return None;
            }
            let mut set = earlier;
            set.insert(v.clone());
            ladder.push(set);
            visited.insert(v);
        }
        let mut cliques: Vec<VarSet> = Vec::new();
        for (i, set) in ladder.iter().enumerate() {
            let contained = ladder
                .iter()
                .enumerate()
                .any(|(j, other)| j != i && set.len() < other.len() && set.is_subset(other));
            if !contained {
                cliques.push(set.clone());
            }
        }
        Some(cliques)
    }

    pub fn induced_subgraph(&self, u: &VarSet) -> Result<Graph> {
        let mut adj = BTreeMap::new();
        for v in u {
            let ns = self
                .adj
                .get(v)
                .ok_or_else(|| Error::Argument(format!("unknown vertex {v}")))?;
            adj.insert(v.clone(), ns.intersection(u).cloned().collect());
        }
        Ok(Graph { adj })
    }

    /// Graph with the vertices in `u` deleted.
    pub fn remove_vertices(&self, u: &VarSet) -> Graph {
        let keep: VarSet = self.adj.keys().filter(|v| !u.contains(*v)).cloned().collect();
        self.induced_subgraph(&keep).expect("subset of own vertices")
    }

    /// Whether the graph stays decomposable after removing `e`.
    pub fn drop_edge_decomposable(&self, e: &Edge) -> Result<bool> {
        Ok(self.without_edge(e)?.is_decomposable())
    }

    /// Canonical bracketed clique form, e.g. `[ABD][ACD]`.
    pub fn to_text(&self) -> String {
        cliques_text(&self.cliques())
    }

    /// Graphviz document with vertices and edges in sorted order.
    pub fn to_dot(&self, name: &str, label: Option<&str>) -> String {
        let mut s = format!("graph {} {{\n", dot_id(name));
        if let Some(label) = label {
            s.push_str(&format!("  label={};\n", dot_id(label)));
        }
        for v in self.adj.keys() {
            s.push_str(&format!("  {};\n", dot_id(v)));
        }
        for e in self.edges() {
            s.push_str(&format!("  {} -- {};\n", dot_id(&e.0), dot_id(&e.1)));
        }
        s.push_str("}\n");
        s
    }
}

/// Formats sets as `[AB][CD]`.
pub fn cliques_text(sets: &[VarSet]) -> String {
    sets.iter().map(|c| format!("[{}]", syntax::join_names(c))).collect()
}

/// Formats sets as `[EFC][EC]` with members in schema order, sets ordered by their
/// first differing schema position.
pub fn cliques_text_in(schema: &TableSchema, sets: &[VarSet]) -> String {
    let mut keyed: Vec<(Vec<usize>, String)> = sets
        .iter()
        .map(|c| {
            let names = schema.ordered(c);
            let key = names.iter().map(|v| schema.position(v).unwrap_or(usize::MAX)).collect();
            (key, format!("[{}]", syntax::join_names(names.into_iter())))
        })
        .collect();
    keyed.sort();
    keyed.into_iter().map(|(_, s)| s).collect()
}

fn dot_id(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

impl fmt::Display for Graph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}
