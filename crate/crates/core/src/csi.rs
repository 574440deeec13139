//! Generating classes of context-specific interaction models.
//!
//! A [`Generator`] `(A, j_b)` contributes a potential on the head variables `A` that is only
//! active on the slice where the context variables `b` take the levels `j_b`. A
//! [`GeneratingClass`] is a set of generators; the model is the set of distributions that
//! factor as a product of such potentials.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::graph::{edges_within, Graph};
use crate::linalg::SpanBasis;
use crate::syntax;
use crate::table::{Context, TableSchema, VarSet};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Generator {
    head: VarSet,
    context: Context,
}

impl Generator {
    pub fn new(head: VarSet, context: Context) -> Result<Self> {
        if head.iter().any(|v| context.contains(v)) {
            return Err(Error::Argument("generator head and context must be disjoint".into()));
        }
        if head.is_empty() && context.is_empty() {
            return Err(Error::Argument("generator must mention at least one variable".into()));
        }
        Ok(Generator { head, context })
    }

    /// Generator without context.
    pub fn plain(head: VarSet) -> Result<Self> {
        Generator::new(head, Context::new())
    }

    pub fn head(&self) -> &VarSet {
        &self.head
    }

    pub fn context(&self) -> &Context {
        &self.context
    }

    /// `A ∪ b`: every variable the potential depends on.
    pub fn support(&self) -> VarSet {
        let mut s = self.head.clone();
        s.extend(self.context.domain());
        s
    }

    /// True when the generator's potential is not constant on the slice given by `ctx`.
    pub fn matches(&self, ctx: &Context) -> bool {
        self.context.compatible(ctx)
    }

    /// `other` is absorbed by `self`: its context extends ours and its head plus the extra
    /// context variables fit inside our head.
    pub fn absorbs(&self, other: &Generator) -> bool {
        if !self.context.is_subcontext_of(&other.context) {
            return false;
        }
        let extra = other.context.without(&self.context.domain()).domain();
        other.head.iter().chain(extra.iter()).all(|v| self.head.contains(v))
    }

    /// Renders as `[BD,A=1]`.
    pub fn display(&self, schema: &TableSchema) -> String {
        let head = syntax::join_names(self.ordered_head(schema).iter().copied());
        if self.context.is_empty() {
            format!("[{head}]")
        } else if head.is_empty() {
            format!("[{}]", self.context.display(schema))
        } else {
            format!("[{},{}]", head, self.context.display(schema))
        }
    }

    fn ordered_head<'a>(&'a self, schema: &TableSchema) -> Vec<&'a String> {
        schema.ordered(&self.head)
    }

    fn columns(&self, schema: &TableSchema) -> Result<Vec<Vec<f64>>> {
        let buckets = schema.bucket_map(&self.head, &self.context)?;
        let width = schema.configurations(&self.head)?;
        let mut cols = vec![vec![0.0; schema.cell_count()]; width];
        for (cell, b) in buckets.iter().enumerate() {
            if let Some(b) = b {
                cols[*b][cell] = 1.0;
            }
        }
        Ok(cols)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct GeneratingClass {
    generators: BTreeSet<Generator>,
}

impl FromIterator<Generator> for GeneratingClass {
    fn from_iter<T: IntoIterator<Item = Generator>>(iter: T) -> Self {
        GeneratingClass {
            generators: iter.into_iter().collect(),
        }
    }
}

impl GeneratingClass {
    pub fn new() -> Self {
        GeneratingClass::default()
    }

    /// Graphical model: one context-free generator per clique.
    pub fn from_graph(graph: &Graph) -> Self {
        GeneratingClass::from_sets(&graph.cliques(), &Context::new())
    }

    /// One generator per set, all sharing `context` (context variables are removed from
    /// the heads).
    pub fn from_sets(sets: &[VarSet], context: &Context) -> Self {
        let ctx_vars = context.domain();
        sets.iter()
            .filter_map(|s| {
                let head: VarSet = s.difference(&ctx_vars).cloned().collect();
                Generator::new(head, context.clone()).ok()
            })
            .collect()
    }

    /// The saturated model over all schema variables.
    pub fn saturated(schema: &TableSchema) -> Self {
        GeneratingClass::from_sets(&[schema.var_set()], &Context::new())
    }

    pub fn insert(&mut self, g: Generator) -> bool {
        self.generators.insert(g)
    }

    pub fn generators(&self) -> impl Iterator<Item = &Generator> {
        self.generators.iter()
    }

    pub fn len(&self) -> usize {
        self.generators.len()
    }

    pub fn is_empty(&self) -> bool {
        self.generators.is_empty()
    }

    pub fn union(&self, other: &GeneratingClass) -> GeneratingClass {
        self.generators.iter().chain(other.generators.iter()).cloned().collect()
    }

    pub fn variables(&self) -> VarSet {
        self.generators.iter().flat_map(|g| g.support()).collect()
    }

    pub fn validate(&self, schema: &TableSchema) -> Result<()> {
        for g in &self.generators {
            for v in &g.head {
                schema.require(v)?;
            }
            schema.validate_context(&g.context)?;
        }
        Ok(())
    }

    /// The class restricted to the slice `ctx`: generators contradicting `ctx` vanish and the
    /// fixed variables drop out of the remaining heads and contexts.
    pub fn restrict_to_slice(&self, ctx: &Context) -> GeneratingClass {
        let fixed = ctx.domain();
        self.generators
            .iter()
            .filter(|g| g.matches(ctx))
            .filter_map(|g| {
                let head: VarSet = g.head.difference(&fixed).cloned().collect();
                Generator::new(head, g.context.without(&fixed)).ok()
            })
            .collect()
    }

    /// Removes redundant generators.
    ///
    /// A generator is dropped when the remaining ones cover it: either one of them absorbs it
    /// (see [`Generator::absorbs`]), or for some context variable `v` the generator with `v`
    /// dropped from its context and its siblings at every other level of `v` are all
    /// covered. The second case is the identity
    /// `1{i_A, v = l} = 1{i_A} - sum over m != l of 1{i_A, v = m}`.
    /// Both preserve the linear span of the class's indicator functions.
    pub fn reduce(&self, schema: &TableSchema) -> Result<GeneratingClass> {
        self.validate(schema)?;
        let mut kept: Vec<Generator> = self.generators.iter().cloned().collect();
        // absorbed generators first; the relation is a strict partial order
        let absorbed: Vec<bool> = kept
            .iter()
            .map(|g| kept.iter().any(|h| h != g && h.absorbs(g)))
            .collect();
        kept = kept
            .into_iter()
            .zip(absorbed)
            .filter(|(_, a)| !a)
            .map(|(g, _)| g)
            .collect();

        let mut candidates = kept.clone();
        candidates.sort_by(|a, b| {
            a.support()
                .len()
                .cmp(&b.support().len())
                .then(b.context.len().cmp(&a.context.len()))
                .then(a.cmp(b))
        });
        for g in candidates {
            let others: Vec<&Generator> = kept.iter().filter(|h| **h != g).collect();
            let mut cover = Coverage {
                schema,
                others: &others,
                memo: BTreeMap::new(),
            };
            if cover.covered(&g.head, &g.context) {
                kept.retain(|h| *h != g);
            }
        }
        Ok(kept.into_iter().collect())
    }

    pub fn is_reduced(&self, schema: &TableSchema) -> Result<bool> {
        Ok(self.reduce(schema)? == *self)
    }

    /// Graph of the generators matching `ctx`, each support made complete. With `eliminate`
    /// the conditioned variables are removed from the result.
    pub fn instantiate(&self, schema: &TableSchema, ctx: &Context, eliminate: bool) -> Result<Graph> {
        schema.validate_context(ctx)?;
        let mut g = Graph::empty(schema.names().map(String::from));
        for gen in self.generators.iter().filter(|g| g.matches(ctx)) {
            for e in edges_within(&gen.support()) {
                g.add_edge(&e)?;
            }
        }
        Ok(if eliminate { g.remove_vertices(&ctx.domain()) } else { g })
    }

    /// Interaction graph of the whole class (empty context).
    pub fn interaction_graph(&self, schema: &TableSchema) -> Result<Graph> {
        self.instantiate(schema, &Context::new(), false)
    }

    /// Whether `A ⊥ B | (S, ctx)` follows from separation in the instantiated graph.
    /// `false` means "not derivable", not dependence.
    pub fn csi_query(
        &self,
        schema: &TableSchema,
        a: &VarSet,
        b: &VarSet,
        s: &VarSet,
        ctx: &Context,
    ) -> Result<bool> {
        let e = ctx.domain();
        let sets = [a, b, s, &e];
        for i in 0..sets.len() {
            for j in i + 1..sets.len() {
                if !sets[i].is_disjoint(sets[j]) {
                    return Err(Error::Argument("query sets and context must be pairwise disjoint".into()));
                }
            }
        }
        let graph = self.instantiate(schema, ctx, false)?;
        let mut sep = s.clone();
        sep.extend(e);
        graph.separates(&sep, a, b)
    }

    /// Indicator columns of every generator, preceded by the constant column.
    pub(crate) fn design_columns(&self, schema: &TableSchema) -> Result<Vec<Vec<f64>>> {
        let mut cols = vec![vec![1.0; schema.cell_count()]];
        for g in &self.generators {
            cols.extend(g.columns(schema)?);
        }
        Ok(cols)
    }

    /// Dimension of the log-affine span of the model (constant included).
    pub fn dimension(&self, schema: &TableSchema) -> Result<usize> {
        self.validate(schema)?;
        let cols = self.design_columns(schema)?;
        Ok(crate::linalg::rank(&cols))
    }

    /// Whether the span of `self` is contained in the span of `other`.
    pub fn is_submodel_of(&self, other: &GeneratingClass, schema: &TableSchema) -> Result<bool> {
        self.validate(schema)?;
        other.validate(schema)?;
        let mut basis = SpanBasis::new();
        for c in other.design_columns(schema)? {
            basis.insert(&c);
        }
        Ok(self.design_columns(schema)?.iter().all(|c| basis.contains(c)))
    }

    /// Renders as `[BD,A=1][CD,A=1][ABE]`.
    pub fn display(&self, schema: &TableSchema) -> String {
        self.generators.iter().map(|g| g.display(schema)).collect()
    }

    /// Parses the class grammar. Accepts `[BD,A=1][CD,a+]`, the grouped form
    /// `[[BD][CD]]^{A=1}`, and `[CD]^{a+}`. `x+`/`x-` name the first/second level of the
    /// binary variable `X` (or `x`).
    pub fn parse(text: &str, schema: &TableSchema) -> Result<GeneratingClass> {
        ClassParser::new(text, schema).parse()
    }
}

struct Coverage<'a> {
    schema: &'a TableSchema,
    others: &'a [&'a Generator],
    memo: BTreeMap<Context, Option<bool>>,
}

impl Coverage<'_> {
    fn covered(&mut self, head: &VarSet, ctx: &Context) -> bool {
        match self.memo.get(ctx) {
            Some(Some(v)) => return *v,
            Some(None) => return false,
            None => {}
        }
        self.memo.insert(ctx.clone(), None);
        let probe = Generator {
            head: head.clone(),
            context: ctx.clone(),
        };
        let mut result = self.others.iter().any(|h| h.absorbs(&probe));
        if !result {
            for (v, level) in ctx.iter() {
                let Some(levels) = self.schema.levels(v) else { continue };
                let mut reduced = ctx.clone();
                reduced.remove(v);
                if !self.covered(head, &reduced) {
                    continue;
                }
                let siblings_ok = (0..levels)
                    .filter(|&l| l != level)
                    .all(|l| self.covered(head, &ctx.with(v, l)));
                if siblings_ok {
                    result = true;
                    break;
                }
            }
        }
        self.memo.insert(ctx.clone(), Some(result));
        result
    }
}

struct ClassParser<'a> {
    text: &'a str,
    pos: usize,
    schema: &'a TableSchema,
    vocab: Vec<String>,
}

impl<'a> ClassParser<'a> {
    fn new(text: &'a str, schema: &'a TableSchema) -> Self {
        ClassParser {
            text,
            pos: 0,
            schema,
            vocab: schema.names().map(String::from).collect(),
        }
    }

    fn err(&self, message: impl Into<String>) -> Error {
        Error::parse(format!("offset {}", self.pos), message)
    }

    fn peek(&self) -> Option<char> {
        self.text[self.pos..].chars().next()
    }

    fn skip_ws(&mut self) {
        while let Some(c) = self.peek() {
            if c.is_whitespace() {
                self.pos += c.len_utf8();
            } else {
                break;
            }
        }
    }

    fn expect(&mut self, c: char) -> Result<()> {
        self.skip_ws();
        if self.peek() == Some(c) {
            self.pos += c.len_utf8();
            Ok(())
        } else {
            Err(self.err(format!("expected {c:?}")))
        }
    }

    fn parse(mut self) -> Result<GeneratingClass> {
        let mut class = GeneratingClass::new();
        loop {
            self.skip_ws();
            if self.peek().is_none() {
                break;
            }
            self.expect('[')?;
            self.skip_ws();
            let items = if self.peek() == Some('[') {
                let mut items = Vec::new();
                loop {
                    self.skip_ws();
                    match self.peek() {
                        Some('[') => {
                            self.pos += 1;
                            items.push(self.generator_body()?);
                        }
                        Some(']') => {
                            self.pos += 1;
                            break;
                        }
                        _ => return Err(self.err("expected '[' or ']' in generator group")),
                    }
                }
                items
            } else {
                vec![self.generator_body()?]
            };
            let outer = self.outer_context()?;
            for (head, ctx) in items {
                let mut merged = ctx;
                for (k, v) in outer.iter() {
                    if merged.get(k).is_some_and(|w| w != v) {
                        return Err(self.err(format!("conflicting levels for {k}")));
                    }
                    merged.insert(k, v);
                }
                let g = Generator::new(head, merged).map_err(|e| self.err(e.to_string()))?;
                class.insert(g);
            }
        }
        class.validate(self.schema)?;
        if class.is_empty() {
            return Err(Error::parse("offset 0", "empty generating class"));
        }
        Ok(class)
    }

    /// Reads `names(,assignment)*]`, consuming the closing bracket.
    fn generator_body(&mut self) -> Result<(VarSet, Context)> {
        let start = self.pos;
        let end = self.text[start..]
            .find(']')
            .map(|i| start + i)
            .ok_or_else(|| self.err("unclosed '['"))?;
        let inner = &self.text[start..end];
        if inner.contains('[') {
            return Err(self.err("unexpected '['"));
        }
        let mut head = VarSet::new();
        let mut ctx = Context::new();
        let mut offset = start;
        for part in inner.split(',') {
            if let Some((name, level)) = self.assignment(part.trim(), offset)? {
                if ctx.insert(name.clone(), level).is_some() {
                    return Err(Error::parse(format!("offset {offset}"), format!("{name} assigned twice")));
                }
            } else {
                head.extend(syntax::split_names(part, Some(&self.vocab), offset)?);
            }
            offset += part.len() + 1;
        }
        self.pos = end + 1;
        Ok((head, ctx))
    }

    fn outer_context(&mut self) -> Result<Context> {
        let save = self.pos;
        self.skip_ws();
        if self.peek() != Some('^') {
            self.pos = save;
            return Ok(Context::new());
        }
        self.pos += 1;
        self.skip_ws();
        let body_start;
        let body_end;
        if self.peek() == Some('{') {
            body_start = self.pos + 1;
            body_end = self.text[body_start..]
                .find('}')
                .map(|i| body_start + i)
                .ok_or_else(|| self.err("unclosed '{'"))?;
            self.pos = body_end + 1;
        } else {
            body_start = self.pos;
            body_end = self.text[body_start..]
                .find(|c: char| c == '[' || c.is_whitespace())
                .map_or(self.text.len(), |i| body_start + i);
            self.pos = body_end;
        }
        let mut ctx = Context::new();
        let mut offset = body_start;
        for part in self.text[body_start..body_end].split(',') {
            let (name, level) = self
                .assignment(part.trim(), offset)?
                .ok_or_else(|| Error::parse(format!("offset {offset}"), format!("expected a context assignment, got {part:?}")))?;
            ctx.insert(name, level);
            offset += part.len() + 1;
        }
        Ok(ctx)
    }

    /// Parses `X=label`, `x+` or `x-`; `None` when `part` is a list of head names.
    fn assignment(&self, part: &str, offset: usize) -> Result<Option<(String, usize)>> {
        let loc = || format!("offset {offset}");
        if let Some((name, label)) = part.split_once('=') {
            let (name, label) = (name.trim(), label.trim());
            let spec = self
                .schema
                .variable(name)
                .ok_or_else(|| Error::parse(loc(), format!("unknown variable {name}")))?;
            let level = spec
                .level_of(label)
                .ok_or_else(|| Error::parse(loc(), format!("unknown level {label:?} for {name}")))?;
            return Ok(Some((name.to_string(), level)));
        }
        let sign = part.chars().last();
        let level = match sign {
            Some('+') => 0,
            Some('-') | Some('\u{2212}') => 1,
            _ => return Ok(None),
        };
        let name = part[..part.len() - sign.map_or(0, char::len_utf8)].trim();
        let resolved = if self.schema.variable(name).is_some() {
            name.to_string()
        } else {
            name.to_uppercase()
        };
        let spec = self
            .schema
            .variable(&resolved)
            .ok_or_else(|| Error::parse(loc(), format!("unknown variable {name}")))?;
        if spec.levels != 2 {
            return Err(Error::parse(loc(), format!("{resolved} is not binary; use {resolved}=label")));
        }
        Ok(Some((resolved, level)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::table::vars;

    fn schema7() -> TableSchema {
        TableSchema::binary("ABCDEFG").unwrap()
    }

    fn class(text: &str, schema: &TableSchema) -> GeneratingClass {
        GeneratingClass::parse(text, schema).unwrap()
    }

    #[test]
    fn parses_all_forms() {
        let s = TableSchema::binary("ABCD").unwrap();
        let a = class("[B,a+][CD,a+][BD,a-][C,a-]", &s);
        let b = class("[[B][CD]]^{a+}[[BD][C]]^{a-}", &s);
        let c = class("[[B][CD]]^{A=1} [[BD][C]]^{A=2}", &s);
        assert_eq!(a, b);
        assert_eq!(a, c);
        assert_eq!(a.len(), 4);
        assert_eq!(a.display(&s), "[B,A=1][BD,A=2][C,A=2][CD,A=1]");
        assert_eq!(GeneratingClass::parse(&a.display(&s), &s).unwrap(), a);
    }

    #[test]
    fn parse_errors_carry_offsets() {
        let s = TableSchema::binary("ABCD").unwrap();
        for bad in ["[AB", "[AQ]", "[AB,A=1]", "[B,A=3]", "AB", "", "[[B]]^{"] {
            assert!(
                matches!(GeneratingClass::parse(bad, &s), Err(Error::Parse { .. })),
                "{bad:?}"
            );
        }
    }

    #[test]
    fn reduce_drops_the_redundant_terms_of_the_split_graph_class() {
        let s = schema7();
        let full = class("[CD,a+][B,a+][BD,a-][C,a-][ABE][AF][CG][FG]", &s);
        let reduced = full.reduce(&s).unwrap();
        assert_eq!(reduced, class("[CD,a+][BD,a-][ABE][AF][CG][FG]", &s));
        assert_eq!(reduced.dimension(&s).unwrap(), full.dimension(&s).unwrap());
        assert_eq!(reduced.reduce(&s).unwrap(), reduced);
    }

    #[test]
    fn reduce_keeps_context_interactions_without_a_general_cover() {
        let s = TableSchema::binary("ABCDEF").unwrap();
        let sg2 = class(
            "[ABE,C=1][DE,C=1][AB,C=2][BDE,C=2][CEF,D=1][CE,D=2][CF,D=2]",
            &s,
        );
        assert_eq!(sg2.reduce(&s).unwrap(), sg2);
    }

    #[test]
    fn absorption() {
        let s = schema7();
        let big = Generator::plain(vars("ABE")).unwrap();
        let small = class("[B,a+]", &s).generators().next().unwrap().clone();
        assert!(big.absorbs(&small));
        assert!(!small.absorbs(&big));
    }

    #[test]
    fn instantiate_and_query_on_context_split_tree() {
        let s = TableSchema::binary("ABCD").unwrap();
        let st = class("[[B][CD]]^{a+}[[BD][C]]^{a-}", &s);
        let plus = Context::single("A", 0);
        let g = st.instantiate(&s, &plus, true).unwrap();
        assert_eq!(g.vertex_set(), vars("BCD"));
        let edges: Vec<String> = g.edges().iter().map(|e| e.to_string()).collect();
        assert_eq!(edges, vec!["CD"]);
        assert!(st.csi_query(&s, &vars("B"), &vars("CD"), &VarSet::new(), &plus).unwrap());
        let minus = Context::single("A", 1);
        assert!(st.csi_query(&s, &vars("C"), &vars("BD"), &VarSet::new(), &minus).unwrap());
        assert!(!st.csi_query(&s, &vars("C"), &vars("BD"), &VarSet::new(), &plus).unwrap());
        assert!(matches!(
            st.csi_query(&s, &vars("A"), &vars("B"), &VarSet::new(), &plus),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn empty_context_gives_interaction_graph() {
        let s = TableSchema::binary("ABCD").unwrap();
        let st = class("[[B][CD]]^{a+}[[BD][C]]^{a-}", &s);
        let g = st.interaction_graph(&s).unwrap();
        assert_eq!(g.to_text(), "[ABD][ACD]");
    }

    #[test]
    fn saturated_queries_are_never_derivable() {
        let s = TableSchema::binary("ABCD").unwrap();
        let sat = GeneratingClass::saturated(&s);
        assert!(!sat
            .csi_query(&s, &vars("A"), &vars("B"), &vars("C"), &Context::single("D", 0))
            .unwrap());
    }

    #[test]
    fn dimensions() {
        let s = TableSchema::binary("ABCDEF").unwrap();
        assert_eq!(GeneratingClass::saturated(&s).dimension(&s).unwrap(), 64);
        assert_eq!(class("[ABCE][BCDE][CDEF]", &s).dimension(&s).unwrap(), 32);
        let s3 = TableSchema::binary("BDE").unwrap();
        assert_eq!(class("[BE][DE]", &s3).dimension(&s3).unwrap(), 6);
        assert_eq!(class("[BDE]", &s3).dimension(&s3).unwrap(), 8);
    }

    #[test]
    fn submodel_check() {
        let s3 = TableSchema::binary("BDE").unwrap();
        let small = class("[BE][DE]", &s3);
        let big = class("[BDE]", &s3);
        assert!(small.is_submodel_of(&big, &s3).unwrap());
        assert!(!big.is_submodel_of(&small, &s3).unwrap());
    }

    #[test]
    fn slice_restriction() {
        let s = TableSchema::binary("ABCD").unwrap();
        let st = class("[[B][CD]]^{a+}[[BD][C]]^{a-}", &s);
        let at_plus = st.restrict_to_slice(&Context::single("A", 0));
        let s3 = TableSchema::binary("BCD").unwrap();
        assert_eq!(at_plus, class("[B][CD]", &s3));
    }
}
