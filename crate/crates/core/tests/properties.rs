mod common;

use proptest::prelude::*;
use rand::Rng;

use splitmodel::fit;
use splitmodel::graph::edges_within;
use splitmodel::select::{self, Partition, SelectionOptions};
use splitmodel::split::decompose_test;
use splitmodel::table::vars;
use splitmodel::{Cell, Context, ContingencyTable, Edge, GeneratingClass, Graph, IndexConvention, SplitGraph, TableSchema, VarSet, VariableSpec};

use common::*;

fn schema_strategy() -> impl Strategy<Value = TableSchema> {
    (prop::collection::vec(2usize..4, 1..5), any::<bool>()).prop_map(|(levels, first)| {
        let vars = levels
            .iter()
            .enumerate()
            .map(|(i, &l)| VariableSpec::new(((b'A' + i as u8) as char).to_string(), l))
            .collect();
        let conv = if first { IndexConvention::FirstFastest } else { IndexConvention::LastFastest };
        TableSchema::new(vars, conv).unwrap()
    })
}

fn table_strategy() -> impl Strategy<Value = ContingencyTable> {
    schema_strategy().prop_flat_map(|s| {
        let n = s.cell_count();
        prop::collection::vec(0u64..30, n).prop_map(move |c| ContingencyTable::new(s.clone(), c).unwrap())
    })
}

fn subset_of(s: &TableSchema, mask: u32) -> VarSet {
    s.names()
        .enumerate()
        .filter(|(i, _)| mask & (1 << i) != 0)
        .map(|(_, n)| n.to_string())
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn cell_index_round_trips(s in schema_strategy(), k in 0usize..1000) {
        let i = k % s.cell_count();
        let cell = s.cell_at(i).unwrap();
        prop_assert_eq!(s.cell_index(&cell).unwrap(), i);
        let bad = Cell::new(vec![99; s.len()]);
        prop_assert!(s.cell_index(&bad).is_err());
    }

    #[test]
    fn marginals_keep_the_total_and_compose(t in table_strategy(), m1 in 0u32..16, m2 in 0u32..16) {
        let s = t.schema();
        let a = subset_of(s, m1 | m2);
        let b = subset_of(s, m1);
        let ab = t.marginalize(&a).unwrap();
        prop_assert_eq!(ab.total(), t.total());
        prop_assert_eq!(ab.marginalize(&b).unwrap(), t.marginalize(&b).unwrap());
    }

    #[test]
    fn slices_partition_the_table(t in table_strategy()) {
        let s = t.schema();
        let first: VarSet = std::iter::once(s.variables()[0].name.clone()).collect();
        let total: u64 = s.contexts_over(&first).unwrap().iter().map(|c| t.slice(c).map(|x| x.total()).unwrap_or(0)).sum();
        if s.len() > 1 {
            prop_assert_eq!(total, t.total());
        }
    }

    #[test]
    fn cliques_are_maximal_complete_and_cover_edges(seed in 0u64..10_000, n in 1usize..6) {
        let mut r = rng(seed);
        let names: Vec<String> = (0..n).map(|i| ((b'A' + i as u8) as char).to_string()).collect();
        let mut g = Graph::empty(names.iter().cloned());
        for e in edges_within(&names.iter().cloned().collect()) {
            if r.gen_bool(0.5) {
                g.add_edge(&e).unwrap();
            }
        }
        let cliques = g.cliques();
        for c in &cliques {
            prop_assert!(g.is_complete_on(c));
            for v in g.vertices() {
                if !c.contains(v) {
                    let mut bigger = c.clone();
                    bigger.insert(v.clone());
                    prop_assert!(!g.is_complete_on(&bigger));
                }
            }
        }
        for e in g.edges() {
            prop_assert!(cliques.iter().any(|c| e.within(c)));
        }
        prop_assert_eq!(g.is_decomposable(), g.perfect_sequence().is_some());
        if let Some(seq) = g.perfect_sequence() {
            // running intersection
            for i in 1..seq.len() {
                let seen: VarSet = seq[..i].iter().flatten().cloned().collect();
                let sep: VarSet = seq[i].intersection(&seen).cloned().collect();
                prop_assert!(seq[..i].iter().any(|c| sep.is_subset(c)));
            }
        }
    }

    #[test]
    fn separation_is_symmetric(seed in 0u64..10_000) {
        let mut r = rng(seed);
        let s = TableSchema::binary("ABCDE").unwrap();
        let g = random_decomposable(&mut r, &s);
        let a = vars("A");
        let b = vars("B");
        let sep: VarSet = ["C", "D", "E"].iter().filter(|_| r.gen_bool(0.5)).map(|v| v.to_string()).collect();
        prop_assert_eq!(g.separates(&sep, &a, &b).unwrap(), g.separates(&sep, &b, &a).unwrap());
        // enlarging a separator never breaks separation
        if g.separates(&sep, &a, &b).unwrap() {
            let mut more = sep.clone();
            more.extend(["C", "D", "E"].iter().map(|v| v.to_string()));
            prop_assert!(g.separates(&more, &a, &b).unwrap());
        }
    }

    #[test]
    fn reduce_preserves_the_span_and_is_idempotent(seed in 0u64..10_000) {
        let mut r = rng(seed);
        let s = TableSchema::binary("ABCD").unwrap();
        let mut class = random_class(&mut r, &s);
        class = class.union(&random_class(&mut r, &s));
        let reduced = class.reduce(&s).unwrap();
        prop_assert!(reduced.len() <= class.len());
        prop_assert!(reduced.is_submodel_of(&class, &s).unwrap());
        prop_assert!(class.is_submodel_of(&reduced, &s).unwrap());
        prop_assert_eq!(reduced.reduce(&s).unwrap(), reduced.clone());
        prop_assert!(reduced.dimension(&s).unwrap() <= s.cell_count());
    }

    #[test]
    fn class_text_round_trips(seed in 0u64..10_000) {
        let mut r = rng(seed);
        let s = TableSchema::binary("ABCD").unwrap();
        let class = random_class(&mut r, &s);
        prop_assert_eq!(GeneratingClass::parse(&class.display(&s), &s).unwrap(), class);
    }

    #[test]
    fn ips_log_likelihood_never_decreases(seed in 0u64..10_000) {
        let mut r = rng(seed);
        let n_vars = r.gen_range(2..=4);
        let t = random_table(&mut r, n_vars, 0, 30);
        let class = random_class(&mut r, t.schema());
        let mut trace = Vec::new();
        let f = fit::ips_fit_traced(&t, &class, 1e-8, 10_000, |_, ll| trace.push(ll)).unwrap();
        for w in trace.windows(2) {
            prop_assert!(w[1] >= w[0] - 1e-12, "{} then {}", w[0], w[1]);
        }
        let sum: f64 = f.probabilities.iter().sum();
        prop_assert!((sum - 1.0).abs() < 1e-10);
        prop_assert!(f.probabilities.iter().all(|&p| p >= 0.0));
        prop_assert!(!f.converged || f.max_residual <= 1e-8);
    }

    #[test]
    fn ips_matches_the_closed_form_for_decomposable_graphs(seed in 0u64..10_000) {
        let mut r = rng(seed);
        let t = random_table(&mut r, 4, 0, 30);
        let g = random_decomposable(&mut r, t.schema());
        let closed = fit::fit_decomposable(&t, &g).unwrap();
        let ips = fit::ips_fit(&t, &GeneratingClass::from_graph(&g), 1e-11, 10_000).unwrap();
        for (a, b) in closed.probabilities.iter().zip(&ips.probabilities) {
            prop_assert!((a - b).abs() < 1e-9);
        }
        prop_assert_eq!(closed.df, ips.df);
    }

    #[test]
    fn chi_square_one_df_matches_the_normal_tail(k in 1u32..400) {
        let x = k as f64 / 10.0;
        let expected = statrs::function::erf::erfc((x / 2.0).sqrt());
        prop_assert!((fit::chi_sq_pvalue(x, 1).unwrap() - expected).abs() < 1e-10);
    }

    #[test]
    fn split_children_partition_levels_and_keep_the_model(seed in 0u64..10_000) {
        let mut r = rng(seed);
        let s = TableSchema::new(
            vec![VariableSpec::new("A", 3), VariableSpec::new("B", 2), VariableSpec::new("C", 2), VariableSpec::new("D", 2)],
            IndexConvention::LastFastest,
        ).unwrap();
        let g = random_decomposable(&mut r, &s);
        let cliques: Vec<VarSet> = g.cliques().into_iter().filter(|c| c.len() >= 2).collect();
        prop_assume!(!cliques.is_empty());
        let c = cliques[r.gen_range(0..cliques.len())].clone();
        let v = c.iter().next().unwrap().clone();
        let before = SplitGraph::new(g);
        let after = before.make_split(&s, &[c], &v).unwrap();
        let tree = &after.trees()[0];
        let levels: Vec<usize> = tree.children().iter().map(|ch| ch.context().get(&v).unwrap()).collect();
        prop_assert_eq!(levels, (0..s.levels(&v).unwrap()).collect::<Vec<_>>());
        let cb = before.generating_class(&s).unwrap();
        let ca = after.generating_class(&s).unwrap();
        prop_assert_eq!(cb.dimension(&s).unwrap(), ca.dimension(&s).unwrap());
        prop_assert_eq!(ca.reduce(&s).unwrap(), ca.clone());
        prop_assert!(after.validate(&s).is_ok());
    }

    #[test]
    fn selection_keeps_fixed_edges_and_decomposability(seed in 0u64..10_000) {
        let mut r = rng(seed);
        let t = random_table(&mut r, 4, 0, 30);
        let s = t.schema();
        let mut opts = SelectionOptions::default();
        let fixed = Edge::new("A", "B").unwrap();
        opts.fixed_edges.insert(fixed.clone());
        opts.recursive = r.gen_bool(0.5);
        let start = Graph::complete(&s.var_set());
        let g = select::drop_least(&t, &start, &opts).unwrap();
        prop_assert!(g.has_edge(&fixed));
        prop_assert!(g.is_decomposable());
        prop_assert_eq!(select::drop_least(&t, &start, &opts).unwrap(), g);
    }

    #[test]
    fn partition_totals_are_sums(seed in 0u64..10_000, joint in any::<bool>()) {
        let mut r = rng(seed);
        let t = random_table(&mut r, 4, 1, 30);
        let g = Graph::complete(&t.schema().var_set());
        let mode = if joint { Partition::Joint } else { Partition::Single };
        for rep in select::split_test_edge(&t, &g, &Edge::new("A", "C").unwrap(), mode).unwrap() {
            let dev: f64 = rep.rows.iter().map(|x| x.deviance).sum();
            let aic: f64 = rep.rows.iter().map(|x| x.aic).sum();
            prop_assert!((rep.total.deviance - dev).abs() < 1e-9);
            prop_assert!((rep.total.aic - aic).abs() < 1e-9);
            prop_assert_eq!(rep.total.df, rep.rows.iter().map(|x| x.df).sum::<usize>());
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn split_search_output_is_legal_and_its_summary_matches_the_fit(seed in 0u64..10_000) {
        let mut r = rng(seed);
        let t = random_table(&mut r, 4, 1, 60);
        let s = t.schema();
        let g = random_decomposable(&mut r, s);
        let opts = SelectionOptions { p_accepted: 0.2, ..SelectionOptions::default() };
        let sel = select::split_drop_least(&t, &g, &opts).unwrap();
        prop_assert!(sel.model.validate(s).is_ok());
        let rep = select::summary(&t, &sel.model).unwrap();
        let direct = fit::ips_fit(&t, &sel.model.generating_class(s).unwrap(), 1e-11, 100_000).unwrap();
        prop_assert!((rep.total.deviance - direct.deviance).abs() < 1e-6);
        prop_assert_eq!(rep.total.df, direct.df);
        // re-running each tree's removals through the checked edit gives the same model
        let mut rebuilt = SplitGraph::new(g.clone());
        for (i, tree) in sel.model.trees().iter().enumerate() {
            rebuilt = rebuilt.make_split(s, tree.collection(), tree.split_variable()).unwrap();
            for (level, child) in tree.children().iter().enumerate() {
                let path = [(i, level)];
                for e in rebuilt.node(&path).unwrap().graph().edges() {
                    if !child.graph().has_edge(&e) {
                        rebuilt = rebuilt.remove_context_edge(&path, &e).unwrap();
                    }
                }
            }
        }
        prop_assert_eq!(rebuilt, sel.model.clone());
    }

    #[test]
    fn decomposed_tests_add_up(seed in 0u64..10_000) {
        let mut r = rng(seed);
        let t = random_table(&mut r, 4, 1, 40);
        let s = t.schema();
        let g = Graph::complete(&s.var_set());
        let v = ["A", "B", "C", "D"][r.gen_range(0..4)];
        let before = SplitGraph::new(g.clone()).make_split(s, &[s.var_set()], v).unwrap();
        let mut after = before.clone();
        for level in 0..2 {
            for e in before.node(&[(0, level)]).unwrap().graph().edges() {
                if r.gen_bool(0.4) {
                    after = after.remove_context_edge(&[(0, level)], &e).unwrap();
                }
            }
        }
        let rows = decompose_test(&t, &before, &after).unwrap();
        let direct = fit::test_nested_with(&t, &after.generating_class(s).unwrap(), &before.generating_class(s).unwrap(), 1e-11, 100_000).unwrap();
        let dev: f64 = rows.iter().map(|x| x.deviance).sum();
        prop_assert!((dev - direct.deviance).abs() < 1e-9);
        prop_assert_eq!(rows.iter().map(|x| x.df).sum::<usize>(), direct.df);
    }
}

#[test]
fn query_on_the_saturated_model_is_never_true() {
    let s = TableSchema::binary("ABCD").unwrap();
    let sat = GeneratingClass::saturated(&s);
    assert!(!sat.csi_query(&s, &vars("A"), &vars("B"), &vars("C"), &Context::single("D", 0)).unwrap());
}
