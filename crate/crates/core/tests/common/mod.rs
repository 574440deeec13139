//! Random cases and an independent maximum likelihood oracle shared by the integration tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use splitmodel::table::vars;
use splitmodel::{ContingencyTable, Context, Generator, GeneratingClass, Graph, TableSchema, VarSet};

pub const LETTERS: &str = "ABCD";

pub fn rng(seed: u64) -> ChaCha8Rng {
    rand::SeedableRng::seed_from_u64(seed)
}

pub fn random_table(rng: &mut ChaCha8Rng, n_vars: usize, min: u64, max: u64) -> ContingencyTable {
    let schema = TableSchema::binary(&LETTERS[..n_vars]).unwrap();
    let counts = (0..schema.cell_count()).map(|_| rng.gen_range(min..=max)).collect();
    ContingencyTable::new(schema, counts).unwrap()
}

fn random_subset(rng: &mut ChaCha8Rng, from: &[String], min: usize) -> VarSet {
    loop {
        let s: VarSet = from.iter().filter(|_| rng.gen_bool(0.5)).cloned().collect();
        if s.len() >= min {
            return s;
        }
    }
}

/// One to three generators, each with a non-empty head and a random partial context.
pub fn random_class(rng: &mut ChaCha8Rng, schema: &TableSchema) -> GeneratingClass {
    let names: Vec<String> = schema.names().map(String::from).collect();
    let count = rng.gen_range(1..=3);
    let mut class = GeneratingClass::new();
    while class.len() < count {
        let head = random_subset(rng, &names, 1);
        let mut ctx = Context::new();
        for v in names.iter().filter(|v| !head.contains(*v)) {
            if rng.gen_bool(0.35) {
                ctx.insert(v.clone(), rng.gen_range(0..2));
            }
        }
        class.insert(Generator::new(head, ctx).unwrap());
    }
    class
}

/// Random decomposable graph over the schema, built by adding random edges that keep it
/// decomposable.
pub fn random_decomposable(rng: &mut ChaCha8Rng, schema: &TableSchema) -> Graph {
    let all = schema.var_set();
    let mut g = Graph::empty(all.iter().cloned());
    let mut candidates = splitmodel::graph::edges_within(&all).into_iter().collect::<Vec<_>>();
    candidates.shuffle(rng);
    for e in candidates {
        if rng.gen_bool(0.7) {
            g.add_edge(&e).unwrap();
            if !g.is_decomposable() {
                g.remove_edge(&e).unwrap();
            }
        }
    }
    g
}

/// Indicator design matrix built directly from cell decoding, constant column first.
pub fn design(schema: &TableSchema, class: &GeneratingClass) -> DMatrix<f64> {
    let cells: Vec<Vec<usize>> = (0..schema.cell_count())
        .map(|i| schema.cell_at(i).unwrap().levels().to_vec())
        .collect();
    let pos = |v: &str| schema.position(v).unwrap();
    let mut cols: Vec<Vec<f64>> = vec![vec![1.0; cells.len()]];
    for g in class.generators() {
        let head: Vec<usize> = g.head().iter().map(|v| pos(v)).collect();
        let ctx: Vec<(usize, usize)> = g.context().iter().map(|(v, l)| (pos(v), l)).collect();
        let configs = head.iter().fold(vec![vec![]], |acc: Vec<Vec<usize>>, &h| {
            let levels = schema.variables()[h].levels;
            acc.into_iter()
                .flat_map(|c| (0..levels).map(move |l| [c.clone(), vec![l]].concat()))
                .collect()
        });
        for config in configs {
            cols.push(
                cells
                    .iter()
                    .map(|c| {
                        let hit = head.iter().zip(&config).all(|(&h, &l)| c[h] == l) && ctx.iter().all(|&(p, l)| c[p] == l);
                        if hit { 1.0 } else { 0.0 }
                    })
                    .collect(),
            );
        }
    }
    DMatrix::from_fn(cells.len(), cols.len(), |r, c| cols[c][r])
}

/// Maximum likelihood estimate over `log p = X theta - log sum exp(X theta)` by damped Newton
/// steps with a pseudo-inverse Hessian.
pub fn oracle_mle(table: &ContingencyTable, class: &GeneratingClass) -> Vec<f64> {
    let x = design(table.schema(), class);
    let n = DVector::from_iterator(x.nrows(), table.counts().iter().map(|&c| c as f64));
    let total = n.sum();
    let probs = |theta: &DVector<f64>| {
        let eta = &x * theta;
        let m = eta.max();
        let w = eta.map(|e| (e - m).exp());
        let s = w.sum();
        w / s
    };
    let loglik = |p: &DVector<f64>| n.iter().zip(p.iter()).filter(|(c, _)| **c > 0.0).map(|(c, q)| c * q.ln()).sum::<f64>();
    let mut theta = DVector::zeros(x.ncols());
    for _ in 0..500 {
        let p = probs(&theta);
        let grad = x.transpose() * (&n - &p * total);
        if grad.amax() < 1e-11 {
            break;
        }
        let w = DMatrix::from_diagonal(&p) - &p * p.transpose();
        let info = x.transpose() * w * &x * total;
        let step = info.svd(true, true).pseudo_inverse(1e-12).unwrap() * &grad;
        let base = loglik(&p);
        let mut t = 1.0;
        loop {
            let cand = &theta + &step * t;
            if loglik(&probs(&cand)) >= base - 1e-12 || t < 1e-8 {
                theta = cand;
                break;
            }
            t *= 0.5;
        }
    }
    probs(&theta).iter().copied().collect()
}

/// Max over generators and cells of `|N p(i_A, j_b) - n(i_A, j_b)|`.
pub fn max_residual(table: &ContingencyTable, class: &GeneratingClass, probs: &[f64]) -> f64 {
    let x = design(table.schema(), class);
    let total = table.total() as f64;
    let mut worst: f64 = 0.0;
    for c in 1..x.ncols() {
        let col = x.column(c);
        let fitted: f64 = col.iter().zip(probs).map(|(a, p)| a * p).sum();
        let observed: f64 = col.iter().zip(table.counts()).map(|(a, &n)| a * n as f64).sum();
        worst = worst.max((total * fitted - observed).abs());
    }
    worst
}

/// Sum of `probs` over cells agreeing with `fixed` (schema position, level).
pub fn marginal_mass(schema: &TableSchema, probs: &[f64], fixed: &[(usize, usize)]) -> f64 {
    probs
        .iter()
        .enumerate()
        .filter(|(i, _)| {
            let cell = schema.cell_at(*i).unwrap();
            fixed.iter().all(|&(p, l)| cell.levels()[p] == l)
        })
        .map(|(_, p)| p)
        .sum()
}

pub fn set(letters: &str) -> VarSet {
    vars(letters)
}
