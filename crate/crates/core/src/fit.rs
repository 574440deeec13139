//! Maximum likelihood estimation by iterative proportional scaling, and the model-level
//! statistics built on it: deviance, degrees of freedom, chi-square p-values and AIC.

use serde::Serialize;

use crate::csi::GeneratingClass;
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::table::{Context, ContingencyTable, TableSchema, VarSet};

mod special;

pub use special::{ln_gamma, regularized_gamma_q};

/// Default convergence tolerance on count-scale residuals.
pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_MAX_ITER: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitResult {
    /// Fitted cell probabilities, indexed like the table's counts.
    pub probabilities: Vec<f64>,
    pub log_likelihood: f64,
    pub deviance: f64,
    pub df: usize,
    pub p_value: f64,
    pub aic: f64,
    pub iterations: usize,
    pub converged: bool,
    pub max_residual: f64,
}

/// A deviance test of one model against a larger one.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TestResult {
    pub label: String,
    /// N of the table the test ran on.
    pub count: u64,
    pub deviance: f64,
    pub df: usize,
    pub p_value: f64,
    pub aic: f64,
}

impl TestResult {
    /// Builds a result, deriving p-value and AIC. Tiny negative deviances from fitting
    /// round-off are clamped to zero.
    pub fn new(label: impl Into<String>, count: u64, deviance: f64, df: usize) -> Self {
        let deviance = if deviance < 0.0 && deviance > -1e-6 { 0.0 } else { deviance };
        let p_value = chi_sq_pvalue(deviance.max(0.0), df).unwrap_or(0.0);
        TestResult {
            label: label.into(),
            count,
            deviance,
            df,
            p_value,
            aic: aic(deviance, df),
        }
    }

    /// Sum of independent tests.
    pub fn total<'a, I>(label: impl Into<String>, count: u64, rows: I) -> Self
    where
        I: IntoIterator<Item = &'a TestResult>,
    {
        let (dev, df) = rows
            .into_iter()
            .fold((0.0, 0), |(d, f), r| (d + r.deviance, f + r.df));
        TestResult::new(label, count, dev, df)
    }
}

/// `dev - 2 df`; smaller is better.
pub fn aic(deviance: f64, df: usize) -> f64 {
    deviance - 2.0 * df as f64
}

/// Upper tail of the chi-square distribution, `Q(df/2, dev/2)`.
///
/// With `df = 0` the reference distribution is a point mass at zero, so the result is 1 for
/// a (numerically) zero statistic and 0 otherwise.
pub fn chi_sq_pvalue(deviance: f64, df: usize) -> Result<f64> {
    if !(deviance >= 0.0) {
        return Err(Error::Argument(format!("deviance must be non-negative, got {deviance}")));
    }
    if df == 0 {
        return Ok(if deviance <= 1e-9 { 1.0 } else { 0.0 });
    }
    if deviance == 0.0 {
        return Ok(1.0);
    }
    Ok(regularized_gamma_q(df as f64 / 2.0, deviance / 2.0).clamp(0.0, 1.0))
}

/// `sum n(i) log p(i)` over cells with positive count.
pub fn log_likelihood(table: &ContingencyTable, probabilities: &[f64]) -> f64 {
    table
        .counts()
        .iter()
        .zip(probabilities)
        .filter(|(&n, _)| n > 0)
        .map(|(&n, &p)| if p > 0.0 { n as f64 * p.ln() } else { f64::NEG_INFINITY })
        .sum()
}

/// `2 sum n(i) log(n(i) / (N p(i)))`, with empty cells contributing nothing.
pub fn deviance(table: &ContingencyTable, probabilities: &[f64]) -> Result<f64> {
    if probabilities.len() != table.counts().len() {
        return Err(Error::Argument("fitted vector does not match the table".into()));
    }
    let total = table.total() as f64;
    let mut dev = 0.0;
    for (&n, &p) in table.counts().iter().zip(probabilities) {
        if n == 0 {
            continue;
        }
        if p <= 0.0 {
            return Err(Error::InfiniteDeviance);
        }
        let n = n as f64;
        dev += n * (n / (total * p)).ln();
    }
    Ok(2.0 * dev)
}

struct Margin {
    buckets: Vec<Option<usize>>,
    observed: Vec<f64>,
    observed_outside: f64,
    has_outside: bool,
}

impl Margin {
    fn new(table: &ContingencyTable, head: &VarSet, context: &Context) -> Result<Self> {
        let schema = table.schema();
        let buckets = schema.bucket_map(head, context)?;
        let mut observed = vec![0.0; schema.configurations(head)?];
        let mut observed_outside = 0.0;
        let mut has_outside = false;
        for (b, &n) in buckets.iter().zip(table.counts()) {
            match b {
                Some(b) => observed[*b] += n as f64,
                None => {
                    observed_outside += n as f64;
                    has_outside = true;
                }
            }
        }
        Ok(Margin {
            buckets,
            observed,
            observed_outside,
            has_outside,
        })
    }

    fn fitted(&self, p: &[f64]) -> (Vec<f64>, f64) {
        let mut fitted = vec![0.0; self.observed.len()];
        let mut outside = 0.0;
        for (b, &q) in self.buckets.iter().zip(p) {
            match b {
                Some(b) => fitted[*b] += q,
                None => outside += q,
            }
        }
        (fitted, outside)
    }

    fn residual(&self, p: &[f64], total: f64) -> f64 {
        let (fitted, _) = self.fitted(p);
        fitted
            .iter()
            .zip(&self.observed)
            .map(|(f, o)| (total * f - o).abs())
            .fold(0.0, f64::max)
    }

    /// One proportional scaling step: every bucket of the slice and the complement of the
    /// slice are scaled to their observed proportions.
    fn scale(&self, p: &mut [f64], total: f64) {
        let (fitted, outside) = self.fitted(p);
        let ratio: Vec<f64> = fitted
            .iter()
            .zip(&self.observed)
            .map(|(&f, &o)| if f > 0.0 { o / (total * f) } else { 1.0 })
            .collect();
        let outside_ratio = if self.has_outside && outside > 0.0 {
            self.observed_outside / (total * outside)
        } else {
            1.0
        };
        for (q, b) in p.iter_mut().zip(&self.buckets) {
            match b {
                Some(b) => *q *= ratio[*b],
                None => *q *= outside_ratio,
            }
        }
    }
}

/// Fits `class` to `table` by cyclic proportional scaling from the uniform distribution.
///
/// Non-convergence within `max_iter` cycles is reported through `converged = false`.
pub fn ips_fit(table: &ContingencyTable, class: &GeneratingClass, tol: f64, max_iter: usize) -> Result<FitResult> {
    ips_fit_traced(table, class, tol, max_iter, |_, _| {})
}

/// Like [`ips_fit`], calling `observer(cycle, log_likelihood)` after every cycle.
pub fn ips_fit_traced(
    table: &ContingencyTable,
    class: &GeneratingClass,
    tol: f64,
    max_iter: usize,
    mut observer: impl FnMut(usize, f64),
) -> Result<FitResult> {
    if class.is_empty() {
        return Err(Error::Degenerate("generating class has no generators".into()));
    }
    if !(tol > 0.0) {
        return Err(Error::Argument("tolerance must be positive".into()));
    }
    if table.total() == 0 {
        return Err(Error::Degenerate("table has no observations".into()));
    }
    let schema = table.schema();
    class.validate(schema)?;
    let margins = class
        .generators()
        .map(|g| Margin::new(table, g.head(), g.context()))
        .collect::<Result<Vec<_>>>()?;
    let total = table.total() as f64;
    let mut p = vec![1.0 / schema.cell_count() as f64; schema.cell_count()];
    let max_residual = |p: &[f64]| margins.iter().map(|m| m.residual(p, total)).fold(0.0, f64::max);

    let mut iterations = 0;
    let mut residual = max_residual(&p);
    while residual > tol && iterations < max_iter {
        for m in &margins {
            m.scale(&mut p, total);
        }
        iterations += 1;
        observer(iterations, log_likelihood(table, &p));
        residual = max_residual(&p);
    }
    let dimension = class.dimension(schema)?;
    finish(table, p, dimension, iterations, residual <= tol, residual)
}

fn finish(
    table: &ContingencyTable,
    probabilities: Vec<f64>,
    dimension: usize,
    iterations: usize,
    converged: bool,
    max_residual: f64,
) -> Result<FitResult> {
    let df = table.schema().cell_count() - dimension;
    let dev = match deviance(table, &probabilities) {
        Ok(d) => d.max(0.0),
        Err(Error::InfiniteDeviance) => f64::INFINITY,
        Err(e) => return Err(e),
    };
    let p_value = if dev.is_finite() { chi_sq_pvalue(dev, df)? } else { 0.0 };
    Ok(FitResult {
        log_likelihood: log_likelihood(table, &probabilities),
        probabilities,
        deviance: dev,
        df,
        p_value,
        aic: aic(dev, df),
        iterations,
        converged,
        max_residual,
    })
}

/// Closed-form estimate of a decomposable graphical model: the product of clique marginals
/// over the product of separator marginals.
pub fn fit_decomposable(table: &ContingencyTable, graph: &Graph) -> Result<FitResult> {
    let schema = table.schema();
    check_vertices(schema, graph)?;
    let cliques = graph
        .perfect_sequence()
        .ok_or_else(|| Error::Argument("graph is not decomposable".into()))?;
    let total = table.total() as f64;
    if total == 0.0 {
        return Err(Error::Degenerate("table has no observations".into()));
    }
    let mut fitted = vec![1.0 / total; schema.cell_count()];
    let mut seen = VarSet::new();
    for clique in &cliques {
        let sep: VarSet = clique.intersection(&seen).cloned().collect();
        multiply_margin(table, clique, &mut fitted, false)?;
        if !sep.is_empty() {
            multiply_margin(table, &sep, &mut fitted, true)?;
        } else if !seen.is_empty() {
            for q in fitted.iter_mut() {
                *q /= total;
            }
        }
        seen.extend(clique.iter().cloned());
    }
    let residual = GeneratingClass::from_sets(&cliques, &Context::new())
        .generators()
        .map(|g| Margin::new(table, g.head(), g.context()).map(|m| m.residual(&fitted, total)))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    let dimension = GeneratingClass::from_graph(graph).dimension(schema)?;
    finish(table, fitted, dimension, 0, true, residual)
}

fn multiply_margin(table: &ContingencyTable, vars: &VarSet, fitted: &mut [f64], divide: bool) -> Result<()> {
    let sub = table.schema().restrict(vars)?;
    let proj = table.schema().projection(&sub)?;
    let mut margin = vec![0.0; sub.cell_count()];
    for (&b, &n) in proj.iter().zip(table.counts()) {
        margin[b] += n as f64;
    }
    for (q, &b) in fitted.iter_mut().zip(&proj) {
        if divide {
            *q = if margin[b] > 0.0 { *q / margin[b] } else { 0.0 };
        } else {
            *q *= margin[b];
        }
    }
    Ok(())
}

fn check_vertices(schema: &TableSchema, graph: &Graph) -> Result<()> {
    if graph.vertex_set() != schema.var_set() {
        return Err(Error::Argument(format!(
            "graph vertices {} do not match the table variables",
            graph.vertex_set().into_iter().collect::<Vec<_>>().join(",")
        )));
    }
    Ok(())
}

/// Fits the graphical model of `graph`: closed form when decomposable, otherwise IPS on its
/// cliques with default settings.
pub fn fit_graph(table: &ContingencyTable, graph: &Graph) -> Result<FitResult> {
    check_vertices(table.schema(), graph)?;
    if graph.is_decomposable() {
        fit_decomposable(table, graph)
    } else {
        ips_fit(table, &GeneratingClass::from_graph(graph), DEFAULT_TOL, DEFAULT_MAX_ITER)
    }
}

/// Deviance test of `small` against `big`; `small` must span a submodel of `big`.
pub fn test_nested(table: &ContingencyTable, small: &GeneratingClass, big: &GeneratingClass) -> Result<TestResult> {
    test_nested_with(table, small, big, DEFAULT_TOL, DEFAULT_MAX_ITER)
}

pub fn test_nested_with(
    table: &ContingencyTable,
    small: &GeneratingClass,
    big: &GeneratingClass,
    tol: f64,
    max_iter: usize,
) -> Result<TestResult> {
    let schema = table.schema();
    if !small.is_submodel_of(big, schema)? {
        return Err(Error::Argument(format!(
            "{} is not a submodel of {}",
            small.display(schema),
            big.display(schema)
        )));
    }
    let fs = ips_fit(table, small, tol, max_iter)?;
    let fb = ips_fit(table, big, tol, max_iter)?;
    Ok(TestResult::new(
        small.display(schema),
        table.total(),
        fs.deviance - fb.deviance,
        fs.df - fb.df,
    ))
}

/// Deviance test between two graphical models on the same vertex set, `small` having a
/// subset of `big`'s edges.
pub fn test_graphs(table: &ContingencyTable, small: &Graph, big: &Graph) -> Result<TestResult> {
    if small.vertex_set() != big.vertex_set() || small.edges().iter().any(|e| !big.has_edge(e)) {
        return Err(Error::Argument("graphs are not nested".into()));
    }
    let fs = fit_graph(table, small)?;
    let fb = fit_graph(table, big)?;
    Ok(TestResult::new(small.to_text(), table.total(), fs.deviance - fb.deviance, fs.df - fb.df))
}
