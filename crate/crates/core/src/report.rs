//! Text rendering of test rows in the `Counts Deviance df p-value AIC Model` grid.

use crate::fit::{FitResult, TestResult};

pub const HEADER: &str = "Counts Deviance df p-value AIC Model";

fn fixed(x: f64, decimals: usize) -> String {
    if !x.is_finite() {
        return if x > 0.0 { "inf".into() } else if x < 0.0 { "-inf".into() } else { "nan".into() };
    }
    let s = format!("{x:.decimals$}");
    // "-0.000" reads as a sign error
    if s.starts_with('-') && s[1..].chars().all(|c| c == '0' || c == '.') {
        s[1..].to_string()
    } else {
        s
    }
}

pub fn deviance(x: f64) -> String {
    fixed(x, 3)
}

pub fn p_value(x: f64) -> String {
    fixed(x, 5)
}

pub fn aic(x: f64) -> String {
    fixed(x, 2)
}

/// `1190 23.284 32 0.86914 -40.72 [ABCE][BCDE][CDEF]`; the model column is omitted when the
/// label is empty.
pub fn row(r: &TestResult) -> String {
    let mut s = format!(
        "{} {} {} {} {}",
        r.count,
        deviance(r.deviance),
        r.df,
        p_value(r.p_value),
        aic(r.aic)
    );
    if !r.label.is_empty() {
        s.push(' ');
        s.push_str(&r.label);
    }
    s
}

/// Row for a fit against the saturated model.
pub fn fit_row(count: u64, fit: &FitResult, label: &str) -> String {
    let mut s = row(&TestResult {
        label: label.to_string(),
        count,
        deviance: fit.deviance,
        df: fit.df,
        p_value: fit.p_value,
        aic: fit.aic,
    });
    if !fit.converged {
        s.push_str(" (not converged)");
    }
    s
}
