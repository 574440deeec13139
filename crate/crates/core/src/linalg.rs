//! Incremental Gaussian elimination for ranks of 0/1 indicator design matrices.

const RANK_TOL: f64 = 1e-9;

/// Row-echelon basis of the span of the vectors inserted so far.
#[derive(Debug, Clone, Default)]
pub(crate) struct SpanBasis {
    rows: Vec<(usize, Vec<f64>)>,
}

impl SpanBasis {
    pub(crate) fn new() -> Self {
        SpanBasis::default()
    }

    pub(crate) fn rank(&self) -> usize {
        self.rows.len()
    }

    fn residual(&self, v: &[f64]) -> Vec<f64> {
        let mut r = v.to_vec();
        for (pivot, row) in &self.rows {
            let f = r[*pivot];
            if f != 0.0 {
                for (x, y) in r.iter_mut().zip(row) {
                    *x -= f * y;
                }
            }
        }
        r
    }

    /// Whether `v` lies in the current span.
    pub(crate) fn contains(&self, v: &[f64]) -> bool {
        self.residual(v).iter().all(|x| x.abs() <= RANK_TOL)
    }

    /// Adds `v`; returns true when it increased the rank.
    pub(crate) fn insert(&mut self, v: &[f64]) -> bool {
        let mut r = self.residual(v);
        let (pivot, max) = r
            .iter()
            .enumerate()
            .map(|(i, x)| (i, x.abs()))
            .fold((0, 0.0), |acc, cur| if cur.1 > acc.1 { cur } else { acc });
        if max <= RANK_TOL {
            return false;
        }
        let p = r[pivot];
        for x in r.iter_mut() {
            *x /= p;
        }
        // keep existing rows reduced at the new pivot so residuals stay exact
        for (_, row) in self.rows.iter_mut() {
            let f = row[pivot];
            if f != 0.0 {
                for (x, y) in row.iter_mut().zip(&r) {
                    *x -= f * y;
                }
            }
        }
        self.rows.push((pivot, r));
        true
    }
}

/// Rank of the matrix whose columns are `columns`.
pub(crate) fn rank<'a, I: IntoIterator<Item = &'a Vec<f64>>>(columns: I) -> usize {
    let mut basis = SpanBasis::new();
    for c in columns {
        basis.insert(c);
    }
    basis.rank()
}
