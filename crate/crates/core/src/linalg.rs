//! Small dense least-squares helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};

/// Relative threshold on `|R_jj| / ||a_j||` below which a column is treated
/// as linearly dependent on the columns before it.
pub const RANK_TOL: f64 = 1e-9;

pub fn with_intercept(x: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, p) = x.shape();
    DMatrix::from_fn(n, p + 1, |i, j| if j == 0 { 1.0 } else { x[(i, j - 1)] })
}

/// Least squares with rank detection.
///
/// Returns the coefficient vector (zeros on dependent columns) and the
/// indices of the columns that were found to be linearly dependent on
/// earlier ones.
pub fn lstsq(a: &DMatrix<f64>, y: &DVector<f64>) -> (DVector<f64>, Vec<usize>) {
    let (n, p) = a.shape();
    let mut keep = Vec::with_capacity(p);
    let mut dropped = Vec::new();
    // Modified Gram-Schmidt to decide independence column by column.
    let mut basis: Vec<DVector<f64>> = Vec::with_capacity(p.min(n));
    for j in 0..p {
        let col = a.column(j).into_owned();
        let norm = col.norm();
        let mut v = col;
        for q in &basis {
            let c = q.dot(&v);
            v.axpy(-c, q, 1.0);
        }
        let rn = v.norm();
        if norm == 0.0 || rn <= RANK_TOL * norm || basis.len() >= n {
            dropped.push(j);
        } else {
            basis.push(v / rn);
            keep.push(j);
        }
    }
    let mut beta = DVector::zeros(p);
    if keep.is_empty() {
        return (beta, dropped);
    }
    let sub = DMatrix::from_fn(n, keep.len(), |i, k| a[(i, keep[k])]);
    let qr = sub.qr();
    let c = qr.q().transpose() * y;
    let r = qr.r();
    let b = r
        .solve_upper_triangular(&c)
        .unwrap_or_else(|| DVector::zeros(keep.len()));
    for (k, &j) in keep.iter().enumerate() {
        beta[j] = b[k];
    }
    (beta, dropped)
}

/// Orthonormal basis of the column space of `a`, used to partial a block of
/// regressors out of other columns.
#[derive(Clone, Debug)]
pub struct Projector {
    q: DMatrix<f64>,
}

impl Projector {
    pub fn new(a: &DMatrix<f64>) -> Self {
        let n = a.nrows();
        let mut basis: Vec<DVector<f64>> = Vec::new();
        for j in 0..a.ncols() {
            let col = a.column(j).into_owned();
            let norm = col.norm();
            let mut v = col;
            // two passes for numerical orthogonality
            for _ in 0..2 {
                for q in &basis {
                    let c = q.dot(&v);
                    v.axpy(-c, q, 1.0);
                }
            }
            let rn = v.norm();
            if norm > 0.0 && rn > RANK_TOL * norm && basis.len() < n {
                basis.push(v / rn);
            }
        }
        let q = if basis.is_empty() {
            DMatrix::zeros(n, 0)
        } else {
            DMatrix::from_columns(&basis)
        };
        Self { q }
    }

    pub fn rank(&self) -> usize {
        self.q.ncols()
    }

    pub fn residualize(&self, v: &DVector<f64>) -> DVector<f64> {
        if self.q.ncols() == 0 {
            return v.clone();
        }
        let c = self.q.tr_mul(v);
        v - &self.q * c
    }

    pub fn residualize_matrix(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        if self.q.ncols() == 0 {
            return m.clone();
        }
        let c = self.q.tr_mul(m);
        m - &self.q * c
    }
}
