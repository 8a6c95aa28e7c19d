use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::factor_models::{preselect_by_tstat, PreselectMode};
use crate::linalg::lstsq;
use crate::linear_models::LinearFit;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CsrParams {
    /// Candidates kept by the t-statistic ranking.
    pub pool: usize,
    /// Regressors per member.
    pub subset: usize,
}

impl Default for CsrParams {
    fn default() -> Self {
        Self { pool: 20, subset: 4 }
    }
}

#[derive(Clone, Debug)]
pub struct SubsetMember {
    /// Indices into the candidate columns.
    pub subset: Vec<usize>,
    pub fit: LinearFit,
}

/// Equal-weight average of OLS fits over every size-`p` subset of the
/// pre-selected candidates.
#[derive(Clone, Debug)]
pub struct SubsetEnsemble {
    /// Pre-selected candidate indices, by decreasing `|t|`.
    pub selected: Vec<usize>,
    pub members: Vec<SubsetMember>,
    pub n_candidates: usize,
}

impl SubsetEnsemble {
    /// Mean of the member forecasts for a full candidate row.
    pub fn predict(&self, row: &[f64]) -> f64 {
        let total: f64 = self
            .members
            .iter()
            .map(|m| {
                let sub: Vec<f64> = m.subset.iter().map(|&j| row[j]).collect();
                m.fit.predict(&sub)
            })
            .sum();
        total / self.members.len() as f64
    }

    /// The ensemble as one linear rule: member coefficients averaged with
    /// zeros for the candidates a member excludes.
    pub fn average_rule(&self) -> (f64, Vec<f64>) {
        let m = self.members.len() as f64;
        let mut coef = vec![0.0; self.n_candidates];
        let mut intercept = 0.0;
        for member in &self.members {
            intercept += member.fit.intercept;
            for (k, &j) in member.subset.iter().enumerate() {
                coef[j] += member.fit.coefficients[k];
            }
        }
        coef.iter_mut().for_each(|c| *c /= m);
        (intercept / m, coef)
    }
}

/// All size-`k` combinations of `0..n` in lexicographic order.
fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    if k > n {
        return out;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        out.push(idx.clone());
        let Some(i) = (0..k).rev().find(|&i| idx[i] != i + n - k) else {
            return out;
        };
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Complete subset regression. `controls` only enter the t-statistic
/// pre-selection; members regress the target on an intercept and their
/// subset.
pub fn fit_csr(
    controls: &DMatrix<f64>,
    y: &DVector<f64>,
    candidates: &DMatrix<f64>,
    names: &[String],
    params: CsrParams,
) -> Result<SubsetEnsemble> {
    let CsrParams { pool, subset: p } = params;
    if p == 0 || p > pool {
        return Err(Error::InvalidSpec(format!(
            "CSR subset size {p} must lie in 1..={pool}"
        )));
    }
    let n = y.len();
    if candidates.ncols() < p {
        return Err(Error::InsufficientHistory(format!(
            "CSR needs {p} candidates, got {}",
            candidates.ncols()
        )));
    }
    if n <= controls.ncols() + p + 1 {
        return Err(Error::InsufficientHistory(format!("CSR has only {n} rows")));
    }
    let selected = preselect_by_tstat(controls, y, candidates, PreselectMode::Rank { k: pool }).selected;
    if selected.len() < p {
        return Err(Error::InsufficientHistory(format!(
            "CSR pre-selection kept {} usable candidates, need {p}",
            selected.len()
        )));
    }

    // Gram matrix of [1, selected] shared by every member.
    let m = selected.len();
    let a = DMatrix::from_fn(n, m + 1, |i, c| if c == 0 { 1.0 } else { candidates[(i, selected[c - 1])] });
    let gram = a.tr_mul(&a);
    let aty = a.tr_mul(y);

    let mut g = vec![0.0; (p + 1) * (p + 1)];
    let mut b = vec![0.0; p + 1];
    let mut cols = vec![0; p + 1];
    let members = combinations(m, p)
        .into_iter()
        .map(|combo| {
            for (k, c) in combo.iter().enumerate() {
                cols[k + 1] = c + 1;
            }
            let beta = solve_member(&a, y, &gram, &aty, &cols, &mut g, &mut b);
            let mut residuals = y.as_slice().to_vec();
            for (k, &c) in cols.iter().enumerate() {
                let column = &a.as_slice()[c * n..(c + 1) * n];
                for (r, v) in residuals.iter_mut().zip(column) {
                    *r -= v * beta[k];
                }
            }
            let subset: Vec<usize> = combo.iter().map(|&c| selected[c]).collect();
            SubsetMember {
                fit: LinearFit {
                    intercept: beta[0],
                    coefficients: beta[1..].to_vec(),
                    feature_names: subset.iter().map(|&j| names[j].clone()).collect(),
                    penalty: None,
                    df: (p + 1) as f64,
                    residuals,
                    converged: true,
                },
                subset,
            }
        })
        .collect();
    Ok(SubsetEnsemble {
        selected,
        members,
        n_candidates: candidates.ncols(),
    })
}

/// In-place Cholesky solve of the `k x k` system `g b = rhs`. Fails when a
/// pivot loses more than ten digits relative to its diagonal entry.
fn cholesky_solve(g: &mut [f64], rhs: &mut [f64], k: usize) -> bool {
    for j in 0..k {
        let diag = g[j * k + j];
        let mut d = diag;
        for t in 0..j {
            d -= g[j * k + t] * g[j * k + t];
        }
        if !(d > 1e-10 * diag) {
            return false;
        }
        let l = d.sqrt();
        g[j * k + j] = l;
        for i in j + 1..k {
            let mut v = g[i * k + j];
            for t in 0..j {
                v -= g[i * k + t] * g[j * k + t];
            }
            g[i * k + j] = v / l;
        }
    }
    for i in 0..k {
        let mut v = rhs[i];
        for t in 0..i {
            v -= g[i * k + t] * rhs[t];
        }
        rhs[i] = v / g[i * k + i];
    }
    for i in (0..k).rev() {
        let mut v = rhs[i];
        for t in i + 1..k {
            v -= g[t * k + i] * rhs[t];
        }
        rhs[i] = v / g[i * k + i];
    }
    true
}

/// OLS on a column subset through the shared Gram matrix, falling back to a
/// rank-revealing solve when the subset is (nearly) collinear.
fn solve_member(
    a: &DMatrix<f64>,
    y: &DVector<f64>,
    gram: &DMatrix<f64>,
    aty: &DVector<f64>,
    cols: &[usize],
    g: &mut [f64],
    b: &mut [f64],
) -> Vec<f64> {
    let k = cols.len();
    for r in 0..k {
        for c in 0..k {
            g[r * k + c] = gram[(cols[r], cols[c])];
        }
        b[r] = aty[cols[r]];
    }
    if cholesky_solve(g, b, k) {
        return b.to_vec();
    }
    let sub = DMatrix::from_fn(a.nrows(), k, |i, c| a[(i, cols[c])]);
    lstsq(&sub, y).0.iter().copied().collect()
}
