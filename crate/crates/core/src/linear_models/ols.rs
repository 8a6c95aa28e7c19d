use nalgebra::{DMatrix, DVector};

use super::LinearFit;
use crate::error::{Error, Result};
use crate::linalg::{lstsq, with_intercept};
use crate::preprocessing::{is_zero_variance, mean_sd, DesignMatrix};

/// `n ln(SSR / n) + df ln(n)`.
pub fn bic(ssr: f64, n: usize, df: f64) -> f64 {
    let n = n as f64;
    n * (ssr / n).ln() + df * n.ln()
}

/// OLS with an unpenalized intercept. Zero-variance columns are dropped
/// (coefficient 0); any remaining linear dependence is an error.
pub fn fit_ols(design: &DesignMatrix) -> Result<LinearFit> {
    fit_ols_matrix(&design.x, &design.target, &design.feature_names())
}

pub fn fit_ols_matrix(x: &DMatrix<f64>, y: &DVector<f64>, names: &[String]) -> Result<LinearFit> {
    let (n, p) = x.shape();
    let active: Vec<usize> = (0..p)
        .filter(|&j| {
            let (m, sd) = mean_sd(x.column(j).iter().copied());
            !is_zero_variance(m, sd)
        })
        .collect();
    if n < active.len() + 2 {
        return Err(Error::InsufficientHistory(format!(
            "OLS needs more than {} rows, got {n}",
            active.len() + 1
        )));
    }
    let sub = DMatrix::from_fn(n, active.len(), |i, k| x[(i, active[k])]);
    let a = with_intercept(&sub);
    let (b, dropped) = lstsq(&a, y);
    if !dropped.is_empty() {
        return Err(Error::RankDeficient {
            columns: dropped
                .iter()
                .map(|&k| {
                    if k == 0 {
                        "intercept".to_string()
                    } else {
                        names[active[k - 1]].clone()
                    }
                })
                .collect(),
        });
    }
    let mut coefficients = vec![0.0; p];
    for (k, &j) in active.iter().enumerate() {
        coefficients[j] = b[k + 1];
    }
    let fitted = &a * &b;
    let residuals: Vec<f64> = y.iter().zip(fitted.iter()).map(|(y, f)| y - f).collect();
    Ok(LinearFit {
        intercept: b[0],
        coefficients,
        feature_names: names.to_vec(),
        penalty: None,
        df: (active.len() + 1) as f64,
        residuals,
        converged: true,
    })
}
