//! Closed-form and penalized linear estimators.

mod benchmarks;
mod ols;
mod penalized;

pub use benchmarks::{fit_ar_bic, forecast_hist_mean, forecast_rw, ArFit};
pub use ols::{bic, fit_ols, fit_ols_matrix};
pub use penalized::{
    fit_adalasso, fit_lasso, fit_lasso_weighted, fit_ridge, lasso_cd, lasso_path, penalty_grid,
    ridge_at, soft_threshold, xi_max, CdOptions, CdOutcome, PathPoint, PenaltyPath, PenaltyRule,
    PenalizedFit, PreparedProblem, SelectionCap,
};

use nalgebra::DMatrix;

#[derive(Clone, Debug, PartialEq)]
pub struct LinearFit {
    pub intercept: f64,
    /// Coefficients on the original feature scale, aligned with
    /// `feature_names`.
    pub coefficients: Vec<f64>,
    pub feature_names: Vec<String>,
    pub penalty: Option<f64>,
    pub df: f64,
    pub residuals: Vec<f64>,
    pub converged: bool,
}

impl LinearFit {
    pub fn predict(&self, row: &[f64]) -> f64 {
        debug_assert_eq!(row.len(), self.coefficients.len());
        self.intercept
            + self
                .coefficients
                .iter()
                .zip(row)
                .map(|(b, x)| b * x)
                .sum::<f64>()
    }

    pub fn fitted(&self, x: &DMatrix<f64>) -> Vec<f64> {
        (0..x.nrows())
            .map(|i| {
                self.intercept
                    + self
                        .coefficients
                        .iter()
                        .enumerate()
                        .map(|(j, b)| b * x[(i, j)])
                        .sum::<f64>()
            })
            .collect()
    }

    pub fn ssr(&self) -> f64 {
        self.residuals.iter().map(|r| r * r).sum()
    }

    /// Names of features with a nonzero coefficient.
    pub fn selected(&self) -> Vec<&str> {
        self.feature_names
            .iter()
            .zip(&self.coefficients)
            .filter(|(_, b)| **b != 0.0)
            .map(|(n, _)| n.as_str())
            .collect()
    }
}
