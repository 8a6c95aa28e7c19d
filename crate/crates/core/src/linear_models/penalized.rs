//! Ridge, LASSO and adaptive LASSO with BIC penalty selection.
//!
//! Penalized columns are standardized (denominator `n - 1`). The intercept
//! and seasonal dummies are never penalized: they are partialled out of the
//! response and of the penalized block before solving, which is exact for
//! both penalties because the unpenalized block minimizes in closed form.
//!
//! LASSO objective on the prepared problem:
//! `(1 / 2n) ||y - X b||^2 + xi * sum_j w_j |b_j|`.
//! Ridge objective: `(1 / n) ||y - X b||^2 + lambda * ||b||^2`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::{bic, LinearFit};
use crate::error::{Error, Result};
use crate::linalg::{lstsq, Projector};
use crate::preprocessing::{is_zero_variance, mean_sd, DesignMatrix};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PenaltyRule {
    /// BIC over a descending log grid of `points` values spanning
    /// `[max * min_ratio, max]`.
    Bic { points: usize, min_ratio: f64 },
    Fixed(f64),
}

impl Default for PenaltyRule {
    fn default() -> Self {
        PenaltyRule::Bic {
            points: 100,
            min_ratio: 1e-4,
        }
    }
}

/// Upper bound on the number of nonzero penalized coefficients.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum SelectionCap {
    /// `ceil(sqrt(T))` with `T` the number of estimation rows.
    #[default]
    SqrtRows,
    Fixed(usize),
    Unlimited,
}

impl SelectionCap {
    pub fn limit(self, n_rows: usize) -> usize {
        match self {
            SelectionCap::SqrtRows => (n_rows as f64).sqrt().ceil() as usize,
            SelectionCap::Fixed(k) => k,
            SelectionCap::Unlimited => usize::MAX,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CdOptions {
    /// Stop when the largest absolute coefficient update in a full sweep
    /// falls below this.
    pub tol: f64,
    pub max_sweeps: usize,
    pub track_objective: bool,
}

impl Default for CdOptions {
    fn default() -> Self {
        Self {
            tol: 1e-7,
            max_sweeps: 10_000,
            track_objective: false,
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct CdOutcome {
    pub converged: bool,
    pub sweeps: usize,
    /// Objective after every sweep when tracking is enabled.
    pub objective: Vec<f64>,
}

#[inline]
pub fn soft_threshold(z: f64, gamma: f64) -> f64 {
    if z > gamma {
        z - gamma
    } else if z < -gamma {
        z + gamma
    } else {
        0.0
    }
}

fn col(x: &DMatrix<f64>, j: usize) -> &[f64] {
    let n = x.nrows();
    &x.as_slice()[j * n..(j + 1) * n]
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn objective(resid: &[f64], beta: &[f64], weights: &[f64], xi: f64) -> f64 {
    let n = resid.len() as f64;
    let ssr: f64 = resid.iter().map(|r| r * r).sum();
    let pen: f64 = beta.iter().zip(weights).map(|(b, w)| w * b.abs()).sum();
    ssr / (2.0 * n) + xi * pen
}

struct Cd<'a> {
    x: &'a DMatrix<f64>,
    col_sq: Vec<f64>,
    n: f64,
}

impl<'a> Cd<'a> {
    fn new(x: &'a DMatrix<f64>) -> Self {
        let n = x.nrows() as f64;
        let col_sq = (0..x.ncols()).map(|j| dot(col(x, j), col(x, j)) / n).collect();
        Self { x, col_sq, n }
    }

    fn update(&self, j: usize, xi: f64, w: f64, beta: &mut [f64], resid: &mut [f64]) -> f64 {
        let cs = self.col_sq[j];
        if cs <= 0.0 {
            return 0.0;
        }
        let xj = col(self.x, j);
        let old = beta[j];
        let z = dot(xj, resid) / self.n + cs * old;
        let new = soft_threshold(z, xi * w) / cs;
        let d = new - old;
        if d != 0.0 {
            beta[j] = new;
            for (r, x) in resid.iter_mut().zip(xj) {
                *r -= x * d;
            }
        }
        d.abs()
    }

    fn solve(
        &self,
        weights: &[f64],
        xi: f64,
        beta: &mut [f64],
        resid: &mut [f64],
        opts: &CdOptions,
    ) -> CdOutcome {
        let p = beta.len();
        let mut out = CdOutcome::default();
        let mut active: Vec<usize> = Vec::with_capacity(p);
        while out.sweeps < opts.max_sweeps {
            let mut max_d: f64 = 0.0;
            for j in 0..p {
                max_d = max_d.max(self.update(j, xi, weights[j], beta, resid));
            }
            out.sweeps += 1;
            if opts.track_objective {
                out.objective.push(objective(resid, beta, weights, xi));
            }
            if max_d < opts.tol {
                out.converged = true;
                break;
            }
            active.clear();
            active.extend((0..p).filter(|&j| beta[j] != 0.0));
            while out.sweeps < opts.max_sweeps {
                let mut max_a: f64 = 0.0;
                for &j in &active {
                    max_a = max_a.max(self.update(j, xi, weights[j], beta, resid));
                }
                out.sweeps += 1;
                if opts.track_objective {
                    out.objective.push(objective(resid, beta, weights, xi));
                }
                if max_a < opts.tol {
                    break;
                }
            }
        }
        out
    }
}

/// Weighted LASSO at a single penalty by cyclic coordinate descent, warm
/// started from `beta`.
pub fn lasso_cd(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    weights: &[f64],
    xi: f64,
    beta: &mut [f64],
    opts: &CdOptions,
) -> CdOutcome {
    let cd = Cd::new(x);
    let mut resid: Vec<f64> = y.iter().copied().collect();
    for (j, b) in beta.iter().enumerate() {
        if *b != 0.0 {
            for (r, v) in resid.iter_mut().zip(col(x, j)) {
                *r -= v * b;
            }
        }
    }
    cd.solve(weights, xi, beta, &mut resid, opts)
}

/// Smallest penalty at which every weighted coefficient is zero.
pub fn xi_max(x: &DMatrix<f64>, y: &DVector<f64>, weights: &[f64]) -> f64 {
    let n = x.nrows() as f64;
    let ys = y.as_slice();
    (0..x.ncols())
        .filter(|&j| weights[j] > 0.0)
        .map(|j| dot(col(x, j), ys).abs() / (n * weights[j]))
        .fold(0.0, f64::max)
}

/// Descending log-spaced grid from `max` to `max * min_ratio`.
pub fn penalty_grid(max: f64, points: usize, min_ratio: f64) -> Vec<f64> {
    let points = points.max(2);
    (0..points)
        .map(|k| max * min_ratio.powf(k as f64 / (points - 1) as f64))
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct PathPoint {
    pub penalty: f64,
    /// Coefficients on the prepared (standardized, partialled) scale.
    pub beta: Vec<f64>,
    pub nnz: usize,
    pub ssr: f64,
    pub df: f64,
    pub bic: f64,
    pub converged: bool,
    pub sweeps: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PenaltyPath {
    pub points: Vec<PathPoint>,
    pub chosen: usize,
}

impl PenaltyPath {
    pub fn chosen_point(&self) -> &PathPoint {
        &self.points[self.chosen]
    }
}

/// Warm-started LASSO path over `grid` (descending). When `stop_above` is
/// given, the path stops after the first point whose support exceeds it.
pub fn lasso_path(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    weights: &[f64],
    grid: &[f64],
    opts: &CdOptions,
    stop_above: Option<usize>,
    extra_df: f64,
) -> Vec<PathPoint> {
    let n = x.nrows();
    let cd = Cd::new(x);
    let mut beta = vec![0.0; x.ncols()];
    let mut resid: Vec<f64> = y.iter().copied().collect();
    let mut out = Vec::with_capacity(grid.len());
    for &xi in grid {
        let o = cd.solve(weights, xi, &mut beta, &mut resid, opts);
        let nnz = beta.iter().filter(|b| **b != 0.0).count();
        let ssr: f64 = resid.iter().map(|r| r * r).sum();
        let df = nnz as f64 + extra_df;
        out.push(PathPoint {
            penalty: xi,
            beta: beta.clone(),
            nnz,
            ssr,
            df,
            bic: bic(ssr, n, df),
            converged: o.converged,
            sweeps: o.sweeps,
        });
        if stop_above.is_some_and(|c| nnz > c) && out.len() >= 2 {
            break;
        }
    }
    out
}

/// Penalized regression problem with the unpenalized block partialled out.
#[derive(Clone, Debug)]
pub struct PreparedProblem {
    /// Standardized, residualized penalized columns.
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    /// Design column index of each prepared column.
    pub penalized: Vec<usize>,
    pub unpenalized: Vec<usize>,
    pub means: Vec<f64>,
    pub scales: Vec<f64>,
    /// Rank of `[1, unpenalized]`, counted in the degrees of freedom.
    pub unpenalized_df: usize,
}

impl PreparedProblem {
    pub fn new(design: &DesignMatrix) -> Result<Self> {
        let n = design.n_rows();
        if n < 2 {
            return Err(Error::InsufficientHistory(
                "penalized fit needs at least 2 rows".into(),
            ));
        }
        let dummies = design.dummy_mask();
        let mut penalized = Vec::new();
        let mut unpenalized = Vec::new();
        let mut means = Vec::new();
        let mut scales = Vec::new();
        for j in 0..design.n_features() {
            if dummies[j] {
                unpenalized.push(j);
                continue;
            }
            let (m, sd) = mean_sd(design.x.column(j).iter().copied());
            if !is_zero_variance(m, sd) {
                penalized.push(j);
                means.push(m);
                scales.push(sd);
            }
        }
        let unpen = Self::unpenalized_block(design, &unpenalized);
        let proj = Projector::new(&unpen);
        let xs = DMatrix::from_fn(n, penalized.len(), |i, k| {
            (design.x[(i, penalized[k])] - means[k]) / scales[k]
        });
        Ok(Self {
            x: proj.residualize_matrix(&xs),
            y: proj.residualize(&design.target),
            penalized,
            unpenalized,
            means,
            scales,
            unpenalized_df: proj.rank(),
        })
    }

    fn unpenalized_block(design: &DesignMatrix, cols: &[usize]) -> DMatrix<f64> {
        DMatrix::from_fn(design.n_rows(), cols.len() + 1, |i, k| {
            if k == 0 {
                1.0
            } else {
                design.x[(i, cols[k - 1])]
            }
        })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    /// Maps prepared-scale coefficients back to a fit on the original design.
    pub fn finish(
        &self,
        design: &DesignMatrix,
        beta: &[f64],
        penalty: f64,
        df: f64,
        converged: bool,
    ) -> LinearFit {
        let n = design.n_rows();
        let mut coefficients = vec![0.0; design.n_features()];
        for (k, &j) in self.penalized.iter().enumerate() {
            coefficients[j] = beta[k] / self.scales[k];
        }
        let partial: Vec<f64> = (0..n)
            .map(|i| {
                design.target[i]
                    - self
                        .penalized
                        .iter()
                        .map(|&j| coefficients[j] * design.x[(i, j)])
                        .sum::<f64>()
            })
            .collect();
        let unpen = Self::unpenalized_block(design, &self.unpenalized);
        let r = DVector::from_vec(partial);
        let (gamma, _) = lstsq(&unpen, &r);
        for (k, &j) in self.unpenalized.iter().enumerate() {
            coefficients[j] = gamma[k + 1];
        }
        let residuals = (&r - &unpen * &gamma).iter().copied().collect();
        LinearFit {
            intercept: gamma[0],
            coefficients,
            feature_names: design.feature_names(),
            penalty: Some(penalty),
            df,
            residuals,
            converged,
        }
    }
}

#[derive(Clone, Debug)]
pub struct PenalizedFit {
    pub fit: LinearFit,
    pub path: PenaltyPath,
}

/// Ridge coefficients on the prepared scale at a given penalty.
pub fn ridge_at(prep: &PreparedProblem, lambda: f64) -> Vec<f64> {
    let eig = RidgeEigen::new(prep);
    eig.beta(lambda)
}

/// Spectral form of the ridge problem. `beta(λ) = basis · (coef_k / (e_k + nλ))`
/// and the residual sum of squares follows from the squared projections of
/// `y` on the left singular vectors.
struct RidgeEigen {
    basis: DMatrix<f64>,
    values: DVector<f64>,
    coef: DVector<f64>,
    /// Squared projections of `y` on the left singular vectors.
    proj2: Vec<f64>,
    yy: f64,
    n: f64,
}

impl RidgeEigen {
    fn new(prep: &PreparedProblem) -> Self {
        let (n, p) = prep.x.shape();
        let yy = prep.y.norm_squared();
        if p > n {
            let eig = SymmetricEigen::new(&prep.x * prep.x.transpose());
            let values = eig.eigenvalues.map(|e| e.max(0.0));
            let coef = eig.eigenvectors.tr_mul(&prep.y);
            let proj2 = coef.iter().map(|c| c * c).collect();
            Self {
                basis: prep.x.tr_mul(&eig.eigenvectors),
                values,
                coef,
                proj2,
                yy,
                n: n as f64,
            }
        } else {
            let eig = SymmetricEigen::new(prep.x.tr_mul(&prep.x));
            let values = eig.eigenvalues.map(|e| e.max(0.0));
            let coef = eig.eigenvectors.tr_mul(&prep.x.tr_mul(&prep.y));
            let top = values.iter().copied().fold(0.0, f64::max);
            let proj2 = values
                .iter()
                .zip(coef.iter())
                .map(|(e, c)| if *e > 1e-12 * top { c * c / e } else { 0.0 })
                .collect();
            Self {
                basis: eig.eigenvectors,
                values,
                coef,
                proj2,
                yy,
                n: n as f64,
            }
        }
    }

    fn shrink(&self, k: usize, lambda: f64) -> f64 {
        let e = self.values[k];
        let d = e + self.n * lambda;
        if d > 0.0 { e / d } else { 0.0 }
    }

    fn beta(&self, lambda: f64) -> Vec<f64> {
        let scaled = DVector::from_fn(self.values.len(), |k, _| {
            let d = self.values[k] + self.n * lambda;
            if d > 0.0 { self.coef[k] / d } else { 0.0 }
        });
        (&self.basis * scaled).iter().copied().collect()
    }

    fn ssr(&self, lambda: f64) -> f64 {
        let explained: f64 = (0..self.values.len())
            .map(|k| {
                let s = self.shrink(k, lambda);
                (2.0 * s - s * s) * self.proj2[k]
            })
            .sum();
        (self.yy - explained).max(0.0)
    }

    fn df(&self, lambda: f64) -> f64 {
        (0..self.values.len()).map(|k| self.shrink(k, lambda)).sum()
    }

    /// Coefficients for every penalty in `grid`, one column each.
    fn betas(&self, grid: &[f64]) -> DMatrix<f64> {
        let scaled = DMatrix::from_fn(self.values.len(), grid.len(), |k, g| {
            let d = self.values[k] + self.n * grid[g];
            if d > 0.0 { self.coef[k] / d } else { 0.0 }
        });
        &self.basis * scaled
    }
}

/// Ridge with the penalty chosen by BIC, degrees of freedom given by the
/// trace of the smoother matrix.
pub fn fit_ridge(design: &DesignMatrix, rule: PenaltyRule) -> Result<PenalizedFit> {
    let prep = PreparedProblem::new(design)?;
    let n = prep.n();
    let eig = RidgeEigen::new(&prep);
    let grid = match rule {
        PenaltyRule::Fixed(l) => vec![l],
        PenaltyRule::Bic { points, min_ratio } => {
            let top = eig.values.iter().copied().fold(0.0, f64::max) / n as f64;
            let top = if top > 0.0 { top } else { 1.0 };
            penalty_grid(100.0 * top, points, min_ratio * min_ratio)
        }
    };
    let mut points = Vec::with_capacity(grid.len());
    let betas = eig.betas(&grid);
    for (g, &lambda) in grid.iter().enumerate() {
        let beta = betas.column(g).as_slice().to_vec();
        let ssr = eig.ssr(lambda);
        let df = eig.df(lambda) + prep.unpenalized_df as f64;
        points.push(PathPoint {
            penalty: lambda,
            nnz: beta.iter().filter(|b| **b != 0.0).count(),
            beta,
            ssr,
            df,
            bic: bic(ssr, n, df),
            converged: true,
            sweeps: 0,
        });
    }
    let chosen = argmin_bic(&points, |_| true);
    let p = &points[chosen];
    let fit = prep.finish(design, &p.beta, p.penalty, p.df, true);
    Ok(PenalizedFit {
        fit,
        path: PenaltyPath { points, chosen },
    })
}

fn argmin_bic(points: &[PathPoint], admissible: impl Fn(&PathPoint) -> bool) -> usize {
    let mut best: Option<(usize, f64)> = None;
    for (k, p) in points.iter().enumerate() {
        if admissible(p) && best.is_none_or(|(_, b)| p.bic < b) {
            best = Some((k, p.bic));
        }
    }
    best.map_or(0, |(k, _)| k)
}

/// Weighted LASSO on a prepared problem; the BIC minimizer among grid points
/// whose support respects the cap.
pub fn fit_lasso_weighted(
    design: &DesignMatrix,
    prep: &PreparedProblem,
    weights: &[f64],
    rule: PenaltyRule,
    cap: SelectionCap,
    opts: &CdOptions,
) -> PenalizedFit {
    let n = prep.n();
    let limit = cap.limit(n);
    let extra = prep.unpenalized_df as f64;
    let grid = match rule {
        PenaltyRule::Fixed(xi) => vec![xi],
        PenaltyRule::Bic { points, min_ratio } => {
            let top = xi_max(&prep.x, &prep.y, weights);
            let top = if top > 0.0 { top } else { f64::MIN_POSITIVE };
            penalty_grid(top, points, min_ratio)
        }
    };
    let stop = matches!(rule, PenaltyRule::Bic { .. }).then_some(limit);
    let points = lasso_path(&prep.x, &prep.y, weights, &grid, opts, stop, extra);
    let chosen = match rule {
        PenaltyRule::Fixed(_) => 0,
        PenaltyRule::Bic { .. } => argmin_bic(&points, |p| p.nnz <= limit),
    };
    let p = &points[chosen];
    let fit = prep.finish(design, &p.beta, p.penalty, p.df, p.converged);
    PenalizedFit {
        fit,
        path: PenaltyPath { points, chosen },
    }
}

pub fn fit_lasso(design: &DesignMatrix, rule: PenaltyRule, cap: SelectionCap) -> Result<PenalizedFit> {
    let prep = PreparedProblem::new(design)?;
    let w = vec![1.0; prep.penalized.len()];
    Ok(fit_lasso_weighted(design, &prep, &w, rule, cap, &CdOptions::default()))
}

/// Two-stage adaptive LASSO: a LASSO first stage sets per-coefficient weights
/// `1 / (|b_j| + 1/sqrt(T))` for the second stage.
pub fn fit_adalasso(
    design: &DesignMatrix,
    rule: PenaltyRule,
    cap: SelectionCap,
) -> Result<PenalizedFit> {
    let prep = PreparedProblem::new(design)?;
    let opts = CdOptions::default();
    let ones = vec![1.0; prep.penalized.len()];
    let stage1 = fit_lasso_weighted(design, &prep, &ones, rule, cap, &opts);
    let weights = adaptive_weights(&stage1.path.chosen_point().beta, prep.n());
    Ok(fit_lasso_weighted(design, &prep, &weights, rule, cap, &opts))
}

pub(crate) fn adaptive_weights(stage1: &[f64], n: usize) -> Vec<f64> {
    let floor = 1.0 / (n as f64).sqrt();
    stage1.iter().map(|b| 1.0 / (b.abs() + floor)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data_model::MonthId;
    use crate::linear_models::fit_ols;
    use crate::preprocessing::{Feature, FeatureKind};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    pub(crate) fn design_from(x: DMatrix<f64>, y: DVector<f64>) -> DesignMatrix {
        let (n, p) = x.shape();
        DesignMatrix {
            rows: (0..n).map(|i| MonthId(24000 + i as i32)).collect(),
            features: (0..p)
                .map(|j| Feature {
                    name: format!("x{j}"),
                    kind: FeatureKind::Predictor,
                    base: format!("x{j}"),
                    lag: 1,
                })
                .collect(),
            x,
            target: y,
            horizon: 0,
            origin: MonthId(24000 + n as i32),
            forecast_row: DVector::zeros(p),
        }
    }

    fn random_problem(seed: u64, n: usize, p: usize) -> DesignMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = DMatrix::from_fn(n, p, |_, _| StandardNormal.sample(&mut rng));
        let beta: Vec<f64> = (0..p).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        let y = DVector::from_fn(n, |i, _| {
            1.5 + (0..p).map(|j| x[(i, j)] * beta[j]).sum::<f64>()
                + 0.5 * rng.sample::<f64, _>(StandardNormal)
        });
        design_from(x, y)
    }

    #[test]
    fn soft_threshold_grid() {
        let g = 0.7;
        for z in [-2.0f64, -0.7, -0.3, 0.0, 0.3, 0.7, 2.0] {
            let want = z.signum() * (z.abs() - g).max(0.0);
            assert_eq!(soft_threshold(z, g), if want == 0.0 { 0.0 } else { want });
        }
    }

    #[test]
    fn ridge_scalar_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 40;
        let raw: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        let (m, sd) = mean_sd(raw.iter().copied());
        let x = DMatrix::from_fn(n, 1, |i, _| (raw[i] - m) / sd);
        let y = DVector::from_fn(n, |i, _| 2.0 * x[(i, 0)] + rng.sample::<f64, _>(StandardNormal));
        let yc = &y - DVector::repeat(n, y.mean());
        let d = design_from(x.clone(), y);
        let prep = PreparedProblem::new(&d).unwrap();
        let b = ridge_at(&prep, 1.0);
        let xc = x.column(0);
        let want = xc.dot(&yc) / (xc.dot(&xc) + n as f64);
        assert!((b[0] - want).abs() < 1e-12);
    }

    #[test]
    fn ridge_vanishing_penalty_is_ols() {
        let d = random_problem(4, 100, 10);
        let r = fit_ridge(&d, PenaltyRule::Fixed(1e-8)).unwrap().fit;
        let o = fit_ols(&d).unwrap();
        for j in 0..10 {
            let rel = (r.coefficients[j] - o.coefficients[j]).abs() / o.coefficients[j].abs().max(1e-3);
            assert!(rel < 1e-5, "coef {j}: {rel}");
        }
    }

    #[test]
    fn ridge_wide_design_matches_normal_equations() {
        for (n, p) in [(30, 70), (70, 30)] {
            let d = random_problem(8, n, p);
            let prep = PreparedProblem::new(&d).unwrap();
            let lambda = 0.3;
            let mut a = prep.x.tr_mul(&prep.x);
            for k in 0..p {
                a[(k, k)] += n as f64 * lambda;
            }
            let want = a.clone().lu().solve(&prep.x.tr_mul(&prep.y)).unwrap();
            let eig = RidgeEigen::new(&prep);
            let got = eig.beta(lambda);
            for k in 0..p {
                assert!((got[k] - want[k]).abs() < 1e-9, "n={n} p={p} coef {k}");
            }
            let ssr = (&prep.y - &prep.x * &want).norm_squared();
            assert!((eig.ssr(lambda) - ssr).abs() < 1e-8 * ssr.max(1.0));
            let hat = &prep.x * a.try_inverse().unwrap() * prep.x.transpose();
            assert!((eig.df(lambda) - hat.trace()).abs() < 1e-9);
        }
    }

    #[test]
    fn ridge_infinite_penalty_is_mean() {
        let d = random_problem(5, 80, 6);
        let r = fit_ridge(&d, PenaltyRule::Fixed(1e8)).unwrap().fit;
        assert!(r.coefficients.iter().all(|b| b.abs() < 1e-6));
        assert!((r.intercept - d.target.mean()).abs() < 1e-6);
    }

    #[test]
    fn lasso_above_xi_max_is_empty() {
        let d = random_problem(6, 60, 8);
        let prep = PreparedProblem::new(&d).unwrap();
        let w = vec![1.0; 8];
        let top = xi_max(&prep.x, &prep.y, &w);
        let mut beta = vec![0.0; 8];
        lasso_cd(&prep.x, &prep.y, &w, top * (1.0 + 1e-12), &mut beta, &CdOptions::default());
        assert!(beta.iter().all(|b| *b == 0.0));
        lasso_cd(&prep.x, &prep.y, &w, top * 0.9, &mut beta, &CdOptions::default());
        assert!(beta.iter().any(|b| *b != 0.0));
    }

    #[test]
    fn objective_non_increasing_per_sweep() {
        let d = random_problem(7, 80, 30);
        let prep = PreparedProblem::new(&d).unwrap();
        let w = vec![1.0; 30];
        let top = xi_max(&prep.x, &prep.y, &w);
        let opts = CdOptions {
            track_objective: true,
            ..CdOptions::default()
        };
        for frac in [0.5, 0.1, 0.01] {
            let mut beta = vec![0.0; 30];
            let o = lasso_cd(&prep.x, &prep.y, &w, top * frac, &mut beta, &opts);
            assert!(o.converged);
            for pair in o.objective.windows(2) {
                assert!(pair[1] <= pair[0] + 1e-14 * pair[0].abs());
            }
        }
    }

    #[test]
    fn cap_is_respected() {
        let d = random_problem(8, 49, 40);
        let f = fit_lasso(&d, PenaltyRule::default(), SelectionCap::SqrtRows).unwrap();
        let nnz = f.fit.coefficients.iter().filter(|b| **b != 0.0).count();
        assert!(nnz <= 7);
        assert!(f.path.points.len() >= 2);
    }

    #[test]
    fn unit_weights_match_plain_lasso_bitwise() {
        let d = random_problem(9, 70, 12);
        let prep = PreparedProblem::new(&d).unwrap();
        let plain = fit_lasso(&d, PenaltyRule::default(), SelectionCap::SqrtRows).unwrap();
        let ones = vec![1.0; 12];
        let forced = fit_lasso_weighted(
            &d,
            &prep,
            &ones,
            PenaltyRule::default(),
            SelectionCap::SqrtRows,
            &CdOptions::default(),
        );
        assert_eq!(plain.fit, forced.fit);
        assert_eq!(plain.path, forced.path);
    }

    #[test]
    fn uniform_weights_rescale_penalty() {
        let d = random_problem(10, 64, 10);
        let prep = PreparedProblem::new(&d).unwrap();
        let t = prep.n() as f64;
        // all-zero first stage gives weights sqrt(T)
        let w = adaptive_weights(&vec![0.0; 10], prep.n());
        assert!(w.iter().all(|v| (v - t.sqrt()).abs() < 1e-12));
        let ones = vec![1.0; 10];
        let top = xi_max(&prep.x, &prep.y, &ones);
        for frac in [0.5, 0.2, 0.05] {
            let xi = top * frac;
            let mut a = vec![0.0; 10];
            let mut b = vec![0.0; 10];
            lasso_cd(&prep.x, &prep.y, &w, xi / t.sqrt(), &mut a, &CdOptions::default());
            lasso_cd(&prep.x, &prep.y, &ones, xi, &mut b, &CdOptions::default());
            for j in 0..10 {
                assert!((a[j] - b[j]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn dummies_are_unpenalized() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let n = 96;
        let mut d = random_problem(12, n, 3);
        // append a seasonal-style indicator with a large effect
        let ind: Vec<f64> = (0..n).map(|i| if i % 12 == 3 { 1.0 } else { 0.0 }).collect();
        let mut x = DMatrix::zeros(n, 4);
        x.columns_mut(0, 3).copy_from(&d.x);
        for i in 0..n {
            x[(i, 3)] = ind[i];
            d.target[i] += 5.0 * ind[i] + 0.01 * rng.random::<f64>();
        }
        d.x = x;
        d.features.push(Feature {
            name: "m04".into(),
            kind: FeatureKind::Seasonal,
            base: "seasonal".into(),
            lag: 0,
        });
        d.forecast_row = DVector::zeros(4);
        // huge penalty: slopes vanish, the dummy keeps its OLS value
        let f = fit_lasso(&d, PenaltyRule::Fixed(1e6), SelectionCap::Unlimited).unwrap().fit;
        assert!(f.coefficients[..3].iter().all(|b| *b == 0.0));
        assert!((f.coefficients[3] - 5.0).abs() < 0.5);
    }
}
