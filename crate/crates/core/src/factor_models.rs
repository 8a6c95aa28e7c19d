//! Principal-component factors, the Bai-Ng `IC_p2` factor count, t-statistic
//! pre-selection, target factors and FarmPredict.
//!
//! Factors are extracted from the standardized macro predictor block only.
//! Identification: factor columns have `f'f / n = I`, loadings come from OLS
//! of the predictors on the factors, and each factor's sign makes its largest
//! absolute loading positive.

use log::warn;
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::linalg::{lstsq, Projector, RANK_TOL};
use crate::linear_models::{fit_adalasso, LinearFit, PenaltyRule, SelectionCap};
use crate::preprocessing::{DesignMatrix, FeatureKind};
use crate::window::{predictor_block, Cell, InfoBlock};

#[derive(Clone, Debug, PartialEq)]
pub struct FactorDecomposition {
    /// `n x K`, unit variance, mutually orthogonal.
    pub factors: DMatrix<f64>,
    /// `J x K`.
    pub loadings: DMatrix<f64>,
    /// `n x J`, `x - f L'`.
    pub residuals: DMatrix<f64>,
    pub k: usize,
    /// Share of total variance captured by each factor.
    pub explained: Vec<f64>,
}

/// Eigen-decomposition of the smaller Gram matrix of `x`.
struct Pca {
    /// Descending eigenvalues of `x'x` (equivalently `xx'`).
    values: Vec<f64>,
    /// Unnormalized scores `n x r` in eigenvalue order.
    scores: DMatrix<f64>,
    trace: f64,
}

impl Pca {
    fn new(x: &DMatrix<f64>) -> Self {
        let (n, j) = x.shape();
        let trace = x.iter().map(|v| v * v).sum();
        let (values, vecs, on_rows) = if j <= n {
            let e = SymmetricEigen::new(x.tr_mul(x));
            (e.eigenvalues, e.eigenvectors, false)
        } else {
            let e = SymmetricEigen::new(x * x.transpose());
            (e.eigenvalues, e.eigenvectors, true)
        };
        let mut order: Vec<usize> = (0..values.len()).collect();
        order.sort_by(|a, b| values[*b].total_cmp(&values[*a]).then(a.cmp(b)));
        let sorted: Vec<f64> = order.iter().map(|&i| values[i].max(0.0)).collect();
        let v = DMatrix::from_fn(vecs.nrows(), order.len(), |r, c| vecs[(r, order[c])]);
        let scores = if on_rows { v } else { x * v };
        Self {
            values: sorted,
            scores,
            trace,
        }
    }

    fn decompose(&self, x: &DMatrix<f64>, k: usize) -> FactorDecomposition {
        let (n, j) = x.shape();
        let mut factors = DMatrix::zeros(n, k);
        for c in 0..k {
            let s = self.scores.column(c);
            let norm = s.norm();
            let scale = if norm > 0.0 { (n as f64).sqrt() / norm } else { 0.0 };
            factors.set_column(c, &(s * scale));
        }
        // loadings by OLS of each predictor on the factors
        let mut loadings = DMatrix::zeros(j, k);
        if k > 0 {
            let chol = factors.tr_mul(&factors).cholesky();
            let ftx = factors.tr_mul(x);
            let l_t = match chol {
                Some(c) => c.solve(&ftx),
                None => ftx / n as f64,
            };
            loadings = l_t.transpose();
        }
        for c in 0..k {
            let col = loadings.column(c);
            let imax = col.iamax();
            if col[imax] < 0.0 {
                loadings.column_mut(c).neg_mut();
                factors.column_mut(c).neg_mut();
            }
        }
        let residuals = x - &factors * loadings.transpose();
        let explained = (0..k)
            .map(|c| if self.trace > 0.0 { self.values[c] / self.trace } else { 0.0 })
            .collect();
        FactorDecomposition {
            factors,
            loadings,
            residuals,
            k,
            explained,
        }
    }

    /// Mean squared idiosyncratic residual with `k` factors.
    fn v(&self, k: usize, n: usize, j: usize) -> f64 {
        let captured: f64 = self.values.iter().take(k).sum();
        ((self.trace - captured) / (n * j) as f64).max(0.0)
    }
}

/// First `k` principal components of a standardized matrix.
pub fn extract_factors(x: &DMatrix<f64>, k: usize) -> Result<FactorDecomposition> {
    let max = x.nrows().min(x.ncols());
    if k > max {
        return Err(Error::TooManyFactors { requested: k, max });
    }
    Ok(Pca::new(x).decompose(x, k))
}

fn icp2_argmin(pca: &Pca, n: usize, j: usize, k_max: usize) -> usize {
    let (nf, jf) = (n as f64, j as f64);
    let penalty = (nf + jf) / (nf * jf) * (n.min(j) as f64).ln();
    let mut best = (1, f64::INFINITY);
    for k in 1..=k_max.min(n.min(j)).max(1) {
        let ic = pca.v(k, n, j).ln() + k as f64 * penalty;
        if ic < best.1 {
            best = (k, ic);
        }
    }
    best.0
}

/// Number of factors minimizing
/// `ln V(k) + k (n + J)/(n J) ln(min(n, J))` over `k = 1..=k_max`.
pub fn select_k_icp2(x: &DMatrix<f64>, k_max: usize) -> usize {
    let (n, j) = x.shape();
    icp2_argmin(&Pca::new(x), n, j, k_max)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FactorRule {
    IcP2 { k_max: usize },
    Fixed(usize),
}

impl Default for FactorRule {
    fn default() -> Self {
        FactorRule::IcP2 { k_max: 10 }
    }
}

/// Factor structure of the predictor block observable at an origin.
#[derive(Clone, Debug)]
pub struct FactorBlock {
    pub decomposition: FactorDecomposition,
    /// Factors on the information-date axis (`f1`, `f2`, ...).
    pub factors: InfoBlock,
    /// Idiosyncratic components (`u_<id>`).
    pub idiosyncratic: InfoBlock,
}

pub fn factor_block(predictors: &InfoBlock, rule: FactorRule) -> Result<FactorBlock> {
    let x = &predictors.values;
    let (n, j) = x.shape();
    let pca = Pca::new(x);
    let k = match rule {
        FactorRule::IcP2 { k_max } => icp2_argmin(&pca, n, j, k_max),
        FactorRule::Fixed(k) => {
            if k > n.min(j) {
                return Err(Error::TooManyFactors {
                    requested: k,
                    max: n.min(j),
                });
            }
            k
        }
    };
    let d = pca.decompose(x, k);
    let factors = InfoBlock {
        first_info: predictors.first_info,
        values: d.factors.clone(),
        names: (1..=k).map(|c| format!("f{c}")).collect(),
        kind: FeatureKind::Factor,
    };
    let idiosyncratic = InfoBlock {
        first_info: predictors.first_info,
        values: d.residuals.clone(),
        names: predictors.names.iter().map(|id| format!("u_{id}")).collect(),
        kind: FeatureKind::Idiosyncratic,
    };
    Ok(FactorBlock {
        decomposition: d,
        factors,
        idiosyncratic,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PreselectMode {
    /// Keep candidates whose two-sided normal test rejects at `alpha`.
    Threshold { alpha: f64 },
    /// Keep the `k` largest `|t|`.
    Rank { k: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Preselection {
    /// Selected candidate indices, in candidate order for threshold mode and
    /// by decreasing `|t|` for rank mode.
    pub selected: Vec<usize>,
    /// t-statistic per candidate (`NaN` when skipped for rank deficiency).
    pub t_stats: Vec<f64>,
}

/// Homoskedastic OLS t-statistic of each candidate when added alone to
/// `[1, controls]`.
pub fn candidate_t_stats(controls: &DMatrix<f64>, y: &DVector<f64>, candidates: &DMatrix<f64>) -> Vec<f64> {
    let n = y.len();
    let base = DMatrix::from_fn(n, controls.ncols() + 1, |i, c| {
        if c == 0 {
            1.0
        } else {
            controls[(i, c - 1)]
        }
    });
    let proj = Projector::new(&base);
    let yt = proj.residualize(y);
    let yy = yt.norm_squared();
    let mt = proj.residualize_matrix(candidates);
    let df = n as f64 - proj.rank() as f64 - 1.0;
    (0..candidates.ncols())
        .map(|j| {
            let xt = mt.column(j);
            let xx = xt.norm_squared();
            let raw = candidates.column(j).norm();
            if df <= 0.0 || raw == 0.0 || xx.sqrt() <= RANK_TOL * raw {
                return f64::NAN;
            }
            let b = xt.dot(&yt) / xx;
            let ssr = (yy - b * b * xx).max(0.0);
            if ssr == 0.0 {
                return if b == 0.0 { 0.0 } else { b.signum() * f64::INFINITY };
            }
            let se = (ssr / df / xx).sqrt();
            b / se
        })
        .collect()
}

pub fn preselect_by_tstat(
    controls: &DMatrix<f64>,
    y: &DVector<f64>,
    candidates: &DMatrix<f64>,
    mode: PreselectMode,
) -> Preselection {
    let t_stats = candidate_t_stats(controls, y, candidates);
    let skipped = t_stats.iter().filter(|t| t.is_nan()).count();
    if skipped > 0 {
        warn!("t-stat pre-selection skipped {skipped} rank-deficient candidates");
    }
    let selected = match mode {
        PreselectMode::Threshold { alpha } => {
            let crit = Normal::standard().inverse_cdf(1.0 - alpha / 2.0);
            (0..t_stats.len()).filter(|&j| t_stats[j].abs() > crit).collect()
        }
        PreselectMode::Rank { k } => {
            let mut idx: Vec<usize> = (0..t_stats.len()).filter(|&j| !t_stats[j].is_nan()).collect();
            idx.sort_by(|a, b| t_stats[*b].abs().total_cmp(&t_stats[*a].abs()).then(a.cmp(b)));
            idx.truncate(k);
            idx
        }
    };
    Preselection { selected, t_stats }
}

/// Fitted cell model: the coefficients, the design they were estimated on and
/// the point forecast.
#[derive(Clone, Debug)]
pub struct CellFit {
    pub fit: LinearFit,
    pub design: DesignMatrix,
    pub forecast: f64,
    /// Set when the model fell back to a simpler specification.
    pub fallback: bool,
}

impl CellFit {
    pub fn new(fit: LinearFit, design: DesignMatrix, fallback: bool) -> Self {
        let forecast = fit.predict(design.forecast_row.as_slice());
        Self {
            fit,
            design,
            forecast,
            fallback,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PenaltySettings {
    pub rule: PenaltyRule,
    pub cap: SelectionCap,
}

impl Default for PenaltySettings {
    fn default() -> Self {
        Self {
            rule: PenaltyRule::default(),
            cap: SelectionCap::SqrtRows,
        }
    }
}

/// adaLASSO on the controls plus `p` lags of every factor.
pub fn fit_factor_augmented(
    cell: &Cell<'_>,
    factors: &InfoBlock,
    factor_lags: usize,
    penalty: PenaltySettings,
) -> Result<CellFit> {
    let mut b = cell.builder();
    cell.add_controls(&mut b)?;
    factors.add_lags(&mut b, factor_lags);
    let design = b.build()?;
    let fit = fit_adalasso(&design, penalty.rule, penalty.cap)?.fit;
    Ok(CellFit::new(fit, design, false))
}

/// Controls design and the single-lag predictor candidates on the same rows.
fn controls_and_candidates(cell: &Cell<'_>) -> Result<(DesignMatrix, DesignMatrix)> {
    let mut b = cell.builder();
    cell.add_controls(&mut b)?;
    let n_controls = b.width();
    cell.add_predictor_lags(&mut b, 1);
    let full = b.build()?;
    let controls: Vec<usize> = (0..n_controls).collect();
    let cands: Vec<usize> = (n_controls..full.n_features()).collect();
    Ok((full.select_columns(&controls), full.select_columns(&cands)))
}

/// Target factor: predictors significant at `alpha` given the controls feed a
/// single principal component, whose lags join the controls in an adaLASSO.
/// With no significant predictor the model falls back to the controls alone.
pub fn fit_target_factor(
    cell: &Cell<'_>,
    alpha: f64,
    factor_lags: usize,
    penalty: PenaltySettings,
) -> Result<CellFit> {
    let (controls, candidates) = controls_and_candidates(cell)?;
    let sel = preselect_by_tstat(
        &controls.x,
        &controls.target,
        &candidates.x,
        PreselectMode::Threshold { alpha },
    );
    if sel.selected.is_empty() {
        let fit = fit_adalasso(&controls, penalty.rule, penalty.cap)?.fit;
        return Ok(CellFit::new(fit, controls, true));
    }
    let ids: Vec<String> = sel
        .selected
        .iter()
        .map(|&j| candidates.features[j].base.clone())
        .collect();
    let block = predictor_block(cell.panel, cell.origin, Some(&ids))?;
    let d = extract_factors(&block.values, 1)?;
    let factor = InfoBlock {
        first_info: block.first_info,
        values: d.factors,
        names: vec!["tf1".to_string()],
        kind: FeatureKind::Factor,
    };
    fit_factor_augmented(cell, &factor, factor_lags, penalty)
}

/// FarmPredict: adaLASSO on the controls, `p` lags of the common factors and
/// `p` lags of every idiosyncratic component.
pub fn fit_farmpredict(
    cell: &Cell<'_>,
    factors: &FactorBlock,
    lags: usize,
    penalty: PenaltySettings,
) -> Result<CellFit> {
    let mut b = cell.builder();
    cell.add_controls(&mut b)?;
    factors.factors.add_lags(&mut b, lags);
    factors.idiosyncratic.add_lags(&mut b, lags);
    let design = b.build()?;
    let fit = fit_adalasso(&design, penalty.rule, penalty.cap)?.fit;
    Ok(CellFit::new(fit, design, false))
}

/// Least-squares loadings check helper: regression of `x` on `f`.
pub fn ols_loadings(x: &DMatrix<f64>, f: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(x.ncols(), f.ncols());
    for j in 0..x.ncols() {
        let (b, _) = lstsq(f, &x.column(j).into_owned());
        out.set_row(j, &b.transpose());
    }
    out
}
