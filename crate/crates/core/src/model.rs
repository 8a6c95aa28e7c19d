//! Estimator identifiers, their hyperparameters and per-cell dispatch.

use std::cell::OnceCell;
use std::fmt;
use std::str::FromStr;

use crate::ensemble_models::{fit_csr, fit_forest, predict_forest, CsrParams, ForestParams};
use crate::error::{Error, Result};
use crate::factor_models::{
    factor_block, fit_factor_augmented, fit_farmpredict, fit_target_factor, CellFit, FactorBlock, FactorRule,
    PenaltySettings,
};
use crate::linear_models::{fit_adalasso, fit_ar_bic, fit_ols, fit_ridge, forecast_hist_mean, forecast_rw, LinearFit};
use crate::preprocessing::{add_expectation, DesignMatrix, FeatureKind};
use crate::window::{predictor_block, Cell};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Estimator {
    RandomWalk,
    HistMean,
    Ar,
    AugmentedAr,
    Hnkpc,
    Ridge,
    AdaLasso,
    Factor,
    TargetFactor,
    FarmPredict,
    Csr,
    RandomForest,
    /// Average of the aggregated forecasts of every other model and the
    /// expectation; produced by the harness, not fitted per cell.
    Combination,
}

impl Estimator {
    pub const ALL: [Estimator; 13] = [
        Estimator::RandomWalk,
        Estimator::HistMean,
        Estimator::Ar,
        Estimator::AugmentedAr,
        Estimator::Hnkpc,
        Estimator::Ridge,
        Estimator::AdaLasso,
        Estimator::Factor,
        Estimator::TargetFactor,
        Estimator::FarmPredict,
        Estimator::Csr,
        Estimator::RandomForest,
        Estimator::Combination,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Estimator::RandomWalk => "RW",
            Estimator::HistMean => "HistMean",
            Estimator::Ar => "AR",
            Estimator::AugmentedAr => "AugmentedAR",
            Estimator::Hnkpc => "HNKPC",
            Estimator::Ridge => "Ridge",
            Estimator::AdaLasso => "adaLASSO",
            Estimator::Factor => "Factor",
            Estimator::TargetFactor => "TargetFactor",
            Estimator::FarmPredict => "FarmPredict",
            Estimator::Csr => "CSR",
            Estimator::RandomForest => "RF",
            Estimator::Combination => "Combination",
        }
    }

    /// Models whose nonzero-coefficient sets feed selection frequencies.
    pub fn reports_selection(self) -> bool {
        matches!(
            self,
            Estimator::AdaLasso | Estimator::Factor | Estimator::TargetFactor | Estimator::FarmPredict
        )
    }

    pub fn uses_factors(self) -> bool {
        matches!(self, Estimator::Factor | Estimator::FarmPredict)
    }

    pub fn is_stochastic(self) -> bool {
        self == Estimator::RandomForest
    }
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Estimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace(['-', '_', ' '], "");
        let e = match key.as_str() {
            "rw" | "randomwalk" => Estimator::RandomWalk,
            "histmean" | "mean" => Estimator::HistMean,
            "ar" => Estimator::Ar,
            "augmentedar" | "arx" => Estimator::AugmentedAr,
            "hnkpc" | "phillips" => Estimator::Hnkpc,
            "ridge" => Estimator::Ridge,
            "adalasso" => Estimator::AdaLasso,
            "factor" | "factors" => Estimator::Factor,
            "targetfactor" => Estimator::TargetFactor,
            "farmpredict" | "farm" => Estimator::FarmPredict,
            "csr" => Estimator::Csr,
            "rf" | "randomforest" => Estimator::RandomForest,
            "combination" | "combo" => Estimator::Combination,
            _ => {
                return Err(Error::Unknown {
                    kind: "estimator",
                    id: s.to_string(),
                })
            }
        };
        Ok(e)
    }
}

/// An estimator with its hyperparameters. `id` labels its forecast records.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelSpec {
    pub id: String,
    pub estimator: Estimator,
    pub lag_depth: usize,
    pub penalty: PenaltySettings,
    pub factor_rule: FactorRule,
    pub csr: CsrParams,
    /// The seed here is the master seed; each cell derives its own.
    pub forest: ForestParams,
    pub preselect_alpha: f64,
    /// Output-gap style activity predictor used by the Phillips curve.
    pub activity_id: String,
    /// Exchange-rate predictor used by the Phillips curve.
    pub exchange_id: String,
}

impl ModelSpec {
    pub fn new(estimator: Estimator) -> Self {
        Self {
            id: estimator.as_str().to_string(),
            estimator,
            lag_depth: 3,
            penalty: PenaltySettings::default(),
            factor_rule: FactorRule::default(),
            csr: CsrParams::default(),
            forest: ForestParams::default(),
            preselect_alpha: 0.05,
            activity_id: "activity".to_string(),
            exchange_id: "exchange_rate".to_string(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.lag_depth == 0 {
            return Err(Error::InvalidSpec(format!("{}: lag depth must be at least 1", self.id)));
        }
        if self.csr.subset == 0 || self.csr.subset > self.csr.pool {
            return Err(Error::InvalidSpec(format!(
                "{}: CSR subset size {} must lie in 1..={}",
                self.id, self.csr.subset, self.csr.pool
            )));
        }
        if !(self.preselect_alpha > 0.0 && self.preselect_alpha < 1.0) {
            return Err(Error::InvalidSpec(format!(
                "{}: pre-selection alpha {} outside (0, 1)",
                self.id, self.preselect_alpha
            )));
        }
        if let FactorRule::IcP2 { k_max: 0 } = self.factor_rule {
            return Err(Error::InvalidSpec(format!("{}: k_max must be at least 1", self.id)));
        }
        self.forest
            .validate()
            .map_err(|e| Error::InvalidSpec(format!("{}: {e}", self.id)))
    }
}

/// Result of one fitted cell.
#[derive(Clone, Debug, PartialEq)]
pub struct CellOutcome {
    pub forecast: f64,
    /// Base variables with a nonzero coefficient (any lag), for models that
    /// report selection.
    pub selected: Option<Vec<String>>,
    pub fallback: bool,
}

impl CellOutcome {
    fn point(forecast: f64) -> Self {
        Self {
            forecast,
            selected: None,
            fallback: false,
        }
    }
}

/// Per-cell inputs shared by every model estimated on the cell.
pub struct CellInputs<'a> {
    pub cell: Cell<'a>,
    /// Factor structure at the origin when precomputed by the caller.
    pub factors: Option<&'a FactorBlock>,
    full: OnceCell<(usize, DesignMatrix)>,
}

impl<'a> CellInputs<'a> {
    pub fn new(cell: Cell<'a>, factors: Option<&'a FactorBlock>) -> Self {
        Self {
            cell,
            factors,
            full: OnceCell::new(),
        }
    }

    /// Controls plus `p` lags of every predictor, `p` being the lag depth of
    /// `cell`. The first successful build is cached.
    fn full_information(&self, cell: &Cell<'_>) -> Result<DesignMatrix> {
        if let Some((depth, d)) = self.full.get() {
            if *depth == cell.lag_depth {
                return Ok(d.clone());
            }
        }
        let mut b = cell.builder();
        cell.add_controls(&mut b)?;
        cell.add_predictor_lags(&mut b, cell.lag_depth);
        let d = b.build()?;
        let _ = self.full.set((cell.lag_depth, d.clone()));
        Ok(d)
    }
}

fn selected_bases(fit: &LinearFit, design: &DesignMatrix) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for (f, b) in design.features.iter().zip(&fit.coefficients) {
        if *b != 0.0 && !f.is_dummy() && !out.contains(&f.base) {
            out.push(f.base.clone());
        }
    }
    out
}

fn linear_outcome(cf: CellFit, select: bool) -> CellOutcome {
    let selected = select.then(|| selected_bases(&cf.fit, &cf.design));
    CellOutcome {
        forecast: cf.forecast,
        selected,
        fallback: cf.fallback,
    }
}

/// Own lags, the expectation for the cell's horizon and seasonal dummies.
pub fn augmented_ar_design(cell: &Cell<'_>) -> Result<DesignMatrix> {
    let mut b = cell.builder();
    b.series_lags(cell.target, FeatureKind::OwnLag, cell.lag_depth);
    add_expectation(&mut b, cell.panel, cell.horizon);
    b.seasonal();
    b.build()
}

/// Phillips-curve design: own lags, the expectation and one lag each of the
/// activity and exchange-rate predictors.
pub fn hnkpc_design(cell: &Cell<'_>, activity_id: &str, exchange_id: &str) -> Result<DesignMatrix> {
    let panel = cell.panel;
    let find = |id: &str| {
        panel.predictors.get(id).ok_or_else(|| Error::Unknown {
            kind: "predictor",
            id: id.to_string(),
        })
    };
    let (activity, exchange) = (find(activity_id)?, find(exchange_id)?);
    let mut b = cell.builder();
    b.series_lags(cell.target, FeatureKind::OwnLag, cell.lag_depth);
    add_expectation(&mut b, panel, cell.horizon);
    b.lags(&activity.id, FeatureKind::Predictor, 1, move |s| activity.at_info(s));
    b.lags(&exchange.id, FeatureKind::Predictor, 1, move |s| exchange.at_info(s));
    b.build()
}

/// Fits `spec` on one cell and returns its forecast for `origin + horizon`.
/// `seed` drives the stochastic estimators.
pub fn fit_cell(inputs: &CellInputs<'_>, spec: &ModelSpec, seed: u64) -> Result<CellOutcome> {
    let cell = Cell {
        lag_depth: spec.lag_depth,
        ..inputs.cell
    };
    let panel = cell.panel;
    let select = spec.estimator.reports_selection();
    match spec.estimator {
        Estimator::RandomWalk => Ok(CellOutcome::point(forecast_rw(cell.target, cell.origin, cell.horizon)?)),
        Estimator::HistMean => Ok(CellOutcome::point(forecast_hist_mean(
            cell.target,
            cell.origin,
            cell.horizon,
        )?)),
        Estimator::Ar => Ok(CellOutcome::point(
            fit_ar_bic(panel, cell.target, cell.origin, cell.horizon, spec.lag_depth)?.forecast(),
        )),
        Estimator::AugmentedAr => {
            let design = augmented_ar_design(&cell)?;
            let fit = fit_ols(&design)?;
            Ok(linear_outcome(CellFit::new(fit, design, false), false))
        }
        Estimator::Hnkpc => {
            let design = hnkpc_design(&cell, &spec.activity_id, &spec.exchange_id)?;
            let fit = fit_ols(&design)?;
            Ok(linear_outcome(CellFit::new(fit, design, false), false))
        }
        Estimator::Ridge => {
            let design = inputs.full_information(&cell)?;
            let fit = fit_ridge(&design, spec.penalty.rule)?.fit;
            Ok(linear_outcome(CellFit::new(fit, design, false), false))
        }
        Estimator::AdaLasso => {
            let design = inputs.full_information(&cell)?;
            let fit = fit_adalasso(&design, spec.penalty.rule, spec.penalty.cap)?.fit;
            Ok(linear_outcome(CellFit::new(fit, design, false), select))
        }
        Estimator::Factor | Estimator::FarmPredict => {
            let owned;
            let fb = match inputs.factors {
                Some(fb) => fb,
                None => {
                    owned = origin_factors(panel, cell.origin, spec.factor_rule)?;
                    &owned
                }
            };
            let cf = if spec.estimator == Estimator::Factor {
                fit_factor_augmented(&cell, &fb.factors, spec.lag_depth, spec.penalty)?
            } else {
                fit_farmpredict(&cell, fb, spec.lag_depth, spec.penalty)?
            };
            Ok(linear_outcome(cf, select))
        }
        Estimator::TargetFactor => Ok(linear_outcome(
            fit_target_factor(&cell, spec.preselect_alpha, spec.lag_depth, spec.penalty)?,
            select,
        )),
        Estimator::Csr => {
            let design = inputs.full_information(&cell)?;
            let mask = design.dummy_mask();
            let dummies: Vec<usize> = (0..mask.len()).filter(|&j| mask[j]).collect();
            let cands: Vec<usize> = (0..mask.len()).filter(|&j| !mask[j]).collect();
            let controls = design.select_columns(&dummies);
            let candidates = design.select_columns(&cands);
            let ens = fit_csr(
                &controls.x,
                &candidates.target,
                &candidates.x,
                &candidates.feature_names(),
                spec.csr,
            )?;
            Ok(CellOutcome::point(ens.predict(candidates.forecast_row.as_slice())))
        }
        Estimator::RandomForest => {
            let design = inputs.full_information(&cell)?;
            let params = ForestParams { seed, ..spec.forest };
            let forest = fit_forest(&design.x, design.target.as_slice(), params)?;
            Ok(CellOutcome::point(predict_forest(&forest, design.forecast_row.as_slice())?))
        }
        Estimator::Combination => Err(Error::InvalidSpec(
            "the combination is formed from aggregated forecasts, not fitted per cell".into(),
        )),
    }
}

/// Factor structure of all predictors observable at an origin.
pub fn origin_factors(panel: &crate::data_model::SeriesPanel, origin: usize, rule: FactorRule) -> Result<FactorBlock> {
    factor_block(&predictor_block(panel, origin, None)?, rule)
}
