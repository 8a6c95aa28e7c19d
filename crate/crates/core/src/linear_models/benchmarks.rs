use super::{bic, fit_ols, LinearFit};
use crate::data_model::{Series, SeriesPanel};
use crate::error::{Error, Result};
use crate::preprocessing::{DesignBuilder, DesignMatrix, FeatureKind};

/// Random walk: the latest observable value at the origin, for every horizon.
pub fn forecast_rw(series: &Series, origin: usize, _horizon: usize) -> Result<f64> {
    series
        .at_info(origin as isize)
        .ok_or_else(|| Error::InsufficientHistory(format!("`{}` unobserved at origin", series.id)))
}

/// Mean of every observation available at the origin (expanding window).
pub fn forecast_hist_mean(series: &Series, origin: usize, _horizon: usize) -> Result<f64> {
    let last = series
        .latest_month(origin)
        .ok_or_else(|| Error::InsufficientHistory(format!("`{}` unobserved at origin", series.id)))?;
    let (mut n, mut sum) = (0usize, 0.0);
    for v in series.values.iter().take(last + 1).filter(|v| v.is_finite()) {
        n += 1;
        sum += v;
    }
    if n == 0 {
        return Err(Error::Empty("historical mean window"));
    }
    Ok(sum / n as f64)
}

#[derive(Clone, Debug)]
pub struct ArFit {
    pub fit: LinearFit,
    pub order: usize,
    /// Design restricted to the chosen order.
    pub design: DesignMatrix,
}

impl ArFit {
    pub fn forecast(&self) -> f64 {
        self.fit.predict(self.design.forecast_row.as_slice())
    }
}

/// Direct-h AR(p) with `p` chosen by BIC over `1..=max_p`. All candidate
/// orders are estimated on the rows available to the largest order so their
/// criteria are comparable.
pub fn fit_ar_bic(
    panel: &SeriesPanel,
    target: &Series,
    origin: usize,
    horizon: usize,
    max_p: usize,
) -> Result<ArFit> {
    if max_p == 0 {
        return Err(Error::InvalidSpec("AR order must be at least 1".into()));
    }
    let full = DesignBuilder::new(panel, target, origin, horizon)
        .series_lags(target, FeatureKind::OwnLag, max_p)
        .build()?;
    let n = full.n_rows();
    if n < max_p + 3 {
        return Err(Error::InsufficientHistory(format!(
            "AR({max_p}) at horizon {horizon} has only {n} rows"
        )));
    }
    let mut best: Option<(f64, ArFit)> = None;
    for p in 1..=max_p {
        let cols: Vec<usize> = (0..p).collect();
        let design = full.select_columns(&cols);
        let fit = fit_ols(&design)?;
        let score = bic(fit.ssr(), n, (p + 1) as f64);
        if best.as_ref().is_none_or(|(b, _)| score < *b) {
            best = Some((
                score,
                ArFit {
                    fit,
                    order: p,
                    design,
                },
            ));
        }
    }
    Ok(best.expect("max_p >= 1").1)
}
