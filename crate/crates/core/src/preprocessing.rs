//! Stationarity transforms, direct-forecast design matrices, seasonal dummies
//! and standardization.
//!
//! Alignment convention: the estimation row for target month `t` at horizon
//! `h` takes lag `l` (1-based) of every regressor from information date
//! `t - h - (l - 1)`. The forecast row re-anchors the same lags at the origin
//! `T`, i.e. information date `T - (l - 1)`, and targets month `T + h`.
//! A series with availability lag `a` contributes, at information date `s`,
//! its value for month `s - a`.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data_model::{DisaggregationScheme, MonthId, Series, SeriesPanel};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum TransformCode {
    #[default]
    None,
    PctChange,
    FirstDiff,
}

impl TransformCode {
    pub fn as_str(self) -> &'static str {
        match self {
            TransformCode::None => "none",
            TransformCode::PctChange => "pct_change",
            TransformCode::FirstDiff => "first_diff",
        }
    }
}

impl fmt::Display for TransformCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TransformCode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "none" | "" | "0" => Ok(TransformCode::None),
            "pct_change" | "pct" | "1" => Ok(TransformCode::PctChange),
            "first_diff" | "diff" | "2" => Ok(TransformCode::FirstDiff),
            other => Err(Error::Parse(format!("unknown transform code `{other}`"))),
        }
    }
}

/// Applies a stationarity transform. Differencing transforms drop the first
/// element.
pub fn apply_transform(series: &[f64], code: TransformCode) -> Result<Vec<f64>> {
    match code {
        TransformCode::None => Ok(series.to_vec()),
        TransformCode::PctChange => series
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                if w[0] == 0.0 {
                    Err(Error::ZeroBase { index: i })
                } else {
                    Ok(100.0 * (w[1] / w[0] - 1.0))
                }
            })
            .collect(),
        TransformCode::FirstDiff => Ok(series.windows(2).map(|w| w[1] - w[0]).collect()),
    }
}

/// Same as [`apply_transform`] but keeps the date alignment, padding with
/// `NaN` where the transform is undefined (first element, missing inputs).
pub fn transform_aligned(raw: &[f64], code: TransformCode) -> Result<Vec<f64>> {
    if code == TransformCode::None {
        return Ok(raw.to_vec());
    }
    let mut out = vec![f64::NAN; raw.len()];
    for m in 1..raw.len() {
        let (prev, cur) = (raw[m - 1], raw[m]);
        if !prev.is_finite() || !cur.is_finite() {
            continue;
        }
        out[m] = match code {
            TransformCode::PctChange => {
                if prev == 0.0 {
                    return Err(Error::ZeroBase { index: m - 1 });
                }
                100.0 * (cur / prev - 1.0)
            }
            TransformCode::FirstDiff => cur - prev,
            TransformCode::None => unreachable!(),
        };
    }
    Ok(out)
}

/// Rebuilds a raw series from its first value and transformed increments.
pub fn invert_transform(first: f64, transformed: &[f64], code: TransformCode) -> Vec<f64> {
    match code {
        TransformCode::None => transformed.to_vec(),
        _ => {
            let mut out = Vec::with_capacity(transformed.len() + 1);
            out.push(first);
            let mut level = first;
            for z in transformed {
                level = match code {
                    TransformCode::PctChange => level * (1.0 + z / 100.0),
                    _ => level + z,
                };
                out.push(level);
            }
            out
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FeatureKind {
    OwnLag,
    CrossLag,
    Expectation,
    Seasonal,
    Predictor,
    Factor,
    Idiosyncratic,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Feature {
    pub name: String,
    pub kind: FeatureKind,
    /// Underlying variable; lags of one variable share it.
    pub base: String,
    pub lag: usize,
}

impl Feature {
    pub fn is_dummy(&self) -> bool {
        self.kind == FeatureKind::Seasonal
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum FeatureMenu {
    OwnLagsOnly,
    OwnPlusControls,
    FullInformation,
}

#[derive(Clone, Debug)]
pub struct DesignMatrix {
    /// Target month of each estimation row.
    pub rows: Vec<MonthId>,
    pub x: DMatrix<f64>,
    pub target: DVector<f64>,
    pub features: Vec<Feature>,
    pub horizon: usize,
    pub origin: MonthId,
    /// Regressors for the out-of-sample target `origin + horizon`.
    pub forecast_row: DVector<f64>,
}

impl DesignMatrix {
    pub fn n_rows(&self) -> usize {
        self.x.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.features.len()
    }

    pub fn feature_names(&self) -> Vec<String> {
        self.features.iter().map(|f| f.name.clone()).collect()
    }

    pub fn dummy_mask(&self) -> Vec<bool> {
        self.features.iter().map(Feature::is_dummy).collect()
    }

    /// Keeps only the listed columns, in the given order.
    pub fn select_columns(&self, cols: &[usize]) -> DesignMatrix {
        let x = DMatrix::from_fn(self.x.nrows(), cols.len(), |i, j| self.x[(i, cols[j])]);
        DesignMatrix {
            rows: self.rows.clone(),
            x,
            target: self.target.clone(),
            features: cols.iter().map(|&j| self.features[j].clone()).collect(),
            horizon: self.horizon,
            origin: self.origin,
            forecast_row: DVector::from_iterator(cols.len(), cols.iter().map(|&j| self.forecast_row[j])),
        }
    }

    /// Appends the columns of `other`; both designs must share rows.
    pub fn hstack(&self, other: &DesignMatrix) -> DesignMatrix {
        assert_eq!(self.rows, other.rows, "designs must share estimation rows");
        let (n, a, b) = (self.x.nrows(), self.x.ncols(), other.x.ncols());
        let x = DMatrix::from_fn(n, a + b, |i, j| {
            if j < a {
                self.x[(i, j)]
            } else {
                other.x[(i, j - a)]
            }
        });
        let mut features = self.features.clone();
        features.extend(other.features.iter().cloned());
        let forecast_row = DVector::from_iterator(
            a + b,
            self.forecast_row.iter().chain(other.forecast_row.iter()).copied(),
        );
        DesignMatrix {
            rows: self.rows.clone(),
            x,
            target: self.target.clone(),
            features,
            horizon: self.horizon,
            origin: self.origin,
            forecast_row,
        }
    }
}

type SourceFn<'a> = Box<dyn Fn(isize) -> Option<f64> + Sync + 'a>;

enum Column<'a> {
    Lagged { source: SourceFn<'a>, lag: usize },
    /// 1 when the target month is the given calendar month.
    Month(u32),
}

/// Assembles a [`DesignMatrix`] from information-date series.
pub struct DesignBuilder<'a> {
    first_date: MonthId,
    origin: usize,
    horizon: usize,
    target: &'a Series,
    columns: Vec<(Feature, Column<'a>)>,
}

impl<'a> DesignBuilder<'a> {
    pub fn new(panel: &SeriesPanel, target: &'a Series, origin: usize, horizon: usize) -> Self {
        Self {
            first_date: panel.dates[0],
            origin,
            horizon,
            target,
            columns: Vec::new(),
        }
    }

    /// Number of columns added so far.
    pub fn width(&self) -> usize {
        self.columns.len()
    }

    /// Adds lags `1..=p` of an information-date series.
    pub fn lags<F>(&mut self, base: &str, kind: FeatureKind, p: usize, source: F) -> &mut Self
    where
        F: Fn(isize) -> Option<f64> + Sync + Clone + 'a,
    {
        for l in 1..=p {
            self.columns.push((
                Feature {
                    name: format!("{base}_l{l}"),
                    kind,
                    base: base.to_string(),
                    lag: l,
                },
                Column::Lagged {
                    source: Box::new(source.clone()),
                    lag: l,
                },
            ));
        }
        self
    }

    /// Adds a single contemporaneous (lag 1) column under an explicit name.
    pub fn column<F>(&mut self, name: &str, base: &str, kind: FeatureKind, source: F) -> &mut Self
    where
        F: Fn(isize) -> Option<f64> + Sync + 'a,
    {
        self.columns.push((
            Feature {
                name: name.to_string(),
                kind,
                base: base.to_string(),
                lag: 1,
            },
            Column::Lagged {
                source: Box::new(source),
                lag: 1,
            },
        ));
        self
    }

    /// Lags of a panel series, honouring its availability lag.
    pub fn series_lags(&mut self, series: &'a Series, kind: FeatureKind, p: usize) -> &mut Self {
        self.lags(&series.id, kind, p, move |s| series.at_info(s))
    }

    /// Eleven monthly dummies for February..December; January is omitted.
    pub fn seasonal(&mut self) -> &mut Self {
        for m in 2..=12u32 {
            self.columns.push((
                Feature {
                    name: format!("m{m:02}"),
                    kind: FeatureKind::Seasonal,
                    base: "seasonal".to_string(),
                    lag: 0,
                },
                Column::Month(m),
            ));
        }
        self
    }

    fn value(&self, col: &Column<'_>, target_idx: isize, anchor: isize) -> Option<f64> {
        match col {
            Column::Lagged { source, lag } => source(anchor - (*lag as isize - 1)),
            Column::Month(m) => {
                let month = self.first_date.offset(target_idx as i32).month();
                Some(if month == *m { 1.0 } else { 0.0 })
            }
        }
    }

    pub fn build(&self) -> Result<DesignMatrix> {
        let h = self.horizon as isize;
        let origin = self.origin as isize;
        let last_target = origin - self.target.availability_lag as isize;
        let width = self.columns.len();

        let mut rows = Vec::new();
        let mut data: Vec<f64> = Vec::new();
        let mut target = Vec::new();
        let mut buf = vec![0.0; width];
        'rows: for t in 0..=last_target.max(-1) {
            let Some(y) = self.target.at_info(t + self.target.availability_lag as isize) else {
                continue;
            };
            for (j, (_, col)) in self.columns.iter().enumerate() {
                match self.value(col, t, t - h) {
                    Some(v) => buf[j] = v,
                    None => continue 'rows,
                }
            }
            rows.push(self.first_date.offset(t as i32));
            target.push(y);
            data.extend_from_slice(&buf);
        }

        let mut forecast_row = Vec::with_capacity(width);
        for (f, col) in &self.columns {
            match self.value(col, origin + h, origin) {
                Some(v) => forecast_row.push(v),
                None => {
                    return Err(Error::InsufficientHistory(format!(
                        "feature `{}` unavailable at origin {}",
                        f.name,
                        self.first_date.offset(self.origin as i32)
                    )))
                }
            }
        }
        if rows.is_empty() {
            return Err(Error::InsufficientHistory(format!(
                "no estimation rows for `{}` at horizon {} and origin {}",
                self.target.id,
                self.horizon,
                self.first_date.offset(self.origin as i32)
            )));
        }
        let n = rows.len();
        Ok(DesignMatrix {
            rows,
            x: DMatrix::from_row_slice(n, width, &data),
            target: DVector::from_vec(target),
            features: self.columns.iter().map(|(f, _)| f.clone()).collect(),
            horizon: self.horizon,
            origin: self.first_date.offset(self.origin as i32),
            forecast_row: DVector::from_vec(forecast_row),
        })
    }
}

/// Builds the regression design for one component of a level.
///
/// `OwnLagsOnly` holds `p` own lags. `OwnPlusControls` adds lags of the other
/// components of the level, the aggregate expectation for this horizon (when
/// the panel has one) and the seasonal dummies. `FullInformation` further
/// adds `p` lags of every predictor.
pub fn build_design(
    panel: &SeriesPanel,
    scheme: &DisaggregationScheme,
    component: &str,
    lag_depth: usize,
    horizon: usize,
    window_end: MonthId,
    menu: FeatureMenu,
) -> Result<DesignMatrix> {
    let origin = panel.index_of(window_end).ok_or_else(|| Error::Unknown {
        kind: "origin date",
        id: window_end.to_string(),
    })?;
    let target = panel
        .component(&scheme.level_id, component)
        .ok_or_else(|| Error::Unknown {
            kind: "component",
            id: component.to_string(),
        })?;
    let mut b = DesignBuilder::new(panel, target, origin, horizon);
    add_controls(&mut b, panel, scheme, target, lag_depth, horizon, menu != FeatureMenu::OwnLagsOnly)?;
    if menu == FeatureMenu::FullInformation {
        for p in panel.predictors.values() {
            b.lags(&p.id, FeatureKind::Predictor, lag_depth, move |s| p.at_info(s));
        }
    }
    b.build()
}

/// Own lags and, if `with_controls`, cross lags, expectation and dummies.
pub(crate) fn add_controls<'a>(
    b: &mut DesignBuilder<'a>,
    panel: &'a SeriesPanel,
    scheme: &'a DisaggregationScheme,
    target: &'a Series,
    lag_depth: usize,
    horizon: usize,
    with_controls: bool,
) -> Result<()> {
    b.series_lags(target, FeatureKind::OwnLag, lag_depth);
    if !with_controls {
        return Ok(());
    }
    for c in &scheme.component_ids {
        let s = panel
            .component(&scheme.level_id, c)
            .ok_or_else(|| Error::Unknown {
                kind: "component",
                id: c.clone(),
            })?;
        if s.id != target.id {
            b.series_lags(s, FeatureKind::CrossLag, lag_depth);
        }
    }
    add_expectation(b, panel, horizon);
    b.seasonal();
    Ok(())
}

pub(crate) fn add_expectation<'a>(b: &mut DesignBuilder<'a>, panel: &'a SeriesPanel, horizon: usize) {
    if let Some(e) = &panel.expectation {
        b.column(
            &format!("expectation_h{horizon}"),
            "expectation",
            FeatureKind::Expectation,
            move |s| e.at_info(horizon, s),
        );
    }
}

#[derive(Clone, Debug)]
pub struct Standardized {
    pub design: DesignMatrix,
    pub means: Vec<f64>,
    pub scales: Vec<f64>,
    pub zero_variance: Vec<bool>,
}

/// Sample mean and standard deviation (denominator `n - 1`).
pub fn mean_sd(col: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let (mut n, mut sum) = (0usize, 0.0);
    for v in col.clone() {
        n += 1;
        sum += v;
    }
    let mean = sum / n as f64;
    let ss: f64 = col.map(|v| (v - mean) * (v - mean)).sum();
    let sd = if n > 1 { (ss / (n - 1) as f64).sqrt() } else { 0.0 };
    (mean, sd)
}

pub(crate) fn is_zero_variance(mean: f64, sd: f64) -> bool {
    !(sd > 1e-12 * mean.abs().max(1.0))
}

/// Column-wise standardization of a raw matrix. Skipped columns are returned
/// untouched with mean 0 and scale 1; zero-variance columns become zeros.
pub fn standardize_matrix(
    x: &DMatrix<f64>,
    skip: &[bool],
) -> (DMatrix<f64>, Vec<f64>, Vec<f64>, Vec<bool>) {
    let (n, p) = x.shape();
    let mut out = x.clone();
    let mut means = vec![0.0; p];
    let mut scales = vec![1.0; p];
    let mut flags = vec![false; p];
    for j in 0..p {
        if skip.get(j).copied().unwrap_or(false) {
            continue;
        }
        let (m, sd) = mean_sd(x.column(j).iter().copied());
        means[j] = m;
        if is_zero_variance(m, sd) {
            flags[j] = true;
            for i in 0..n {
                out[(i, j)] = 0.0;
            }
        } else {
            scales[j] = sd;
            for i in 0..n {
                out[(i, j)] = (x[(i, j)] - m) / sd;
            }
        }
    }
    (out, means, scales, flags)
}

/// Standardizes every non-dummy column to mean 0 and unit sample standard
/// deviation; the forecast row is mapped with the same moments.
pub fn standardize(design: &DesignMatrix) -> Result<Standardized> {
    if design.n_rows() < 2 {
        return Err(Error::InsufficientHistory(
            "standardization needs at least 2 rows".into(),
        ));
    }
    let skip = design.dummy_mask();
    let (x, means, scales, flags) = standardize_matrix(&design.x, &skip);
    let forecast_row = DVector::from_iterator(
        design.n_features(),
        (0..design.n_features()).map(|j| {
            if flags[j] {
                0.0
            } else {
                (design.forecast_row[j] - means[j]) / scales[j]
            }
        }),
    );
    Ok(Standardized {
        design: DesignMatrix {
            x,
            forecast_row,
            ..design.clone()
        },
        means,
        scales,
        zero_variance: flags,
    })
}
