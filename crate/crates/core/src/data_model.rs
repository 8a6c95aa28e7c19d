//! Panel, hierarchy and weight structures shared by every other module.
//!
//! All series in a [`SeriesPanel`] are aligned on one monthly date index.
//! Missing observations are stored as `NaN`. Each series carries an
//! availability lag `a`: at information date `s` (an index into the date
//! axis) the latest observable month of that series is `s - a`.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::preprocessing::{transform_aligned, TransformCode};

/// Month identifier: `year * 12 + month` with `month` in `1..=12`
/// (so `2014-01` is `24169`).
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct MonthId(pub i32);

impl MonthId {
    pub fn from_ym(year: i32, month: u32) -> Self {
        debug_assert!((1..=12).contains(&month));
        MonthId(year * 12 + month as i32)
    }

    pub fn year(self) -> i32 {
        (self.0 - 1).div_euclid(12)
    }

    /// Calendar month, 1 = January.
    pub fn month(self) -> u32 {
        ((self.0 - 1).rem_euclid(12) + 1) as u32
    }

    pub fn offset(self, months: i32) -> Self {
        MonthId(self.0 + months)
    }
}

impl fmt::Display for MonthId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year(), self.month())
    }
}

impl FromStr for MonthId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (y, m) = s
            .split_once('-')
            .ok_or_else(|| Error::Parse(format!("date `{s}` is not YYYY-MM")))?;
        let year: i32 = y
            .parse()
            .map_err(|_| Error::Parse(format!("bad year in `{s}`")))?;
        let month: u32 = m
            .parse()
            .map_err(|_| Error::Parse(format!("bad month in `{s}`")))?;
        if !(1..=12).contains(&month) {
            return Err(Error::Parse(format!("month out of range in `{s}`")));
        }
        Ok(MonthId::from_ym(year, month))
    }
}

/// A monthly series with its availability lag.
#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    pub id: String,
    pub values: Vec<f64>,
    pub availability_lag: usize,
}

impl Series {
    pub fn new(id: impl Into<String>, values: Vec<f64>, availability_lag: usize) -> Self {
        Self {
            id: id.into(),
            values,
            availability_lag,
        }
    }

    /// Value observable at information date `info`, or `None` when the
    /// month is outside the sample or missing.
    pub fn at_info(&self, info: isize) -> Option<f64> {
        at_info(&self.values, self.availability_lag, info)
    }

    /// Index of the latest month observable at information date `info`.
    pub fn latest_month(&self, info: usize) -> Option<usize> {
        info.checked_sub(self.availability_lag)
    }
}

pub(crate) fn at_info(values: &[f64], lag: usize, info: isize) -> Option<f64> {
    let m = info - lag as isize;
    if m < 0 || m as usize >= values.len() {
        return None;
    }
    let v = values[m as usize];
    v.is_finite().then_some(v)
}

/// A raw macro predictor with its stationarity transform.
#[derive(Clone, Debug, PartialEq)]
pub struct Predictor {
    pub id: String,
    pub raw: Vec<f64>,
    pub availability_lag: usize,
    pub transform: TransformCode,
    /// Transformed series aligned with the date index (`NaN` where undefined).
    pub stationary: Vec<f64>,
}

impl Predictor {
    pub fn new(
        id: impl Into<String>,
        raw: Vec<f64>,
        availability_lag: usize,
        transform: TransformCode,
    ) -> Result<Self> {
        let stationary = transform_aligned(&raw, transform)?;
        Ok(Self {
            id: id.into(),
            raw,
            availability_lag,
            transform,
            stationary,
        })
    }

    pub fn at_info(&self, info: isize) -> Option<f64> {
        at_info(&self.stationary, self.availability_lag, info)
    }
}

/// Survey expectations of aggregate inflation.
///
/// `by_horizon[h][s]` is the expectation for month `s + h` formed at month `s`.
#[derive(Clone, Debug, PartialEq)]
pub struct Expectation {
    pub ids: Vec<String>,
    pub by_horizon: Vec<Vec<f64>>,
    pub availability_lag: usize,
}

impl Expectation {
    pub fn max_horizon(&self) -> Option<usize> {
        self.by_horizon.len().checked_sub(1)
    }

    /// Expectation for horizon `h` as observable at information date `info`.
    pub fn at_info(&self, h: usize, info: isize) -> Option<f64> {
        self.by_horizon
            .get(h)
            .and_then(|v| at_info(v, self.availability_lag, info))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SeriesPanel {
    pub dates: Vec<MonthId>,
    pub aggregate: Series,
    /// Keyed by `(level id, component id)`.
    pub disaggregates: BTreeMap<(String, String), Series>,
    pub predictors: BTreeMap<String, Predictor>,
    pub expectation: Option<Expectation>,
}

impl SeriesPanel {
    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    pub fn index_of(&self, date: MonthId) -> Option<usize> {
        let first = *self.dates.first()?;
        let idx = (date.0 - first.0) as isize;
        if idx < 0 || idx as usize >= self.dates.len() || self.dates[idx as usize] != date {
            return self.dates.iter().position(|d| *d == date);
        }
        Some(idx as usize)
    }

    /// Series for a component of a level; the aggregate level resolves to the
    /// aggregate series itself.
    pub fn component(&self, level: &str, component: &str) -> Option<&Series> {
        if let Some(s) = self
            .disaggregates
            .get(&(level.to_string(), component.to_string()))
        {
            return Some(s);
        }
        (component == self.aggregate.id).then_some(&self.aggregate)
    }

    /// Restricts the panel to what a forecaster knows at `origin`: dates after
    /// the origin are dropped, and every series is masked beyond its
    /// availability lag.
    pub fn truncated_at(&self, origin: usize) -> Result<Self> {
        let keep = origin + 1;
        let mask = |values: &[f64], lag: usize| -> Vec<f64> {
            values[..keep.min(values.len())]
                .iter()
                .enumerate()
                .map(|(m, v)| if m + lag <= origin { *v } else { f64::NAN })
                .collect()
        };
        let aggregate = Series {
            values: mask(&self.aggregate.values, self.aggregate.availability_lag),
            ..self.aggregate.clone()
        };
        let disaggregates = self
            .disaggregates
            .iter()
            .map(|(k, s)| {
                (
                    k.clone(),
                    Series {
                        values: mask(&s.values, s.availability_lag),
                        ..s.clone()
                    },
                )
            })
            .collect();
        let mut predictors = BTreeMap::new();
        for (k, p) in &self.predictors {
            predictors.insert(
                k.clone(),
                Predictor::new(
                    p.id.clone(),
                    mask(&p.raw, p.availability_lag),
                    p.availability_lag,
                    p.transform,
                )?,
            );
        }
        let expectation = self.expectation.as_ref().map(|e| Expectation {
            ids: e.ids.clone(),
            by_horizon: e
                .by_horizon
                .iter()
                .map(|v| mask(v, e.availability_lag))
                .collect(),
            availability_lag: e.availability_lag,
        });
        Ok(Self {
            dates: self.dates[..keep].to_vec(),
            aggregate,
            disaggregates,
            predictors,
            expectation,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DisaggregationScheme {
    pub level_id: String,
    pub component_ids: Vec<String>,
    /// Reference date of each weight row, strictly increasing.
    pub weight_dates: Vec<MonthId>,
    /// One row per reference date, one column per component.
    pub weights: Vec<Vec<f64>>,
    pub publication_lag: usize,
}

pub const AGGREGATE_LEVEL: &str = "aggregate";
pub const DEFAULT_WEIGHT_PUBLICATION_LAG: usize = 1;

impl DisaggregationScheme {
    /// The trivial one-component scheme for the aggregate itself.
    pub fn aggregate(component: impl Into<String>, dates: &[MonthId]) -> Self {
        Self {
            level_id: AGGREGATE_LEVEL.to_string(),
            component_ids: vec![component.into()],
            weight_dates: dates.to_vec(),
            weights: vec![vec![1.0]; dates.len()],
            publication_lag: 0,
        }
    }

    pub fn n_components(&self) -> usize {
        self.component_ids.len()
    }

    pub fn weight_row(&self, date: MonthId) -> Option<&[f64]> {
        self.weight_dates
            .binary_search(&date)
            .ok()
            .map(|i| self.weights[i].as_slice())
    }

    pub fn truncated_at(&self, origin: MonthId) -> Self {
        let cut = origin.offset(-(self.publication_lag as i32));
        let keep = self.weight_dates.partition_point(|d| *d <= cut);
        Self {
            weight_dates: self.weight_dates[..keep].to_vec(),
            weights: self.weights[..keep].to_vec(),
            ..self.clone()
        }
    }
}

/// Weight row observable at `origin`: the row with the greatest reference
/// date not after `origin - publication_lag`, renormalized to sum to one.
pub fn last_available_weights(scheme: &DisaggregationScheme, origin: MonthId) -> Result<Vec<f64>> {
    let cut = origin.offset(-(scheme.publication_lag as i32));
    let idx = scheme.weight_dates.partition_point(|d| *d <= cut);
    let row = idx
        .checked_sub(1)
        .map(|i| &scheme.weights[i])
        .ok_or_else(|| Error::NoWeightsAvailable {
            level: scheme.level_id.clone(),
            origin,
            lag: scheme.publication_lag,
        })?;
    let total: f64 = row.iter().sum();
    if !(total > 0.0) {
        return Err(Error::NoWeightsAvailable {
            level: scheme.level_id.clone(),
            origin,
            lag: scheme.publication_lag,
        });
    }
    Ok(row.iter().map(|w| w / total).collect())
}

#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    DateGap { after: MonthId, next: MonthId },
    LengthMismatch { series: String, expected: usize, got: usize },
    MissingObservation { series: String, date: MonthId },
    NegativeWeight { level: String, date: MonthId, component: String },
    WeightRowSum { level: String, date: MonthId, sum: f64 },
    MissingWeightRow { level: String, date: MonthId },
    WeightWidth { level: String, date: MonthId, expected: usize, got: usize },
    UnknownComponent { level: String, component: String },
    EmptyScheme { level: String },
    AggregateLevel { level: String, detail: String },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::DateGap { after, next } => write!(f, "date gap between {after} and {next}"),
            Violation::LengthMismatch {
                series,
                expected,
                got,
            } => write!(f, "series `{series}` has {got} values, expected {expected}"),
            Violation::MissingObservation { series, date } => {
                write!(f, "series `{series}` missing observation at {date}")
            }
            Violation::NegativeWeight {
                level,
                date,
                component,
            } => write!(f, "negative weight for `{component}` in level `{level}` at {date}"),
            Violation::WeightRowSum { level, date, sum } => {
                write!(f, "weights of level `{level}` at {date} sum to {sum}")
            }
            Violation::MissingWeightRow { level, date } => {
                write!(f, "no weight row for level `{level}` at {date}")
            }
            Violation::WeightWidth {
                level,
                date,
                expected,
                got,
            } => write!(f, "weight row of level `{level}` at {date} has {got} entries, expected {expected}"),
            Violation::UnknownComponent { level, component } => {
                write!(f, "component `{component}` of level `{level}` not in panel")
            }
            Violation::EmptyScheme { level } => write!(f, "level `{level}` has no components"),
            Violation::AggregateLevel { level, detail } => {
                write!(f, "aggregate level `{level}`: {detail}")
            }
        }
    }
}

pub const WEIGHT_SUM_TOLERANCE: f64 = 1e-8;

/// Checks every panel and scheme invariant; an empty report means the
/// inputs are well formed.
pub fn validate_panel(panel: &SeriesPanel, schemes: &[DisaggregationScheme]) -> Vec<Violation> {
    let mut out = Vec::new();
    let n = panel.len();
    for w in panel.dates.windows(2) {
        if w[1].0 != w[0].0 + 1 {
            out.push(Violation::DateGap {
                after: w[0],
                next: w[1],
            });
        }
    }

    let mut check_len = |id: &str, len: usize| {
        if len != n {
            out.push(Violation::LengthMismatch {
                series: id.to_string(),
                expected: n,
                got: len,
            });
        }
    };
    check_len(&panel.aggregate.id, panel.aggregate.values.len());
    for s in panel.disaggregates.values() {
        check_len(&s.id, s.values.len());
    }
    for p in panel.predictors.values() {
        check_len(&p.id, p.raw.len());
    }
    if let Some(e) = &panel.expectation {
        for (id, v) in e.ids.iter().zip(&e.by_horizon) {
            check_len(id, v.len());
        }
    }

    let mut missing = |s: &Series| {
        for (i, v) in s.values.iter().enumerate() {
            if !v.is_finite() {
                if let Some(d) = panel.dates.get(i) {
                    out.push(Violation::MissingObservation {
                        series: s.id.clone(),
                        date: *d,
                    });
                }
            }
        }
    };
    missing(&panel.aggregate);
    for s in panel.disaggregates.values() {
        missing(s);
    }

    for scheme in schemes {
        let level = &scheme.level_id;
        if scheme.component_ids.is_empty() {
            out.push(Violation::EmptyScheme {
                level: level.clone(),
            });
            continue;
        }
        if level == AGGREGATE_LEVEL && scheme.component_ids.len() != 1 {
            out.push(Violation::AggregateLevel {
                level: level.clone(),
                detail: format!("{} components, expected 1", scheme.component_ids.len()),
            });
        }
        for c in &scheme.component_ids {
            if panel.component(level, c).is_none() {
                out.push(Violation::UnknownComponent {
                    level: level.clone(),
                    component: c.clone(),
                });
            }
        }
        for (date, row) in scheme.weight_dates.iter().zip(&scheme.weights) {
            if row.len() != scheme.component_ids.len() {
                out.push(Violation::WeightWidth {
                    level: level.clone(),
                    date: *date,
                    expected: scheme.component_ids.len(),
                    got: row.len(),
                });
                continue;
            }
            for (c, w) in scheme.component_ids.iter().zip(row) {
                if !(*w >= 0.0) {
                    out.push(Violation::NegativeWeight {
                        level: level.clone(),
                        date: *date,
                        component: c.clone(),
                    });
                }
            }
            let sum: f64 = row.iter().sum();
            if !((sum - 1.0).abs() <= WEIGHT_SUM_TOLERANCE) {
                out.push(Violation::WeightRowSum {
                    level: level.clone(),
                    date: *date,
                    sum,
                });
            }
            if level == AGGREGATE_LEVEL && row.iter().any(|w| *w != 1.0) {
                out.push(Violation::AggregateLevel {
                    level: level.clone(),
                    detail: format!("weight at {date} is not 1"),
                });
            }
        }
        if level != AGGREGATE_LEVEL {
            for d in &panel.dates {
                if scheme.weight_row(*d).is_none() {
                    out.push(Violation::MissingWeightRow {
                        level: level.clone(),
                        date: *d,
                    });
                }
            }
        }
    }
    out
}

/// Component id used for bottom-up aggregate records in the forecast store.
pub const AGGREGATE_COMPONENT: &str = "AGGREGATE";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForecastRecord {
    pub model: String,
    pub level: String,
    pub component: String,
    pub origin: MonthId,
    pub horizon: usize,
    pub value: f64,
}
