//! Per-cell estimation context and information-date blocks.

use nalgebra::DMatrix;

use crate::data_model::{DisaggregationScheme, Series, SeriesPanel};
use crate::error::{Error, Result};
use crate::preprocessing::{add_controls, standardize_matrix, DesignBuilder, FeatureKind};

/// One (level, component, origin, horizon) estimation problem.
#[derive(Clone, Copy)]
pub struct Cell<'a> {
    pub panel: &'a SeriesPanel,
    pub scheme: &'a DisaggregationScheme,
    pub target: &'a Series,
    /// Index of the forecast origin in the panel's date axis.
    pub origin: usize,
    pub horizon: usize,
    pub lag_depth: usize,
}

impl<'a> Cell<'a> {
    pub fn new(
        panel: &'a SeriesPanel,
        scheme: &'a DisaggregationScheme,
        component: &str,
        origin: usize,
        horizon: usize,
        lag_depth: usize,
    ) -> Result<Self> {
        let target = panel
            .component(&scheme.level_id, component)
            .ok_or_else(|| Error::Unknown {
                kind: "component",
                id: component.to_string(),
            })?;
        if origin >= panel.len() {
            return Err(Error::Unknown {
                kind: "origin index",
                id: origin.to_string(),
            });
        }
        Ok(Self {
            panel,
            scheme,
            target,
            origin,
            horizon,
            lag_depth,
        })
    }

    pub fn builder(&self) -> DesignBuilder<'a> {
        DesignBuilder::new(self.panel, self.target, self.origin, self.horizon)
    }

    /// Own lags, lags of the other components of the level, the expectation
    /// and seasonal dummies.
    pub fn add_controls<'b>(&self, b: &mut DesignBuilder<'b>) -> Result<()>
    where
        'a: 'b,
    {
        add_controls(
            b,
            self.panel,
            self.scheme,
            self.target,
            self.lag_depth,
            self.horizon,
            true,
        )
    }

    pub fn add_predictor_lags<'b>(&self, b: &mut DesignBuilder<'b>, p: usize)
    where
        'a: 'b,
    {
        for pr in self.panel.predictors.values() {
            b.lags(&pr.id, FeatureKind::Predictor, p, move |s| pr.at_info(s));
        }
    }
}

/// Columns indexed by information date: row `r` holds values observable at
/// information date `first_info + r`.
#[derive(Clone, Debug, PartialEq)]
pub struct InfoBlock {
    pub first_info: usize,
    pub values: DMatrix<f64>,
    pub names: Vec<String>,
    pub kind: FeatureKind,
}

impl InfoBlock {
    pub fn at(&self, col: usize, info: isize) -> Option<f64> {
        let r = info - self.first_info as isize;
        if r < 0 || r as usize >= self.values.nrows() {
            return None;
        }
        Some(self.values[(r as usize, col)])
    }

    pub fn n_rows(&self) -> usize {
        self.values.nrows()
    }

    /// Adds `p` lags of every column to a design.
    pub fn add_lags<'b>(&'b self, b: &mut DesignBuilder<'b>, p: usize) {
        for (k, name) in self.names.iter().enumerate() {
            b.lags(name, self.kind, p, move |s| self.at(k, s));
        }
    }
}

/// Standardized predictor matrix over the longest run of information dates
/// ending at `origin` on which every requested predictor is observable.
/// `ids = None` takes all predictors.
pub fn predictor_block(panel: &SeriesPanel, origin: usize, ids: Option<&[String]>) -> Result<InfoBlock> {
    let preds: Vec<_> = match ids {
        None => panel.predictors.values().collect(),
        Some(ids) => ids
            .iter()
            .map(|id| {
                panel.predictors.get(id).ok_or_else(|| Error::Unknown {
                    kind: "predictor",
                    id: id.clone(),
                })
            })
            .collect::<Result<_>>()?,
    };
    if preds.is_empty() {
        return Err(Error::Empty("predictor block"));
    }
    let available = |s: usize| preds.iter().all(|p| p.at_info(s as isize).is_some());
    let mut first = origin + 1;
    while first > 0 && available(first - 1) {
        first -= 1;
    }
    if first > origin {
        return Err(Error::InsufficientHistory(
            "predictors unobservable at origin".into(),
        ));
    }
    let n = origin + 1 - first;
    if n < 2 {
        return Err(Error::InsufficientHistory("predictor block has < 2 rows".into()));
    }
    let raw = DMatrix::from_fn(n, preds.len(), |r, j| {
        preds[j].at_info((first + r) as isize).expect("checked availability")
    });
    let (values, ..) = standardize_matrix(&raw, &[]);
    Ok(InfoBlock {
        first_info: first,
        values,
        names: preds.iter().map(|p| p.id.clone()).collect(),
        kind: FeatureKind::Predictor,
    })
}
