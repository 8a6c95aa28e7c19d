//! Expanding-window direct forecasting over the (origin, horizon, level,
//! component, model) grid, bottom-up aggregation, forecast combination and
//! 12-month accumulation.

use std::collections::{BTreeMap, BTreeSet};

use log::{info, warn};
use rayon::prelude::*;

use crate::data_model::{
    last_available_weights, DisaggregationScheme, ForecastRecord, MonthId, SeriesPanel, AGGREGATE_COMPONENT,
    AGGREGATE_LEVEL,
};
use crate::error::{Error, Result};
use crate::factor_models::{FactorBlock, FactorRule};
use crate::model::{fit_cell, origin_factors, CellInputs, Estimator, ModelSpec};
use crate::window::Cell;

/// Model id under which the panel's expectations are stored as forecasts.
pub const EXPECTATION_MODEL: &str = "Expectation";

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RecordKey {
    pub model: String,
    pub level: String,
    pub component: String,
    pub origin: MonthId,
    pub horizon: usize,
}

impl RecordKey {
    pub fn new(model: &str, level: &str, component: &str, origin: MonthId, horizon: usize) -> Self {
        Self {
            model: model.to_string(),
            level: level.to_string(),
            component: component.to_string(),
            origin,
            horizon,
        }
    }
}

/// Append-only forecast collection with unique keys.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ForecastStore {
    records: BTreeMap<RecordKey, f64>,
}

impl ForecastStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, key: RecordKey, value: f64) -> Result<()> {
        use std::collections::btree_map::Entry;
        match self.records.entry(key) {
            Entry::Occupied(e) => Err(Error::DuplicateKey(format!("{:?}", e.key()))),
            Entry::Vacant(e) => {
                e.insert(value);
                Ok(())
            }
        }
    }

    pub fn from_records(records: impl IntoIterator<Item = ForecastRecord>) -> Result<Self> {
        let mut s = Self::new();
        for r in records {
            s.push(r)?;
        }
        Ok(s)
    }

    pub fn push(&mut self, r: ForecastRecord) -> Result<()> {
        self.insert(RecordKey::new(&r.model, &r.level, &r.component, r.origin, r.horizon), r.value)
    }

    pub fn get(&self, model: &str, level: &str, component: &str, origin: MonthId, horizon: usize) -> Option<f64> {
        self.records
            .get(&RecordKey::new(model, level, component, origin, horizon))
            .copied()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&RecordKey, f64)> {
        self.records.iter().map(|(k, v)| (k, *v))
    }

    /// Records in key order.
    pub fn records(&self) -> Vec<ForecastRecord> {
        self.iter()
            .map(|(k, value)| ForecastRecord {
                model: k.model.clone(),
                level: k.level.clone(),
                component: k.component.clone(),
                origin: k.origin,
                horizon: k.horizon,
                value,
            })
            .collect()
    }

    pub fn models(&self) -> BTreeSet<String> {
        self.records.keys().map(|k| k.model.clone()).collect()
    }

    pub fn levels(&self) -> BTreeSet<String> {
        self.records.keys().map(|k| k.level.clone()).collect()
    }
}

/// Nonzero-coefficient base variables of one fitted cell.
#[derive(Clone, Debug, PartialEq)]
pub struct SelectionRecord {
    pub model: String,
    pub level: String,
    pub component: String,
    pub origin: MonthId,
    pub horizon: usize,
    pub features: Vec<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CellFailure {
    pub key: RecordKey,
    pub error: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Accumulation {
    /// `100 (prod (1 + x/100) - 1)`.
    #[default]
    Compound,
    Sum,
}

#[derive(Clone, Debug)]
pub struct ExperimentPlan {
    pub panel: SeriesPanel,
    pub schemes: Vec<DisaggregationScheme>,
    /// Models estimated at each level, keyed by level id.
    pub models: BTreeMap<String, Vec<ModelSpec>>,
    pub horizons: Vec<usize>,
    pub first_origin: MonthId,
    pub last_origin: MonthId,
    pub seed: u64,
    /// Store the panel's expectations as forecasts of the aggregate.
    pub store_expectation: bool,
    /// Run cells one after another in canonical order.
    pub sequential: bool,
}

impl ExperimentPlan {
    /// Every model at every level, horizons 0..=11.
    pub fn new(
        panel: SeriesPanel,
        schemes: Vec<DisaggregationScheme>,
        models: Vec<ModelSpec>,
        first_origin: MonthId,
        last_origin: MonthId,
        seed: u64,
    ) -> Self {
        let by_level = schemes
            .iter()
            .map(|s| (s.level_id.clone(), models.clone()))
            .collect();
        Self {
            panel,
            schemes,
            models: by_level,
            horizons: (0..12).collect(),
            first_origin,
            last_origin,
            seed,
            store_expectation: true,
            sequential: false,
        }
    }

    pub fn origin_range(&self) -> Result<std::ops::RangeInclusive<usize>> {
        let first = self.panel.index_of(self.first_origin).ok_or_else(|| Error::Unknown {
            kind: "first origin",
            id: self.first_origin.to_string(),
        })?;
        let last = self.panel.index_of(self.last_origin).ok_or_else(|| Error::Unknown {
            kind: "last origin",
            id: self.last_origin.to_string(),
        })?;
        if first > last {
            return Err(Error::InvalidSpec(format!(
                "first origin {} after last origin {}",
                self.first_origin, self.last_origin
            )));
        }
        Ok(first..=last)
    }

    pub fn scheme(&self, level: &str) -> Option<&DisaggregationScheme> {
        self.schemes.iter().find(|s| s.level_id == level)
    }

    pub fn validate(&self) -> Result<()> {
        self.origin_range()?;
        if self.horizons.is_empty() {
            return Err(Error::InvalidSpec("horizon set is empty".into()));
        }
        let unique: BTreeSet<_> = self.horizons.iter().collect();
        if unique.len() != self.horizons.len() {
            return Err(Error::InvalidSpec("horizon set has duplicates".into()));
        }
        for (level, specs) in &self.models {
            if self.scheme(level).is_none() {
                return Err(Error::Unknown {
                    kind: "level",
                    id: level.clone(),
                });
            }
            let mut ids = BTreeSet::new();
            for s in specs {
                s.validate()?;
                if s.id == EXPECTATION_MODEL || !ids.insert(s.id.as_str()) {
                    return Err(Error::InvalidSpec(format!(
                        "model id `{}` repeated or reserved at level `{level}`",
                        s.id
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default)]
pub struct RunOutput {
    pub store: ForecastStore,
    pub selections: Vec<SelectionRecord>,
    pub failures: Vec<CellFailure>,
    /// Cells whose model fell back to a simpler specification.
    pub fallbacks: Vec<RecordKey>,
}

fn fnv1a(bytes: &[u8], mut h: u64) -> u64 {
    for b in bytes {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Seed of a stochastic cell, a function of the master seed and the cell's
/// identity only.
pub fn cell_seed(master: u64, key: &RecordKey) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    h = fnv1a(&master.to_le_bytes(), h);
    for part in [&key.model, &key.level, &key.component] {
        h = fnv1a(part.as_bytes(), h);
        h = fnv1a(&[0xff], h);
    }
    h = fnv1a(&key.origin.0.to_le_bytes(), h);
    fnv1a(&(key.horizon as u64).to_le_bytes(), h)
}

#[derive(Clone, Debug)]
enum CellResult {
    Forecast {
        key: RecordKey,
        value: f64,
        selected: Option<Vec<String>>,
        fallback: bool,
    },
    Failed(CellFailure),
}

/// Forecasts of every model of a level for one (component, origin, horizon).
/// `factors` holds precomputed factor structures for this origin.
pub fn forecast_cell(
    panel: &SeriesPanel,
    scheme: &DisaggregationScheme,
    component: &str,
    origin: usize,
    horizon: usize,
    specs: &[ModelSpec],
    factors: &[(FactorRule, &FactorBlock)],
    master_seed: u64,
) -> Vec<(RecordKey, Result<crate::model::CellOutcome>)> {
    let origin_date = panel.dates[origin];
    let level = scheme.level_id.as_str();
    let cell = Cell::new(panel, scheme, component, origin, horizon, 3);
    let cell = match cell {
        Ok(c) => c,
        Err(e) => {
            let msg = e.to_string();
            return specs
                .iter()
                .filter(|s| s.estimator != Estimator::Combination)
                .map(|s| {
                    (
                        RecordKey::new(&s.id, level, component, origin_date, horizon),
                        Err(Error::Unavailable(msg.clone())),
                    )
                })
                .collect();
        }
    };
    let mut inputs = CellInputs::new(cell, None);
    specs
        .iter()
        .filter(|s| s.estimator != Estimator::Combination)
        .map(|spec| {
            let key = RecordKey::new(&spec.id, level, component, origin_date, horizon);
            inputs.factors = factors
                .iter()
                .find(|(rule, _)| *rule == spec.factor_rule)
                .map(|(_, fb)| *fb);
            let seed = cell_seed(master_seed, &key);
            let out = fit_cell(&inputs, spec, seed);
            (key, out)
        })
        .collect()
}

/// Runs the full grid. Per-cell errors are recorded and the run continues.
pub fn run_expanding_window(plan: &ExperimentPlan) -> Result<RunOutput> {
    plan.validate()?;
    let panel = &plan.panel;
    let origins: Vec<usize> = plan.origin_range()?.collect();

    // factor structures shared by every cell of an origin
    let mut rules: Vec<FactorRule> = Vec::new();
    for spec in plan.models.values().flatten() {
        if spec.estimator.uses_factors() && !rules.contains(&spec.factor_rule) {
            rules.push(spec.factor_rule);
        }
    }
    let jobs: Vec<(usize, FactorRule)> = origins
        .iter()
        .flat_map(|&o| rules.iter().map(move |&r| (o, r)))
        .collect();
    let compute = |&(o, r): &(usize, FactorRule)| match origin_factors(panel, o, r) {
        Ok(fb) => Some(fb),
        Err(e) => {
            warn!("factor extraction failed at {}: {e}", panel.dates[o]);
            None
        }
    };
    let blocks: Vec<Option<FactorBlock>> = if plan.sequential {
        jobs.iter().map(compute).collect()
    } else {
        jobs.par_iter().map(compute).collect()
    };
    let factor_table: BTreeMap<usize, Vec<(FactorRule, &FactorBlock)>> = {
        let mut t: BTreeMap<usize, Vec<(FactorRule, &FactorBlock)>> = BTreeMap::new();
        for ((o, r), b) in jobs.iter().zip(&blocks) {
            if let Some(b) = b {
                t.entry(*o).or_default().push((*r, b));
            }
        }
        t
    };

    // canonical cell order: level, component, origin, horizon
    let mut cells = Vec::new();
    for scheme in &plan.schemes {
        let Some(specs) = plan.models.get(&scheme.level_id) else {
            continue;
        };
        if specs.iter().all(|s| s.estimator == Estimator::Combination) {
            continue;
        }
        for comp in &scheme.component_ids {
            for &o in &origins {
                for &h in &plan.horizons {
                    cells.push((scheme, specs.as_slice(), comp.as_str(), o, h));
                }
            }
        }
    }
    info!("running {} cells over {} origins", cells.len(), origins.len());
    let no_factors = Vec::new();
    let run = |&(scheme, specs, comp, o, h): &(&DisaggregationScheme, &[ModelSpec], &str, usize, usize)| {
        let factors = factor_table.get(&o).unwrap_or(&no_factors);
        forecast_cell(panel, scheme, comp, o, h, specs, factors, plan.seed)
            .into_iter()
            .map(|(key, out)| match out {
                Ok(o) => CellResult::Forecast {
                    key,
                    value: o.forecast,
                    selected: o.selected,
                    fallback: o.fallback,
                },
                Err(e) => CellResult::Failed(CellFailure {
                    key,
                    error: e.to_string(),
                }),
            })
            .collect::<Vec<_>>()
    };
    let results: Vec<Vec<CellResult>> = if plan.sequential {
        cells.iter().map(run).collect()
    } else {
        cells.par_iter().map(run).collect()
    };

    let mut out = RunOutput::default();
    for r in results.into_iter().flatten() {
        match r {
            CellResult::Forecast {
                key,
                value,
                selected,
                fallback,
            } => {
                if !value.is_finite() {
                    out.failures.push(CellFailure {
                        key,
                        error: "non-finite forecast".into(),
                    });
                    continue;
                }
                if let Some(features) = selected {
                    out.selections.push(SelectionRecord {
                        model: key.model.clone(),
                        level: key.level.clone(),
                        component: key.component.clone(),
                        origin: key.origin,
                        horizon: key.horizon,
                        features,
                    });
                }
                if fallback {
                    out.fallbacks.push(key.clone());
                }
                out.store.insert(key, value)?;
            }
            CellResult::Failed(f) => out.failures.push(f),
        }
    }
    info!(
        "{} component forecasts, {} failed cells",
        out.store.len(),
        out.failures.len()
    );

    // bottom-up aggregates
    for scheme in &plan.schemes {
        let Some(specs) = plan.models.get(&scheme.level_id) else {
            continue;
        };
        for spec in specs.iter().filter(|s| s.estimator != Estimator::Combination) {
            for &o in &origins {
                for &h in &plan.horizons {
                    let origin = panel.dates[o];
                    let key = RecordKey::new(&spec.id, &scheme.level_id, AGGREGATE_COMPONENT, origin, h);
                    match aggregate_bottom_up(&out.store, &scheme.level_id, &spec.id, origin, h, scheme) {
                        Ok(v) => out.store.insert(key, v)?,
                        Err(e) => out.failures.push(CellFailure {
                            key,
                            error: e.to_string(),
                        }),
                    }
                }
            }
        }
    }

    // expectations as a benchmark forecast
    let expectation_at = |o: usize, h: usize| {
        panel
            .expectation
            .as_ref()
            .and_then(|e| e.at_info(h, o as isize))
    };
    if plan.store_expectation {
        for &o in &origins {
            for &h in &plan.horizons {
                if let Some(v) = expectation_at(o, h) {
                    out.store.insert(
                        RecordKey::new(EXPECTATION_MODEL, AGGREGATE_LEVEL, AGGREGATE_COMPONENT, panel.dates[o], h),
                        v,
                    )?;
                }
            }
        }
    }

    // combinations
    for scheme in &plan.schemes {
        let Some(specs) = plan.models.get(&scheme.level_id) else {
            continue;
        };
        let members: Vec<&str> = specs
            .iter()
            .filter(|s| s.estimator != Estimator::Combination)
            .map(|s| s.id.as_str())
            .collect();
        for combo in specs.iter().filter(|s| s.estimator == Estimator::Combination) {
            for &o in &origins {
                for &h in &plan.horizons {
                    let origin = panel.dates[o];
                    let key = RecordKey::new(&combo.id, &scheme.level_id, AGGREGATE_COMPONENT, origin, h);
                    let Some(e) = expectation_at(o, h) else {
                        out.failures.push(CellFailure {
                            key,
                            error: "expectation unavailable for the combination".into(),
                        });
                        continue;
                    };
                    let c = combine_forecasts(&out.store, &scheme.level_id, origin, h, e, &members);
                    if c.expectation_only {
                        out.fallbacks.push(key.clone());
                    }
                    out.store.insert(key, c.value)?;
                }
            }
        }
    }
    Ok(out)
}

/// Bottom-up aggregate: last available weights at the origin times the
/// component forecasts of `model`.
pub fn aggregate_bottom_up(
    store: &ForecastStore,
    level: &str,
    model: &str,
    origin: MonthId,
    horizon: usize,
    scheme: &DisaggregationScheme,
) -> Result<f64> {
    let weights = last_available_weights(scheme, origin)?;
    let mut missing = Vec::new();
    let mut forecasts = Vec::with_capacity(weights.len());
    for c in &scheme.component_ids {
        match store.get(model, level, c, origin, horizon) {
            Some(v) => forecasts.push(v),
            None => missing.push(c.clone()),
        }
    }
    if !missing.is_empty() {
        return Err(Error::MissingComponents(missing));
    }
    Ok(weights.iter().zip(&forecasts).map(|(w, f)| w * f).sum())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Combined {
    pub value: f64,
    /// Number of model forecasts averaged with the expectation.
    pub members: usize,
    /// No model forecast was available.
    pub expectation_only: bool,
}

/// Mean of the available aggregated forecasts of `models` at a level and the
/// expectation.
pub fn combine_forecasts(
    store: &ForecastStore,
    level: &str,
    origin: MonthId,
    horizon: usize,
    expectation: f64,
    models: &[&str],
) -> Combined {
    let values: Vec<f64> = models
        .iter()
        .filter_map(|m| store.get(m, level, AGGREGATE_COMPONENT, origin, horizon))
        .collect();
    let m = values.len();
    Combined {
        value: (values.iter().sum::<f64>() + expectation) / (m + 1) as f64,
        members: m,
        expectation_only: m == 0,
    }
}

/// Inflation accumulated over twelve monthly rates (percent).
pub fn accumulate_12m(monthly: &[f64], rule: Accumulation) -> Result<f64> {
    if monthly.len() != 12 {
        let missing = (monthly.len()..12).collect();
        return Err(Error::MissingHorizons(missing));
    }
    Ok(match rule {
        Accumulation::Compound => 100.0 * (monthly.iter().map(|x| 1.0 + x / 100.0).product::<f64>() - 1.0),
        Accumulation::Sum => monthly.iter().sum(),
    })
}

/// 12-month accumulated forecast of a stored series from horizons 0..=11.
pub fn accumulate_from_store(
    store: &ForecastStore,
    model: &str,
    level: &str,
    component: &str,
    origin: MonthId,
    rule: Accumulation,
) -> Result<f64> {
    let mut values = Vec::with_capacity(12);
    let mut missing = Vec::new();
    for h in 0..12 {
        match store.get(model, level, component, origin, h) {
            Some(v) => values.push(v),
            None => missing.push(h),
        }
    }
    if !missing.is_empty() {
        return Err(Error::MissingHorizons(missing));
    }
    accumulate_12m(&values, rule)
}
