//! Out-of-sample accuracy: RMSE, ratios against a benchmark, one-tailed
//! Diebold-Mariano tests, sub-period slicing and selection frequencies.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use log::warn;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::data_model::{MonthId, Series, AGGREGATE_COMPONENT, AGGREGATE_LEVEL};
use crate::error::{Error, Result};
use crate::harness::{accumulate_12m, Accumulation, ForecastStore, SelectionRecord};

pub fn mse(errors: &[f64]) -> Result<f64> {
    if errors.is_empty() {
        return Err(Error::Empty("forecast errors"));
    }
    Ok(errors.iter().map(|e| e * e).sum::<f64>() / errors.len() as f64)
}

pub fn rmse(errors: &[f64]) -> Result<f64> {
    mse(errors).map(f64::sqrt)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum LongRunVariance {
    /// Bartlett kernel with as many lags as the forecast horizon.
    #[default]
    NeweyWest,
    Plain,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DmResult {
    pub statistic: f64,
    /// `P(Z <= statistic)`: small when the model beats the benchmark.
    pub p_value: f64,
    /// The loss differential has zero long-run variance.
    pub degenerate: bool,
}

/// Smallest sample accepted by [`dm_test`].
pub const DM_MIN_OBS: usize = 10;

/// Diebold-Mariano test of squared-error loss, one-tailed against the
/// alternative that the model is more accurate than the benchmark.
pub fn dm_test(model: &[f64], benchmark: &[f64], horizon: usize, variance: LongRunVariance) -> Result<DmResult> {
    if model.len() != benchmark.len() {
        return Err(Error::WidthMismatch {
            expected: benchmark.len(),
            got: model.len(),
        });
    }
    let t = model.len();
    if t < DM_MIN_OBS {
        return Err(Error::InsufficientHistory(format!(
            "Diebold-Mariano test needs {DM_MIN_OBS} observations, got {t}"
        )));
    }
    let d: Vec<f64> = model.iter().zip(benchmark).map(|(m, b)| m * m - b * b).collect();
    let tf = t as f64;
    let mean = d.iter().sum::<f64>() / tf;
    let autocov = |k: usize| (k..t).map(|i| (d[i] - mean) * (d[i - k] - mean)).sum::<f64>() / tf;
    let mut lrv = autocov(0);
    if variance == LongRunVariance::NeweyWest {
        let lags = horizon.min(t - 1);
        for k in 1..=lags {
            lrv += 2.0 * (1.0 - k as f64 / (lags as f64 + 1.0)) * autocov(k);
        }
    }
    if !(lrv > 0.0) || !lrv.is_finite() {
        return Ok(DmResult {
            statistic: 0.0,
            p_value: 0.5,
            degenerate: true,
        });
    }
    let statistic = mean / (lrv / tf).sqrt();
    Ok(DmResult {
        statistic,
        p_value: Normal::standard().cdf(statistic),
        degenerate: false,
    })
}

/// Significance stars at the 1%, 5% and 10% levels.
pub fn stars(p: f64) -> &'static str {
    if p < 0.01 {
        "***"
    } else if p < 0.05 {
        "**"
    } else if p < 0.10 {
        "*"
    } else {
        ""
    }
}

/// Inclusive date window; open ends are unbounded.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Subperiod {
    pub name: String,
    pub start: Option<MonthId>,
    pub end: Option<MonthId>,
}

impl Subperiod {
    pub fn full() -> Self {
        Self {
            name: "full".into(),
            start: None,
            end: None,
        }
    }

    pub fn contains(&self, d: MonthId) -> bool {
        self.start.is_none_or(|s| d >= s) && self.end.is_none_or(|e| d <= e)
    }
}

/// Which date decides sub-period membership.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Slicing {
    #[default]
    Origin,
    Target,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum HorizonKey {
    Month(usize),
    /// Inflation accumulated over horizons 0..=11.
    Accumulated,
}

impl fmt::Display for HorizonKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HorizonKey::Month(h) => write!(f, "{h}"),
            HorizonKey::Accumulated => f.write_str("12m"),
        }
    }
}

impl std::str::FromStr for HorizonKey {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "12m" {
            return Ok(HorizonKey::Accumulated);
        }
        s.parse()
            .map(HorizonKey::Month)
            .map_err(|_| Error::Parse(format!("bad horizon `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReportRow {
    pub model: String,
    pub level: String,
    pub horizon: HorizonKey,
    pub subperiod: String,
    pub n: usize,
    pub rmse: f64,
    pub ratio: f64,
    /// `None` when the sample is too short for the test.
    pub dm: Option<DmResult>,
}

impl ReportRow {
    pub fn flag(&self) -> &'static str {
        match self.dm {
            None => "short",
            Some(d) if d.degenerate => "degenerate",
            Some(_) => "",
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct EvaluationReport {
    pub benchmark: String,
    pub rows: Vec<ReportRow>,
    /// Keys left out because the benchmark had no forecasts for them.
    pub skipped: Vec<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReportOptions {
    pub benchmark: String,
    /// Always evaluated in addition to the full sample.
    pub subperiods: Vec<Subperiod>,
    pub slicing: Slicing,
    pub variance: LongRunVariance,
    /// Add a 12-month accumulated column using this rule.
    pub accumulation: Option<Accumulation>,
}

impl ReportOptions {
    pub fn new(benchmark: &str) -> Self {
        Self {
            benchmark: benchmark.to_string(),
            subperiods: Vec::new(),
            slicing: Slicing::Origin,
            variance: LongRunVariance::NeweyWest,
            accumulation: Some(Accumulation::Compound),
        }
    }
}

/// Realized aggregate inflation by month.
pub struct Realized<'a> {
    pub first: MonthId,
    pub series: &'a Series,
}

impl Realized<'_> {
    pub fn at(&self, d: MonthId) -> Option<f64> {
        let i = d.0 - self.first.0;
        if i < 0 {
            return None;
        }
        self.series.values.get(i as usize).copied().filter(|v| v.is_finite())
    }

    fn accumulated(&self, origin: MonthId, rule: Accumulation) -> Option<f64> {
        let v: Option<Vec<f64>> = (0..12).map(|h| self.at(origin.offset(h))).collect();
        accumulate_12m(&v?, rule).ok()
    }
}

/// Per-origin (forecast, benchmark, realized, target date) tuples of one key.
type Triple = (MonthId, f64, f64, f64, MonthId);

/// Compares the aggregate-component forecasts of every model and level with
/// the benchmark model. The benchmark is looked up at the same level first and
/// at the aggregate level otherwise.
pub fn build_report(store: &ForecastStore, realized: &Realized<'_>, opts: &ReportOptions) -> EvaluationReport {
    let mut by_key: BTreeMap<(String, String), BTreeMap<usize, Vec<MonthId>>> = BTreeMap::new();
    for (k, _) in store.iter().filter(|(k, _)| k.component == AGGREGATE_COMPONENT) {
        by_key
            .entry((k.model.clone(), k.level.clone()))
            .or_default()
            .entry(k.horizon)
            .or_default()
            .push(k.origin);
    }
    let mut periods = vec![Subperiod::full()];
    periods.extend(opts.subperiods.iter().cloned());

    let mut report = EvaluationReport {
        benchmark: opts.benchmark.clone(),
        ..Default::default()
    };
    for ((model, level), horizons) in &by_key {
        let bench_level = if by_key.contains_key(&(opts.benchmark.clone(), level.clone())) {
            level.as_str()
        } else {
            AGGREGATE_LEVEL
        };
        if !by_key.contains_key(&(opts.benchmark.clone(), bench_level.to_string())) {
            warn!("no `{}` forecasts to compare with {model} at {level}", opts.benchmark);
            report.skipped.push(format!("{model}/{level}"));
            continue;
        }
        let mut keyed: Vec<(HorizonKey, usize, Vec<Triple>)> = Vec::new();
        for (&h, origins) in horizons {
            let triples = origins
                .iter()
                .filter_map(|&o| {
                    let f = store.get(model, level, AGGREGATE_COMPONENT, o, h)?;
                    let b = store.get(&opts.benchmark, bench_level, AGGREGATE_COMPONENT, o, h)?;
                    let target = o.offset(h as i32);
                    Some((o, f, b, realized.at(target)?, target))
                })
                .collect();
            keyed.push((HorizonKey::Month(h), h, triples));
        }
        if let Some(rule) = opts.accumulation {
            let origins: BTreeSet<MonthId> = horizons.values().flatten().copied().collect();
            let acc = |m: &str, l: &str, o: MonthId| {
                let v: Option<Vec<f64>> = (0..12).map(|h| store.get(m, l, AGGREGATE_COMPONENT, o, h)).collect();
                accumulate_12m(&v?, rule).ok()
            };
            let triples: Vec<Triple> = origins
                .iter()
                .filter_map(|&o| {
                    Some((
                        o,
                        acc(model, level, o)?,
                        acc(&opts.benchmark, bench_level, o)?,
                        realized.accumulated(o, rule)?,
                        o.offset(11),
                    ))
                })
                .collect();
            if !triples.is_empty() {
                keyed.push((HorizonKey::Accumulated, 11, triples));
            }
        }
        for (key, lag, triples) in keyed {
            for p in &periods {
                let inside: Vec<&Triple> = triples
                    .iter()
                    .filter(|t| match opts.slicing {
                        Slicing::Origin => p.contains(t.0),
                        Slicing::Target => p.contains(t.4),
                    })
                    .collect();
                if inside.is_empty() {
                    continue;
                }
                let em: Vec<f64> = inside.iter().map(|t| t.3 - t.1).collect();
                let eb: Vec<f64> = inside.iter().map(|t| t.3 - t.2).collect();
                let r_m = rmse(&em).expect("nonempty");
                let r_b = rmse(&eb).expect("nonempty");
                let ratio = if model == &opts.benchmark && level == bench_level {
                    1.0
                } else {
                    r_m / r_b
                };
                report.rows.push(ReportRow {
                    model: model.clone(),
                    level: level.clone(),
                    horizon: key,
                    subperiod: p.name.clone(),
                    n: inside.len(),
                    rmse: r_m,
                    ratio,
                    dm: dm_test(&em, &eb, lag, opts.variance).ok(),
                });
            }
        }
    }
    report
}

/// Table of RMSE ratios for one level and sub-period: one line per model,
/// one column per horizon, with significance stars from the DM p-values.
pub fn format_table(report: &EvaluationReport, level: &str, subperiod: &str) -> String {
    let rows: Vec<&ReportRow> = report
        .rows
        .iter()
        .filter(|r| r.level == level && r.subperiod == subperiod)
        .collect();
    let horizons: BTreeSet<HorizonKey> = rows.iter().map(|r| r.horizon).collect();
    let models: Vec<&str> = {
        let mut seen: Vec<&str> = Vec::new();
        for r in &rows {
            if !seen.contains(&r.model.as_str()) {
                seen.push(&r.model);
            }
        }
        seen
    };
    let width = models.iter().map(|m| m.len()).max().unwrap_or(5).max(5);
    let mut out = format!(
        "level {level}, {subperiod} sample, RMSE ratio to {}\n{:width$}",
        report.benchmark, "model"
    );
    for h in &horizons {
        let label = match h {
            HorizonKey::Month(h) => format!("h={h}"),
            HorizonKey::Accumulated => "12m".to_string(),
        };
        out.push_str(&format!(" {label:>9}"));
    }
    out.push('\n');
    for m in models {
        out.push_str(&format!("{m:width$}"));
        for h in &horizons {
            let cell = rows
                .iter()
                .find(|r| r.model == m && r.horizon == *h)
                .map(|r| {
                    let s = r.dm.filter(|d| !d.degenerate).map_or("", |d| stars(d.p_value));
                    format!("{:.3}{s}", r.ratio)
                })
                .unwrap_or_else(|| "-".into());
            out.push_str(&format!(" {cell:>9}"));
        }
        out.push('\n');
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct SelectionFrequency {
    pub model: String,
    pub level: String,
    pub component: String,
    pub horizon: usize,
    pub feature: String,
    /// Share of windows in which any lag of the feature had a nonzero
    /// coefficient.
    pub frequency: f64,
}

/// Selection frequencies per (model, level, component, horizon). Every base
/// variable selected at some horizon of a (model, level, component) is listed
/// at all of its horizons.
pub fn selection_frequencies(records: &[SelectionRecord]) -> Vec<SelectionFrequency> {
    type Group = (String, String, String);
    let mut windows: BTreeMap<(Group, usize), usize> = BTreeMap::new();
    let mut hits: BTreeMap<(Group, usize), BTreeMap<String, usize>> = BTreeMap::new();
    let mut universe: BTreeMap<Group, BTreeSet<String>> = BTreeMap::new();
    for r in records {
        let g = (r.model.clone(), r.level.clone(), r.component.clone());
        *windows.entry((g.clone(), r.horizon)).or_default() += 1;
        let unique: BTreeSet<&String> = r.features.iter().collect();
        let counts = hits.entry((g.clone(), r.horizon)).or_default();
        for f in unique {
            *counts.entry(f.clone()).or_default() += 1;
            universe.entry(g.clone()).or_default().insert(f.clone());
        }
    }
    let mut out = Vec::new();
    for ((g, h), n) in &windows {
        let counts = hits.get(&(g.clone(), *h));
        for f in universe.get(g).into_iter().flatten() {
            let c = counts.and_then(|c| c.get(f)).copied().unwrap_or(0);
            out.push(SelectionFrequency {
                model: g.0.clone(),
                level: g.1.clone(),
                component: g.2.clone(),
                horizon: *h,
                feature: f.clone(),
                frequency: c as f64 / *n as f64,
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::RecordKey;

    #[test]
    fn rmse_values() {
        assert_eq!(rmse(&[0.0, 0.0, 0.0]).unwrap(), 0.0);
        assert!((rmse(&[3.0, 4.0]).unwrap() - 12.5f64.sqrt()).abs() < 1e-15);
        assert!(matches!(rmse(&[]), Err(Error::Empty(_))));
    }

    #[test]
    fn dm_degenerate_and_sign() {
        let e: Vec<f64> = (0..30).map(|i| ((i * 7) % 5) as f64 - 2.0).collect();
        let r = dm_test(&e, &e, 3, LongRunVariance::NeweyWest).unwrap();
        assert_eq!((r.statistic, r.p_value, r.degenerate), (0.0, 0.5, true));
        let half: Vec<f64> = e.iter().enumerate().map(|(i, x)| x * (0.3 + 0.01 * i as f64)).collect();
        let r = dm_test(&half, &e, 0, LongRunVariance::NeweyWest).unwrap();
        assert!(r.statistic < 0.0 && r.p_value < 0.5);
        assert!(dm_test(&e[..5], &e[..5], 0, LongRunVariance::Plain).is_err());
    }

    #[test]
    fn stars_thresholds() {
        assert_eq!(stars(0.005), "***");
        assert_eq!(stars(0.01), "**");
        assert_eq!(stars(0.049), "**");
        assert_eq!(stars(0.05), "*");
        assert_eq!(stars(0.099), "*");
        assert_eq!(stars(0.10), "");
    }

    #[test]
    fn frequencies_count_windows() {
        let o = MonthId::from_ym(2015, 1);
        let rec = |i: i32, f: &[&str]| SelectionRecord {
            model: "adaLASSO".into(),
            level: "groups".into(),
            component: "g1".into(),
            origin: o.offset(i),
            horizon: 2,
            features: f.iter().map(|s| s.to_string()).collect(),
        };
        let records: Vec<_> = (0..10)
            .map(|i| if i < 7 { rec(i, &["x1", "x2"]) } else { rec(i, &["x2"]) })
            .collect();
        let t = selection_frequencies(&records);
        let get = |f: &str| t.iter().find(|r| r.feature == f).unwrap().frequency;
        assert_eq!(get("x1"), 0.7);
        assert_eq!(get("x2"), 1.0);
    }

    #[test]
    fn self_comparison_and_half_errors() {
        let first = MonthId::from_ym(2010, 1);
        let values: Vec<f64> = (0..60).map(|i| (i as f64 * 0.7).sin()).collect();
        let series = Series::new("agg", values.clone(), 1);
        let realized = Realized { first, series: &series };
        let mut store = ForecastStore::new();
        for o in 20..40 {
            let origin = first.offset(o);
            for h in 0..12 {
                let y = values[(o + h) as usize];
                store
                    .insert(RecordKey::new("B", "aggregate", AGGREGATE_COMPONENT, origin, h as usize), y - 0.4)
                    .unwrap();
                store
                    .insert(RecordKey::new("M", "aggregate", AGGREGATE_COMPONENT, origin, h as usize), y - 0.2)
                    .unwrap();
            }
        }
        let rep = build_report(&store, &realized, &ReportOptions::new("B"));
        for r in rep.rows.iter().filter(|r| r.model == "B") {
            assert_eq!(r.ratio, 1.0);
            assert_eq!(r.flag(), "degenerate");
        }
        for r in rep.rows.iter().filter(|r| r.model == "M" && r.horizon != HorizonKey::Accumulated) {
            assert!((r.ratio - 0.5).abs() < 1e-12);
            assert_eq!(r.n, 20);
        }
    }
}
