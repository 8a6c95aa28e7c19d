//! CSV persistence of panels, weights, forecasts and reports.
//!
//! Dates are written as `YYYY-MM`. Missing values are empty fields. Floats
//! use the shortest representation that round-trips, so a write followed by
//! a read reproduces every value bit for bit.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use crate::data_model::{
    DisaggregationScheme, Expectation, ForecastRecord, MonthId, Predictor, Series, SeriesPanel,
};
use crate::error::{Error, Result};
use crate::evaluation::{EvaluationReport, SelectionFrequency};
use crate::harness::{ForecastStore, SelectionRecord};
use crate::preprocessing::TransformCode;

pub const PANEL_HEADER: [&str; 3] = ["date", "series_id", "value"];
pub const WEIGHTS_HEADER: [&str; 4] = ["date", "level_id", "component_id", "weight"];
pub const META_HEADER: [&str; 4] = ["series_id", "kind", "availability_lag", "transform_code"];
pub const FORECASTS_HEADER: [&str; 6] = ["model", "level", "component", "origin", "horizon", "value"];
pub const REPORT_HEADER: [&str; 10] = [
    "model", "level", "horizon", "subperiod", "n", "rmse", "ratio", "dm_stat", "dm_p", "flag",
];
pub const SELECTION_HEADER: [&str; 6] = ["model", "level", "component", "horizon", "feature", "frequency"];
pub const SELECTION_RECORDS_HEADER: [&str; 6] = ["model", "level", "component", "origin", "horizon", "features"];

/// Series id of the survey expectation for horizon `h`.
pub fn expectation_id(h: usize) -> String {
    format!("expectation_h{h}")
}

fn parse_expectation_id(id: &str) -> Option<usize> {
    id.strip_prefix("expectation_h")?.parse().ok()
}

fn fmt_value(v: f64) -> String {
    if v.is_nan() { String::new() } else { v.to_string() }
}

fn parse_value(s: &str, line: u64) -> Result<f64> {
    let s = s.trim();
    if s.is_empty() || s.eq_ignore_ascii_case("nan") || s.eq_ignore_ascii_case("na") {
        return Ok(f64::NAN);
    }
    s.parse()
        .map_err(|_| Error::Parse(format!("line {line}: bad number `{s}`")))
}

fn parse_usize(s: &str, what: &str, line: u64) -> Result<usize> {
    s.trim()
        .parse()
        .map_err(|_| Error::Parse(format!("line {line}: bad {what} `{s}`")))
}

fn reader<R: Read>(input: R, header: &[&str], file: &str) -> Result<csv::Reader<R>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let got: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if got != header {
        return Err(Error::Parse(format!(
            "{file}: expected header `{}`, found `{}`",
            header.join(","),
            got.join(",")
        )));
    }
    Ok(rdr)
}

fn line_of(rec: &csv::StringRecord) -> u64 {
    rec.position().map_or(0, |p| p.line())
}

/// Kind column of `meta.csv`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SeriesKind {
    Aggregate,
    Disaggregate(String),
    Predictor,
    Expectation,
}

impl SeriesKind {
    fn parse(s: &str) -> Result<Self> {
        match s {
            "aggregate" => Ok(SeriesKind::Aggregate),
            "predictor" => Ok(SeriesKind::Predictor),
            "expectation" => Ok(SeriesKind::Expectation),
            other => match other.strip_prefix("disaggregate:") {
                Some(level) if !level.is_empty() => Ok(SeriesKind::Disaggregate(level.to_string())),
                _ => Err(Error::Parse(format!("unknown series kind `{other}`"))),
            },
        }
    }

    fn label(&self) -> String {
        match self {
            SeriesKind::Aggregate => "aggregate".into(),
            SeriesKind::Disaggregate(level) => format!("disaggregate:{level}"),
            SeriesKind::Predictor => "predictor".into(),
            SeriesKind::Expectation => "expectation".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetaEntry {
    pub series_id: String,
    pub kind: SeriesKind,
    pub availability_lag: usize,
    pub transform: TransformCode,
}

/// Every series of the panel with its raw values, in file order.
fn panel_columns(panel: &SeriesPanel) -> Vec<(MetaEntry, &[f64])> {
    let mut out = vec![(
        MetaEntry {
            series_id: panel.aggregate.id.clone(),
            kind: SeriesKind::Aggregate,
            availability_lag: panel.aggregate.availability_lag,
            transform: TransformCode::None,
        },
        panel.aggregate.values.as_slice(),
    )];
    for ((level, _), s) in &panel.disaggregates {
        out.push((
            MetaEntry {
                series_id: s.id.clone(),
                kind: SeriesKind::Disaggregate(level.clone()),
                availability_lag: s.availability_lag,
                transform: TransformCode::None,
            },
            s.values.as_slice(),
        ));
    }
    for p in panel.predictors.values() {
        out.push((
            MetaEntry {
                series_id: p.id.clone(),
                kind: SeriesKind::Predictor,
                availability_lag: p.availability_lag,
                transform: p.transform,
            },
            p.raw.as_slice(),
        ));
    }
    if let Some(e) = &panel.expectation {
        for (h, v) in e.by_horizon.iter().enumerate() {
            out.push((
                MetaEntry {
                    series_id: expectation_id(h),
                    kind: SeriesKind::Expectation,
                    availability_lag: e.availability_lag,
                    transform: TransformCode::None,
                },
                v.as_slice(),
            ));
        }
    }
    out
}

/// Long-format panel: one row per date and series, predictors in raw units.
pub fn write_panel<W: Write>(panel: &SeriesPanel, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(PANEL_HEADER)?;
    for (meta, values) in panel_columns(panel) {
        for (d, v) in panel.dates.iter().zip(values) {
            w.write_record([d.to_string(), meta.series_id.clone(), fmt_value(*v)])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_meta<W: Write>(panel: &SeriesPanel, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(META_HEADER)?;
    for (meta, _) in panel_columns(panel) {
        w.write_record([
            meta.series_id.clone(),
            meta.kind.label(),
            meta.availability_lag.to_string(),
            meta.transform.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Weight rows of every scheme except the trivial aggregate one.
pub fn write_weights<W: Write>(schemes: &[DisaggregationScheme], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(WEIGHTS_HEADER)?;
    for s in schemes.iter().filter(|s| s.level_id != crate::data_model::AGGREGATE_LEVEL) {
        for (d, row) in s.weight_dates.iter().zip(&s.weights) {
            for (c, v) in s.component_ids.iter().zip(row) {
                w.write_record([d.to_string(), s.level_id.clone(), c.clone(), fmt_value(*v)])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_meta<R: Read>(input: R) -> Result<Vec<MetaEntry>> {
    let mut rdr = reader(input, &META_HEADER, "meta.csv")?;
    let mut out: Vec<MetaEntry> = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = line_of(&rec);
        let id = rec[0].to_string();
        if out.iter().any(|m| m.series_id == id) {
            return Err(Error::Parse(format!("meta.csv line {line}: duplicate series `{id}`")));
        }
        out.push(MetaEntry {
            kind: SeriesKind::parse(&rec[1])?,
            availability_lag: parse_usize(&rec[2], "availability lag", line)?,
            transform: rec[3].parse()?,
            series_id: id,
        });
    }
    Ok(out)
}

/// Builds a panel from `panel.csv` and `meta.csv`. The date axis runs from
/// the first to the last date present without gaps; unlisted cells are
/// missing.
pub fn read_panel<R1: Read, R2: Read>(panel_csv: R1, meta_csv: R2) -> Result<SeriesPanel> {
    let meta = read_meta(meta_csv)?;
    let index: BTreeMap<&str, usize> = meta
        .iter()
        .enumerate()
        .map(|(i, m)| (m.series_id.as_str(), i))
        .collect();
    let mut cells: Vec<(MonthId, usize, f64)> = Vec::new();
    let mut rdr = reader(panel_csv, &PANEL_HEADER, "panel.csv")?;
    for rec in rdr.records() {
        let rec = rec?;
        let line = line_of(&rec);
        let date: MonthId = rec[0].parse()?;
        let &k = index.get(&rec[1]).ok_or_else(|| Error::Unknown {
            kind: "series (not in meta.csv)",
            id: rec[1].to_string(),
        })?;
        cells.push((date, k, parse_value(&rec[2], line)?));
    }
    let first = cells.iter().map(|c| c.0).min().ok_or(Error::Empty("panel.csv"))?;
    let last = cells.iter().map(|c| c.0).max().ok_or(Error::Empty("panel.csv"))?;
    let n = (last.0 - first.0 + 1) as usize;
    let dates: Vec<MonthId> = (0..n as i32).map(|i| first.offset(i)).collect();
    let mut columns = vec![vec![f64::NAN; n]; meta.len()];
    let mut seen = vec![vec![false; n]; meta.len()];
    for (d, k, v) in cells {
        let i = (d.0 - first.0) as usize;
        if seen[k][i] {
            return Err(Error::Parse(format!(
                "panel.csv: duplicate value for `{}` at {d}",
                meta[k].series_id
            )));
        }
        seen[k][i] = true;
        columns[k][i] = v;
    }

    let mut aggregate = None;
    let mut disaggregates = BTreeMap::new();
    let mut predictors = BTreeMap::new();
    let mut expectations: BTreeMap<usize, (usize, Vec<f64>)> = BTreeMap::new();
    for (m, values) in meta.into_iter().zip(columns) {
        match m.kind {
            SeriesKind::Aggregate => {
                if aggregate.is_some() {
                    return Err(Error::Parse("meta.csv lists more than one aggregate".into()));
                }
                aggregate = Some(Series::new(m.series_id, values, m.availability_lag));
            }
            SeriesKind::Disaggregate(level) => {
                disaggregates.insert(
                    (level, m.series_id.clone()),
                    Series::new(m.series_id, values, m.availability_lag),
                );
            }
            SeriesKind::Predictor => {
                let p = Predictor::new(m.series_id.clone(), values, m.availability_lag, m.transform)?;
                predictors.insert(m.series_id, p);
            }
            SeriesKind::Expectation => {
                let h = parse_expectation_id(&m.series_id).ok_or_else(|| {
                    Error::Parse(format!(
                        "expectation series `{}` must be named expectation_h<h>",
                        m.series_id
                    ))
                })?;
                expectations.insert(h, (m.availability_lag, values));
            }
        }
    }
    let aggregate = aggregate.ok_or_else(|| Error::Parse("meta.csv lists no aggregate series".into()))?;
    let expectation = if expectations.is_empty() {
        None
    } else {
        let lags: Vec<usize> = expectations.values().map(|e| e.0).collect();
        if expectations.keys().copied().ne(0..expectations.len()) {
            return Err(Error::Parse("expectation horizons must run 0, 1, 2, ... without gaps".into()));
        }
        if lags.iter().any(|l| *l != lags[0]) {
            return Err(Error::Parse("expectation series must share one availability lag".into()));
        }
        Some(Expectation {
            ids: (0..expectations.len()).map(expectation_id).collect(),
            by_horizon: expectations.into_values().map(|e| e.1).collect(),
            availability_lag: lags[0],
        })
    };
    Ok(SeriesPanel {
        dates,
        aggregate,
        disaggregates,
        predictors,
        expectation,
    })
}

/// Reads `weights.csv` into one scheme per level, in order of first
/// appearance, preceded by the trivial aggregate scheme.
pub fn read_schemes<R: Read>(
    weights_csv: R,
    panel: &SeriesPanel,
    publication_lag: usize,
) -> Result<Vec<DisaggregationScheme>> {
    let mut rdr = reader(weights_csv, &WEIGHTS_HEADER, "weights.csv")?;
    // level -> (components in order, date -> component -> weight)
    let mut levels: Vec<(String, Vec<String>, BTreeMap<MonthId, BTreeMap<String, f64>>)> = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = line_of(&rec);
        let date: MonthId = rec[0].parse()?;
        let (level, comp) = (&rec[1], &rec[2]);
        let weight = parse_value(&rec[3], line)?;
        let pos = match levels.iter().position(|l| l.0 == level) {
            Some(p) => p,
            None => {
                levels.push((level.to_string(), Vec::new(), BTreeMap::new()));
                levels.len() - 1
            }
        };
        let entry = &mut levels[pos];
        if !entry.1.iter().any(|c| c == comp) {
            entry.1.push(comp.to_string());
        }
        if entry.2.entry(date).or_default().insert(comp.to_string(), weight).is_some() {
            return Err(Error::Parse(format!(
                "weights.csv line {line}: duplicate weight for {level}/{comp} at {date}"
            )));
        }
    }
    let mut schemes = vec![DisaggregationScheme::aggregate(panel.aggregate.id.clone(), &panel.dates)];
    for (level, components, rows) in levels {
        let mut weight_dates = Vec::with_capacity(rows.len());
        let mut weights = Vec::with_capacity(rows.len());
        for (date, row) in rows {
            let values: Option<Vec<f64>> = components.iter().map(|c| row.get(c).copied()).collect();
            let values = values.ok_or_else(|| {
                Error::Parse(format!("weights.csv: level `{level}` has an incomplete row at {date}"))
            })?;
            weight_dates.push(date);
            weights.push(values);
        }
        schemes.push(DisaggregationScheme {
            level_id: level,
            component_ids: components,
            weight_dates,
            weights,
            publication_lag,
        });
    }
    Ok(schemes)
}

/// Locations of the three input files of a dataset.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DatasetPaths {
    pub panel: PathBuf,
    pub weights: PathBuf,
    pub meta: PathBuf,
}

impl DatasetPaths {
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            panel: dir.join("panel.csv"),
            weights: dir.join("weights.csv"),
            meta: dir.join("meta.csv"),
        }
    }
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn create(path: &Path) -> Result<File> {
    File::create(path).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

pub fn write_dataset(paths: &DatasetPaths, panel: &SeriesPanel, schemes: &[DisaggregationScheme]) -> Result<()> {
    write_panel(panel, create(&paths.panel)?)?;
    write_weights(schemes, create(&paths.weights)?)?;
    write_meta(panel, create(&paths.meta)?)
}

pub fn read_dataset(paths: &DatasetPaths, publication_lag: usize) -> Result<(SeriesPanel, Vec<DisaggregationScheme>)> {
    let panel = read_panel(open(&paths.panel)?, open(&paths.meta)?)?;
    let schemes = read_schemes(open(&paths.weights)?, &panel, publication_lag)?;
    Ok((panel, schemes))
}

pub fn write_forecasts<W: Write>(store: &ForecastStore, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(FORECASTS_HEADER)?;
    for (k, v) in store.iter() {
        w.write_record([
            k.model.clone(),
            k.level.clone(),
            k.component.clone(),
            k.origin.to_string(),
            k.horizon.to_string(),
            fmt_value(v),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_forecasts<R: Read>(input: R) -> Result<ForecastStore> {
    let mut rdr = reader(input, &FORECASTS_HEADER, "forecasts.csv")?;
    let mut store = ForecastStore::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = line_of(&rec);
        store.push(ForecastRecord {
            model: rec[0].to_string(),
            level: rec[1].to_string(),
            component: rec[2].to_string(),
            origin: rec[3].parse()?,
            horizon: parse_usize(&rec[4], "horizon", line)?,
            value: parse_value(&rec[5], line)?,
        })?;
    }
    Ok(store)
}

/// Selected features of every fit, `;`-separated.
pub fn write_selection_records<W: Write>(records: &[SelectionRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SELECTION_RECORDS_HEADER)?;
    for r in records {
        w.write_record([
            r.model.clone(),
            r.level.clone(),
            r.component.clone(),
            r.origin.to_string(),
            r.horizon.to_string(),
            r.features.join(";"),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_selection_records<R: Read>(input: R) -> Result<Vec<SelectionRecord>> {
    let mut rdr = reader(input, &SELECTION_RECORDS_HEADER, "selections.csv")?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = line_of(&rec);
        out.push(SelectionRecord {
            model: rec[0].to_string(),
            level: rec[1].to_string(),
            component: rec[2].to_string(),
            origin: rec[3].parse()?,
            horizon: parse_usize(&rec[4], "horizon", line)?,
            features: rec[5]
                .split(';')
                .filter(|f| !f.is_empty())
                .map(str::to_string)
                .collect(),
        });
    }
    Ok(out)
}

pub fn write_report<W: Write>(report: &EvaluationReport, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(REPORT_HEADER)?;
    for r in &report.rows {
        let (stat, p) = r
            .dm
            .map_or((String::new(), String::new()), |d| (fmt_value(d.statistic), fmt_value(d.p_value)));
        w.write_record([
            r.model.clone(),
            r.level.clone(),
            r.horizon.to_string(),
            r.subperiod.clone(),
            r.n.to_string(),
            fmt_value(r.rmse),
            fmt_value(r.ratio),
            stat,
            p,
            r.flag().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_selection<W: Write>(rows: &[SelectionFrequency], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SELECTION_HEADER)?;
    for r in rows {
        w.write_record([
            r.model.clone(),
            r.level.clone(),
            r.component.clone(),
            r.horizon.to_string(),
            r.feature.clone(),
            fmt_value(r.frequency),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::{generate, SyntheticSpec};

    fn small() -> crate::synthetic::Synthetic {
        generate(&SyntheticSpec {
            n_months: 60,
            n_predictors: 9,
            ..SyntheticSpec::default()
        })
        .unwrap()
    }

    fn same(a: &[f64], b: &[f64]) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits() || (x.is_nan() && y.is_nan()))
    }

    #[test]
    fn dataset_round_trip() {
        let syn = small();
        let (mut p, mut w, mut m) = (Vec::new(), Vec::new(), Vec::new());
        write_panel(&syn.panel, &mut p).unwrap();
        write_weights(&syn.schemes, &mut w).unwrap();
        write_meta(&syn.panel, &mut m).unwrap();
        let panel = read_panel(p.as_slice(), m.as_slice()).unwrap();
        assert_eq!(panel.dates, syn.panel.dates);
        assert!(same(&panel.aggregate.values, &syn.panel.aggregate.values));
        assert_eq!(panel.disaggregates.len(), syn.panel.disaggregates.len());
        for (k, s) in &syn.panel.disaggregates {
            assert!(same(&panel.disaggregates[k].values, &s.values), "{k:?}");
        }
        for (k, pr) in &syn.panel.predictors {
            let got = &panel.predictors[k];
            assert!(same(&got.raw, &pr.raw));
            assert!(same(&got.stationary, &pr.stationary));
            assert_eq!((got.transform, got.availability_lag), (pr.transform, pr.availability_lag));
        }
        let (e1, e2) = (panel.expectation.unwrap(), syn.panel.expectation.clone().unwrap());
        assert_eq!(e1.ids, e2.ids);
        for (a, b) in e1.by_horizon.iter().zip(&e2.by_horizon) {
            assert!(same(a, b));
        }
        let schemes = read_schemes(w.as_slice(), &syn.panel, syn.schemes[1].publication_lag).unwrap();
        assert_eq!(schemes, syn.schemes);
    }

    #[test]
    fn panel_row_count() {
        let syn = small();
        let mut p = Vec::new();
        write_panel(&syn.panel, &mut p).unwrap();
        let rows = String::from_utf8(p).unwrap().lines().count() - 1;
        let components: usize = syn.schemes.iter().skip(1).map(|s| s.n_components()).sum();
        assert_eq!(rows, 60 * (1 + components + 9 + 12));
    }

    #[test]
    fn header_mismatch_is_rejected() {
        let err = read_forecasts("model,level,component,origin,h,value\n".as_bytes()).unwrap_err();
        assert!(err.to_string().contains("expected header"));
    }

    #[test]
    fn forecasts_round_trip() {
        let mut store = ForecastStore::new();
        for (i, v) in [0.1, 1.0 / 3.0, -2.5e-17].into_iter().enumerate() {
            store
                .push(ForecastRecord {
                    model: "AR".into(),
                    level: "aggregate".into(),
                    component: "inflation".into(),
                    origin: MonthId::from_ym(2010, 1 + i as u32),
                    horizon: i,
                    value: v,
                })
                .unwrap();
        }
        let mut buf = Vec::new();
        write_forecasts(&store, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("model,level,component,origin,horizon,value\n"));
        assert!(text.contains("AR,aggregate,inflation,2010-02,1,0.3333333333333333\n"));
        assert_eq!(read_forecasts(buf.as_slice()).unwrap(), store);
    }

    #[test]
    fn gaps_in_expectation_horizons_are_rejected() {
        let meta = "series_id,kind,availability_lag,transform_code\ninf,aggregate,1,none\nexpectation_h1,expectation,0,none\n";
        let panel = "date,series_id,value\n2010-01,inf,0.5\n2010-01,expectation_h1,0.4\n";
        assert!(read_panel(panel.as_bytes(), meta.as_bytes()).is_err());
    }
}
