//! TOML run configuration. Relative paths resolve against the directory of
//! the configuration file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use infcast_core::ensemble_models::Bootstrap;
use infcast_core::evaluation::{LongRunVariance, Slicing, Subperiod};
use infcast_core::factor_models::FactorRule;
use infcast_core::harness::Accumulation;
use infcast_core::io::DatasetPaths;
use infcast_core::linear_models::{PenaltyRule, SelectionCap};
use infcast_core::{Estimator, ModelSpec, MonthId, SyntheticSpec};
use serde::Deserialize;

use crate::error::CliError;

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    /// Worker threads; 0 uses every available core.
    #[serde(default)]
    pub workers: usize,
    pub output: Option<PathBuf>,
    pub data: Option<DataSection>,
    #[serde(default)]
    pub plan: PlanSection,
    /// Hyperparameters shared by every model.
    #[serde(default)]
    pub defaults: ModelSection,
    /// Per-model sections keyed by model id.
    #[serde(default)]
    pub model: BTreeMap<String, ModelSection>,
    #[serde(default)]
    pub evaluation: EvaluationSection,
    #[serde(default)]
    pub synthetic: SyntheticSection,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    /// Directory holding `panel.csv`, `weights.csv` and `meta.csv`.
    pub dir: Option<PathBuf>,
    pub panel: Option<PathBuf>,
    pub weights: Option<PathBuf>,
    pub meta: Option<PathBuf>,
    pub weight_publication_lag: Option<usize>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlanSection {
    pub first_origin: Option<String>,
    pub last_origin: Option<String>,
    /// Origins counted back from the last one when `first_origin` is unset.
    pub n_origins: usize,
    /// Months of history required before the first default origin.
    pub min_history: usize,
    pub horizons: Vec<usize>,
    /// Levels to forecast; empty means every level.
    pub levels: Vec<String>,
    pub models: Vec<String>,
    pub store_expectation: bool,
}

impl Default for PlanSection {
    fn default() -> Self {
        Self {
            first_origin: None,
            last_origin: None,
            n_origins: 60,
            min_history: 24,
            horizons: (0..12).collect(),
            levels: Vec::new(),
            models: Vec::new(),
            store_expectation: true,
        }
    }
}

/// A count or a keyword, e.g. `cap = 10` or `cap = "sqrt"`.
#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum CountOrName {
    Count(usize),
    Name(String),
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub estimator: Option<String>,
    pub lag_depth: Option<usize>,
    pub penalty: Option<f64>,
    pub penalty_points: Option<usize>,
    pub penalty_min_ratio: Option<f64>,
    pub cap: Option<CountOrName>,
    pub factors: Option<CountOrName>,
    pub k_max: Option<usize>,
    pub preselect_alpha: Option<f64>,
    pub pool: Option<usize>,
    pub subset: Option<usize>,
    pub trees: Option<usize>,
    pub min_leaf: Option<usize>,
    pub feature_fraction: Option<f64>,
    pub bootstrap: Option<String>,
    pub block_len: Option<usize>,
    pub activity_id: Option<String>,
    pub exchange_id: Option<String>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationSection {
    pub benchmark: String,
    pub slicing: String,
    pub variance: String,
    pub accumulation: String,
    pub subperiods: Vec<SubperiodSection>,
}

impl Default for EvaluationSection {
    fn default() -> Self {
        Self {
            benchmark: "RW".into(),
            slicing: "origin".into(),
            variance: "newey_west".into(),
            accumulation: "compound".into(),
            subperiods: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubperiodSection {
    pub name: String,
    pub start: Option<String>,
    pub end: Option<String>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSection {
    pub months: Option<usize>,
    pub start: Option<String>,
    pub level_names: Option<Vec<String>>,
    pub level_sizes: Option<Vec<usize>>,
    pub predictors: Option<usize>,
    pub factors: Option<usize>,
    pub sparsity: Option<usize>,
    pub lag_depth: Option<usize>,
    pub noise_scale: Option<f64>,
    pub factor_noise: Option<f64>,
    pub idiosyncratic_noise: Option<f64>,
    pub seasonal_amplitude: Option<f64>,
    pub expectation_noise: Option<f64>,
    pub weight_drift: Option<f64>,
    pub inflation_lag: Option<usize>,
    pub expectation_horizons: Option<usize>,
    pub seed: Option<u64>,
}

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

fn month(s: &str, key: &str) -> Result<MonthId, CliError> {
    s.parse().map_err(|e| config_err(format!("{key}: {e}")))
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_err(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg: RunConfig =
            toml::from_str(&text).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() { p.to_path_buf() } else { self.base_dir.join(p) }
    }

    pub fn output_dir(&self) -> PathBuf {
        self.resolve(self.output.as_deref().unwrap_or(Path::new("out")))
    }

    pub fn dataset(&self) -> Result<DatasetPaths, CliError> {
        let data = self.data.as_ref().ok_or_else(|| config_err("missing [data] section"))?;
        let pick = |explicit: &Option<PathBuf>, name: &str| -> Result<PathBuf, CliError> {
            match (explicit, &data.dir) {
                (Some(p), _) => Ok(self.resolve(p)),
                (None, Some(d)) => Ok(self.resolve(&d.join(name))),
                (None, None) => Err(config_err(format!("[data] needs `dir` or an explicit path for {name}"))),
            }
        };
        Ok(DatasetPaths {
            panel: pick(&data.panel, "panel.csv")?,
            weights: pick(&data.weights, "weights.csv")?,
            meta: pick(&data.meta, "meta.csv")?,
        })
    }

    pub fn publication_lag(&self) -> usize {
        self.data
            .as_ref()
            .and_then(|d| d.weight_publication_lag)
            .unwrap_or(infcast_core::data_model::DEFAULT_WEIGHT_PUBLICATION_LAG)
    }

    /// Model specs in the order of `plan.models`.
    pub fn model_specs(&self) -> Result<Vec<ModelSpec>, CliError> {
        if self.plan.models.is_empty() {
            return Err(config_err("plan.models is empty"));
        }
        for id in self.model.keys() {
            if !self.plan.models.contains(id) {
                return Err(config_err(format!("[model.{id}] is not listed in plan.models")));
            }
        }
        self.plan
            .models
            .iter()
            .map(|id| {
                let section = self.model.get(id);
                let name = section
                    .and_then(|s| s.estimator.clone())
                    .unwrap_or_else(|| id.clone());
                let estimator: Estimator = name
                    .parse()
                    .map_err(|_| config_err(format!("model `{id}`: unknown estimator `{name}`")))?;
                let mut spec = ModelSpec::new(estimator);
                spec.id = id.clone();
                apply(&mut spec, &self.defaults)?;
                if let Some(s) = section {
                    apply(&mut spec, s)?;
                }
                spec.validate().map_err(|e| config_err(e.to_string()))?;
                Ok(spec)
            })
            .collect()
    }

    /// Explicit origin bounds, if configured.
    pub fn origins(&self) -> Result<(Option<MonthId>, Option<MonthId>), CliError> {
        let first = self.plan.first_origin.as_deref().map(|s| month(s, "plan.first_origin")).transpose()?;
        let last = self.plan.last_origin.as_deref().map(|s| month(s, "plan.last_origin")).transpose()?;
        Ok((first, last))
    }

    pub fn subperiods(&self) -> Result<Vec<Subperiod>, CliError> {
        self.evaluation
            .subperiods
            .iter()
            .map(|s| {
                Ok(Subperiod {
                    name: s.name.clone(),
                    start: s.start.as_deref().map(|d| month(d, "subperiod start")).transpose()?,
                    end: s.end.as_deref().map(|d| month(d, "subperiod end")).transpose()?,
                })
            })
            .collect()
    }

    pub fn slicing(&self) -> Result<Slicing, CliError> {
        match self.evaluation.slicing.as_str() {
            "origin" => Ok(Slicing::Origin),
            "target" => Ok(Slicing::Target),
            other => Err(config_err(format!("evaluation.slicing: expected origin or target, got `{other}`"))),
        }
    }

    pub fn variance(&self) -> Result<LongRunVariance, CliError> {
        match self.evaluation.variance.as_str() {
            "newey_west" => Ok(LongRunVariance::NeweyWest),
            "plain" => Ok(LongRunVariance::Plain),
            other => Err(config_err(format!(
                "evaluation.variance: expected newey_west or plain, got `{other}`"
            ))),
        }
    }

    pub fn accumulation(&self) -> Result<Option<Accumulation>, CliError> {
        match self.evaluation.accumulation.as_str() {
            "compound" => Ok(Some(Accumulation::Compound)),
            "sum" => Ok(Some(Accumulation::Sum)),
            "none" => Ok(None),
            other => Err(config_err(format!(
                "evaluation.accumulation: expected compound, sum or none, got `{other}`"
            ))),
        }
    }

    pub fn synthetic_spec(&self) -> Result<SyntheticSpec, CliError> {
        let s = &self.synthetic;
        let mut spec = SyntheticSpec::default();
        macro_rules! set {
            ($field:ident, $key:ident) => {
                if let Some(v) = s.$key.clone() {
                    spec.$field = v;
                }
            };
        }
        set!(n_months, months);
        set!(n_predictors, predictors);
        set!(n_factors, factors);
        set!(sparsity, sparsity);
        set!(lag_depth, lag_depth);
        set!(noise_scale, noise_scale);
        set!(factor_noise, factor_noise);
        set!(idiosyncratic_noise, idiosyncratic_noise);
        set!(seasonal_amplitude, seasonal_amplitude);
        set!(expectation_noise, expectation_noise);
        set!(weight_drift, weight_drift);
        set!(inflation_lag, inflation_lag);
        set!(expectation_horizons, expectation_horizons);
        set!(seed, seed);
        if let Some(start) = &s.start {
            spec.start = month(start, "synthetic.start")?;
        }
        match (&s.level_names, &s.level_sizes) {
            (None, None) => {}
            (Some(names), Some(sizes)) if names.len() == sizes.len() => {
                spec.levels = names.iter().cloned().zip(sizes.iter().copied()).collect();
            }
            _ => {
                return Err(config_err(
                    "synthetic.level_names and synthetic.level_sizes must both be given with equal lengths",
                ))
            }
        }
        Ok(spec)
    }
}

fn apply(spec: &mut ModelSpec, s: &ModelSection) -> Result<(), CliError> {
    let id = spec.id.clone();
    let bad = |key: &str, v: &str| config_err(format!("model `{id}`: invalid {key} `{v}`"));
    if let Some(v) = s.lag_depth {
        spec.lag_depth = v;
    }
    if let Some(p) = s.penalty {
        spec.penalty.rule = PenaltyRule::Fixed(p);
    } else if s.penalty_points.is_some() || s.penalty_min_ratio.is_some() {
        let (mut points, mut min_ratio) = match spec.penalty.rule {
            PenaltyRule::Bic { points, min_ratio } => (points, min_ratio),
            PenaltyRule::Fixed(_) => (100, 1e-4),
        };
        points = s.penalty_points.unwrap_or(points);
        min_ratio = s.penalty_min_ratio.unwrap_or(min_ratio);
        spec.penalty.rule = PenaltyRule::Bic { points, min_ratio };
    }
    match &s.cap {
        None => {}
        Some(CountOrName::Count(k)) => spec.penalty.cap = SelectionCap::Fixed(*k),
        Some(CountOrName::Name(n)) => {
            spec.penalty.cap = match n.as_str() {
                "sqrt" => SelectionCap::SqrtRows,
                "none" => SelectionCap::Unlimited,
                other => return Err(bad("cap", other)),
            }
        }
    }
    match &s.factors {
        None => {
            if let (Some(k), FactorRule::IcP2 { .. }) = (s.k_max, spec.factor_rule) {
                spec.factor_rule = FactorRule::IcP2 { k_max: k };
            }
        }
        Some(CountOrName::Count(k)) => spec.factor_rule = FactorRule::Fixed(*k),
        Some(CountOrName::Name(n)) if n == "icp2" => {
            spec.factor_rule = FactorRule::IcP2 {
                k_max: s.k_max.unwrap_or(10),
            }
        }
        Some(CountOrName::Name(n)) => return Err(bad("factors", n)),
    }
    if let Some(v) = s.preselect_alpha {
        spec.preselect_alpha = v;
    }
    if let Some(v) = s.pool {
        spec.csr.pool = v;
    }
    if let Some(v) = s.subset {
        spec.csr.subset = v;
    }
    if let Some(v) = s.trees {
        spec.forest.trees = v;
    }
    if let Some(v) = s.min_leaf {
        spec.forest.min_leaf = v;
    }
    if let Some(v) = s.feature_fraction {
        spec.forest.feature_fraction = v;
    }
    match s.bootstrap.as_deref() {
        None => {}
        Some("identity") => spec.forest.bootstrap = Bootstrap::Identity,
        Some("circular_block") => spec.forest.bootstrap = Bootstrap::CircularBlock { block_len: None },
        Some(other) => return Err(bad("bootstrap", other)),
    }
    if let Some(b) = s.block_len {
        match &mut spec.forest.bootstrap {
            Bootstrap::CircularBlock { block_len } => *block_len = Some(b),
            Bootstrap::Identity => return Err(bad("block_len", "with identity bootstrap")),
        }
    }
    if let Some(v) = &s.activity_id {
        spec.activity_id = v.clone();
    }
    if let Some(v) = &s.exchange_id {
        spec.exchange_id = v.clone();
    }
    Ok(())
}
