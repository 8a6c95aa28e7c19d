//! Disaggregated inflation forecasting: data model, feature construction,
//! linear, factor and ensemble estimators, the expanding-window harness and
//! out-of-sample evaluation.

pub mod data_model;
pub mod error;
pub mod evaluation;
pub mod ensemble_models;
pub mod factor_models;
pub mod harness;
pub mod io;
pub mod linalg;
pub mod linear_models;
pub mod model;
pub mod preprocessing;
pub mod synthetic;
pub mod window;

pub use error::{Error, Result};
pub use data_model::{
    last_available_weights, validate_panel, DisaggregationScheme, Expectation, ForecastRecord, MonthId,
    Predictor, Series, SeriesPanel,
};
pub use evaluation::{build_report, dm_test, DmResult, EvaluationReport, HorizonKey, ReportOptions};
pub use harness::{run_expanding_window, ExperimentPlan, ForecastStore, RecordKey, RunOutput};
pub use model::{Estimator, ModelSpec};
pub use preprocessing::{DesignMatrix, TransformCode};
pub use synthetic::{generate, SyntheticSpec};
