use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use infcast_core::evaluation::{format_table, selection_frequencies, Realized};
use infcast_core::harness::RunOutput;
use infcast_core::io::{self, DatasetPaths};
use infcast_core::{
    build_report, generate, run_expanding_window, validate_panel, DisaggregationScheme, ExperimentPlan,
    ReportOptions, SeriesPanel,
};
use log::info;

use crate::config::RunConfig;
use crate::error::CliError;

/// Flag overrides of the `[synthetic]` section.
#[derive(Clone, Debug, Default)]
pub struct GenerateOverrides {
    pub seed: Option<u64>,
    pub months: Option<usize>,
    pub predictors: Option<usize>,
    pub factors: Option<usize>,
    pub sparsity: Option<usize>,
}

#[derive(Clone, Debug, Default)]
pub struct RunOverrides {
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub deterministic: bool,
    pub out: Option<PathBuf>,
}

fn runtime(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(format!("{}: {e}", path.display()))
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path).map(BufWriter::new).map_err(|e| runtime(path, e))
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| runtime(dir, e))
}

pub fn cmd_generate(cfg: &RunConfig, flags: &GenerateOverrides, out: &Path) -> Result<(), CliError> {
    let mut spec = cfg.synthetic_spec()?;
    if let Some(v) = flags.seed {
        spec.seed = v;
    }
    if let Some(v) = flags.months {
        spec.n_months = v;
    }
    if let Some(v) = flags.predictors {
        spec.n_predictors = v;
    }
    if let Some(v) = flags.factors {
        spec.n_factors = v;
    }
    if let Some(v) = flags.sparsity {
        spec.sparsity = v;
    }
    spec.validate().map_err(|e| CliError::Config(e.to_string()))?;
    let syn = generate(&spec)?;
    ensure_dir(out)?;
    let paths = DatasetPaths::in_dir(out);
    io::write_dataset(&paths, &syn.panel, &syn.schemes).map_err(|e| runtime(out, e))?;
    let truth = out.join("truth.json");
    serde_json::to_writer_pretty(create(&truth)?, &syn.truth).map_err(|e| runtime(&truth, e))?;
    println!(
        "wrote {}, {} and {} ({} months, {} series)",
        paths.panel.display(),
        paths.weights.display(),
        paths.meta.display(),
        syn.panel.len(),
        1 + syn.panel.disaggregates.len()
            + syn.panel.predictors.len()
            + syn.panel.expectation.as_ref().map_or(0, |e| e.by_horizon.len())
    );
    println!("ground truth: {}", truth.display());
    Ok(())
}

fn load_data(cfg: &RunConfig) -> Result<(SeriesPanel, Vec<DisaggregationScheme>), CliError> {
    let paths = cfg.dataset()?;
    let (panel, schemes) =
        io::read_dataset(&paths, cfg.publication_lag()).map_err(|e| CliError::Data(e.to_string()))?;
    let violations = validate_panel(&panel, &schemes);
    if !violations.is_empty() {
        for v in &violations {
            eprintln!("  {v}");
        }
        return Err(CliError::Data(format!("{} validation failure(s)", violations.len())));
    }
    Ok((panel, schemes))
}

pub fn cmd_validate(cfg: &RunConfig) -> Result<(), CliError> {
    let (panel, schemes) = load_data(cfg)?;
    if !cfg.plan.models.is_empty() {
        build_plan(cfg, panel.clone(), schemes.clone(), cfg.seed, false)?;
    }
    println!(
        "ok: {} months ({} to {}), {} levels, {} predictors",
        panel.len(),
        panel.dates[0],
        panel.dates[panel.len() - 1],
        schemes.len(),
        panel.predictors.len()
    );
    Ok(())
}

fn build_plan(
    cfg: &RunConfig,
    panel: SeriesPanel,
    schemes: Vec<DisaggregationScheme>,
    seed: u64,
    sequential: bool,
) -> Result<ExperimentPlan, CliError> {
    let specs = cfg.model_specs()?;
    let n = panel.len();
    let max_h = cfg.plan.horizons.iter().copied().max().unwrap_or(0);
    let (first, last) = cfg.origins()?;
    let last = match last {
        Some(d) => d,
        None => {
            let idx = (n - 1)
                .checked_sub(max_h)
                .ok_or_else(|| CliError::Data(format!("panel of {n} months is shorter than horizon {max_h}")))?;
            panel.dates[idx]
        }
    };
    let first = match first {
        Some(d) => d,
        None => {
            let last_idx = panel
                .index_of(last)
                .ok_or_else(|| CliError::Config(format!("plan.last_origin {last} outside the panel")))?;
            let idx = (last_idx + 1)
                .saturating_sub(cfg.plan.n_origins.max(1))
                .max(cfg.plan.min_history);
            *panel.dates.get(idx).ok_or_else(|| {
                CliError::Data(format!("panel of {n} months is shorter than min_history"))
            })?
        }
    };
    let mut plan = ExperimentPlan::new(panel, schemes, specs, first, last, seed);
    plan.horizons = cfg.plan.horizons.clone();
    plan.store_expectation = cfg.plan.store_expectation;
    plan.sequential = sequential;
    if !cfg.plan.levels.is_empty() {
        for level in &cfg.plan.levels {
            if plan.scheme(level).is_none() {
                return Err(CliError::Config(format!("plan.levels: unknown level `{level}`")));
            }
        }
        plan.models.retain(|level, _| cfg.plan.levels.contains(level));
    }
    plan.validate().map_err(|e| CliError::Config(e.to_string()))?;
    Ok(plan)
}

fn write_fit_log(path: &Path, out: &RunOutput) -> Result<(), CliError> {
    let mut w = csv_writer(path)?;
    let mut rows: Vec<[String; 7]> = Vec::new();
    for k in &out.fallbacks {
        rows.push(log_row(k, "fallback", ""));
    }
    for f in &out.failures {
        rows.push(log_row(&f.key, "failed", &f.error));
    }
    rows.sort();
    w.write_record(["model", "level", "component", "origin", "horizon", "status", "message"])
        .map_err(|e| runtime(path, e))?;
    for r in rows {
        w.write_record(r).map_err(|e| runtime(path, e))?;
    }
    w.flush().map_err(|e| runtime(path, e))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>, CliError> {
    Ok(csv::Writer::from_writer(create(path)?))
}

fn log_row(k: &infcast_core::RecordKey, status: &str, msg: &str) -> [String; 7] {
    [
        k.model.clone(),
        k.level.clone(),
        k.component.clone(),
        k.origin.to_string(),
        k.horizon.to_string(),
        status.to_string(),
        msg.to_string(),
    ]
}

pub fn cmd_run(cfg: &RunConfig, flags: &RunOverrides) -> Result<(), CliError> {
    let seed = flags.seed.unwrap_or(cfg.seed);
    let workers = flags.workers.unwrap_or(cfg.workers);
    // fail on configuration problems before touching the data
    cfg.model_specs()?;
    let (panel, schemes) = load_data(cfg)?;
    let plan = build_plan(cfg, panel, schemes, seed, flags.deterministic)?;
    let out_dir = flags.out.clone().unwrap_or_else(|| cfg.output_dir());
    ensure_dir(&out_dir)?;

    let origins = plan.origin_range()?.count();
    let n_cells: usize = plan
        .schemes
        .iter()
        .filter_map(|s| plan.models.get(&s.level_id).map(|m| s.n_components() * m.len()))
        .sum::<usize>()
        * origins
        * plan.horizons.len();
    println!(
        "running {n_cells} model cells: {origins} origins ({} to {}), {} horizons, seed {seed}",
        plan.first_origin,
        plan.last_origin,
        plan.horizons.len()
    );
    let started = Instant::now();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    let out = pool.install(|| run_expanding_window(&plan))?;
    info!("run finished in {:.1?}", started.elapsed());

    let forecasts = out_dir.join("forecasts.csv");
    io::write_forecasts(&out.store, create(&forecasts)?).map_err(|e| runtime(&forecasts, e))?;
    let selections = out_dir.join("selections.csv");
    io::write_selection_records(&out.selections, create(&selections)?).map_err(|e| runtime(&selections, e))?;
    write_fit_log(&out_dir.join("fit_log.csv"), &out)?;
    println!(
        "{} forecast records, {} selection records, {} failed cells, {} fallbacks in {:.1?}",
        out.store.len(),
        out.selections.len(),
        out.failures.len(),
        out.fallbacks.len(),
        started.elapsed()
    );
    println!("forecasts: {}", forecasts.display());
    Ok(())
}

pub fn cmd_evaluate(cfg: &RunConfig, out: Option<&Path>, quiet: bool) -> Result<(), CliError> {
    let out_dir = out.map(Path::to_path_buf).unwrap_or_else(|| cfg.output_dir());
    let forecasts = out_dir.join("forecasts.csv");
    if !forecasts.is_file() {
        return Err(CliError::Missing(format!("{} not found; run `infcast run` first", forecasts.display())));
    }
    let opts = ReportOptions {
        benchmark: cfg.evaluation.benchmark.clone(),
        subperiods: cfg.subperiods()?,
        slicing: cfg.slicing()?,
        variance: cfg.variance()?,
        accumulation: cfg.accumulation()?,
    };
    let (panel, _) = load_data(cfg)?;
    let file = File::open(&forecasts).map_err(|e| runtime(&forecasts, e))?;
    let store = io::read_forecasts(file).map_err(|e| CliError::Data(format!("{}: {e}", forecasts.display())))?;
    let realized = Realized {
        first: panel.dates[0],
        series: &panel.aggregate,
    };
    let report = build_report(&store, &realized, &opts);
    for k in &report.skipped {
        eprintln!("skipped {k}: no benchmark forecasts");
    }
    let report_path = out_dir.join("report.csv");
    io::write_report(&report, create(&report_path)?).map_err(|e| runtime(&report_path, e))?;

    let records_path = out_dir.join("selections.csv");
    let records = if records_path.is_file() {
        let file = File::open(&records_path).map_err(|e| runtime(&records_path, e))?;
        io::read_selection_records(file).map_err(|e| CliError::Data(format!("{}: {e}", records_path.display())))?
    } else {
        Vec::new()
    };
    let selection_path = out_dir.join("selection.csv");
    io::write_selection(&selection_frequencies(&records), create(&selection_path)?)
        .map_err(|e| runtime(&selection_path, e))?;

    if !quiet {
        let mut levels: Vec<&str> = Vec::new();
        for r in &report.rows {
            if !levels.contains(&r.level.as_str()) {
                levels.push(&r.level);
            }
        }
        for level in levels {
            println!("{}", format_table(&report, level, "full"));
        }
        println!("* p < 0.10, ** p < 0.05, *** p < 0.01 (one-sided Diebold-Mariano)");
    }
    println!("report: {}", report_path.display());
    println!("selection: {}", selection_path.display());
    Ok(())
}
