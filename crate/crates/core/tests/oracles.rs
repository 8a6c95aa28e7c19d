use std::collections::BTreeMap;

use infcast_core::data_model::{AGGREGATE_COMPONENT, AGGREGATE_LEVEL};
use infcast_core::ensemble_models::{fit_forest, predict_forest, ForestParams};
use infcast_core::evaluation::{rmse, Realized};
use infcast_core::factor_models::{
    extract_factors, fit_factor_augmented, fit_farmpredict, fit_target_factor, preselect_by_tstat, FactorRule,
    PenaltySettings, PreselectMode,
};
use infcast_core::harness::{
    accumulate_12m, aggregate_bottom_up, combine_forecasts, Accumulation, EXPECTATION_MODEL,
};
use infcast_core::linear_models::{fit_adalasso, fit_ols, fit_ols_matrix, forecast_hist_mean, LinearFit};
use infcast_core::model::{augmented_ar_design, hnkpc_design, origin_factors};
use infcast_core::preprocessing::{apply_transform, standardize, Feature, FeatureKind};
use infcast_core::synthetic::{generate, SyntheticSpec};
use infcast_core::window::Cell;
use infcast_core::{
    build_report, run_expanding_window, DesignMatrix, DisaggregationScheme, Estimator, Expectation,
    ExperimentPlan, ForecastStore, HorizonKey, ModelSpec, MonthId, Predictor, RecordKey, ReportOptions, Series,
    SeriesPanel, TransformCode,
};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn gauss(r: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(r)
}

fn start() -> MonthId {
    MonthId::from_ym(2001, 1)
}

/// Single-series panel whose aggregate is released with a one-month lag.
fn toy_panel(inflation: Vec<f64>, predictors: Vec<Predictor>, expectation: Option<Vec<f64>>) -> SeriesPanel {
    let n = inflation.len();
    SeriesPanel {
        dates: (0..n).map(|t| start().offset(t as i32)).collect(),
        aggregate: Series::new("inflation", inflation, 1),
        disaggregates: BTreeMap::new(),
        predictors: predictors.into_iter().map(|p| (p.id.clone(), p)).collect(),
        expectation: expectation.map(|e| Expectation {
            ids: vec!["expectation_h0".into()],
            by_horizon: vec![e],
            availability_lag: 0,
        }),
    }
}

fn aggregate_scheme(panel: &SeriesPanel) -> DisaggregationScheme {
    DisaggregationScheme::aggregate("inflation", &panel.dates)
}

fn coefficient(fit: &LinearFit, design: &DesignMatrix, name: &str) -> f64 {
    let j = design
        .features
        .iter()
        .position(|f| f.name == name)
        .unwrap_or_else(|| panic!("no feature {name}"));
    fit.coefficients[j]
}

/// `(X'X)^{-1} s^2` standard errors of an OLS fit with intercept, recomputed
/// from the design.
fn ols_standard_errors(design: &DesignMatrix, fit: &LinearFit) -> Vec<f64> {
    let (n, p) = design.x.shape();
    let a = DMatrix::from_fn(n, p + 1, |i, j| if j == 0 { 1.0 } else { design.x[(i, j - 1)] });
    let inv = (a.transpose() * &a).try_inverse().unwrap();
    let s2 = fit.residuals.iter().map(|e| e * e).sum::<f64>() / (n - p - 1) as f64;
    (1..=p).map(|j| (inv[(j, j)] * s2).sqrt()).collect()
}

#[test]
fn pct_change_matches_elementwise_formula() {
    let mut r = rng(1);
    let x: Vec<f64> = (0..200).map(|_| r.random_range(0.5..150.0)).collect();
    let got = apply_transform(&x, TransformCode::PctChange).unwrap();
    for t in 1..x.len() {
        let want = (x[t] - x[t - 1]) / x[t - 1] * 100.0;
        assert!((got[t - 1] - want).abs() <= 1e-10 * want.abs().max(1.0));
    }
}

#[test]
fn standardize_matches_recomputed_moments() {
    let mut r = rng(2);
    let (n, p) = (57, 6);
    let x = DMatrix::from_fn(n, p, |i, j| {
        if j == 5 {
            f64::from(u8::from(i % 12 == 3))
        } else {
            3.0 * j as f64 + (j + 1) as f64 * gauss(&mut r)
        }
    });
    let features = (0..p)
        .map(|j| Feature {
            name: format!("c{j}"),
            kind: if j == 5 { FeatureKind::Seasonal } else { FeatureKind::Predictor },
            base: format!("c{j}"),
            lag: 1,
        })
        .collect();
    let design = DesignMatrix {
        rows: (0..n).map(|i| start().offset(i as i32)).collect(),
        x: x.clone(),
        target: DVector::zeros(n),
        features,
        horizon: 0,
        origin: start().offset(n as i32),
        forecast_row: DVector::zeros(p),
    };
    let s = standardize(&design).unwrap();
    for j in 0..5 {
        let col: Vec<f64> = x.column(j).iter().copied().collect();
        let mean = col.iter().sum::<f64>() / n as f64;
        let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
        assert!((s.means[j] - mean).abs() < 1e-12);
        assert!((s.scales[j] - sd).abs() < 1e-12);
        let z: Vec<f64> = s.design.x.column(j).iter().copied().collect();
        let zm = z.iter().sum::<f64>() / n as f64;
        let zsd = (z.iter().map(|v| (v - zm).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
        assert!(zm.abs() < 1e-12 && (zsd - 1.0).abs() < 1e-12);
    }
    assert_eq!(s.design.x.column(5), x.column(5));
}

#[test]
fn hist_mean_matches_direct_sum() {
    let mut r = rng(3);
    let values: Vec<f64> = (0..120).map(|_| 0.4 + 0.3 * gauss(&mut r)).collect();
    let series = Series::new("inflation", values.clone(), 1);
    for origin in [5usize, 40, 119] {
        let visible = &values[..origin];
        let want = visible.iter().fold(0.0, |a, v| a + v) / visible.len() as f64;
        assert!((forecast_hist_mean(&series, origin, 6).unwrap() - want).abs() < 1e-12);
    }
}

/// `pi_t = mu + phi pi_{t-1} + eta e_t + delta_{month(t)} + psi_g g_t + psi_s s_t + noise`
struct PhillipsDgp {
    panel: SeriesPanel,
    mu: f64,
    phi: f64,
    eta: f64,
    delta: [f64; 12],
}

fn phillips_dgp(seed: u64, n: usize, psi: (f64, f64), noise: f64, seasonal: bool) -> PhillipsDgp {
    let mut r = rng(seed);
    let (mu, phi, eta) = (0.2, 0.5, 0.3);
    let mut delta = [0.0; 12];
    if seasonal {
        for d in delta.iter_mut().skip(1) {
            *d = r.random_range(-0.3..0.3);
        }
    }
    let expectation: Vec<f64> = (0..n).map(|_| gauss(&mut r)).collect();
    let mut ar = |rho: f64| {
        let mut state = 0.0;
        (0..n)
            .map(|_| {
                state = rho * state + gauss(&mut r);
                state
            })
            .collect::<Vec<f64>>()
    };
    let activity = ar(0.5);
    let exchange = ar(0.2);
    let mut pi = vec![0.0; n];
    let mut prev = mu / (1.0 - phi);
    for t in 0..n {
        let month = start().offset(t as i32).month() as usize - 1;
        let v = mu + phi * prev + eta * expectation[t] + delta[month] + psi.0 * activity[t] + psi.1 * exchange[t]
            + noise * gauss(&mut r);
        pi[t] = v;
        prev = v;
    }
    let predictors = vec![
        Predictor::new("activity", activity, 0, TransformCode::None).unwrap(),
        Predictor::new("exchange_rate", exchange, 0, TransformCode::None).unwrap(),
    ];
    PhillipsDgp {
        panel: toy_panel(pi, predictors, Some(expectation)),
        mu,
        phi,
        eta,
        delta,
    }
}

#[test]
fn augmented_ar_recovers_known_coefficients() {
    let dgp = phillips_dgp(4, 240, (0.0, 0.0), 1e-6, true);
    let scheme = aggregate_scheme(&dgp.panel);
    let cell = Cell::new(&dgp.panel, &scheme, "inflation", 239, 0, 1).unwrap();
    let design = augmented_ar_design(&cell).unwrap();
    let fit = fit_ols(&design).unwrap();
    assert!((fit.intercept - dgp.mu).abs() < 1e-3);
    assert!((coefficient(&fit, &design, "inflation_l1") - dgp.phi).abs() < 1e-3);
    assert!((coefficient(&fit, &design, "expectation_h0") - dgp.eta).abs() < 1e-3);
    for m in 2..=12 {
        let got = coefficient(&fit, &design, &format!("m{m:02}"));
        assert!((got - dgp.delta[m - 1]).abs() < 1e-3, "month {m}");
    }
}

#[test]
fn hnkpc_recovers_known_coefficients() {
    let dgp = phillips_dgp(5, 240, (0.25, -0.15), 1e-6, false);
    let scheme = aggregate_scheme(&dgp.panel);
    let cell = Cell::new(&dgp.panel, &scheme, "inflation", 239, 0, 1).unwrap();
    let design = hnkpc_design(&cell, "activity", "exchange_rate").unwrap();
    assert_eq!(design.n_features(), 4);
    let fit = fit_ols(&design).unwrap();
    assert!((fit.intercept - dgp.mu).abs() < 1e-3);
    assert!((coefficient(&fit, &design, "inflation_l1") - dgp.phi).abs() < 1e-3);
    assert!((coefficient(&fit, &design, "expectation_h0") - dgp.eta).abs() < 1e-3);
    assert!((coefficient(&fit, &design, "activity_l1") - 0.25).abs() < 1e-3);
    assert!((coefficient(&fit, &design, "exchange_rate_l1") + 0.15).abs() < 1e-3);
}

#[test]
fn hnkpc_slack_coefficients_cover_zero() {
    let reps = 200;
    let mut covered = [0usize; 2];
    for seed in 0..reps {
        let dgp = phillips_dgp(1000 + seed, 150, (0.0, 0.0), 0.3, false);
        let scheme = aggregate_scheme(&dgp.panel);
        let cell = Cell::new(&dgp.panel, &scheme, "inflation", 149, 0, 1).unwrap();
        let design = hnkpc_design(&cell, "activity", "exchange_rate").unwrap();
        let fit = fit_ols(&design).unwrap();
        let se = ols_standard_errors(&design, &fit);
        for (k, name) in ["activity_l1", "exchange_rate_l1"].iter().enumerate() {
            let j = design.features.iter().position(|f| f.name == *name).unwrap();
            if (fit.coefficients[j] / se[j]).abs() < 1.96 {
                covered[k] += 1;
            }
        }
    }
    for c in covered {
        let rate = c as f64 / reps as f64;
        assert!((0.90..=0.99).contains(&rate), "coverage {rate}");
    }
}

fn sparse_design(seed: u64, n: usize, p: usize, coefs: &[f64], noise: f64) -> DesignMatrix {
    let mut r = rng(seed);
    let x = DMatrix::from_fn(n, p, |_, _| gauss(&mut r));
    let y = DVector::from_fn(n, |i, _| {
        coefs.iter().enumerate().map(|(j, b)| b * x[(i, j)]).sum::<f64>() + noise * gauss(&mut r)
    });
    DesignMatrix {
        rows: (0..n).map(|i| start().offset(i as i32)).collect(),
        features: (0..p)
            .map(|j| Feature {
                name: format!("x{j}"),
                kind: FeatureKind::Predictor,
                base: format!("x{j}"),
                lag: 1,
            })
            .collect(),
        x,
        target: y,
        horizon: 0,
        origin: start().offset(n as i32),
        forecast_row: DVector::zeros(p),
    }
}

#[test]
fn adalasso_keeps_dominant_variable_alone() {
    let seeds = 50;
    let mut alone = 0;
    for seed in 0..seeds {
        let design = sparse_design(seed, 150, 30, &[10.0], 1.0);
        let fit = fit_adalasso(&design, Default::default(), Default::default()).unwrap();
        assert!(fit.fit.coefficients[0] != 0.0, "seed {seed}: dominant variable dropped");
        // some penalty on the path kills every noise variable but not x0
        if fit
            .path
            .points
            .iter()
            .any(|p| p.beta[0] != 0.0 && p.beta[1..].iter().all(|b| *b == 0.0))
        {
            alone += 1;
        }
    }
    assert_eq!(alone, seeds);
}

#[test]
fn noise_factor_explains_little() {
    let (n, j) = (500, 100);
    for seed in 0..10 {
        let mut r = rng(seed);
        let raw = DMatrix::from_fn(n, j, |_, _| gauss(&mut r));
        let (x, ..) = infcast_core::preprocessing::standardize_matrix(&raw, &[]);
        let d = extract_factors(&x, 1).unwrap();
        assert!(d.explained[0] < 3.0 / j as f64, "share {}", d.explained[0]);
    }
}

/// Predictors with a `k`-factor structure plus idiosyncratic AR(1) noise;
/// returns the predictors and the idiosyncratic parts.
fn factor_predictors(r: &mut ChaCha8Rng, n: usize, j: usize, k: usize) -> (Vec<Predictor>, Vec<Vec<f64>>) {
    let factors: Vec<Vec<f64>> = (0..k).map(|_| (0..n).map(|_| gauss(r)).collect()).collect();
    let mut preds = Vec::new();
    let mut idio = Vec::new();
    for c in 0..j {
        let loads: Vec<f64> = (0..k).map(|_| gauss(r)).collect();
        let mut state = 0.0;
        let u: Vec<f64> = (0..n)
            .map(|_| {
                state = 0.3 * state + gauss(r);
                state
            })
            .collect();
        let x: Vec<f64> = (0..n)
            .map(|t| u[t] + (0..k).map(|f| loads[f] * factors[f][t]).sum::<f64>())
            .collect();
        preds.push(Predictor::new(format!("x{c:02}"), x, 0, TransformCode::None).unwrap());
        idio.push(u);
    }
    (preds, idio)
}

#[test]
fn factor_model_recovers_exact_factor_target() {
    let mut r = rng(6);
    let n = 200;
    let (preds, _) = factor_predictors(&mut r, n, 20, 3);
    let base = toy_panel(vec![0.0; n], preds, None);
    let origin = n - 1;
    let fb = origin_factors(&base, origin, FactorRule::Fixed(3)).unwrap();
    // target month t equals the first factor observed at information date t
    let mut panel = base.clone();
    panel.aggregate.values = (0..n).map(|t| fb.factors.at(0, t as isize).unwrap()).collect();
    let scheme = aggregate_scheme(&panel);
    let cell = Cell::new(&panel, &scheme, "inflation", origin, 0, 1).unwrap();
    let cf = fit_factor_augmented(&cell, &fb.factors, 1, PenaltySettings::default()).unwrap();
    let b = coefficient(&cf.fit, &cf.design, "f1_l1");
    assert!((b - 1.0).abs() < 1e-2, "coefficient {b}");
}

#[test]
fn tstat_preselection_has_nominal_size() {
    let reps = 1000;
    let n = 500;
    let mut selected = 0;
    for seed in 0..reps {
        let mut r = rng(10_000 + seed);
        let controls = DMatrix::from_fn(n, 2, |_, _| gauss(&mut r));
        let y = DVector::from_fn(n, |i, _| 0.5 * controls[(i, 0)] + gauss(&mut r));
        let candidate = DMatrix::from_fn(n, 1, |_, _| gauss(&mut r));
        let sel = preselect_by_tstat(&controls, &y, &candidate, PreselectMode::Threshold { alpha: 0.05 });
        selected += sel.selected.len();
    }
    let rate = selected as f64 / reps as f64;
    assert!((0.02..=0.09).contains(&rate), "rate {rate}");
}

#[test]
fn target_factor_picks_the_perfect_candidate() {
    let mut r = rng(7);
    let n = 180;
    let (preds, _) = factor_predictors(&mut r, n, 4, 1);
    let perfect = preds[2].stationary.clone();
    let mut panel = toy_panel(perfect.clone(), preds, None);
    panel.aggregate.values = perfect.clone();
    let scheme = aggregate_scheme(&panel);
    let cell = Cell::new(&panel, &scheme, "inflation", n - 1, 0, 1).unwrap();
    let cf = fit_target_factor(&cell, 1e-6, 1, PenaltySettings::default()).unwrap();
    assert!(!cf.fallback);
    let fj = cf.design.features.iter().position(|f| f.name == "tf1_l1").unwrap();
    // the factor is the standardized candidate up to sign
    let f: Vec<f64> = cf.design.x.column(fj).iter().copied().collect();
    let rows: Vec<usize> = cf.design.rows.iter().map(|d| (d.0 - start().0) as usize).collect();
    let x: Vec<f64> = rows.iter().map(|&t| perfect[t]).collect();
    let corr = correlation(&f, &x);
    assert!(corr.abs() > 1.0 - 1e-10, "correlation {corr}");
    let y = cf.design.target.as_slice();
    let ym = y.iter().sum::<f64>() / y.len() as f64;
    let sst: f64 = y.iter().map(|v| (v - ym).powi(2)).sum();
    let ssr: f64 = cf.fit.residuals.iter().map(|e| e * e).sum();
    assert!(1.0 - ssr / sst > 0.999);
}

fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

#[test]
fn farmpredict_finds_idiosyncratic_driver() {
    let seeds = 25;
    let mut hits = 0;
    for seed in 0..seeds {
        let mut r = rng(20_000 + seed);
        let n = 200;
        let (preds, idio) = factor_predictors(&mut r, n, 30, 2);
        let pi: Vec<f64> = (0..n).map(|t| 0.2 + idio[7][t] + 0.3 * gauss(&mut r)).collect();
        let panel = toy_panel(pi, preds, None);
        let scheme = aggregate_scheme(&panel);
        let fb = origin_factors(&panel, n - 1, FactorRule::IcP2 { k_max: 10 }).unwrap();
        let cell = Cell::new(&panel, &scheme, "inflation", n - 1, 0, 1).unwrap();
        let cf = fit_farmpredict(&cell, &fb, 2, PenaltySettings::default()).unwrap();
        let picked = cf
            .design
            .features
            .iter()
            .zip(&cf.fit.coefficients)
            .any(|(f, b)| f.base == "u_x07" && *b != 0.0);
        hits += usize::from(picked);
    }
    assert!(hits as f64 >= 0.8 * seeds as f64, "{hits} of {seeds}");
}

#[test]
fn forest_beats_ols_on_friedman_surface() {
    let seeds = 50;
    let mut wins = 0;
    let friedman = |x: &[f64]| {
        10.0 * (std::f64::consts::PI * x[0] * x[1]).sin() + 20.0 * (x[2] - 0.5).powi(2) + 10.0 * x[3] + 5.0 * x[4]
    };
    for seed in 0..seeds {
        let mut r = rng(30_000 + seed);
        let (n, n_test, p) = (400, 400, 10);
        let draw = |r: &mut ChaCha8Rng, rows: usize| {
            let x = DMatrix::from_fn(rows, p, |_, _| r.random::<f64>());
            let y: Vec<f64> = (0..rows)
                .map(|i| {
                    let row: Vec<f64> = x.row(i).iter().copied().collect();
                    friedman(&row) + gauss(r)
                })
                .collect();
            (x, y)
        };
        let (x, y) = draw(&mut r, n);
        let (xt, yt) = draw(&mut r, n_test);
        let forest = fit_forest(&x, &y, ForestParams { seed, ..ForestParams::default() }).unwrap();
        let names: Vec<String> = (0..p).map(|j| format!("x{j}")).collect();
        let ols = fit_ols_matrix(&x, &DVector::from_vec(y.clone()), &names).unwrap();
        let (mut mse_f, mut mse_o) = (0.0, 0.0);
        for i in 0..n_test {
            let row: Vec<f64> = xt.row(i).iter().copied().collect();
            mse_f += (yt[i] - predict_forest(&forest, &row).unwrap()).powi(2);
            mse_o += (yt[i] - ols.predict(&row)).powi(2);
        }
        wins += usize::from(mse_f < mse_o);
    }
    assert!(wins as f64 >= 0.9 * seeds as f64, "{wins} of {seeds}");
}

#[test]
fn expanding_window_record_count() {
    let syn = generate(&SyntheticSpec {
        seed: 4,
        ..SyntheticSpec::default()
    })
    .unwrap();
    let (first, last) = (100, 199);
    let mut plan = ExperimentPlan::new(
        syn.panel.clone(),
        syn.schemes.clone(),
        vec![ModelSpec::new(Estimator::Ar)],
        syn.panel.dates[first],
        syn.panel.dates[last],
        1,
    );
    plan.store_expectation = false;
    plan.models.retain(|level, _| level == AGGREGATE_LEVEL);
    let out = run_expanding_window(&plan).unwrap();
    let mut expected = 0;
    for _origin in first..=last {
        for _h in 0..12 {
            expected += 1;
        }
    }
    let aggregated = out.store.iter().filter(|(k, _)| k.component == AGGREGATE_COMPONENT).count();
    assert_eq!(aggregated, expected);
    assert_eq!(aggregated, 1200);
    assert_eq!(out.store.len(), 2 * expected);
    assert!(out.failures.is_empty());
}

#[test]
fn bottom_up_matches_dot_product() {
    let mut r = rng(8);
    let k = 9;
    let dates: Vec<MonthId> = (0..24).map(|t| start().offset(t)).collect();
    let weights: Vec<Vec<f64>> = (0..24).map(|_| (0..k).map(|_| r.random_range(0.1..2.0)).collect()).collect();
    let scheme = DisaggregationScheme {
        level_id: "groups".into(),
        component_ids: (0..k).map(|c| format!("g{c}")).collect(),
        weight_dates: dates.clone(),
        weights: weights.clone(),
        publication_lag: 2,
    };
    let origin = dates[20];
    let forecasts: Vec<f64> = (0..k).map(|_| gauss(&mut r)).collect();
    let mut store = ForecastStore::new();
    for (c, f) in forecasts.iter().enumerate() {
        store.insert(RecordKey::new("m", "groups", &format!("g{c}"), origin, 4), *f).unwrap();
    }
    let row = &weights[18];
    let total: f64 = row.iter().sum();
    let want: f64 = row.iter().zip(&forecasts).map(|(w, f)| w / total * f).sum();
    let got = aggregate_bottom_up(&store, "groups", "m", origin, 4, &scheme).unwrap();
    assert!((got - want).abs() < 1e-12);
}

#[test]
fn combination_matches_recomputed_mean() {
    let mut r = rng(9);
    let origin = start();
    let mut store = ForecastStore::new();
    let models = ["a", "b", "c", "d"];
    let values: Vec<f64> = models.iter().map(|_| gauss(&mut r)).collect();
    for (m, v) in models.iter().zip(&values) {
        store.insert(RecordKey::new(m, "groups", AGGREGATE_COMPONENT, origin, 2), *v).unwrap();
    }
    let e = gauss(&mut r);
    let c = combine_forecasts(&store, "groups", origin, 2, e, &models);
    let want = (values[0] + values[1] + values[2] + values[3] + e) / 5.0;
    assert!((c.value - want).abs() < 1e-15);
    assert_eq!(c.members, 4);
}

#[test]
fn accumulation_matches_product_loop() {
    let mut r = rng(10);
    let monthly: Vec<f64> = (0..12).map(|_| r.random_range(-1.0..2.0)).collect();
    let mut level = 1.0;
    for m in &monthly {
        level *= 1.0 + m / 100.0;
    }
    let got = accumulate_12m(&monthly, Accumulation::Compound).unwrap();
    assert!((got - 100.0 * (level - 1.0)).abs() < 1e-10);
    let ones = accumulate_12m(&[1.0; 12], Accumulation::Compound).unwrap();
    assert!((ones - 100.0 * (1.01f64.powi(12) - 1.0)).abs() < 1e-10);
}

#[test]
fn rmse_matches_two_pass() {
    let mut r = rng(11);
    let e: Vec<f64> = (0..333).map(|_| gauss(&mut r)).collect();
    let mut ss = 0.0;
    for v in &e {
        ss += v * v;
    }
    assert!((rmse(&e).unwrap() - (ss / e.len() as f64).sqrt()).abs() < 1e-12);
    assert!((rmse(&[3.0, 4.0]).unwrap() - 12.5f64.sqrt()).abs() < 1e-15);
}

#[test]
fn report_ratios_match_recomputation() {
    let mut r = rng(12);
    let n = 80;
    let realized_values: Vec<f64> = (0..n).map(|_| 0.5 + 0.3 * gauss(&mut r)).collect();
    let realized_series = Series::new("inflation", realized_values.clone(), 1);
    let realized = Realized {
        first: start(),
        series: &realized_series,
    };
    let mut store = ForecastStore::new();
    let mut errors: BTreeMap<(&str, usize), Vec<f64>> = BTreeMap::new();
    let mut forecasts: BTreeMap<(&str, usize), Vec<f64>> = BTreeMap::new();
    for o in 30..60usize {
        for h in 0..12usize {
            for model in ["RW", "A", EXPECTATION_MODEL] {
                let v = 0.5 + 0.4 * gauss(&mut r);
                store
                    .insert(RecordKey::new(model, AGGREGATE_LEVEL, AGGREGATE_COMPONENT, start().offset(o as i32), h), v)
                    .unwrap();
                errors.entry((model, h)).or_default().push(realized_values[o + h] - v);
                forecasts.entry((model, o)).or_default().push(v);
            }
        }
    }
    let report = build_report(&store, &realized, &ReportOptions::new("RW"));
    let ms = |e: &[f64]| (e.iter().map(|v| v * v).sum::<f64>() / e.len() as f64).sqrt();
    for model in ["A", EXPECTATION_MODEL] {
        for h in 0..12 {
            let row = report
                .rows
                .iter()
                .find(|row| row.model == model && row.horizon == HorizonKey::Month(h) && row.subperiod == "full")
                .unwrap();
            let want = ms(&errors[&(model, h)]) / ms(&errors[&("RW", h)]);
            assert!((row.ratio - want).abs() < 1e-12);
            assert_eq!(row.n, 30);
        }
        let acc = report
            .rows
            .iter()
            .find(|row| row.model == model && row.horizon == HorizonKey::Accumulated)
            .unwrap();
        let compound = |v: &[f64]| 100.0 * (v.iter().map(|x| 1.0 + x / 100.0).product::<f64>() - 1.0);
        let mut em = Vec::new();
        let mut eb = Vec::new();
        for o in 30..60usize {
            let truth = compound(&realized_values[o..o + 12]);
            em.push(truth - compound(&forecasts[&(model, o)]));
            eb.push(truth - compound(&forecasts[&("RW", o)]));
        }
        assert!((acc.ratio - ms(&em) / ms(&eb)).abs() < 1e-12);
    }
}

#[test]
fn noise_free_synthetic_components_follow_their_truth() {
    let spec = SyntheticSpec {
        noise_scale: 0.0,
        factor_noise: 0.0,
        seed: 13,
        ..SyntheticSpec::default()
    };
    let syn = generate(&spec).unwrap();
    let level = syn.truth.level.clone();
    let n = syn.panel.len();
    let first = spec.lag_depth + 1;
    for truth in &syn.truth.components {
        let series = syn.panel.component(&level, &truth.component).unwrap();
        // idiosyncratic terms are the stationary predictors once factors are switched off
        let terms: Vec<_> = truth.support.iter().filter(|t| t.kind == "idiosyncratic").collect();
        let width = 1 + 11 + terms.len();
        let rows = n - first;
        let x = DMatrix::from_fn(rows, width, |i, j| {
            let t = i + first;
            match j {
                0 => series.values[t - 1],
                1..=11 => f64::from(u8::from(start_of(&spec, t).month() as usize == j + 1)),
                _ => {
                    let term = terms[j - 12];
                    syn.panel.predictors[&term.variable].stationary[t - term.lag]
                }
            }
        });
        let y = DVector::from_fn(rows, |i, _| series.values[i + first]);
        let names: Vec<String> = (0..width).map(|j| format!("c{j}")).collect();
        let fit = fit_ols_matrix(&x, &y, &names).unwrap();
        assert!((fit.intercept - truth.intercept).abs() < 1e-6, "{}", truth.component);
        assert!((fit.coefficients[0] - truth.own_ar).abs() < 1e-6);
        for m in 1..12 {
            assert!((fit.coefficients[m] - truth.seasonal[m]).abs() < 1e-6);
        }
        for (k, term) in terms.iter().enumerate() {
            assert!((fit.coefficients[12 + k] - term.coefficient).abs() < 1e-6);
        }
    }
}

fn start_of(spec: &SyntheticSpec, t: usize) -> MonthId {
    spec.start.offset(t as i32)
}
