//! Seedable synthetic panels with a known data-generating process.
//!
//! Predictors follow a `K`-factor structure with AR(1) factors and AR(1)
//! idiosyncratic terms. Each finest-level component is an AR(1) with
//! seasonal means and sparse loadings on lagged factors and lagged
//! idiosyncratic terms. Coarser levels and the aggregate are exact weighted
//! sums under slowly drifting weights.

use std::collections::BTreeMap;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::data_model::{
    DisaggregationScheme, Expectation, MonthId, Predictor, Series, SeriesPanel, DEFAULT_WEIGHT_PUBLICATION_LAG,
};
use crate::error::{Error, Result};
use crate::preprocessing::TransformCode;

pub const AGGREGATE_ID: &str = "inflation";

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticSpec {
    pub n_months: usize,
    pub start: MonthId,
    /// Disaggregation levels from coarsest to finest; the last one carries
    /// the data-generating process.
    pub levels: Vec<(String, usize)>,
    pub n_predictors: usize,
    pub n_factors: usize,
    /// Nonzero predictor effects per component.
    pub sparsity: usize,
    /// Largest lag of a true effect.
    pub lag_depth: usize,
    pub noise_scale: f64,
    pub factor_noise: f64,
    pub idiosyncratic_noise: f64,
    pub seasonal_amplitude: f64,
    pub expectation_noise: f64,
    pub weight_drift: f64,
    pub inflation_lag: usize,
    pub expectation_horizons: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_months: 220,
            start: MonthId::from_ym(2003, 1),
            levels: vec![
                ("categories".into(), 3),
                ("groups".into(), 9),
                ("subgroups".into(), 19),
            ],
            n_predictors: 90,
            n_factors: 3,
            sparsity: 5,
            lag_depth: 3,
            noise_scale: 0.1,
            factor_noise: 1.0,
            idiosyncratic_noise: 1.0,
            seasonal_amplitude: 0.2,
            expectation_noise: 0.05,
            weight_drift: 0.01,
            inflation_lag: 1,
            expectation_horizons: 12,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::InvalidSpec(m));
        if self.n_months < 60 {
            return fail(format!("n_months = {} must be at least 60", self.n_months));
        }
        if self.n_predictors < 2 {
            return fail("at least two predictors are required".into());
        }
        if self.n_factors > self.n_predictors {
            return fail(format!(
                "n_factors = {} exceeds n_predictors = {}",
                self.n_factors, self.n_predictors
            ));
        }
        if self.lag_depth == 0 {
            return fail("lag_depth must be at least 1".into());
        }
        if self.sparsity == 0 || self.sparsity > self.n_predictors * self.lag_depth {
            return fail(format!(
                "sparsity = {} must lie in 1..=n_predictors * lag_depth = {}",
                self.sparsity,
                self.n_predictors * self.lag_depth
            ));
        }
        if self.levels.is_empty() {
            return fail("at least one disaggregation level is required".into());
        }
        let mut prev = 1;
        for (id, n) in &self.levels {
            if *n < prev {
                return fail(format!("level `{id}` has {n} components, fewer than its parent level"));
            }
            prev = *n;
        }
        for (name, v) in [
            ("noise_scale", self.noise_scale),
            ("factor_noise", self.factor_noise),
            ("idiosyncratic_noise", self.idiosyncratic_noise),
            ("seasonal_amplitude", self.seasonal_amplitude),
            ("expectation_noise", self.expectation_noise),
            ("weight_drift", self.weight_drift),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return fail(format!("{name} = {v} must be finite and nonnegative"));
            }
        }
        Ok(())
    }

    pub fn predictor_ids(&self) -> Vec<String> {
        (0..self.n_predictors)
            .map(|j| match j {
                0 => "activity".to_string(),
                1 => "exchange_rate".to_string(),
                _ => format!("x{:03}", j + 1),
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TruthTerm {
    /// `f<k>` for a factor, otherwise a predictor id whose idiosyncratic part
    /// enters.
    pub variable: String,
    pub kind: &'static str,
    pub lag: usize,
    pub coefficient: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ComponentTruth {
    pub component: String,
    pub intercept: f64,
    pub own_ar: f64,
    /// Seasonal shift by calendar month, January first and equal to zero.
    pub seasonal: Vec<f64>,
    pub support: Vec<TruthTerm>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GroundTruth {
    pub seed: u64,
    pub level: String,
    pub n_factors: usize,
    pub components: Vec<ComponentTruth>,
    /// `J x K` loadings of the predictors on the factors.
    pub loadings: Vec<Vec<f64>>,
}

#[derive(Clone, Debug)]
pub struct Synthetic {
    pub panel: SeriesPanel,
    /// Aggregate scheme first, then the levels from coarsest to finest.
    pub schemes: Vec<DisaggregationScheme>,
    pub truth: GroundTruth,
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

pub fn component_id(level: &str, i: usize) -> String {
    let prefix: String = level.chars().take(3).collect();
    format!("{prefix}{:02}", i + 1)
}

/// Simulates a panel, its disaggregation schemes and the ground truth.
pub fn generate(spec: &SyntheticSpec) -> Result<Synthetic> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.n_months;
    let extra = spec.expectation_horizons;
    let total = n + extra;
    let burn = 50;
    let (j_count, k_count, p) = (spec.n_predictors, spec.n_factors, spec.lag_depth);

    // predictors: factors and idiosyncratic AR(1) terms
    let mut factors = vec![vec![0.0; total]; k_count];
    for f in factors.iter_mut() {
        let mut state = 0.0;
        for t in 0..burn + total {
            state = 0.6 * state + spec.factor_noise * normal(&mut rng);
            if t >= burn {
                f[t - burn] = state;
            }
        }
    }
    let loadings: Vec<Vec<f64>> = (0..j_count)
        .map(|_| (0..k_count).map(|_| normal(&mut rng)).collect())
        .collect();
    let mut idio = vec![vec![0.0; total]; j_count];
    for u in idio.iter_mut() {
        let rho = rng.random_range(0.0..0.5);
        let mut state = 0.0;
        for t in 0..burn + total {
            state = rho * state + spec.idiosyncratic_noise * normal(&mut rng);
            if t >= burn {
                u[t - burn] = state;
            }
        }
    }
    let x: Vec<Vec<f64>> = (0..j_count)
        .map(|j| {
            (0..total)
                .map(|t| idio[j][t] + (0..k_count).map(|k| loadings[j][k] * factors[k][t]).sum::<f64>())
                .collect()
        })
        .collect();

    // finest-level components
    let (fine_level, n_fine) = spec.levels.last().cloned().expect("validated");
    let ids = spec.predictor_ids();
    let mut truths = Vec::with_capacity(n_fine);
    let mut fine = vec![vec![0.0; total]; n_fine];
    for i in 0..n_fine {
        let intercept = rng.random_range(0.1..0.3);
        let own_ar = rng.random_range(0.2..0.6);
        let phase = rng.random_range(0.0..12.0);
        let wave = |m: f64| (2.0 * std::f64::consts::PI * (m + phase) / 12.0).sin();
        let seasonal: Vec<f64> = (0..12)
            .map(|m| spec.seasonal_amplitude * (wave(m as f64) - wave(0.0)))
            .collect();
        let mut support = Vec::with_capacity(spec.sparsity);
        let n_factor_terms = usize::from(k_count > 0);
        if k_count > 0 {
            support.push(TruthTerm {
                variable: format!("f{}", i % k_count + 1),
                kind: "factor",
                lag: 1,
                coefficient: signed_effect(&mut rng),
            });
        }
        let picks = sample(&mut rng, j_count * p, spec.sparsity - n_factor_terms);
        for pick in picks.into_iter() {
            support.push(TruthTerm {
                variable: ids[pick / p].clone(),
                kind: "idiosyncratic",
                lag: pick % p + 1,
                coefficient: signed_effect(&mut rng),
            });
        }
        let term_series: Vec<(&[f64], usize, f64)> = support
            .iter()
            .map(|term| {
                let s: &[f64] = if term.kind == "factor" {
                    let k: usize = term.variable[1..].parse().expect("factor name");
                    &factors[k - 1]
                } else {
                    &idio[ids.iter().position(|id| *id == term.variable).expect("known id")]
                };
                (s, term.lag, term.coefficient)
            })
            .collect();
        let mut prev = intercept / (1.0 - own_ar);
        for t in 0..total {
            let month = spec.start.offset(t as i32).month() as usize - 1;
            let effects: f64 = term_series
                .iter()
                .map(|(s, lag, b)| if t >= *lag { b * s[t - lag] } else { 0.0 })
                .sum();
            let v = intercept + seasonal[month] + own_ar * prev + effects + spec.noise_scale * normal(&mut rng);
            fine[i][t] = v;
            prev = v;
        }
        truths.push(ComponentTruth {
            component: component_id(&fine_level, i),
            intercept,
            own_ar,
            seasonal,
            support,
        });
    }

    // drifting finest-level weights, renormalized every month
    let mut weights = vec![vec![0.0; n_fine]; total];
    let mut log_w: Vec<f64> = (0..n_fine).map(|_| rng.random_range(0.5f64..1.5).ln()).collect();
    for row in weights.iter_mut() {
        for lw in log_w.iter_mut() {
            *lw += spec.weight_drift * normal(&mut rng);
        }
        let raw: Vec<f64> = log_w.iter().map(|l| l.exp()).collect();
        let s: f64 = raw.iter().sum();
        row.iter_mut().zip(&raw).for_each(|(w, r)| *w = r / s);
    }
    let aggregate: Vec<f64> = (0..total)
        .map(|t| (0..n_fine).map(|i| weights[t][i] * fine[i][t]).sum())
        .collect();

    // expectations of the aggregate, noisier at longer horizons
    let by_horizon: Vec<Vec<f64>> = (0..spec.expectation_horizons)
        .map(|h| {
            let sd = spec.expectation_noise * (1.0 + h as f64 / 3.0);
            (0..n).map(|s| aggregate[s + h] + sd * normal(&mut rng)).collect()
        })
        .collect();

    // raw predictor levels under their transform codes
    let mut predictors = BTreeMap::new();
    for (j, id) in ids.iter().enumerate() {
        let (code, lag) = match j {
            0 => (TransformCode::None, 1),
            1 => (TransformCode::PctChange, 0),
            _ => (
                [TransformCode::None, TransformCode::PctChange, TransformCode::FirstDiff][j % 3],
                (j / 3) % 3,
            ),
        };
        let raw = integrate(&x[j][..n], code);
        predictors.insert(id.clone(), Predictor::new(id.clone(), raw, lag, code)?);
    }

    let dates: Vec<MonthId> = (0..n).map(|t| spec.start.offset(t as i32)).collect();
    let lag = spec.inflation_lag;
    let mut disaggregates = BTreeMap::new();
    let mut schemes = vec![DisaggregationScheme::aggregate(AGGREGATE_ID, &dates)];
    for (li, (level, n_comp)) in spec.levels.iter().enumerate() {
        // finest component -> component of this level
        let parent = |i: usize| {
            let mut idx = i;
            for w in spec.levels[li..].windows(2).rev() {
                idx = idx * w[0].1 / w[1].1;
            }
            idx
        };
        let members: Vec<Vec<usize>> = (0..*n_comp)
            .map(|c| (0..n_fine).filter(|&i| parent(i) == c).collect())
            .collect();
        let mut level_weights = vec![vec![0.0; *n_comp]; n];
        for (c, m) in members.iter().enumerate() {
            for t in 0..n {
                level_weights[t][c] = m.iter().map(|&i| weights[t][i]).sum();
            }
            let values: Vec<f64> = if li + 1 == spec.levels.len() {
                fine[c][..n].to_vec()
            } else {
                (0..n)
                    .map(|t| m.iter().map(|&i| weights[t][i] * fine[i][t]).sum::<f64>() / level_weights[t][c])
                    .collect()
            };
            let id = component_id(level, c);
            disaggregates.insert((level.clone(), id.clone()), Series::new(id, values, lag));
        }
        schemes.push(DisaggregationScheme {
            level_id: level.clone(),
            component_ids: (0..*n_comp).map(|c| component_id(level, c)).collect(),
            weight_dates: dates.clone(),
            weights: level_weights,
            publication_lag: DEFAULT_WEIGHT_PUBLICATION_LAG,
        });
    }

    let panel = SeriesPanel {
        dates,
        aggregate: Series::new(AGGREGATE_ID, aggregate[..n].to_vec(), lag),
        disaggregates,
        predictors,
        expectation: (spec.expectation_horizons > 0).then(|| Expectation {
            ids: (0..spec.expectation_horizons)
                .map(|h| format!("expectation_h{h}"))
                .collect(),
            by_horizon,
            availability_lag: 0,
        }),
    };
    Ok(Synthetic {
        panel,
        schemes,
        truth: GroundTruth {
            seed: spec.seed,
            level: fine_level,
            n_factors: k_count,
            components: truths,
            loadings,
        },
    })
}

fn signed_effect(rng: &mut ChaCha8Rng) -> f64 {
    let size = rng.random_range(0.05..0.15);
    if rng.random_bool(0.5) {
        size
    } else {
        -size
    }
}

/// Raw level series whose transform reproduces `x` from the second month on.
fn integrate(x: &[f64], code: TransformCode) -> Vec<f64> {
    match code {
        TransformCode::None => x.to_vec(),
        TransformCode::PctChange => {
            let mut level = 100.0;
            let mut out = vec![level];
            for v in &x[1..] {
                level *= 1.0 + v / 100.0;
                out.push(level);
            }
            out
        }
        TransformCode::FirstDiff => {
            let mut level = 50.0;
            let mut out = vec![level];
            for v in &x[1..] {
                level += v;
                out.push(level);
            }
            out
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data_model::validate_panel;

    fn small() -> SyntheticSpec {
        SyntheticSpec {
            n_months: 80,
            n_predictors: 12,
            ..SyntheticSpec::default()
        }
    }

    #[test]
    fn deterministic_and_valid() {
        let a = generate(&small()).unwrap();
        let b = generate(&small()).unwrap();
        // transformed predictors start with NaN, so compare renderings
        assert_eq!(format!("{:?}", a.panel), format!("{:?}", b.panel));
        assert!(validate_panel(&a.panel, &a.schemes).is_empty());
        let c = generate(&SyntheticSpec { seed: 1, ..small() }).unwrap();
        assert_ne!(a.panel.aggregate, c.panel.aggregate);
    }

    #[test]
    fn nested_levels_and_supports() {
        let s = generate(&small()).unwrap();
        assert_eq!(s.schemes.len(), 4);
        let sizes: Vec<usize> = s.schemes.iter().map(|x| x.n_components()).collect();
        assert_eq!(sizes, vec![1, 3, 9, 19]);
        for sc in &s.schemes {
            for row in &sc.weights {
                assert!(row.iter().all(|w| *w >= 0.0));
                assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            }
        }
        assert!(s.truth.components.iter().all(|c| c.support.len() == 5));
        let t = 37;
        for sc in &s.schemes[1..] {
            let total: f64 = sc
                .component_ids
                .iter()
                .enumerate()
                .map(|(c, id)| sc.weights[t][c] * s.panel.component(&sc.level_id, id).unwrap().values[t])
                .sum();
            assert!((total - s.panel.aggregate.values[t]).abs() <= 1e-12);
        }
    }

    #[test]
    fn invalid_sparsity() {
        let spec = SyntheticSpec {
            sparsity: 12 * 3 + 1,
            ..small()
        };
        assert!(matches!(generate(&spec), Err(Error::InvalidSpec(m)) if m.contains("sparsity")));
    }

    #[test]
    fn transforms_round_trip() {
        let s = generate(&small()).unwrap();
        assert!(s.panel.predictors.values().all(|p| p.stationary[1..].iter().all(|v| v.is_finite())));
        assert!(s.panel.aggregate.values.iter().all(|v| v.is_finite()));
    }
}
