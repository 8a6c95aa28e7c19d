use infcast_core::data_model::AGGREGATE_COMPONENT;
use infcast_core::evaluation::LongRunVariance;
use infcast_core::harness::aggregate_bottom_up;
use infcast_core::preprocessing::{apply_transform, invert_transform};
use infcast_core::{
    dm_test, last_available_weights, DisaggregationScheme, ForecastStore, MonthId, RecordKey, TransformCode,
};
use proptest::prelude::*;

fn scheme_strategy() -> impl Strategy<Value = DisaggregationScheme> {
    (1usize..5, 1usize..12, 0usize..4).prop_flat_map(|(k, rows, lag)| {
        (
            prop::collection::vec(1i32..4, rows),
            prop::collection::vec(prop::collection::vec(0.01f64..5.0, k), rows),
        )
            .prop_map(move |(gaps, weights)| {
                let mut d = MonthId::from_ym(2010, 1).0;
                let weight_dates = gaps
                    .iter()
                    .map(|g| {
                        d += g;
                        MonthId(d)
                    })
                    .collect();
                DisaggregationScheme {
                    level_id: "groups".into(),
                    component_ids: (0..k).map(|c| format!("g{c}")).collect(),
                    weight_dates,
                    weights,
                    publication_lag: lag,
                }
            })
    })
}

proptest! {
    #[test]
    fn last_available_weights_matches_linear_scan(scheme in scheme_strategy(), offset in 0i32..40) {
        let origin = MonthId(MonthId::from_ym(2010, 1).0 + offset);
        let mut latest = None;
        for (d, row) in scheme.weight_dates.iter().zip(&scheme.weights) {
            if d.0 + scheme.publication_lag as i32 <= origin.0 {
                latest = Some(row);
            }
        }
        match (latest, last_available_weights(&scheme, origin)) {
            (None, Err(_)) => {}
            (Some(row), Ok(w)) => {
                let total: f64 = row.iter().sum();
                prop_assert_eq!(w.len(), row.len());
                for (got, raw) in w.iter().zip(row) {
                    prop_assert!((got - raw / total).abs() <= 1e-15);
                }
            }
            (want, got) => prop_assert!(false, "expected {:?}, got {:?}", want, got),
        }
    }

    #[test]
    fn transforms_invert(first in 1.0f64..200.0, steps in prop::collection::vec(-5.0f64..5.0, 1..40)) {
        for code in [TransformCode::PctChange, TransformCode::FirstDiff] {
            let raw = invert_transform(first, &steps, code);
            let back = apply_transform(&raw, code).unwrap();
            prop_assert_eq!(back.len(), steps.len());
            for (b, s) in back.iter().zip(&steps) {
                prop_assert!((b - s).abs() <= 1e-9 * (1.0 + s.abs()), "{:?}: {} vs {}", code, b, s);
            }
            let again = invert_transform(raw[0], &back, code);
            for (a, r) in again.iter().zip(&raw) {
                prop_assert!((a - r).abs() <= 1e-9 * r.abs().max(1.0));
            }
        }
        let plain = apply_transform(&steps, TransformCode::None).unwrap();
        prop_assert_eq!(invert_transform(first, &plain, TransformCode::None), steps);
    }

    #[test]
    fn dm_is_antisymmetric(
        pairs in prop::collection::vec((-3.0f64..3.0, -3.0f64..3.0), 10..80),
        h in 0usize..12,
    ) {
        let (a, b): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        for v in [LongRunVariance::NeweyWest, LongRunVariance::Plain] {
            let ab = dm_test(&a, &b, h, v).unwrap();
            let ba = dm_test(&b, &a, h, v).unwrap();
            prop_assert_eq!(ab.degenerate, ba.degenerate);
            prop_assert_eq!(ab.statistic, -ba.statistic);
            prop_assert!((ab.p_value + ba.p_value - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn dm_is_scale_invariant(
        pairs in prop::collection::vec((-3.0f64..3.0, -3.0f64..3.0), 10..80),
        h in 0usize..12,
        power in -6i32..6,
        c in 0.01f64..100.0,
    ) {
        let (a, b): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let base = dm_test(&a, &b, h, LongRunVariance::NeweyWest).unwrap();
        // powers of two rescale without rounding
        let s = 2f64.powi(power);
        let exact = dm_test(
            &a.iter().map(|x| x * s).collect::<Vec<_>>(),
            &b.iter().map(|x| x * s).collect::<Vec<_>>(),
            h,
            LongRunVariance::NeweyWest,
        )
        .unwrap();
        prop_assert_eq!(base, exact);
        let scaled = dm_test(
            &a.iter().map(|x| x * c).collect::<Vec<_>>(),
            &b.iter().map(|x| x * c).collect::<Vec<_>>(),
            h,
            LongRunVariance::NeweyWest,
        )
        .unwrap();
        if !base.degenerate {
            prop_assert!((base.statistic - scaled.statistic).abs() <= 1e-9 * (1.0 + base.statistic.abs()));
        }
    }

    #[test]
    fn bottom_up_aggregation_is_linear(
        scheme in scheme_strategy(),
        f in prop::collection::vec(-5.0f64..5.0, 4),
        g in prop::collection::vec(-5.0f64..5.0, 4),
        alpha in -3.0f64..3.0,
        beta in -3.0f64..3.0,
    ) {
        let origin = scheme.weight_dates.last().unwrap().offset(scheme.publication_lag as i32);
        let mut store = ForecastStore::new();
        for (c, id) in scheme.component_ids.iter().enumerate() {
            for (model, v) in [("f", f[c]), ("g", g[c]), ("mix", alpha * f[c] + beta * g[c]), ("one", 1.7)] {
                store.insert(RecordKey::new(model, &scheme.level_id, id, origin, 3), v).unwrap();
            }
        }
        let agg = |m: &str| aggregate_bottom_up(&store, &scheme.level_id, m, origin, 3, &scheme).unwrap();
        let want = alpha * agg("f") + beta * agg("g");
        prop_assert!((agg("mix") - want).abs() <= 1e-12 * (1.0 + want.abs()) * 10.0);
        prop_assert!((agg("one") - 1.7).abs() <= 1e-12);
        prop_assert!(store.get("f", &scheme.level_id, AGGREGATE_COMPONENT, origin, 3).is_none());
    }
}
