use chrono::{Days, NaiveDate};
use ndarray::{Array1, Array2};
use proptest::prelude::*;

use fxcast_core::interpret::{
    brute_force_shapley, ensemble_value_function, tree_shap, ImportanceMethod, ImportanceReport, Normalization,
};
use fxcast_core::metrics::{mae, nrmse, SummaryStats};
use fxcast_core::timeseries::{add_lags, align_mixed_frequency, make_supervised, Frequency, TimeSeries};
use fxcast_core::tree::{fit_gbm, MaxFeatures, TreeHyperparams};
use fxcast_core::windowing::{rolling_windows, train_count, YearMonth};

fn paired_series() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (1usize..40).prop_flat_map(|n| {
        (
            prop::collection::vec(-10.0f64..10.0, n),
            prop::collection::vec(-10.0f64..10.0, n),
        )
    })
}

proptest! {
    #[test]
    fn nrmse_scale_invariant_mae_homogeneous((y, yhat) in paired_series(), c in 0.01f64..100.0) {
        prop_assume!(y.iter().any(|v| v.abs() > 1e-3));
        let cy: Vec<f64> = y.iter().map(|v| v * c).collect();
        let ch: Vec<f64> = yhat.iter().map(|v| v * c).collect();
        let (a, b) = (nrmse(&y, &yhat).unwrap(), nrmse(&cy, &ch).unwrap());
        prop_assert!((a - b).abs() <= 1e-10 * a.max(1.0));
        let (m, mc) = (mae(&y, &yhat).unwrap(), mae(&cy, &ch).unwrap());
        prop_assert!((mc - c * m).abs() <= 1e-10 * mc.max(1.0));
        let neg: Vec<f64> = y.iter().map(|v| -v).collect();
        let negh: Vec<f64> = yhat.iter().map(|v| -v).collect();
        prop_assert!((mae(&neg, &negh).unwrap() - m).abs() <= 1e-12);
    }

    #[test]
    fn shapley_axioms_on_random_games(values in prop::collection::vec(-5.0f64..5.0, 16), dummy in 0usize..4) {
        // A 4-player game plus a dummy player that never changes the value.
        let base = |s: u32| values[s as usize & 0xF];
        let game = |s: u32| {
            let without = (s & ((1 << dummy) - 1)) | ((s >> (dummy + 1)) << dummy);
            base(without)
        };
        let phi = brute_force_shapley(game, 5).unwrap();
        // Efficiency.
        prop_assert!((phi.iter().sum::<f64>() - (game(0x1F) - game(0))).abs() < 1e-10);
        // Dummy.
        prop_assert!(phi[dummy].abs() < 1e-12);
        // Symmetry: swapping the roles of two players in a symmetric game.
        let sym = |s: u32| values[(s.count_ones() as usize) % 16];
        let ps = brute_force_shapley(sym, 4).unwrap();
        for j in 1..4 {
            prop_assert!((ps[j] - ps[0]).abs() < 1e-12);
        }
    }

    #[test]
    fn tree_shap_equals_enumeration(seed in any::<u64>(), p in 1usize..7, depth in 1usize..5, trees in 1usize..5) {
        let x = Array2::from_shape_fn((40, p), |(i, j)| (((i * 31 + j * 17) as u64 ^ seed) % 97) as f64 / 10.0);
        let y = Array1::from_shape_fn(40, |i| x[[i, 0]].sin() + x[[i, p - 1]] * 0.3);
        let hp = TreeHyperparams { n_estimators: trees, max_depth: depth, max_features: MaxFeatures::All, learning_rate: 0.3, seed };
        let m = fit_gbm(x.view(), y.view(), &hp).unwrap();
        for row in x.rows().into_iter().step_by(7) {
            let a = tree_shap(&m, row).unwrap();
            let oracle = brute_force_shapley(|s| ensemble_value_function(&m, row, s), p).unwrap();
            for j in 0..p {
                prop_assert!((a.phi[j] - oracle[j]).abs() < 1e-10);
            }
            prop_assert!((a.base_value + a.phi.iter().sum::<f64>() - m.predict_row(row)).abs() < 1e-10);
        }
    }

    #[test]
    fn importance_normalization(raw in prop::collection::vec(-1.0f64..10.0, 1..12)) {
        let names: Vec<String> = (0..raw.len()).map(|i| format!("f{i}")).collect();
        let r = ImportanceReport::from_raw(ImportanceMethod::Permutation, &names, raw.clone()).unwrap();
        let max = raw.iter().copied().fold(0.0, f64::max);
        prop_assert!(r.scores.values().all(|s| (0.0..=1.0).contains(s)));
        if max > 0.0 {
            prop_assert_eq!(r.normalization, Normalization::DivideByMax);
            prop_assert!(r.scores.values().any(|s| *s == 1.0));
        } else {
            prop_assert_eq!(r.normalization, Normalization::AllZero);
        }
        // Raw scores keep their sign.
        prop_assert_eq!(r.raw_scores.values().copied().collect::<Vec<_>>(), raw);
    }

    #[test]
    fn supervised_rows_shift_target(values in prop::collection::vec(-5.0f64..5.0, 12..40), h in 1usize..6, k in 1usize..4) {
        let start = NaiveDate::from_ymd_opt(2020, 1, 6).unwrap();
        let dates: Vec<NaiveDate> = (0..values.len()).map(|i| start + Days::new(i as u64)).collect();
        let fx = TimeSeries::new("fx", Frequency::Daily, dates.iter().copied().zip(values.iter().copied()).collect()).unwrap();
        let other = TimeSeries::new("z", Frequency::Daily, dates.iter().copied().zip(values.iter().map(|v| v * 2.0)).collect()).unwrap();
        let table = align_mixed_frequency(&[fx, other], Frequency::Daily).unwrap();
        let ds = make_supervised(&table, "fx", h, false, None).unwrap();
        prop_assert_eq!(ds.n_rows(), values.len() - h);
        for t in 0..ds.n_rows() {
            prop_assert_eq!(ds.y[t], values[t + h]);
            prop_assert_eq!(ds.x[[t, 0]], values[t] * 2.0);
        }
        let lagged = add_lags(&ds, "fx", k).unwrap();
        prop_assert_eq!(lagged.n_rows(), ds.n_rows() - k);
        for t in 0..lagged.n_rows() {
            for j in 1..=k {
                prop_assert_eq!(lagged.x[[t, j]], values[t + k - j]);
            }
            prop_assert_eq!(lagged.y[t], values[t + k + h]);
        }
    }

    #[test]
    fn rolling_windows_partition_months(window in 2u32..40, stride in 1u32..12, frac in 0.1f64..0.95, span in 0i64..100) {
        let start: YearMonth = "2009-01".parse().unwrap();
        let end = start.add_months(span);
        match rolling_windows(start, end, window, stride, frac) {
            Ok(s) => {
                for (i, w) in s.windows.iter().enumerate() {
                    prop_assert_eq!(w.index, i);
                    prop_assert!(w.span.first >= start && w.span.last <= end);
                    prop_assert_eq!(w.span.months(), window as i64);
                    prop_assert!(w.train_months.last < w.test_months.first);
                    if i > 0 {
                        prop_assert_eq!(s.windows[i - 1].span.first.add_months(stride as i64), w.span.first);
                    }
                }
            }
            Err(_) => prop_assert!((span + 1) < window as i64),
        }
    }

    #[test]
    fn train_count_bounds(n in 0usize..10_000, frac in 0.0f64..1.0) {
        let k = train_count(n, frac);
        prop_assert!(k <= n);
        prop_assert!((k as f64) <= n as f64 * frac + 1e-6);
        prop_assert!((k as f64) > n as f64 * frac - 1.0 - 1e-6);
    }

    #[test]
    fn summary_sd_translation_invariant(v in prop::collection::vec(-100.0f64..100.0, 2..50), shift in -1e3f64..1e3) {
        let a = SummaryStats::of(&v).unwrap();
        let moved: Vec<f64> = v.iter().map(|x| x + shift).collect();
        let b = SummaryStats::of(&moved).unwrap();
        prop_assert!((a.sd - b.sd).abs() < 1e-8);
        prop_assert!((b.mean - a.mean - shift).abs() < 1e-8);
        prop_assert!(b.min <= b.median && b.median <= b.max);
    }
}
