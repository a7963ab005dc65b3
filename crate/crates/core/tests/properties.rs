use approx::assert_relative_eq;
use proptest::prelude::*;

use paratrend::kernel_smoothing::{local_linear_weights, smooth_series};
use paratrend::panel::TimeSeriesPanel;
use paratrend::test_engine::{delta_hat, delta_index, empirical_quantile, p_value};
use paratrend::{Bandwidth, EvalGrid, KernelSpec};

fn kernel_strategy() -> impl Strategy<Value = KernelSpec> {
    prop_oneof![Just(KernelSpec::Epanechnikov), Just(KernelSpec::TruncatedGaussian)]
}

fn design() -> impl Strategy<Value = (usize, f64, f64)> {
    (10usize..1500).prop_flat_map(|t| {
        let lo = (2.5 / t as f64).max(0.005);
        (Just(t), lo..=1.0, 0.0..=1.0f64)
    })
}

fn panel_strategy() -> impl Strategy<Value = Vec<Vec<f64>>> {
    (2usize..6, 30usize..80).prop_flat_map(|(n, t)| prop::collection::vec(prop::collection::vec(-3.0..3.0f64, t), n))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn weights_reproduce_constants_and_lines(kernel in kernel_strategy(), (t, b, u) in design()) {
        let w = local_linear_weights(kernel, t, Bandwidth::new(b, t).unwrap(), u).unwrap();
        let mut sum = 0.0;
        let mut first = 0.0;
        for (j, v) in w.values.iter().enumerate() {
            sum += v;
            first += v * ((w.first + j + 1) as f64 / t as f64 - u);
        }
        prop_assert!((sum - 1.0).abs() <= 1e-10);
        prop_assert!(first.abs() <= 1e-10);
    }

    #[test]
    fn smoothing_is_linear(kernel in kernel_strategy(), rows in panel_strategy(), a in -4.0..4.0f64, b in 0.1..0.6f64) {
        let t = rows[0].len();
        let bw = Bandwidth::new(b, t).unwrap();
        let grid = EvalGrid::uniform(41).unwrap();
        let combo: Vec<f64> = rows[0].iter().zip(&rows[1]).map(|(x, y)| a * x + y).collect();
        let lhs = smooth_series(kernel, bw, &combo, grid.points()).unwrap();
        let x = smooth_series(kernel, bw, &rows[0], grid.points()).unwrap();
        let y = smooth_series(kernel, bw, &rows[1], grid.points()).unwrap();
        for (l, (p, q)) in lhs.iter().zip(x.iter().zip(&y)) {
            prop_assert!((l - (a * p + q)).abs() <= 1e-10);
        }
    }

    #[test]
    fn statistic_ignores_shifts_and_common_signal(
        rows in panel_strategy(),
        shift in -50.0..50.0f64,
        amp in -5.0..5.0f64,
        b in 0.15..0.6f64,
    ) {
        let t = rows[0].len();
        let bw = Bandwidth::new(b, t).unwrap();
        let base = TimeSeriesPanel::new(rows.clone()).unwrap();
        let moved: Vec<Vec<f64>> = rows
            .iter()
            .enumerate()
            .map(|(i, r)| {
                r.iter()
                    .enumerate()
                    .map(|(s, x)| x + shift * (i as f64 - 1.5) + amp * (4.0 * (s + 1) as f64 / t as f64).sin())
                    .collect()
            })
            .collect();
        let d0 = delta_hat(&base, KernelSpec::Epanechnikov, bw, EvalGrid::design(t)).unwrap();
        let d1 = delta_hat(&TimeSeriesPanel::new(moved).unwrap(), KernelSpec::Epanechnikov, bw, EvalGrid::design(t)).unwrap();
        prop_assert!(d0 >= 0.0);
        prop_assert!((d1 - d0).abs() <= 1e-9 * d0.max(1e-3));
    }

    #[test]
    fn statistic_scales_quadratically(rows in panel_strategy(), c in 0.1..10.0f64) {
        let t = rows[0].len();
        let bw = Bandwidth::new(0.3, t).unwrap();
        let scaled: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().map(|x| c * x).collect()).collect();
        let d0 = delta_hat(&TimeSeriesPanel::new(rows).unwrap(), KernelSpec::Epanechnikov, bw, EvalGrid::uniform(51).unwrap()).unwrap();
        let d1 = delta_hat(&TimeSeriesPanel::new(scaled).unwrap(), KernelSpec::Epanechnikov, bw, EvalGrid::uniform(51).unwrap()).unwrap();
        assert_relative_eq!(d1, c * c * d0, max_relative = 1e-10);
    }

    #[test]
    fn parallel_curves_have_zero_index(
        base in prop::collection::vec(-2.0..2.0f64, 33),
        shifts in prop::collection::vec(-5.0..5.0f64, 2..7),
    ) {
        let grid = EvalGrid::uniform(33).unwrap();
        let curves: Vec<Vec<f64>> = shifts.iter().map(|c| base.iter().map(|v| v + c).collect()).collect();
        let idx = delta_index(&curves, &grid);
        prop_assert!(idx.delta_n.abs() <= 1e-12);
        let mean_shift = shifts.iter().sum::<f64>() / shifts.len() as f64;
        for (c, s) in idx.minimizing_c.iter().zip(&shifts) {
            prop_assert!((c - (s - mean_shift)).abs() <= 1e-10);
        }
    }

    #[test]
    fn quantiles_and_p_values_are_consistent(
        mut draws in prop::collection::vec(-10.0..10.0f64, 100..400),
        level in 0.5..0.99f64,
        stat in -12.0..12.0f64,
    ) {
        draws.sort_by(f64::total_cmp);
        let q = empirical_quantile(&draws, level);
        prop_assert!(q <= empirical_quantile(&draws, (level + 0.01).min(1.0)));
        let p = p_value(stat, &draws);
        prop_assert!(p > 0.0 && p <= 1.0);
        if stat > q {
            prop_assert!(p <= 1.0 - level + 1.0 / draws.len() as f64);
        }
    }
}
