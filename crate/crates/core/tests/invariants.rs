use gdp_core::metrics::{mad, rmse, wasserstein1_1d};
use gdp_core::predict::{empirical_loss, gdp_point, pinball_rank, LossSpec, PredictionValue, SyntheticSampleSet};
use ndarray::Array2;
use proptest::prelude::*;

fn set(values: &[f64]) -> SyntheticSampleSet {
    SyntheticSampleSet::continuous(vec![], Array2::from_shape_vec((values.len(), 1), values.to_vec()).unwrap()).unwrap()
}

fn samples() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-100.0..100.0f64, 1..40)
}

proptest! {
    #[test]
    fn w1_is_a_metric(a in samples(), b in samples(), c in samples()) {
        let ab = wasserstein1_1d(&a, &b).unwrap();
        prop_assert_eq!(wasserstein1_1d(&a, &a).unwrap(), 0.0);
        prop_assert!(ab >= 0.0);
        prop_assert!((ab - wasserstein1_1d(&b, &a).unwrap()).abs() <= 1e-9 * (1.0 + ab));
        let via = wasserstein1_1d(&a, &c).unwrap() + wasserstein1_1d(&c, &b).unwrap();
        prop_assert!(ab <= via + 1e-9 * (1.0 + via));
    }

    #[test]
    fn w1_of_a_shift_is_the_shift(a in samples(), shift in -10.0..10.0f64) {
        let b: Vec<f64> = a.iter().map(|v| v + shift).collect();
        prop_assert!((wasserstein1_1d(&a, &b).unwrap() - shift.abs()).abs() < 1e-9);
    }

    #[test]
    fn pinball_minimizer_is_a_sample_at_the_rank(v in samples(), alpha in 0.01..0.99f64) {
        let pred = gdp_point(&set(&v), &LossSpec::pinball(alpha).unwrap()).unwrap();
        let theta = pred.vector().unwrap()[0];
        prop_assert!(v.contains(&theta));
        let mut sorted = v.clone();
        sorted.sort_by(f64::total_cmp);
        prop_assert_eq!(theta, sorted[pinball_rank(alpha, v.len()) - 1]);
    }

    #[test]
    fn pinball_ignores_sample_order(mut v in samples(), alpha in 0.01..0.99f64, seed in any::<u64>()) {
        let spec = LossSpec::pinball(alpha).unwrap();
        let before = gdp_point(&set(&v), &spec).unwrap().vector().unwrap()[0];
        let k = v.len();
        v.rotate_left((seed % k as u64) as usize);
        v.reverse();
        prop_assert_eq!(gdp_point(&set(&v), &spec).unwrap().vector().unwrap()[0], before);
    }

    #[test]
    fn pinball_minimizer_beats_every_sample(v in samples(), alpha in 0.01..0.99f64) {
        let s = set(&v);
        let spec = LossSpec::pinball(alpha).unwrap();
        let best = gdp_point(&s, &spec).unwrap().loss_value;
        for &c in &v {
            let l = empirical_loss(&s, &spec, &PredictionValue::Vector(vec![c])).unwrap();
            prop_assert!(best <= l + 1e-9 * (1.0 + l.abs()));
        }
    }

    #[test]
    fn squared_loss_gives_the_mean(v in samples()) {
        let theta = gdp_point(&set(&v), &LossSpec::squared()).unwrap().vector().unwrap()[0];
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        prop_assert!((theta - mean).abs() < 1e-9);
    }

    #[test]
    fn rmse_dominates_mad(pairs in prop::collection::vec((-50.0..50.0f64, -50.0..50.0f64), 1..50)) {
        let (p, t): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let (r, m) = (rmse(&p, &t).unwrap(), mad(&p, &t).unwrap());
        prop_assert!(r + 1e-12 >= m);
        prop_assert!(m >= 0.0);
    }
}
