//! Trains the one-dimensional linear-Gaussian toy once and checks the learned law.

use std::sync::OnceLock;

use gdp_core::gaussian::{train, ConditionalGenerator};
use gdp_core::rng::seeded;
use gdp_core::simbench::linear_gaussian_toy;
use gdp_core::training::{TrainConfig, TrainReport};

fn fitted() -> &'static (ConditionalGenerator, TrainReport) {
    static FIT: OnceLock<(ConditionalGenerator, TrainReport)> = OnceLock::new();
    FIT.get_or_init(|| {
        let (x, y) = linear_gaussian_toy(5000, 2.0, &mut seeded(11));
        let cfg = TrainConfig {
            learning_rate: 3e-4,
            max_epochs: 400,
            patience: 50,
            ema_decay: 0.995,
            seed: 3,
            ..TrainConfig::default()
        };
        train(x.view(), y.view(), &cfg).unwrap()
    })
}

fn moments(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    (mean, (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt())
}

fn draws(x: f64, stride: usize, seed: u64) -> Vec<f64> {
    let set = fitted().0.sample_seeded(&[x], 2000, stride, seed).unwrap();
    set.continuous_values().unwrap().column(0).to_vec()
}

#[test]
fn training_loss_falls_over_fifty_epochs() {
    let (x, y) = linear_gaussian_toy(5000, 1.0, &mut seeded(12));
    let cfg = TrainConfig { max_epochs: 50, patience: 50, seed: 4, ..TrainConfig::default() };
    let (_, report) = train(x.view(), y.view(), &cfg).unwrap();
    assert_eq!(report.train_losses.len(), 50);
    assert!(report.train_losses[49] < report.train_losses[0], "{:?}", report.train_losses);
}

#[test]
fn early_stopping_keeps_the_best_epoch() {
    let report = &fitted().1;
    let best = report.val_losses.iter().cloned().fold(f64::INFINITY, f64::min);
    assert_eq!(report.best_val_loss, best);
    assert_eq!(report.val_losses[report.best_epoch - 1], best);
}

#[test]
fn conditional_law_matches_at_x_equal_one() {
    let (mean, sd) = moments(&draws(1.0, 10, 1));
    assert!((mean - 2.0).abs() < 0.1, "mean {mean}");
    assert!((sd - 1.0).abs() < 0.1, "sd {sd}");
}

#[test]
fn strided_sampling_agrees_with_full_chain() {
    let (full, _) = moments(&draws(-0.5, 1, 2));
    let (strided, _) = moments(&draws(-0.5, 10, 2));
    assert!((full - strided).abs() < 0.1, "full {full} strided {strided}");
}
