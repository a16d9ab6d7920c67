//! Transfer through shared condition embeddings.
//!
//! A source generator is trained on plentiful data. On the target task the
//! embedder `h` is reused (and by default frozen) and the score network is
//! warm-started from the source and fine-tuned on the scarce target rows.
//! Standardization statistics also come from the source so that `h` sees
//! inputs on the scale it was trained on.

use ndarray::ArrayView2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::split_indices;
use crate::discrete::{check_labels, fit_discrete, train_discrete, DiscreteGenerator};
use crate::error::{invalid, Error, Result};
use crate::gaussian::{fit, train, ConditionalGenerator};
use crate::io::GeneratorCheckpoint;
use crate::nn::Mlp;
use crate::rng::{derive_seed, seeded};
use crate::training::{Role, TrainConfig, TrainReport};

/// How the target model is derived from the source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TransferSettings {
    pub freeze_embedder: bool,
    /// Start the target score network from the source weights instead of a
    /// fresh initialization.
    pub warm_start_score_net: bool,
    /// Overrides `max_epochs` for fine-tuning.
    pub target_epochs: Option<usize>,
    /// Overrides `learning_rate` for fine-tuning.
    pub target_lr: Option<f64>,
}

impl Default for TransferSettings {
    fn default() -> Self {
        Self { freeze_embedder: true, warm_start_score_net: true, target_epochs: None, target_lr: None }
    }
}

impl TransferSettings {
    pub fn validate(&self) -> Result<()> {
        if let Some(lr) = self.target_lr {
            if !(lr > 0.0) {
                return Err(invalid(format!("target_lr must be positive, got {lr}")));
            }
        }
        Ok(())
    }

    /// Training settings for the fine-tuning run.
    pub fn target_config(&self, base: &TrainConfig) -> TrainConfig {
        TrainConfig {
            max_epochs: self.target_epochs.unwrap_or(base.max_epochs),
            learning_rate: self.target_lr.unwrap_or(base.learning_rate),
            ..base.clone()
        }
    }
}

/// A source checkpoint plus the fine-tuning settings.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferPlan {
    pub source: GeneratorCheckpoint,
    pub settings: TransferSettings,
}

impl TransferPlan {
    pub fn new(source: GeneratorCheckpoint) -> Self {
        Self { source, settings: TransferSettings::default() }
    }
}

/// Trains the source generator and tags it as a source checkpoint.
pub fn pretrain_source(
    x: ArrayView2<f64>,
    y: ArrayView2<f64>,
    cfg: &TrainConfig,
) -> Result<(GeneratorCheckpoint, TrainReport)> {
    let (mut gen, report) = train(x, y, cfg)?;
    gen.meta_mut().role = Role::Source;
    Ok((GeneratorCheckpoint::from_gaussian(&gen), report))
}

/// Categorical counterpart of [`pretrain_source`].
pub fn pretrain_source_discrete(
    x: ArrayView2<f64>,
    labels: &[usize],
    categories: Option<usize>,
    cfg: &TrainConfig,
) -> Result<(GeneratorCheckpoint, TrainReport)> {
    let (mut gen, report) = train_discrete(x, labels, categories, cfg)?;
    gen.meta_mut().role = Role::Source;
    Ok((GeneratorCheckpoint::from_discrete(&gen, None)?, report))
}

fn incompatible(msg: String) -> Error {
    Error::TransferIncompatible(msg)
}

fn target_split(n: usize, cfg: &TrainConfig) -> Result<(Vec<usize>, Vec<usize>)> {
    if n == 0 {
        return Err(Error::Empty("target dataset has no rows".into()));
    }
    if n < 2 {
        return Err(invalid("fine-tuning needs at least 2 target rows"));
    }
    split_indices(n, cfg.val_fraction, cfg.seed)
}

fn fresh_like<R: Rng + ?Sized>(net: &Mlp, rng: &mut R) -> Result<Mlp> {
    Mlp::new(&net.layer_dims(), rng)
}

/// Fine-tunes a gaussian source generator on target rows.
///
/// Zero fine-tuning epochs return the source weights unchanged.
pub fn finetune_target(
    plan: &TransferPlan,
    x: ArrayView2<f64>,
    y: ArrayView2<f64>,
    cfg: &TrainConfig,
) -> Result<(ConditionalGenerator, TrainReport)> {
    plan.settings.validate()?;
    let mut gen = plan
        .source
        .to_gaussian()
        .map_err(|e| incompatible(format!("source checkpoint: {e}")))?;
    if x.nrows() != y.nrows() {
        return Err(crate::error::mismatch(format!("{} predictor rows vs {} response rows", x.nrows(), y.nrows())));
    }
    if x.ncols() != gen.predictor_dim() || y.ncols() != gen.response_dim() {
        return Err(incompatible(format!(
            "source expects p={} and d_y={}, target has p={} and d_y={}",
            gen.predictor_dim(),
            gen.response_dim(),
            x.ncols(),
            y.ncols()
        )));
    }
    let cfg = plan.settings.target_config(cfg);
    cfg.validate()?;
    let (fit_rows, val_rows) = target_split(x.nrows(), &cfg)?;
    if !plan.settings.warm_start_score_net {
        let fresh = fresh_like(gen.score_net(), &mut seeded(derive_seed(cfg.seed, 0)))?;
        let embedder = gen.embedder().clone();
        gen.set_nets(fresh, embedder);
    }
    let report = if cfg.max_epochs == 0 {
        TrainReport::default()
    } else {
        fit(&mut gen, x, y, &fit_rows, &val_rows, &cfg, plan.settings.freeze_embedder)?
    };
    let meta = gen.meta_mut();
    meta.role = Role::Finetuned;
    meta.training_rows = x.nrows();
    Ok((gen, report))
}

/// Fine-tunes a categorical source generator on target labels.
pub fn finetune_target_discrete(
    plan: &TransferPlan,
    x: ArrayView2<f64>,
    labels: &[usize],
    cfg: &TrainConfig,
) -> Result<(DiscreteGenerator, TrainReport)> {
    plan.settings.validate()?;
    let mut gen = plan
        .source
        .to_discrete()
        .map_err(|e| incompatible(format!("source checkpoint: {e}")))?;
    if x.nrows() != labels.len() {
        return Err(crate::error::mismatch(format!("{} predictor rows vs {} labels", x.nrows(), labels.len())));
    }
    if x.ncols() != gen.predictor_dim() {
        return Err(incompatible(format!("source expects p={}, target has p={}", gen.predictor_dim(), x.ncols())));
    }
    if !labels.is_empty() {
        check_labels(labels, Some(gen.categories()))
            .map_err(|e| incompatible(format!("labels do not fit the source's {} categories: {e}", gen.categories())))?;
    }
    let cfg = plan.settings.target_config(cfg);
    cfg.validate()?;
    let (fit_rows, val_rows) = target_split(x.nrows(), &cfg)?;
    if !plan.settings.warm_start_score_net {
        let fresh = fresh_like(gen.denoise_net(), &mut seeded(derive_seed(cfg.seed, 0)))?;
        gen.set_denoise_net(fresh)?;
    }
    let report = if cfg.max_epochs == 0 {
        TrainReport::default()
    } else {
        fit_discrete(&mut gen, x, labels, &fit_rows, &val_rows, &cfg, plan.settings.freeze_embedder)?
    };
    let meta = gen.meta_mut();
    meta.role = Role::Finetuned;
    meta.training_rows = x.nrows();
    Ok((gen, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simbench::{make_transfer_pair, TransferPairConfig};
    use ndarray::Array2;

    fn quick_cfg() -> TrainConfig {
        TrainConfig {
            width: 16,
            depth: 2,
            embed_dim: 8,
            time_dim: 4,
            steps: 100,
            max_epochs: 3,
            batch_size: 128,
            ..TrainConfig::default()
        }
    }

    fn source() -> (GeneratorCheckpoint, TrainConfig) {
        let pair = TransferPairConfig { n_source: 600, n_target: 100, ..TransferPairConfig::default() };
        let (s, _) = make_transfer_pair(1, &pair).unwrap();
        let cfg = quick_cfg();
        let (ckpt, _) = pretrain_source(s.x.view(), s.y_matrix().view(), &cfg).unwrap();
        (ckpt, cfg)
    }

    #[test]
    fn source_metadata_and_reproducibility() {
        let (a, cfg) = source();
        assert_eq!(a.role(), Role::Source);
        assert_eq!(a.training_rows(), 600);
        let (b, _) = source();
        assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
        let _ = cfg;
    }

    #[test]
    fn frozen_embedder_is_bitwise_unchanged() {
        let (ckpt, cfg) = source();
        let before = ckpt.to_gaussian().unwrap().embedder().clone();
        let pair = TransferPairConfig { n_source: 10, n_target: 200, ..TransferPairConfig::default() };
        let (_, t) = make_transfer_pair(2, &pair).unwrap();
        let (gen, report) = finetune_target(&TransferPlan::new(ckpt), t.x.view(), t.y_matrix().view(), &cfg).unwrap();
        assert!(report.epochs_run > 0);
        assert_eq!(gen.embedder(), &before);
        assert_eq!(gen.meta().role, Role::Finetuned);
        assert_eq!(gen.meta().training_rows, 200);
    }

    #[test]
    fn unfrozen_embedder_moves() {
        let (ckpt, cfg) = source();
        let before = ckpt.to_gaussian().unwrap().embedder().clone();
        let (_, t) = make_transfer_pair(2, &TransferPairConfig { n_source: 10, ..TransferPairConfig::default() }).unwrap();
        let plan = TransferPlan {
            source: ckpt,
            settings: TransferSettings { freeze_embedder: false, ..TransferSettings::default() },
        };
        let (gen, _) = finetune_target(&plan, t.x.view(), t.y_matrix().view(), &cfg).unwrap();
        assert_ne!(gen.embedder(), &before);
    }

    #[test]
    fn zero_epochs_reproduce_source_outputs() {
        let (ckpt, cfg) = source();
        let src = ckpt.to_gaussian().unwrap();
        let (_, t) = make_transfer_pair(2, &TransferPairConfig { n_source: 10, ..TransferPairConfig::default() }).unwrap();
        let plan = TransferPlan {
            source: ckpt,
            settings: TransferSettings { target_epochs: Some(0), ..TransferSettings::default() },
        };
        let (gen, _) = finetune_target(&plan, t.x.view(), t.y_matrix().view(), &cfg).unwrap();
        let x = [0.2, -0.1, 0.4, 1.0, 0.0];
        let a = src.sample_seeded(&x, 20, 10, 5).unwrap();
        let b = gen.sample_seeded(&x, 20, 10, 5).unwrap();
        assert_eq!(a.continuous_values(), b.continuous_values());
    }

    #[test]
    fn empty_and_mismatched_targets_rejected() {
        let (ckpt, cfg) = source();
        let plan = TransferPlan::new(ckpt);
        let empty_x = Array2::<f64>::zeros((0, 5));
        let empty_y = Array2::<f64>::zeros((0, 1));
        assert!(matches!(finetune_target(&plan, empty_x.view(), empty_y.view(), &cfg), Err(Error::Empty(_))));
        let x = Array2::<f64>::zeros((10, 4));
        let y = Array2::<f64>::zeros((10, 1));
        assert!(matches!(
            finetune_target(&plan, x.view(), y.view(), &cfg),
            Err(Error::TransferIncompatible(_))
        ));
        assert!(matches!(
            finetune_target_discrete(&plan, x.view(), &[0; 10], &cfg),
            Err(Error::TransferIncompatible(_))
        ));
    }

    #[test]
    fn discrete_transfer_freezes_embedder() {
        let mut rng = seeded(4);
        let x = Array2::from_shape_fn((300, 2), |_| rng.random_range(-1.0..1.0));
        let labels: Vec<usize> = x.rows().into_iter().map(|r| usize::from(r[0] > 0.0) + usize::from(r[1] > 0.5)).collect();
        let cfg = TrainConfig { max_epochs: 2, ..quick_cfg() };
        let (ckpt, _) = pretrain_source_discrete(x.view(), &labels, None, &cfg).unwrap();
        let before = ckpt.to_discrete().unwrap().embedder().clone();
        let (gen, _) = finetune_target_discrete(&TransferPlan::new(ckpt), x.view(), &labels, &cfg).unwrap();
        assert_eq!(gen.embedder(), &before);
        assert!(finetune_target_discrete(
            &TransferPlan::new(pretrain_source_discrete(x.view(), &labels, None, &cfg).unwrap().0),
            x.view(),
            &[5; 300],
            &cfg
        )
        .is_err());
    }
}
