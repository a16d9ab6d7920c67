//! Conditional Gaussian diffusion for continuous responses.
//!
//! The score network predicts the injected noise `eps` from
//! `[y_t, h(x), time_embed(t)]`, where `h` is a jointly trained condition
//! embedder. The score of the noised response is `-eps_hat / sigma_t`.
//! Training minimizes `|eps - eps_hat|^2` with `t` uniform on `1..=T`; the
//! network is never evaluated at `t = 0`.

mod sample;
mod schedule;
mod train;

pub use schedule::{forward_noise, forward_noise_with, NoiseSchedule, ScheduleParams};
pub(crate) use train::{fit, repeat_rows};
pub use train::{score_matching_loss, score_matching_loss_with, train};

use ndarray::{concatenate, Array2, ArrayView2, Axis};
use rand::Rng;

use crate::data::Standardizer;
use crate::error::{invalid, mismatch, Result};
use crate::nn::{time_embed, Mlp};
use crate::rng::seeded;
use crate::training::{layer_dims, TrainConfig, TrainingMeta};

/// A trained (or initialized) conditional diffusion generator.
#[derive(Debug, Clone)]
pub struct ConditionalGenerator {
    score_net: Mlp,
    embedder: Mlp,
    schedule: NoiseSchedule,
    time_dim: usize,
    x_scale: Standardizer,
    y_scale: Standardizer,
    meta: TrainingMeta,
    // row t holds time_embed(t, T, time_dim) for t in 0..=T
    time_table: Array2<f64>,
}

pub(crate) fn build_time_table(steps: usize, dim: usize) -> Result<Array2<f64>> {
    let mut table = Array2::zeros((steps + 1, dim));
    for t in 0..=steps {
        let e = time_embed(t, steps, dim)?;
        table.row_mut(t).assign(&ndarray::ArrayView1::from(&e));
    }
    Ok(table)
}

impl ConditionalGenerator {
    pub fn new(
        score_net: Mlp,
        embedder: Mlp,
        schedule: NoiseSchedule,
        time_dim: usize,
        x_scale: Standardizer,
        y_scale: Standardizer,
        meta: TrainingMeta,
    ) -> Result<Self> {
        x_scale.validate()?;
        y_scale.validate()?;
        let d_y = y_scale.dim();
        let d_h = embedder.output_dim();
        if d_y == 0 {
            return Err(invalid("response dimension must be positive"));
        }
        if embedder.input_dim() != x_scale.dim() {
            return Err(mismatch(format!(
                "embedder takes {} predictors but standardizer has {}",
                embedder.input_dim(),
                x_scale.dim()
            )));
        }
        if score_net.input_dim() != d_y + d_h + time_dim || score_net.output_dim() != d_y {
            return Err(mismatch(format!(
                "score network is {:?}; expected input {} and output {d_y}",
                score_net.layer_dims(),
                d_y + d_h + time_dim
            )));
        }
        let time_table = build_time_table(schedule.steps(), time_dim)?;
        Ok(Self { score_net, embedder, schedule, time_dim, x_scale, y_scale, meta, time_table })
    }

    /// Fresh networks sized by `cfg`.
    pub fn init<R: Rng + ?Sized>(
        x_scale: Standardizer,
        y_scale: Standardizer,
        cfg: &TrainConfig,
        rng: &mut R,
    ) -> Result<Self> {
        cfg.validate()?;
        let p = x_scale.dim();
        let d_y = y_scale.dim();
        let embedder = Mlp::new(&layer_dims(p, cfg.width, cfg.depth, cfg.embed_dim), rng)?;
        let score_net = Mlp::new(
            &layer_dims(d_y + cfg.embed_dim + cfg.time_dim, cfg.width, cfg.depth, d_y),
            rng,
        )?;
        let schedule = NoiseSchedule::from_params(cfg.schedule())?;
        let meta = TrainingMeta { seed: cfg.seed, ..TrainingMeta::default() };
        Self::new(score_net, embedder, schedule, cfg.time_dim, x_scale, y_scale, meta)
    }

    pub fn score_net(&self) -> &Mlp {
        &self.score_net
    }

    pub fn embedder(&self) -> &Mlp {
        &self.embedder
    }

    pub(crate) fn nets_mut(&mut self) -> (&mut Mlp, &mut Mlp) {
        (&mut self.score_net, &mut self.embedder)
    }

    pub(crate) fn set_nets(&mut self, score_net: Mlp, embedder: Mlp) {
        self.score_net = score_net;
        self.embedder = embedder;
    }

    pub fn schedule(&self) -> &NoiseSchedule {
        &self.schedule
    }

    pub fn time_dim(&self) -> usize {
        self.time_dim
    }

    pub fn x_scale(&self) -> &Standardizer {
        &self.x_scale
    }

    pub fn y_scale(&self) -> &Standardizer {
        &self.y_scale
    }

    pub fn meta(&self) -> &TrainingMeta {
        &self.meta
    }

    pub fn meta_mut(&mut self) -> &mut TrainingMeta {
        &mut self.meta
    }

    pub fn predictor_dim(&self) -> usize {
        self.x_scale.dim()
    }

    pub fn response_dim(&self) -> usize {
        self.y_scale.dim()
    }

    pub fn embed_dim(&self) -> usize {
        self.embedder.output_dim()
    }

    pub(crate) fn time_rows(&self, steps: &[usize]) -> Array2<f64> {
        self.time_table.select(Axis(0), steps)
    }

    pub(crate) fn time_table(&self) -> &Array2<f64> {
        &self.time_table
    }

    /// Assembles score-network inputs `[y_t, h, time]`.
    pub(crate) fn score_inputs(
        &self,
        y_t: ArrayView2<f64>,
        h: ArrayView2<f64>,
        steps: &[usize],
    ) -> Array2<f64> {
        let time = self.time_rows(steps);
        concatenate(Axis(1), &[y_t, h, time.view()]).expect("row counts agree")
    }

    /// Noise prediction on standardized inputs.
    pub fn predict_noise(
        &self,
        y_t: ArrayView2<f64>,
        x_std: ArrayView2<f64>,
        steps: &[usize],
    ) -> Result<Array2<f64>> {
        if y_t.nrows() != x_std.nrows() || y_t.nrows() != steps.len() {
            return Err(mismatch("y_t, x and steps must have the same number of rows"));
        }
        if y_t.ncols() != self.response_dim() {
            return Err(mismatch(format!(
                "y_t has {} columns, generator has response dim {}",
                y_t.ncols(),
                self.response_dim()
            )));
        }
        for &t in steps {
            self.schedule.check_step(t)?;
        }
        let h = self.embedder.forward_batch(x_std)?;
        self.score_net.forward_batch(self.score_inputs(y_t, h.view(), steps).view())
    }

    /// Score estimate `-eps_hat / sigma_t` on standardized inputs.
    pub fn score(
        &self,
        y_t: ArrayView2<f64>,
        x_std: ArrayView2<f64>,
        steps: &[usize],
    ) -> Result<Array2<f64>> {
        let mut eps = self.predict_noise(y_t, x_std, steps)?;
        for (mut row, &t) in eps.rows_mut().into_iter().zip(steps) {
            let sigma = self.schedule.sigma(t);
            row.mapv_inplace(|e| -e / sigma);
        }
        Ok(eps)
    }

    /// Draws `m` responses at `x` using a seed taken from `rng`.
    pub fn sample<R: Rng + ?Sized>(
        &self,
        x: &[f64],
        m: usize,
        stride: usize,
        rng: &mut R,
    ) -> Result<crate::predict::SyntheticSampleSet> {
        let seed: u64 = rng.random();
        self.sample_seeded(x, m, stride, seed)
    }

    /// Convenience wrapper for a fresh seeded generator.
    pub fn sample_with_seed(
        &self,
        x: &[f64],
        m: usize,
        stride: usize,
        seed: u64,
    ) -> Result<crate::predict::SyntheticSampleSet> {
        self.sample(x, m, stride, &mut seeded(seed))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ConditionalGenerator {
        let cfg = TrainConfig { width: 8, depth: 2, embed_dim: 4, time_dim: 4, ..TrainConfig::default() };
        ConditionalGenerator::init(Standardizer::identity(3), Standardizer::identity(2), &cfg, &mut seeded(0))
            .unwrap()
    }

    #[test]
    fn dimensions_chain() {
        let g = tiny();
        assert_eq!(g.score_net().layer_dims(), vec![2 + 4 + 4, 8, 8, 2]);
        assert_eq!(g.embedder().layer_dims(), vec![3, 8, 8, 4]);
        assert_eq!(g.time_table.nrows(), 1001);
    }

    #[test]
    fn mismatched_networks_rejected() {
        let g = tiny();
        let bad = ConditionalGenerator::new(
            g.score_net.clone(),
            g.embedder.clone(),
            g.schedule.clone(),
            6,
            g.x_scale.clone(),
            g.y_scale.clone(),
            TrainingMeta::default(),
        );
        assert!(bad.is_err());
    }

    #[test]
    fn score_is_scaled_negative_noise() {
        let g = tiny();
        let y = Array2::from_elem((2, 2), 0.3);
        let x = Array2::from_elem((2, 3), -0.2);
        let eps = g.predict_noise(y.view(), x.view(), &[5, 700]).unwrap();
        let score = g.score(y.view(), x.view(), &[5, 700]).unwrap();
        for (i, t) in [5usize, 700].into_iter().enumerate() {
            for j in 0..2 {
                assert!((score[[i, j]] + eps[[i, j]] / g.schedule.sigma(t)).abs() < 1e-12);
            }
        }
        assert!(g.predict_noise(y.view(), x.view(), &[0, 1]).is_err());
    }
}
