//! Conditional discrete diffusion over categorical responses.
//!
//! Forward corruption keeps the label with probability `1 - beta_t` and
//! otherwise resamples it uniformly over `K` categories, so after `t` steps the
//! label survives with probability `alpha_bar_t + (1 - alpha_bar_t) / K`. A
//! denoising network predicts the clean label from
//! `[one_hot(x_t), h(x), time_embed(t)]` and is trained with cross-entropy.
//! Sampling runs the reverse chain from the uniform prior, mixing the exact
//! one-step posteriors `q(x_{t-1} | x_t, x_0)` under the predicted clean-label
//! distribution.

use ndarray::{concatenate, s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Uniform};

use crate::data::{split_indices, Standardizer, ZeroVariance};
use crate::error::{invalid, mismatch, Error, Result};
use crate::gaussian::{build_time_table, ScheduleParams};
use crate::nn::{AdamState, Mlp};
use crate::predict::SyntheticSampleSet;
use crate::rng::{chain_rng, derive_seed, seeded, GdpRng};
use crate::training::{layer_dims, EarlyStopping, Role, TrainConfig, TrainReport, TrainingMeta};

/// Uniform-transition corruption schedule over `K` categories.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteSchedule {
    params: ScheduleParams,
    categories: usize,
    betas: Vec<f64>,
    alpha_bars: Vec<f64>,
}

impl DiscreteSchedule {
    pub fn new(params: ScheduleParams, categories: usize) -> Result<Self> {
        if categories == 0 {
            return Err(invalid("need at least one category"));
        }
        let gaussian = crate::gaussian::NoiseSchedule::from_params(params)?;
        let betas = (1..=params.steps).map(|t| gaussian.beta(t)).collect();
        let alpha_bars = (0..=params.steps).map(|t| gaussian.alpha_bar(t)).collect();
        Ok(Self { params, categories, betas, alpha_bars })
    }

    pub fn params(&self) -> ScheduleParams {
        self.params
    }

    pub fn categories(&self) -> usize {
        self.categories
    }

    pub fn steps(&self) -> usize {
        self.betas.len()
    }

    pub fn beta(&self, t: usize) -> f64 {
        self.betas[t - 1]
    }

    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bars[t]
    }

    /// One-step transition probability `Q_t[from, to]`.
    pub fn step_prob(&self, t: usize, from: usize, to: usize) -> f64 {
        let b = self.beta(t);
        let k = self.categories as f64;
        if from == to {
            1.0 - b + b / k
        } else {
            b / k
        }
    }

    /// Compounded transition probability over steps `1..=t`; identity at `t = 0`.
    pub fn cumulative_prob(&self, t: usize, from: usize, to: usize) -> f64 {
        let a = self.alpha_bar(t);
        let k = self.categories as f64;
        if from == to {
            a + (1.0 - a) / k
        } else {
            (1.0 - a) / k
        }
    }

    /// Single-step transition matrix at step `t`.
    pub fn transition_matrix(&self, t: usize) -> Array2<f64> {
        let k = self.categories;
        Array2::from_shape_fn((k, k), |(i, j)| self.step_prob(t, i, j))
    }

    fn check(&self, label: usize, t: usize) -> Result<()> {
        if label >= self.categories {
            return Err(invalid(format!("label {label} outside 0..{}", self.categories)));
        }
        if t == 0 || t > self.steps() {
            return Err(invalid(format!("step {t} outside 1..={}", self.steps())));
        }
        Ok(())
    }

    /// Corrupts `label` to step `t` in one draw.
    pub fn forward_corrupt<R: Rng + ?Sized>(&self, label: usize, t: usize, rng: &mut R) -> Result<usize> {
        self.check(label, t)?;
        Ok(self.corrupt_unchecked(label, t, rng))
    }

    fn corrupt_unchecked<R: Rng + ?Sized>(&self, label: usize, t: usize, rng: &mut R) -> usize {
        if rng.random::<f64>() < self.alpha_bar(t) {
            label
        } else {
            rng.random_range(0..self.categories)
        }
    }

    /// Corrupts `label` by applying steps `1..=t` one at a time.
    pub fn forward_corrupt_sequential<R: Rng + ?Sized>(
        &self,
        label: usize,
        t: usize,
        rng: &mut R,
    ) -> Result<usize> {
        self.check(label, t)?;
        let mut cur = label;
        for s in 1..=t {
            if rng.random::<f64>() >= 1.0 - self.beta(s) {
                cur = rng.random_range(0..self.categories);
            }
        }
        Ok(cur)
    }

    /// `p(x_{t-1} = j | x_t = current)` after mixing the exact posterior over
    /// the clean-label distribution `clean`.
    pub fn reverse_probs(&self, t: usize, current: usize, clean: ArrayView1<f64>, out: &mut [f64]) {
        let k = self.categories;
        out.iter_mut().for_each(|v| *v = 0.0);
        for (x0, &w) in clean.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            let denom = self.cumulative_prob(t, x0, current);
            for (j, o) in out.iter_mut().enumerate().take(k) {
                *o += w * self.step_prob(t, j, current) * self.cumulative_prob(t - 1, x0, j) / denom;
            }
        }
        let total: f64 = out.iter().sum();
        out.iter_mut().for_each(|v| *v /= total);
    }
}

/// Conditional generator over categorical responses.
#[derive(Debug, Clone)]
pub struct DiscreteGenerator {
    denoise_net: Mlp,
    embedder: Mlp,
    schedule: DiscreteSchedule,
    time_dim: usize,
    x_scale: Standardizer,
    meta: TrainingMeta,
    time_table: Array2<f64>,
}

impl DiscreteGenerator {
    pub fn new(
        denoise_net: Mlp,
        embedder: Mlp,
        schedule: DiscreteSchedule,
        time_dim: usize,
        x_scale: Standardizer,
        meta: TrainingMeta,
    ) -> Result<Self> {
        x_scale.validate()?;
        let k = schedule.categories();
        if embedder.input_dim() != x_scale.dim() {
            return Err(mismatch(format!(
                "embedder takes {} predictors but standardizer has {}",
                embedder.input_dim(),
                x_scale.dim()
            )));
        }
        if denoise_net.input_dim() != k + embedder.output_dim() + time_dim || denoise_net.output_dim() != k {
            return Err(mismatch(format!(
                "denoising network is {:?}; expected input {} and output {k}",
                denoise_net.layer_dims(),
                k + embedder.output_dim() + time_dim
            )));
        }
        let time_table = build_time_table(schedule.steps(), time_dim)?;
        Ok(Self { denoise_net, embedder, schedule, time_dim, x_scale, meta, time_table })
    }

    pub fn init<R: Rng + ?Sized>(x_scale: Standardizer, categories: usize, cfg: &TrainConfig, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let embedder = Mlp::new(&layer_dims(x_scale.dim(), cfg.width, cfg.depth, cfg.embed_dim), rng)?;
        let denoise_net = Mlp::new(
            &layer_dims(categories + cfg.embed_dim + cfg.time_dim, cfg.width, cfg.depth, categories),
            rng,
        )?;
        let schedule = DiscreteSchedule::new(cfg.schedule(), categories)?;
        let meta = TrainingMeta { seed: cfg.seed, ..TrainingMeta::default() };
        Self::new(denoise_net, embedder, schedule, cfg.time_dim, x_scale, meta)
    }

    pub fn denoise_net(&self) -> &Mlp {
        &self.denoise_net
    }

    /// Replaces the denoising network with one of identical shape.
    pub(crate) fn set_denoise_net(&mut self, net: Mlp) -> Result<()> {
        if net.layer_dims() != self.denoise_net.layer_dims() {
            return Err(mismatch("replacement denoising network has a different shape"));
        }
        self.denoise_net = net;
        Ok(())
    }

    pub fn embedder(&self) -> &Mlp {
        &self.embedder
    }

    pub fn schedule(&self) -> &DiscreteSchedule {
        &self.schedule
    }

    pub fn time_dim(&self) -> usize {
        self.time_dim
    }

    pub fn x_scale(&self) -> &Standardizer {
        &self.x_scale
    }

    pub fn meta(&self) -> &TrainingMeta {
        &self.meta
    }

    pub fn meta_mut(&mut self) -> &mut TrainingMeta {
        &mut self.meta
    }

    pub fn categories(&self) -> usize {
        self.schedule.categories()
    }

    pub fn predictor_dim(&self) -> usize {
        self.x_scale.dim()
    }

    fn inputs(&self, noisy: &[usize], h: ArrayView2<f64>, steps: &[usize]) -> Array2<f64> {
        let k = self.categories();
        let mut one_hot = Array2::zeros((noisy.len(), k));
        for (i, &l) in noisy.iter().enumerate() {
            one_hot[[i, l]] = 1.0;
        }
        let time = self.time_table.select(Axis(0), steps);
        concatenate(Axis(1), &[one_hot.view(), h, time.view()]).expect("row counts agree")
    }

    /// Predicted clean-label distributions for standardized predictors.
    pub fn predict_clean_probs(&self, noisy: &[usize], x_std: ArrayView2<f64>, steps: &[usize]) -> Result<Array2<f64>> {
        if noisy.len() != x_std.nrows() || noisy.len() != steps.len() {
            return Err(mismatch("labels, predictors and steps must have the same length"));
        }
        for (&l, &t) in noisy.iter().zip(steps) {
            self.schedule.check(l, t)?;
        }
        let h = self.embedder.forward_batch(x_std)?;
        let mut logits = self.denoise_net.forward_batch(self.inputs(noisy, h.view(), steps).view())?;
        softmax_rows(&mut logits);
        Ok(logits)
    }

    /// Ancestral sampling of `m` labels at raw predictor vector `x`.
    pub fn sample_seeded(&self, x: &[f64], m: usize, seed: u64) -> Result<SyntheticSampleSet> {
        if m < 1 {
            return Err(invalid("sample count m must be at least 1"));
        }
        if x.len() != self.predictor_dim() {
            return Err(mismatch(format!(
                "condition has {} predictors, generator expects {}",
                x.len(),
                self.predictor_dim()
            )));
        }
        let k = self.categories();
        let xz = self.x_scale.transform_row(x);
        let h = self.embedder.forward(&xz)?;
        let net = &self.denoise_net;
        let mut cond: Array1<f64> = net.first_layer_partial(k, ArrayView1::from(&h));
        cond += &net.biases()[0];
        let w0 = &net.weights()[0];
        let time_start = k + h.len();

        let mut rngs: Vec<GdpRng> = (0..m).map(|c| chain_rng(seed, c as u64)).collect();
        let mut labels: Vec<usize> = rngs.iter_mut().map(|r| r.random_range(0..k)).collect();
        let mut probs = vec![0.0; k];
        for t in (1..=self.schedule.steps()).rev() {
            let mut bias = net.first_layer_partial(time_start, self.time_table.row(t));
            bias += &cond;
            let mut pre = Array2::zeros((m, bias.len()));
            for (mut row, &l) in pre.rows_mut().into_iter().zip(&labels) {
                row.assign(&w0.column(l));
                row += &bias;
            }
            let mut clean = net.forward_from_first_preactivation(pre)?;
            softmax_rows(&mut clean);
            for ((label, rng), row) in labels.iter_mut().zip(rngs.iter_mut()).zip(clean.rows()) {
                self.schedule.reverse_probs(t, *label, row, &mut probs);
                *label = sample_index(&probs, rng);
            }
        }
        SyntheticSampleSet::categorical(x.to_vec(), labels)
    }

    pub fn sample<R: Rng + ?Sized>(&self, x: &[f64], m: usize, rng: &mut R) -> Result<SyntheticSampleSet> {
        let seed: u64 = rng.random();
        self.sample_seeded(x, m, seed)
    }

    pub fn sample_many(&self, xs: ArrayView2<f64>, m: usize, seed: u64) -> Result<Vec<SyntheticSampleSet>> {
        xs.rows()
            .into_iter()
            .enumerate()
            .map(|(i, row)| self.sample_seeded(&row.to_vec(), m, derive_seed(seed, i as u64)))
            .collect()
    }
}

fn softmax_rows(logits: &mut Array2<f64>) {
    for mut row in logits.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
}

fn sample_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // rounding left a sliver above the cumulative sum
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

/// Checks labels and returns the category count.
///
/// With `categories == None` the count is inferred and every label in
/// `0..K` must occur.
pub fn check_labels(labels: &[usize], categories: Option<usize>) -> Result<usize> {
    if labels.is_empty() {
        return Err(Error::Empty("no labels".into()));
    }
    let max = *labels.iter().max().expect("nonempty");
    match categories {
        Some(k) => {
            if max >= k {
                return Err(invalid(format!("label {max} outside 0..{k}")));
            }
            Ok(k)
        }
        None => {
            let k = max + 1;
            let mut seen = vec![false; k];
            labels.iter().for_each(|&l| seen[l] = true);
            if let Some(missing) = seen.iter().position(|s| !s) {
                return Err(invalid(format!(
                    "labels must be contiguous from 0; label {missing} never occurs"
                )));
            }
            Ok(k)
        }
    }
}

struct LabelDraw {
    steps: Vec<usize>,
    noisy: Vec<usize>,
}

fn draw_corruption<R: Rng + ?Sized>(schedule: &DiscreteSchedule, clean: &[usize], rng: &mut R) -> LabelDraw {
    let step_dist = Uniform::new_inclusive(1, schedule.steps()).expect("steps >= 1");
    let steps: Vec<usize> = clean.iter().map(|_| step_dist.sample(rng)).collect();
    let noisy = clean.iter().zip(&steps).map(|(&l, &t)| schedule.corrupt_unchecked(l, t, rng)).collect();
    LabelDraw { steps, noisy }
}

fn cross_entropy(
    gen: &DiscreteGenerator,
    x_std: ArrayView2<f64>,
    clean: &[usize],
    draw: &LabelDraw,
) -> Result<f64> {
    let h = gen.embedder.forward_batch(x_std)?;
    let mut probs = gen.denoise_net.forward_batch(gen.inputs(&draw.noisy, h.view(), &draw.steps).view())?;
    softmax_rows(&mut probs);
    Ok(mean_nll(&probs, clean))
}

fn mean_nll(probs: &Array2<f64>, clean: &[usize]) -> f64 {
    clean.iter().enumerate().map(|(i, &l)| -probs[[i, l]].max(1e-300).ln()).sum::<f64>() / clean.len() as f64
}

/// Trains a categorical generator on raw predictors and 0-based labels.
pub fn train_discrete(
    x: ArrayView2<f64>,
    labels: &[usize],
    categories: Option<usize>,
    cfg: &TrainConfig,
) -> Result<(DiscreteGenerator, TrainReport)> {
    cfg.validate()?;
    if x.nrows() == 0 || labels.is_empty() {
        return Err(Error::Empty("dataset has no rows".into()));
    }
    if x.nrows() != labels.len() {
        return Err(mismatch(format!("{} predictor rows vs {} labels", x.nrows(), labels.len())));
    }
    if x.nrows() < 2 {
        return Err(invalid("training needs at least 2 rows"));
    }
    let k = check_labels(labels, categories)?;
    let (fit_rows, val_rows) = split_indices(x.nrows(), cfg.val_fraction, cfg.seed)?;
    let x_scale = Standardizer::fit(x, &fit_rows, "x", ZeroVariance::UnitScale)?;
    let mut gen = DiscreteGenerator::init(x_scale, k, cfg, &mut seeded(derive_seed(cfg.seed, 0)))?;
    let report = fit_discrete(&mut gen, x, labels, &fit_rows, &val_rows, cfg, false)?;
    gen.meta.role = Role::Standalone;
    gen.meta.training_rows = x.nrows();
    Ok((gen, report))
}

pub(crate) fn fit_discrete(
    gen: &mut DiscreteGenerator,
    x: ArrayView2<f64>,
    labels: &[usize],
    fit_rows: &[usize],
    val_rows: &[usize],
    cfg: &TrainConfig,
    freeze_embedder: bool,
) -> Result<TrainReport> {
    let xs = gen.x_scale.transform(x);
    let val_rows = crate::gaussian::repeat_rows(val_rows);
    let x_val = xs.select(Axis(0), &val_rows);
    let y_val: Vec<usize> = val_rows.iter().map(|&i| labels[i]).collect();
    let val_draw = draw_corruption(&gen.schedule, &y_val, &mut seeded(derive_seed(cfg.seed, 2)));

    let mut rng = seeded(derive_seed(cfg.seed, 1));
    let mut adam_net = AdamState::new(&gen.denoise_net, cfg.learning_rate).with_weight_decay(cfg.weight_decay);
    let mut adam_emb = AdamState::new(&gen.embedder, cfg.learning_rate).with_weight_decay(cfg.weight_decay);
    let mut stopper = EarlyStopping::new(cfg.patience.max(1));
    let mut report = TrainReport::default();
    let mut order = fit_rows.to_vec();

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let xb = xs.select(Axis(0), chunk);
            let yb: Vec<usize> = chunk.iter().map(|&i| labels[i]).collect();
            let draw = draw_corruption(&gen.schedule, &yb, &mut rng);
            total += train_step(gen, xb.view(), &yb, &draw, &mut adam_net, &mut adam_emb, freeze_embedder)?
                * chunk.len() as f64;
            if !freeze_embedder {
                gen.embedder.shrink_input_weights(cfg.learning_rate * cfg.input_l1);
            }
        }
        report.train_losses.push(total / order.len() as f64);
        let val = validation_ce(gen, x_val.view(), &y_val, &val_draw, cfg.batch_size)?;
        report.val_losses.push(val);
        report.epochs_run = epoch;
        if stopper.observe(epoch, val, || (gen.denoise_net.clone(), gen.embedder.clone())) {
            break;
        }
    }
    report.best_epoch = stopper.best_epoch();
    report.best_val_loss = stopper.best_loss();
    if let Some((net, emb)) = stopper.into_best() {
        gen.denoise_net = net;
        gen.embedder = emb;
    }
    gen.meta.seed = cfg.seed;
    gen.meta.epochs_run = report.epochs_run;
    gen.meta.final_validation_loss = report.best_val_loss.is_finite().then_some(report.best_val_loss);
    Ok(report)
}

fn train_step(
    gen: &mut DiscreteGenerator,
    x_std: ArrayView2<f64>,
    clean: &[usize],
    draw: &LabelDraw,
    adam_net: &mut AdamState,
    adam_emb: &mut AdamState,
    freeze_embedder: bool,
) -> Result<f64> {
    let rows = clean.len();
    let h_cache = gen.embedder.forward_cached(x_std)?;
    let input = gen.inputs(&draw.noisy, h_cache.output().view(), &draw.steps);
    let n_cache = gen.denoise_net.forward_cached(input.view())?;
    let mut probs = n_cache.output().clone();
    softmax_rows(&mut probs);
    let loss = mean_nll(&probs, clean);
    let mut out_grad = probs;
    for (i, &l) in clean.iter().enumerate() {
        out_grad[[i, l]] -= 1.0;
    }
    out_grad /= rows as f64;
    let (net_grads, in_grad) = gen.denoise_net.backward_batch(&n_cache, out_grad.view())?;
    if !freeze_embedder {
        let k = gen.categories();
        let h_grad = in_grad.slice(s![.., k..k + gen.embedder.output_dim()]);
        let (emb_grads, _) = gen.embedder.backward_batch(&h_cache, h_grad)?;
        adam_emb.step(&mut gen.embedder, &emb_grads)?;
    }
    adam_net.step(&mut gen.denoise_net, &net_grads)?;
    Ok(loss)
}

fn validation_ce(
    gen: &DiscreteGenerator,
    x: ArrayView2<f64>,
    clean: &[usize],
    draw: &LabelDraw,
    batch: usize,
) -> Result<f64> {
    let n = clean.len();
    let mut total = 0.0;
    let mut start = 0;
    while start < n {
        let end = (start + batch).min(n);
        let sub = LabelDraw { steps: draw.steps[start..end].to_vec(), noisy: draw.noisy[start..end].to_vec() };
        let ce = cross_entropy(gen, x.slice(s![start..end, ..]), &clean[start..end], &sub)?;
        total += ce * (end - start) as f64;
        start = end;
    }
    Ok(total / n as f64)
}
