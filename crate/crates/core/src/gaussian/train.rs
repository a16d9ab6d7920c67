use ndarray::{s, Array2, ArrayView2, Axis, Zip};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

use super::ConditionalGenerator;
use crate::data::{split_indices, Standardizer, ZeroVariance};
use crate::error::{invalid, mismatch, Error, Result};
use crate::nn::{AdamState, MlpGrads};
use crate::rng::{derive_seed, seeded, GdpRng};
use crate::training::{EarlyStopping, Role, TrainConfig, TrainReport};

/// Noise draws for one batch: step per row and the injected noise.
struct NoiseDraw {
    steps: Vec<usize>,
    eps: Array2<f64>,
}

fn draw_noise<R: Rng + ?Sized>(rows: usize, d_y: usize, steps: usize, rng: &mut R) -> NoiseDraw {
    let t: Vec<usize> = (0..rows).map(|_| rng.random_range(1..=steps)).collect();
    let eps = Array2::from_shape_simple_fn((rows, d_y), || rng.sample(StandardNormal));
    NoiseDraw { steps: t, eps }
}

fn noised(gen: &ConditionalGenerator, y0: ArrayView2<f64>, draw: &NoiseDraw) -> Array2<f64> {
    let mut y_t = y0.to_owned();
    for ((mut row, eps), &t) in y_t.rows_mut().into_iter().zip(draw.eps.rows()).zip(&draw.steps) {
        let (mu, sigma) = (gen.schedule().mu(t), gen.schedule().sigma(t));
        Zip::from(&mut row).and(&eps).for_each(|y, &e| *y = mu * *y + sigma * e);
    }
    y_t
}

/// Mean over rows of `|eps - eps_hat|^2`, and optionally parameter gradients.
fn loss_and_grads(
    gen: &ConditionalGenerator,
    x_std: ArrayView2<f64>,
    y0_std: ArrayView2<f64>,
    draw: &NoiseDraw,
    want_grads: bool,
    embedder_grads: bool,
) -> Result<(f64, Option<(MlpGrads, Option<MlpGrads>)>)> {
    let rows = x_std.nrows();
    let y_t = noised(gen, y0_std, draw);
    let h_cache = gen.embedder().forward_cached(x_std)?;
    let input = gen.score_inputs(y_t.view(), h_cache.output().view(), &draw.steps);
    let s_cache = gen.score_net().forward_cached(input.view())?;
    let diff = s_cache.output() - &draw.eps;
    let loss = diff.iter().map(|d| d * d).sum::<f64>() / rows as f64;
    if !want_grads {
        return Ok((loss, None));
    }
    let out_grad = diff * (2.0 / rows as f64);
    let (score_grads, input_grad) = gen.score_net().backward_batch(&s_cache, out_grad.view())?;
    let emb_grads = if embedder_grads {
        let d_y = gen.response_dim();
        let h_grad = input_grad.slice(s![.., d_y..d_y + gen.embed_dim()]);
        Some(gen.embedder().backward_batch(&h_cache, h_grad)?.0)
    } else {
        None
    };
    Ok((loss, Some((score_grads, emb_grads))))
}

/// Score-matching loss on a batch of standardized `(y0, x)` rows.
///
/// Each row gets its own step `t ~ U{1..T}` and noise `eps ~ N(0, I)` from `rng`.
pub fn score_matching_loss<R: Rng + ?Sized>(
    gen: &ConditionalGenerator,
    y0_std: ArrayView2<f64>,
    x_std: ArrayView2<f64>,
    rng: &mut R,
) -> Result<f64> {
    check_batch(gen, y0_std, x_std)?;
    let draw = draw_noise(y0_std.nrows(), gen.response_dim(), gen.schedule().steps(), rng);
    Ok(loss_and_grads(gen, x_std, y0_std, &draw, false, false)?.0)
}

/// Score-matching loss with explicit steps and noise.
pub fn score_matching_loss_with(
    gen: &ConditionalGenerator,
    y0_std: ArrayView2<f64>,
    x_std: ArrayView2<f64>,
    steps: &[usize],
    eps: ArrayView2<f64>,
) -> Result<f64> {
    check_batch(gen, y0_std, x_std)?;
    if steps.len() != y0_std.nrows() || eps.dim() != y0_std.dim() {
        return Err(mismatch("steps and noise must match the batch"));
    }
    for &t in steps {
        gen.schedule().check_step(t)?;
    }
    let draw = NoiseDraw { steps: steps.to_vec(), eps: eps.to_owned() };
    Ok(loss_and_grads(gen, x_std, y0_std, &draw, false, false)?.0)
}

fn check_batch(gen: &ConditionalGenerator, y0: ArrayView2<f64>, x: ArrayView2<f64>) -> Result<()> {
    if y0.nrows() == 0 {
        return Err(Error::Empty("score-matching batch".into()));
    }
    if y0.nrows() != x.nrows() {
        return Err(mismatch(format!("{} responses vs {} predictor rows", y0.nrows(), x.nrows())));
    }
    if y0.ncols() != gen.response_dim() || x.ncols() != gen.predictor_dim() {
        return Err(mismatch(format!(
            "batch is ({}, {}) columns, generator expects ({}, {})",
            y0.ncols(),
            x.ncols(),
            gen.response_dim(),
            gen.predictor_dim()
        )));
    }
    Ok(())
}

pub(crate) fn check_dataset(x: ArrayView2<f64>, y: ArrayView2<f64>) -> Result<()> {
    if x.nrows() == 0 {
        return Err(Error::Empty("dataset has no rows".into()));
    }
    if x.nrows() != y.nrows() {
        return Err(mismatch(format!("{} predictor rows vs {} responses", x.nrows(), y.nrows())));
    }
    if x.nrows() < 2 {
        return Err(invalid("training needs at least 2 rows"));
    }
    if y.ncols() == 0 || x.ncols() == 0 {
        return Err(invalid("predictors and responses need at least one column"));
    }
    if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
        return Err(invalid("dataset contains non-finite values"));
    }
    Ok(())
}

/// Trains a conditional generator on raw (unstandardized) `(x, y)` rows.
///
/// The last `val_fraction` of rows in a seeded shuffle are held out for early
/// stopping; standardizers are fitted on the remaining rows. The returned
/// generator carries the weights of the best validation epoch.
pub fn train(
    x: ArrayView2<f64>,
    y: ArrayView2<f64>,
    cfg: &TrainConfig,
) -> Result<(ConditionalGenerator, TrainReport)> {
    cfg.validate()?;
    check_dataset(x, y)?;
    let (fit_rows, val_rows) = split_indices(x.nrows(), cfg.val_fraction, cfg.seed)?;
    let x_scale = Standardizer::fit(x, &fit_rows, "x", ZeroVariance::UnitScale)?;
    let y_scale = Standardizer::fit(y, &fit_rows, "y", ZeroVariance::Reject)?;
    let mut gen =
        ConditionalGenerator::init(x_scale, y_scale, cfg, &mut seeded(derive_seed(cfg.seed, 0)))?;
    let report = fit(&mut gen, x, y, &fit_rows, &val_rows, cfg, false)?;
    let meta = gen.meta_mut();
    meta.role = Role::Standalone;
    meta.training_rows = x.nrows();
    Ok((gen, report))
}

/// Optimizes `gen` in place with Adam and early stopping.
///
/// With `freeze_embedder` only the score network is updated.
pub(crate) fn fit(
    gen: &mut ConditionalGenerator,
    x: ArrayView2<f64>,
    y: ArrayView2<f64>,
    fit_rows: &[usize],
    val_rows: &[usize],
    cfg: &TrainConfig,
    freeze_embedder: bool,
) -> Result<TrainReport> {
    if x.ncols() != gen.predictor_dim() || y.ncols() != gen.response_dim() {
        return Err(mismatch(format!(
            "data has ({}, {}) columns, generator expects ({}, {})",
            x.ncols(),
            y.ncols(),
            gen.predictor_dim(),
            gen.response_dim()
        )));
    }
    let xs = gen.x_scale().transform(x);
    let ys = gen.y_scale().transform(y);
    let steps = gen.schedule().steps();
    let d_y = gen.response_dim();

    // validation rows are repeated so the fixed noise draws cover many steps
    let val_rows = repeat_rows(val_rows);
    let x_val = xs.select(Axis(0), &val_rows);
    let y_val = ys.select(Axis(0), &val_rows);
    let val_draw = draw_noise(val_rows.len(), d_y, steps, &mut seeded(derive_seed(cfg.seed, 2)));

    let mut rng: GdpRng = seeded(derive_seed(cfg.seed, 1));
    let mut adam_score = AdamState::new(gen.score_net(), cfg.learning_rate).with_weight_decay(cfg.weight_decay);
    let mut adam_emb = AdamState::new(gen.embedder(), cfg.learning_rate).with_weight_decay(cfg.weight_decay);
    let mut stopper = EarlyStopping::new(cfg.patience.max(1));
    let mut report = TrainReport::default();
    let mut order = fit_rows.to_vec();
    let mut averaged = (cfg.ema_decay > 0.0).then(|| gen.clone());

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let xb = xs.select(Axis(0), chunk);
            let yb = ys.select(Axis(0), chunk);
            let draw = draw_noise(chunk.len(), d_y, steps, &mut rng);
            let (loss, grads) =
                loss_and_grads(gen, xb.view(), yb.view(), &draw, true, !freeze_embedder)?;
            let (score_grads, emb_grads) = grads.expect("requested");
            let (score_net, embedder) = gen.nets_mut();
            adam_score.step(score_net, &score_grads)?;
            if let Some(g) = emb_grads {
                adam_emb.step(embedder, &g)?;
                embedder.shrink_input_weights(cfg.learning_rate * cfg.input_l1);
            }
            if let Some(avg) = averaged.as_mut() {
                let (avg_score, avg_emb) = avg.nets_mut();
                avg_score.ema_update(gen.score_net(), cfg.ema_decay)?;
                avg_emb.ema_update(gen.embedder(), cfg.ema_decay)?;
            }
            total += loss * chunk.len() as f64;
        }
        report.train_losses.push(total / order.len() as f64);
        let current = averaged.as_ref().unwrap_or(gen);
        let val_loss =
            validation_loss(current, x_val.view(), y_val.view(), &val_draw, cfg.batch_size)?;
        report.val_losses.push(val_loss);
        report.epochs_run = epoch;
        let stop = stopper.observe(epoch, val_loss, || {
            (current.score_net().clone(), current.embedder().clone())
        });
        if stop {
            break;
        }
    }

    report.best_epoch = stopper.best_epoch();
    report.best_val_loss = stopper.best_loss();
    if let Some((score_net, embedder)) = stopper.into_best() {
        gen.set_nets(score_net, embedder);
    }
    let meta = gen.meta_mut();
    meta.seed = cfg.seed;
    meta.epochs_run = report.epochs_run;
    meta.final_validation_loss = report.best_val_loss.is_finite().then_some(report.best_val_loss);
    Ok(report)
}

/// Repeats rows until there are at least `VALIDATION_DRAWS` of them (at most 64 copies).
pub(crate) fn repeat_rows(rows: &[usize]) -> Vec<usize> {
    const VALIDATION_DRAWS: usize = 4096;
    let copies = VALIDATION_DRAWS.div_ceil(rows.len().max(1)).clamp(1, 64);
    rows.iter().copied().cycle().take(rows.len() * copies).collect()
}

fn validation_loss(
    gen: &ConditionalGenerator,
    x: ArrayView2<f64>,
    y: ArrayView2<f64>,
    draw: &NoiseDraw,
    batch: usize,
) -> Result<f64> {
    let n = x.nrows();
    let mut total = 0.0;
    let mut start = 0;
    while start < n {
        let end = (start + batch).min(n);
        let sub = NoiseDraw {
            steps: draw.steps[start..end].to_vec(),
            eps: draw.eps.slice(s![start..end, ..]).to_owned(),
        };
        let xb = x.slice(s![start..end, ..]);
        let yb = y.slice(s![start..end, ..]);
        total += loss_and_grads(gen, xb, yb, &sub, false, false)?.0 * (end - start) as f64;
        start = end;
    }
    Ok(total / n as f64)
}
