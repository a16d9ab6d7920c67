//! Heteroscedastic quantile-regression simulation.
//!
//! `y = sin(x'beta) + ln(1 + |x_1|) + eps * (1 + |x_2|)` with
//! `eps ~ N(0, |x_2|)` (variance `|x_2|`), `beta ~ U(-1, 1)^p`, and
//! `x ~ N(0, I)` (case I) or `x ~ N(0, Sigma)` with `Sigma_ij = rho^|i-j|`
//! (case II). The conditional alpha-quantile is available in closed form.

use std::fmt::{self, Write as _};

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{invalid, mismatch, Error, Result};
use crate::gaussian::{train, ConditionalGenerator};
use crate::metrics::{format_level, mad, rmse, MetricReport};
use crate::predict::gdp_quantiles;
use crate::rng::{derive_seed, seeded};
use crate::training::{TrainConfig, TrainReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Case {
    /// Independent standard normal predictors.
    I,
    /// AR(1) correlated predictors.
    II,
}

impl fmt::Display for Case {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Case::I => write!(f, "I"),
            Case::II => write!(f, "II"),
        }
    }
}

impl std::str::FromStr for Case {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "I" | "i" | "1" => Ok(Case::I),
            "II" | "ii" | "2" => Ok(Case::II),
            _ => Err(invalid(format!("unknown case `{s}`; expected I or II"))),
        }
    }
}

/// Simulation and evaluation settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    pub n: usize,
    pub p: usize,
    pub case: Case,
    /// Lag-1 correlation for case II.
    pub rho: f64,
    /// Fraction of rows used for training; the rest is the test split.
    pub split_ratio: f64,
    pub seed: u64,
    /// Synthetic draws per test point.
    pub m: usize,
    pub alphas: Vec<f64>,
    /// Cap on evaluated test points; `None` evaluates the whole test split.
    pub test_subset: Option<usize>,
    /// Reverse-pass stride.
    pub stride: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n: 10_000,
            p: 100,
            case: Case::I,
            rho: -0.5,
            split_ratio: 0.7,
            seed: 0,
            m: 1000,
            alphas: vec![0.05, 0.2, 0.5, 0.8, 0.95],
            test_subset: Some(200),
            stride: 10,
        }
    }
}

impl SimConfig {
    /// Every test point and the full reverse chain.
    pub fn full_fidelity(mut self) -> Self {
        self.test_subset = None;
        self.stride = 1;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 10 {
            return Err(invalid(format!("n must be at least 10, got {}", self.n)));
        }
        if self.p < 2 {
            return Err(invalid(format!("p must be at least 2, got {}", self.p)));
        }
        if !(self.split_ratio > 0.0 && self.split_ratio < 1.0) {
            return Err(invalid(format!("split_ratio must lie in (0, 1), got {}", self.split_ratio)));
        }
        if !(self.rho.abs() < 1.0) {
            return Err(invalid(format!("|rho| must be below 1, got {}", self.rho)));
        }
        if self.m == 0 {
            return Err(invalid("m must be at least 1"));
        }
        if self.alphas.is_empty() || self.alphas.iter().any(|a| !(*a > 0.0 && *a < 1.0)) {
            return Err(invalid(format!("alphas must be nonempty and in (0, 1), got {:?}", self.alphas)));
        }
        if self.stride == 0 {
            return Err(invalid("stride must be positive"));
        }
        Ok(())
    }
}

/// One simulated dataset together with the coefficients that generated it.
#[derive(Debug, Clone, PartialEq)]
pub struct SimDataset {
    pub x: Array2<f64>,
    pub y: Array1<f64>,
    pub beta: Array1<f64>,
    pub case: Case,
}

impl SimDataset {
    pub fn y_matrix(&self) -> Array2<f64> {
        self.y.clone().insert_axis(Axis(1))
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }
}

/// Lower-triangular Cholesky factor of a symmetric positive-definite matrix.
pub fn cholesky(a: ArrayView2<f64>) -> Result<Array2<f64>> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(mismatch("cholesky needs a square matrix"));
    }
    let mut l = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in 0..=i {
            let dot: f64 = (0..j).map(|k| l[[i, k]] * l[[j, k]]).sum();
            if i == j {
                let d = a[[i, i]] - dot;
                if d <= 0.0 {
                    return Err(invalid("matrix is not positive definite"));
                }
                l[[i, j]] = d.sqrt();
            } else {
                l[[i, j]] = (a[[i, j]] - dot) / l[[j, j]];
            }
        }
    }
    Ok(l)
}

/// `Sigma_ij = rho^|i - j|`.
pub fn ar1_covariance(p: usize, rho: f64) -> Array2<f64> {
    Array2::from_shape_fn((p, p), |(i, j)| rho.powi((i as i32 - j as i32).abs()))
}

/// Conditional location `sin(x'beta) + ln(1 + |x_1|)`.
pub fn conditional_location(x: ArrayView1<f64>, beta: ArrayView1<f64>) -> f64 {
    x.dot(&beta).sin() + (1.0 + x[0].abs()).ln()
}

/// Conditional scale `(1 + |x_2|) * sqrt(|x_2|)`.
pub fn conditional_scale(x: ArrayView1<f64>) -> f64 {
    let a = x[1].abs();
    (1.0 + a) * a.sqrt()
}

/// Draws one response from the true conditional law at `x`.
pub fn sample_response<R: Rng + ?Sized>(x: ArrayView1<f64>, beta: ArrayView1<f64>, rng: &mut R) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    conditional_location(x, beta) + conditional_scale(x) * z
}

fn draw_predictors<R: Rng + ?Sized>(
    n: usize,
    p: usize,
    chol: Option<&Array2<f64>>,
    shift: f64,
    rng: &mut R,
) -> Array2<f64> {
    let mut x = Array2::from_shape_simple_fn((n, p), || rng.sample::<f64, _>(StandardNormal));
    if let Some(l) = chol {
        x = x.dot(&l.t());
    }
    if shift != 0.0 {
        x += shift;
    }
    x
}

fn respond<R: Rng + ?Sized>(x: &Array2<f64>, beta: &Array1<f64>, rng: &mut R) -> Array1<f64> {
    x.rows().into_iter().map(|row| sample_response(row, beta.view(), rng)).collect()
}

/// Simulates `config.n` rows. Coefficients are drawn first, then predictors,
/// then responses.
pub fn simulate<R: Rng + ?Sized>(config: &SimConfig, rng: &mut R) -> Result<SimDataset> {
    config.validate()?;
    let beta = draw_beta(config.p, rng);
    let chol = match config.case {
        Case::I => None,
        Case::II => Some(cholesky(ar1_covariance(config.p, config.rho).view())?),
    };
    let x = draw_predictors(config.n, config.p, chol.as_ref(), 0.0, rng);
    let y = respond(&x, &beta, rng);
    Ok(SimDataset { x, y, beta, case: config.case })
}

fn draw_beta<R: Rng + ?Sized>(p: usize, rng: &mut R) -> Array1<f64> {
    let u = Uniform::new(-1.0, 1.0).expect("valid range");
    Array1::from_shape_simple_fn(p, || {
        // the open interval excludes the lower endpoint as well
        loop {
            let v = u.sample(rng);
            if v > -1.0 {
                return v;
            }
        }
    })
}

/// Standard normal quantile.
pub fn normal_quantile(alpha: f64) -> f64 {
    Normal::standard().inverse_cdf(alpha)
}

/// Closed-form conditional quantiles, one row per predictor row and one column per level.
pub fn oracle_quantiles(x: ArrayView2<f64>, beta: ArrayView1<f64>, alphas: &[f64]) -> Result<Array2<f64>> {
    if x.ncols() != beta.len() || x.ncols() < 2 {
        return Err(mismatch(format!("{} predictors vs {} coefficients", x.ncols(), beta.len())));
    }
    let z: Vec<f64> = alphas.iter().map(|&a| normal_quantile(a)).collect();
    let mut q = Array2::zeros((x.nrows(), alphas.len()));
    for (i, row) in x.rows().into_iter().enumerate() {
        let loc = conditional_location(row, beta);
        let scale = conditional_scale(row);
        for (j, zj) in z.iter().enumerate() {
            q[[i, j]] = loc + scale * zj;
        }
    }
    Ok(q)
}

/// Monte-Carlo conditional quantiles from `draws` responses per row.
pub fn oracle_quantiles_mc<R: Rng + ?Sized>(
    x: ArrayView2<f64>,
    beta: ArrayView1<f64>,
    alphas: &[f64],
    draws: usize,
    rng: &mut R,
) -> Result<Array2<f64>> {
    if x.ncols() != beta.len() {
        return Err(mismatch(format!("{} predictors vs {} coefficients", x.ncols(), beta.len())));
    }
    if draws == 0 {
        return Err(invalid("need at least one Monte-Carlo draw"));
    }
    let mut q = Array2::zeros((x.nrows(), alphas.len()));
    for (i, row) in x.rows().into_iter().enumerate() {
        let mut ys: Vec<f64> = (0..draws).map(|_| sample_response(row, beta, rng)).collect();
        ys.sort_by(f64::total_cmp);
        for (j, &a) in alphas.iter().enumerate() {
            q[[i, j]] = ys[crate::predict::pinball_rank(a, draws) - 1];
        }
    }
    Ok(q)
}

/// One-dimensional toy: `x ~ N(0, 1)`, `y | x ~ N(slope * x, 1)`.
pub fn linear_gaussian_toy<R: Rng + ?Sized>(n: usize, slope: f64, rng: &mut R) -> (Array2<f64>, Array2<f64>) {
    let x = Array2::from_shape_simple_fn((n, 1), || rng.sample::<f64, _>(StandardNormal));
    let y = x.mapv(|v| slope * v + rng.sample::<f64, _>(StandardNormal));
    (x, y)
}

/// Source and target samples sharing `beta` and the conditional law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TransferPairConfig {
    pub p: usize,
    pub n_source: usize,
    pub n_target: usize,
    /// Offset added to every target predictor coordinate.
    pub shift: f64,
}

impl Default for TransferPairConfig {
    fn default() -> Self {
        Self { p: 5, n_source: 20_000, n_target: 500, shift: 0.5 }
    }
}

/// Builds a source/target pair: the target predictors are shifted by
/// `config.shift`, which shifts the response marginal while the conditional
/// law `y | x` stays the same.
pub fn make_transfer_pair(seed: u64, config: &TransferPairConfig) -> Result<(SimDataset, SimDataset)> {
    if config.p < 2 {
        return Err(invalid("transfer pair needs p >= 2"));
    }
    let mut rng = seeded(seed);
    let beta = draw_beta(config.p, &mut rng);
    let xs = draw_predictors(config.n_source, config.p, None, 0.0, &mut rng);
    let ys = respond(&xs, &beta, &mut rng);
    let xt = draw_predictors(config.n_target, config.p, None, config.shift, &mut rng);
    let yt = respond(&xt, &beta, &mut rng);
    Ok((
        SimDataset { x: xs, y: ys, beta: beta.clone(), case: Case::I },
        SimDataset { x: xt, y: yt, beta, case: Case::I },
    ))
}

/// Training settings used for the benchmark.
///
/// With 100 predictors of which two carry signal, the default settings
/// overfit before the network finds them. A sparsity penalty on the
/// embedder's input weights, a higher learning rate and weight averaging
/// fix that.
pub fn benchmark_train_config() -> TrainConfig {
    TrainConfig {
        learning_rate: 1e-3,
        max_epochs: 1000,
        patience: 50,
        ema_decay: 0.995,
        input_l1: 0.6,
        ..TrainConfig::default()
    }
}

/// Everything needed to run the benchmark.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkSetup {
    pub sim: SimConfig,
    pub train: TrainConfig,
}

impl BenchmarkSetup {
    pub fn new(sim: SimConfig) -> Self {
        Self { sim, train: benchmark_train_config() }
    }
}

/// Table-style benchmark result.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkReport {
    pub case: Case,
    pub seed: u64,
    pub n_train: usize,
    pub n_evaluated: usize,
    pub m: usize,
    pub rmse: MetricReport,
    pub mad: MetricReport,
    pub training: TrainReport,
}

impl BenchmarkReport {
    /// `metric,<levels...>,Average` with one row for RMSE and one for MAD.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("case,metric");
        for (a, _) in &self.rmse.per_level {
            let _ = write!(out, ",{}", format_level(*a));
        }
        out.push_str(",Average\n");
        for r in [&self.rmse, &self.mad] {
            let _ = write!(out, "{},{}", self.case, r.metric);
            for (_, v) in &r.per_level {
                let _ = write!(out, ",{v:?}");
            }
            let _ = writeln!(out, ",{:?}", r.average);
        }
        out
    }

    pub fn to_table(&self) -> String {
        let mut out = format!(
            "Case {} (seed {}, n_train {}, test points {}, m {})\n",
            self.case, self.seed, self.n_train, self.n_evaluated, self.m
        );
        let _ = write!(out, "{:<8}", "");
        for (a, _) in &self.rmse.per_level {
            let _ = write!(out, "{:>8}", format_level(*a));
        }
        let _ = writeln!(out, "{:>9}", "Average");
        for r in [&self.rmse, &self.mad] {
            let _ = write!(out, "{:<8}", r.metric);
            for (_, v) in &r.per_level {
                let _ = write!(out, "{v:>8.2}");
            }
            let _ = writeln!(out, "{:>9.2}", r.average);
        }
        out
    }
}

/// Seeds used by one benchmark run, all derived from `SimConfig::seed`.
struct RunSeeds {
    data: u64,
    split: u64,
    train: u64,
    sample: u64,
}

impl RunSeeds {
    fn new(seed: u64) -> Self {
        Self {
            data: derive_seed(seed, 0),
            split: derive_seed(seed, 1),
            train: derive_seed(seed, 2),
            sample: derive_seed(seed, 3),
        }
    }
}

/// Splits rows into `(train, test)` by a seeded shuffle.
pub fn train_test_split(n: usize, train_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seeded(seed));
    let n_train = ((n as f64) * train_fraction).round() as usize;
    let test = order.split_off(n_train.min(n));
    (order, test)
}

/// Simulates, trains on the training split, and scores pinball predictions at
/// every level against closed-form quantiles on the evaluated test points.
///
/// The training seed in `setup.train` is replaced by one derived from the
/// simulation seed so a run is determined by `SimConfig` alone.
pub fn run_benchmark(setup: &BenchmarkSetup) -> Result<(BenchmarkReport, ConditionalGenerator)> {
    let sim = &setup.sim;
    sim.validate()?;
    let seeds = RunSeeds::new(sim.seed);
    let data = simulate(sim, &mut seeded(seeds.data))?;
    let (train_rows, test_rows) = train_test_split(sim.n, sim.split_ratio, seeds.split);
    let eval_rows: Vec<usize> = match sim.test_subset {
        Some(k) => test_rows.iter().copied().take(k).collect(),
        None => test_rows,
    };
    if eval_rows.is_empty() {
        return Err(Error::Empty("no test points to evaluate".into()));
    }

    let x_train = data.x.select(Axis(0), &train_rows);
    let y_train = data.y_matrix().select(Axis(0), &train_rows);
    let train_cfg = TrainConfig { seed: seeds.train, ..setup.train.clone() };
    let (gen, training) = train(x_train.view(), y_train.view(), &train_cfg)?;

    let x_eval = data.x.select(Axis(0), &eval_rows);
    let truth = oracle_quantiles(x_eval.view(), data.beta.view(), &sim.alphas)?;
    let mut preds = Array2::zeros(truth.raw_dim());
    for (i, row) in x_eval.rows().into_iter().enumerate() {
        let set = gen.sample_seeded(&row.to_vec(), sim.m, sim.stride, derive_seed(seeds.sample, i as u64))?;
        for (j, p) in gdp_quantiles(&set, &sim.alphas)?.iter().enumerate() {
            preds[[i, j]] = p.vector().expect("continuous")[0];
        }
    }

    let mut rmse_levels = Vec::with_capacity(sim.alphas.len());
    let mut mad_levels = Vec::with_capacity(sim.alphas.len());
    for (j, &a) in sim.alphas.iter().enumerate() {
        let p = preds.column(j).to_vec();
        let t = truth.column(j).to_vec();
        rmse_levels.push((a, rmse(&p, &t)?));
        mad_levels.push((a, mad(&p, &t)?));
    }
    let report = BenchmarkReport {
        case: sim.case,
        seed: sim.seed,
        n_train: train_rows.len(),
        n_evaluated: eval_rows.len(),
        m: sim.m,
        rmse: MetricReport::new("RMSE", eval_rows.len(), rmse_levels)?,
        mad: MetricReport::new("MAD", eval_rows.len(), mad_levels)?,
        training,
    };
    Ok((report, gen))
}
