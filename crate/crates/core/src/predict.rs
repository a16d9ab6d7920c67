//! Point prediction from a synthetic sample.
//!
//! Given draws `y_1..y_m` at a query point, the prediction is
//! `argmin_theta (1/m) sum_k loss(theta, y_k)`. Continuous losses are
//! minimized in closed form; `zero_one` and `medoid` search the sample itself.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, ArrayView1};

use crate::error::{invalid, mismatch, Error, Result};

/// Synthetic responses drawn at one condition.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSampleSet {
    pub condition: Vec<f64>,
    pub payload: SamplePayload,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SamplePayload {
    /// `m x d_y` response vectors, one per row.
    Continuous(Array2<f64>),
    Categorical(Vec<usize>),
}

impl SyntheticSampleSet {
    pub fn continuous(condition: Vec<f64>, samples: Array2<f64>) -> Result<Self> {
        if samples.nrows() == 0 {
            return Err(Error::Empty("synthetic sample set".into()));
        }
        if samples.ncols() == 0 {
            return Err(invalid("response vectors must have at least one coordinate"));
        }
        Ok(Self { condition, payload: SamplePayload::Continuous(samples) })
    }

    pub fn categorical(condition: Vec<f64>, labels: Vec<usize>) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::Empty("synthetic sample set".into()));
        }
        Ok(Self { condition, payload: SamplePayload::Categorical(labels) })
    }

    pub fn m(&self) -> usize {
        match &self.payload {
            SamplePayload::Continuous(a) => a.nrows(),
            SamplePayload::Categorical(l) => l.len(),
        }
    }

    pub fn continuous_values(&self) -> Option<&Array2<f64>> {
        match &self.payload {
            SamplePayload::Continuous(a) => Some(a),
            SamplePayload::Categorical(_) => None,
        }
    }

    pub fn labels(&self) -> Option<&[usize]> {
        match &self.payload {
            SamplePayload::Categorical(l) => Some(l),
            SamplePayload::Continuous(_) => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dissimilarity {
    Euclidean,
    /// `1 - cos(a, b)`.
    Cosine,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LossKind {
    Squared,
    Absolute,
    Pinball(f64),
    ZeroOne,
    Medoid(Dissimilarity),
}

/// Where the minimizer is searched.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MinimizerDomain {
    Continuous,
    SampleSet,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossSpec {
    kind: LossKind,
    domain: MinimizerDomain,
}

impl LossSpec {
    /// Loss with its default minimizer domain.
    pub fn new(kind: LossKind) -> Result<Self> {
        let domain = match kind {
            LossKind::ZeroOne | LossKind::Medoid(_) => MinimizerDomain::SampleSet,
            _ => MinimizerDomain::Continuous,
        };
        Self::with_domain(kind, domain)
    }

    pub fn with_domain(kind: LossKind, domain: MinimizerDomain) -> Result<Self> {
        if let LossKind::Pinball(alpha) = kind {
            if !(alpha > 0.0 && alpha < 1.0) {
                return Err(invalid(format!("pinball level must satisfy 0 < alpha < 1, got {alpha}")));
            }
        }
        if matches!(kind, LossKind::ZeroOne | LossKind::Medoid(_))
            && domain != MinimizerDomain::SampleSet
        {
            return Err(invalid("zero_one and medoid losses are minimized over the sample set"));
        }
        Ok(Self { kind, domain })
    }

    pub fn squared() -> Self {
        Self::new(LossKind::Squared).expect("valid")
    }

    pub fn absolute() -> Self {
        Self::new(LossKind::Absolute).expect("valid")
    }

    pub fn pinball(alpha: f64) -> Result<Self> {
        Self::new(LossKind::Pinball(alpha))
    }

    pub fn zero_one() -> Self {
        Self::new(LossKind::ZeroOne).expect("valid")
    }

    pub fn medoid(d: Dissimilarity) -> Self {
        Self::new(LossKind::Medoid(d)).expect("valid")
    }

    pub fn kind(&self) -> LossKind {
        self.kind
    }

    pub fn domain(&self) -> MinimizerDomain {
        self.domain
    }
}

impl FromStr for LossSpec {
    type Err = Error;

    /// Parses `squared | absolute | pinball:<alpha> | zero_one | medoid:<euclidean|cosine>`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (name, arg) = match s.split_once(':') {
            Some((n, a)) => (n, Some(a)),
            None => (s, None),
        };
        let kind = match (name, arg) {
            ("squared", None) => LossKind::Squared,
            ("absolute", None) => LossKind::Absolute,
            ("zero_one", None) => LossKind::ZeroOne,
            ("pinball", Some(a)) => {
                let alpha: f64 = a
                    .parse()
                    .map_err(|_| invalid(format!("pinball level `{a}` is not a number")))?;
                LossKind::Pinball(alpha)
            }
            ("medoid", Some("euclidean")) => LossKind::Medoid(Dissimilarity::Euclidean),
            ("medoid", Some("cosine")) => LossKind::Medoid(Dissimilarity::Cosine),
            ("medoid", Some(d)) => {
                return Err(invalid(format!("unknown dissimilarity `{d}`; use euclidean or cosine")))
            }
            _ => {
                return Err(invalid(format!(
                    "unknown loss `{s}`; expected squared, absolute, pinball:<alpha>, zero_one or medoid:<euclidean|cosine>"
                )))
            }
        };
        Self::new(kind)
    }
}

impl fmt::Display for LossSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            LossKind::Squared => write!(f, "squared"),
            LossKind::Absolute => write!(f, "absolute"),
            LossKind::Pinball(a) => write!(f, "pinball:{a}"),
            LossKind::ZeroOne => write!(f, "zero_one"),
            LossKind::Medoid(Dissimilarity::Euclidean) => write!(f, "medoid:euclidean"),
            LossKind::Medoid(Dissimilarity::Cosine) => write!(f, "medoid:cosine"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PredictionValue {
    Vector(Vec<f64>),
    Label(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub value: PredictionValue,
    /// Empirical loss of `value` over the sample set.
    pub loss_value: f64,
    pub m_used: usize,
}

impl Prediction {
    pub fn vector(&self) -> Option<&[f64]> {
        match &self.value {
            PredictionValue::Vector(v) => Some(v),
            PredictionValue::Label(_) => None,
        }
    }

    pub fn label(&self) -> Option<usize> {
        match self.value {
            PredictionValue::Label(l) => Some(l),
            PredictionValue::Vector(_) => None,
        }
    }
}

/// Pinball (check) loss of predicting `theta` when the outcome is `y`.
pub fn pinball_loss(alpha: f64, theta: f64, y: f64) -> f64 {
    let u = y - theta;
    if u >= 0.0 {
        alpha * u
    } else {
        (alpha - 1.0) * u
    }
}

pub fn dissimilarity(d: Dissimilarity, a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    match d {
        Dissimilarity::Euclidean => {
            a.iter().zip(b.iter()).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
        }
        Dissimilarity::Cosine => {
            if a == b {
                return 0.0;
            }
            let na = a.dot(&a).sqrt();
            let nb = b.dot(&b).sqrt();
            if na == 0.0 || nb == 0.0 {
                1.0
            } else {
                1.0 - a.dot(&b) / (na * nb)
            }
        }
    }
}

fn point_loss(kind: LossKind, theta: ArrayView1<f64>, y: ArrayView1<f64>) -> f64 {
    match kind {
        LossKind::Squared => theta.iter().zip(y.iter()).map(|(t, v)| (t - v).powi(2)).sum(),
        LossKind::Absolute => theta.iter().zip(y.iter()).map(|(t, v)| (t - v).abs()).sum(),
        LossKind::Pinball(a) => theta.iter().zip(y.iter()).map(|(t, v)| pinball_loss(a, *t, *v)).sum(),
        LossKind::ZeroOne => {
            if theta == y {
                0.0
            } else {
                1.0
            }
        }
        LossKind::Medoid(d) => dissimilarity(d, theta, y),
    }
}

/// Mean loss of `value` over the sample set.
pub fn empirical_loss(samples: &SyntheticSampleSet, loss: &LossSpec, value: &PredictionValue) -> Result<f64> {
    match (&samples.payload, value) {
        (SamplePayload::Categorical(labels), PredictionValue::Label(l)) => {
            if loss.kind != LossKind::ZeroOne {
                return Err(Error::IncompatibleLoss(format!("{loss} needs continuous samples")));
            }
            Ok(labels.iter().filter(|&&v| v != *l).count() as f64 / labels.len() as f64)
        }
        (SamplePayload::Continuous(ys), PredictionValue::Vector(v)) => {
            if v.len() != ys.ncols() {
                return Err(mismatch(format!("value has {} coordinates, samples have {}", v.len(), ys.ncols())));
            }
            if loss.kind == LossKind::ZeroOne {
                return Err(Error::IncompatibleLoss("zero_one needs categorical samples".into()));
            }
            let theta = ArrayView1::from(v.as_slice());
            let total: f64 = ys.rows().into_iter().map(|y| point_loss(loss.kind, theta, y)).sum();
            Ok(total / ys.nrows() as f64)
        }
        _ => Err(Error::IncompatibleLoss("prediction and sample payload types differ".into())),
    }
}

/// 1-based order-statistic rank `ceil(alpha * m)`, robust to rounding in `alpha * m`.
pub fn pinball_rank(alpha: f64, m: usize) -> usize {
    let prod = alpha * m as f64;
    let nearest = prod.round();
    let k = if (prod - nearest).abs() < 1e-9 { nearest } else { prod.ceil() };
    (k as usize).clamp(1, m)
}

fn sorted_column(ys: &Array2<f64>, j: usize) -> Vec<f64> {
    let mut col = ys.column(j).to_vec();
    col.sort_by(f64::total_cmp);
    col
}

fn closed_form(kind: LossKind, ys: &Array2<f64>) -> Vec<f64> {
    let m = ys.nrows();
    (0..ys.ncols())
        .map(|j| match kind {
            LossKind::Squared => ys.column(j).sum() / m as f64,
            LossKind::Absolute => {
                let col = sorted_column(ys, j);
                if m % 2 == 1 {
                    col[m / 2]
                } else {
                    0.5 * (col[m / 2 - 1] + col[m / 2])
                }
            }
            LossKind::Pinball(a) => sorted_column(ys, j)[pinball_rank(a, m) - 1],
            LossKind::ZeroOne | LossKind::Medoid(_) => unreachable!("sample-set losses"),
        })
        .collect()
}

fn lexicographic(a: ArrayView1<f64>, b: ArrayView1<f64>) -> Ordering {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

/// Sample vector with the smallest mean loss, searching in lexicographic order
/// so ties resolve independently of arrival order.
fn sample_set_minimizer(kind: LossKind, ys: &Array2<f64>) -> Vec<f64> {
    let mut order: Vec<usize> = (0..ys.nrows()).collect();
    order.sort_by(|&i, &j| lexicographic(ys.row(i), ys.row(j)).then(i.cmp(&j)));
    let mut best = (f64::INFINITY, order[0]);
    for &i in &order {
        let cand = ys.row(i);
        let total: f64 = ys.rows().into_iter().map(|y| point_loss(kind, cand, y)).sum();
        if total < best.0 {
            best = (total, i);
        }
    }
    ys.row(best.1).to_vec()
}

fn modal_label(labels: &[usize]) -> usize {
    let max = *labels.iter().max().expect("nonempty");
    let mut counts = vec![0usize; max + 1];
    for &l in labels {
        counts[l] += 1;
    }
    // first maximum is the smallest label
    let mut best = 0;
    for (l, &c) in counts.iter().enumerate() {
        if c > counts[best] {
            best = l;
        }
    }
    best
}

/// Minimizes the empirical loss over the synthetic sample.
pub fn gdp_point(samples: &SyntheticSampleSet, loss: &LossSpec) -> Result<Prediction> {
    let m = samples.m();
    if m == 0 {
        return Err(Error::Empty("synthetic sample set".into()));
    }
    let value = match (&samples.payload, loss.kind) {
        (SamplePayload::Categorical(labels), LossKind::ZeroOne) => PredictionValue::Label(modal_label(labels)),
        (SamplePayload::Categorical(_), k) => {
            return Err(Error::IncompatibleLoss(format!("{k:?} loss needs continuous samples")))
        }
        (SamplePayload::Continuous(_), LossKind::ZeroOne) => {
            return Err(Error::IncompatibleLoss("zero_one loss needs categorical samples".into()))
        }
        (SamplePayload::Continuous(ys), kind) => match loss.domain {
            MinimizerDomain::Continuous => PredictionValue::Vector(closed_form(kind, ys)),
            MinimizerDomain::SampleSet => PredictionValue::Vector(sample_set_minimizer(kind, ys)),
        },
    };
    let loss_value = empirical_loss(samples, loss, &value)?;
    Ok(Prediction { value, loss_value, m_used: m })
}

/// Pinball predictions at several levels from one shared sample set.
pub fn gdp_quantiles(samples: &SyntheticSampleSet, alphas: &[f64]) -> Result<Vec<Prediction>> {
    let specs: Vec<LossSpec> = alphas.iter().map(|&a| LossSpec::pinball(a)).collect::<Result<_>>()?;
    let ys = samples
        .continuous_values()
        .ok_or_else(|| Error::IncompatibleLoss("quantiles need continuous samples".into()))?;
    let m = ys.nrows();
    let sorted: Vec<Vec<f64>> = (0..ys.ncols()).map(|j| sorted_column(ys, j)).collect();
    specs
        .iter()
        .zip(alphas)
        .map(|(spec, &a)| {
            let k = pinball_rank(a, m);
            let value = PredictionValue::Vector(sorted.iter().map(|c| c[k - 1]).collect());
            let loss_value = empirical_loss(samples, spec, &value)?;
            Ok(Prediction { value, loss_value, m_used: m })
        })
        .collect()
}
