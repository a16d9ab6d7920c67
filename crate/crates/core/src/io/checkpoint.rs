use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::write_atomic;
use crate::data::Standardizer;
use crate::discrete::{DiscreteGenerator, DiscreteSchedule};
use crate::error::{invalid, mismatch, Error, Result};
use crate::gaussian::{ConditionalGenerator, NoiseSchedule, ScheduleParams};
use crate::nn::Mlp;
use crate::training::{Role, TrainingMeta};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Gaussian,
    Discrete,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Architecture {
    /// Layer sizes of the score (or denoising) network.
    score_net: Vec<usize>,
    embedder: Vec<usize>,
    embed_dim: usize,
    time_dim: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScheduleRecord {
    steps: usize,
    beta_min: f64,
    beta_max: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    categories: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Standardizers {
    x: Standardizer,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    y: Option<Standardizer>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NetWeights {
    /// One `(out, in)` matrix per layer, as rows.
    weights: Vec<Vec<Vec<f64>>>,
    biases: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Weights {
    score_net: NetWeights,
    embedder: NetWeights,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Metadata {
    seed: u64,
    epochs_run: usize,
    final_validation_loss: Option<f64>,
    training_rows: usize,
}

/// Serialized generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorCheckpoint {
    format_version: u32,
    kind: Kind,
    role: Role,
    architecture: Architecture,
    schedule: ScheduleRecord,
    standardizer: Standardizers,
    weights: Weights,
    metadata: Metadata,
    /// Original label text for each category index.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    labels: Option<Vec<String>>,
}

/// A generator of either kind.
#[derive(Debug, Clone)]
pub enum Generator {
    Gaussian(ConditionalGenerator),
    Discrete(DiscreteGenerator),
}

impl Generator {
    pub fn predictor_dim(&self) -> usize {
        match self {
            Generator::Gaussian(g) => g.predictor_dim(),
            Generator::Discrete(g) => g.predictor_dim(),
        }
    }

    pub fn meta(&self) -> &TrainingMeta {
        match self {
            Generator::Gaussian(g) => g.meta(),
            Generator::Discrete(g) => g.meta(),
        }
    }
}

fn net_weights(net: &Mlp) -> NetWeights {
    NetWeights {
        weights: net.weights().iter().map(|w| w.rows().into_iter().map(|r| r.to_vec()).collect()).collect(),
        biases: net.biases().iter().map(|b| b.to_vec()).collect(),
    }
}

fn build_net(name: &str, dims: &[usize], w: &NetWeights) -> Result<Mlp> {
    if dims.len() != w.weights.len() + 1 || w.biases.len() != w.weights.len() {
        return Err(mismatch(format!("{name}: {} layers of weights for dims {dims:?}", w.weights.len())));
    }
    let mut weights = Vec::with_capacity(w.weights.len());
    for (i, rows) in w.weights.iter().enumerate() {
        let (out, inp) = (dims[i + 1], dims[i]);
        if rows.len() != out || rows.iter().any(|r| r.len() != inp) {
            return Err(mismatch(format!("{name}: layer {i} is not {out}x{inp}")));
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        weights.push(Array2::from_shape_vec((out, inp), flat).expect("shape checked"));
    }
    let biases = w.biases.iter().map(|b| Array1::from(b.clone())).collect();
    Mlp::from_parts(weights, biases)
}

fn metadata(meta: &TrainingMeta) -> Metadata {
    Metadata {
        seed: meta.seed,
        epochs_run: meta.epochs_run,
        final_validation_loss: meta.final_validation_loss,
        training_rows: meta.training_rows,
    }
}

fn all_finite(net: &NetWeights) -> bool {
    net.weights.iter().flatten().flatten().chain(net.biases.iter().flatten()).all(|v| v.is_finite())
}

impl GeneratorCheckpoint {
    pub fn from_gaussian(gen: &ConditionalGenerator) -> Self {
        let p = gen.schedule().params();
        Self {
            format_version: FORMAT_VERSION,
            kind: Kind::Gaussian,
            role: gen.meta().role,
            architecture: Architecture {
                score_net: gen.score_net().layer_dims(),
                embedder: gen.embedder().layer_dims(),
                embed_dim: gen.embed_dim(),
                time_dim: gen.time_dim(),
            },
            schedule: ScheduleRecord { steps: p.steps, beta_min: p.beta_min, beta_max: p.beta_max, categories: None },
            standardizer: Standardizers { x: gen.x_scale().clone(), y: Some(gen.y_scale().clone()) },
            weights: Weights { score_net: net_weights(gen.score_net()), embedder: net_weights(gen.embedder()) },
            metadata: metadata(gen.meta()),
            labels: None,
        }
    }

    /// `labels` maps category indices back to their original text.
    pub fn from_discrete(gen: &DiscreteGenerator, labels: Option<Vec<String>>) -> Result<Self> {
        if let Some(l) = &labels {
            if l.len() != gen.categories() {
                return Err(mismatch(format!("{} label names for {} categories", l.len(), gen.categories())));
            }
        }
        let p = gen.schedule().params();
        Ok(Self {
            format_version: FORMAT_VERSION,
            kind: Kind::Discrete,
            role: gen.meta().role,
            architecture: Architecture {
                score_net: gen.denoise_net().layer_dims(),
                embedder: gen.embedder().layer_dims(),
                embed_dim: gen.embedder().output_dim(),
                time_dim: gen.time_dim(),
            },
            schedule: ScheduleRecord {
                steps: p.steps,
                beta_min: p.beta_min,
                beta_max: p.beta_max,
                categories: Some(gen.categories()),
            },
            standardizer: Standardizers { x: gen.x_scale().clone(), y: None },
            weights: Weights { score_net: net_weights(gen.denoise_net()), embedder: net_weights(gen.embedder()) },
            metadata: metadata(gen.meta()),
            labels,
        })
    }

    pub fn kind(&self) -> Kind {
        self.kind
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    pub fn training_rows(&self) -> usize {
        self.metadata.training_rows
    }

    fn meta(&self) -> TrainingMeta {
        TrainingMeta {
            role: self.role,
            seed: self.metadata.seed,
            epochs_run: self.metadata.epochs_run,
            final_validation_loss: self.metadata.final_validation_loss,
            training_rows: self.metadata.training_rows,
        }
    }

    /// Rebuilds the generator, checking every dimension.
    pub fn to_generator(&self) -> Result<Generator> {
        let arch = &self.architecture;
        let score_net = build_net("score_net", &arch.score_net, &self.weights.score_net)?;
        let embedder = build_net("embedder", &arch.embedder, &self.weights.embedder)?;
        if embedder.output_dim() != arch.embed_dim {
            return Err(mismatch(format!("embedder outputs {} but embed_dim is {}", embedder.output_dim(), arch.embed_dim)));
        }
        let params =
            ScheduleParams { steps: self.schedule.steps, beta_min: self.schedule.beta_min, beta_max: self.schedule.beta_max };
        match self.kind {
            Kind::Gaussian => {
                let y = self
                    .standardizer
                    .y
                    .clone()
                    .ok_or_else(|| invalid("gaussian checkpoint lacks a response standardizer"))?;
                let gen = ConditionalGenerator::new(
                    score_net,
                    embedder,
                    NoiseSchedule::from_params(params)?,
                    arch.time_dim,
                    self.standardizer.x.clone(),
                    y,
                    self.meta(),
                )?;
                Ok(Generator::Gaussian(gen))
            }
            Kind::Discrete => {
                let k = self.schedule.categories.ok_or_else(|| invalid("discrete checkpoint lacks categories"))?;
                if let Some(l) = &self.labels {
                    if l.len() != k {
                        return Err(mismatch(format!("{} label names for {k} categories", l.len())));
                    }
                }
                let gen = DiscreteGenerator::new(
                    score_net,
                    embedder,
                    DiscreteSchedule::new(params, k)?,
                    arch.time_dim,
                    self.standardizer.x.clone(),
                    self.meta(),
                )?;
                Ok(Generator::Discrete(gen))
            }
        }
    }

    pub fn to_gaussian(&self) -> Result<ConditionalGenerator> {
        match self.to_generator()? {
            Generator::Gaussian(g) => Ok(g),
            Generator::Discrete(_) => Err(invalid("checkpoint holds a discrete generator, expected gaussian")),
        }
    }

    pub fn to_discrete(&self) -> Result<DiscreteGenerator> {
        match self.to_generator()? {
            Generator::Discrete(g) => Ok(g),
            Generator::Gaussian(_) => Err(invalid("checkpoint holds a gaussian generator, expected discrete")),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        if !all_finite(&self.weights.score_net) || !all_finite(&self.weights.embedder) {
            return Err(invalid("refusing to save non-finite weights"));
        }
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Parses a checkpoint; the format version is checked before anything else.
    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        let version = value
            .get("format_version")
            .ok_or_else(|| invalid("checkpoint has no format_version"))?;
        match version.as_u64() {
            Some(v) if v == u64::from(FORMAT_VERSION) => {}
            Some(v) => return Err(Error::UnsupportedFormat(u32::try_from(v).unwrap_or(u32::MAX))),
            None => return Err(invalid(format!("format_version must be an integer, got {version}"))),
        }
        let ckpt: Self = serde_json::from_value(value)?;
        // rebuilding validates every shape
        ckpt.to_generator()?;
        Ok(ckpt)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_json()?.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use crate::training::TrainConfig;
    use ndarray::Array2;
    use rand::Rng;

    fn small_cfg() -> TrainConfig {
        TrainConfig { width: 8, depth: 2, embed_dim: 4, time_dim: 4, steps: 50, ..TrainConfig::default() }
    }

    fn gaussian() -> ConditionalGenerator {
        let xs = Standardizer { mean: vec![0.5, -1.0, 2.0], std: vec![1.5, 0.25, 3.0] };
        let ys = Standardizer { mean: vec![0.1, 0.2], std: vec![2.0, 0.7] };
        let mut g = ConditionalGenerator::init(xs, ys, &small_cfg(), &mut seeded(3)).unwrap();
        g.meta_mut().role = Role::Source;
        g.meta_mut().training_rows = 123;
        g.meta_mut().final_validation_loss = Some(0.1 + 0.2);
        g
    }

    #[test]
    fn gaussian_round_trip_is_bitwise() {
        let g = gaussian();
        let ckpt = GeneratorCheckpoint::from_gaussian(&g);
        let back = GeneratorCheckpoint::from_json(&ckpt.to_json().unwrap()).unwrap();
        assert_eq!(back, ckpt);
        let h = back.to_gaussian().unwrap();
        assert_eq!(h.meta(), g.meta());
        let mut rng = seeded(9);
        for _ in 0..20 {
            let y = Array2::from_shape_fn((1, 2), |_| rng.random_range(-3.0..3.0));
            let x = Array2::from_shape_fn((1, 3), |_| rng.random_range(-3.0..3.0));
            let t = [rng.random_range(1..=50)];
            let a = g.predict_noise(y.view(), x.view(), &t).unwrap();
            let b = h.predict_noise(y.view(), x.view(), &t).unwrap();
            assert_eq!(a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        }
    }

    #[test]
    fn discrete_round_trip_keeps_labels() {
        let xs = Standardizer::identity(2);
        let d = DiscreteGenerator::init(xs, 3, &small_cfg(), &mut seeded(1)).unwrap();
        let labels = vec!["a".to_string(), "b".to_string(), "c".to_string()];
        let ckpt = GeneratorCheckpoint::from_discrete(&d, Some(labels.clone())).unwrap();
        let back = GeneratorCheckpoint::from_json(&ckpt.to_json().unwrap()).unwrap();
        assert_eq!(back.labels().unwrap(), labels.as_slice());
        let e = back.to_discrete().unwrap();
        let x = Array2::from_elem((1, 2), 0.3);
        assert_eq!(
            d.predict_clean_probs(&[1], x.view(), &[7]).unwrap(),
            e.predict_clean_probs(&[1], x.view(), &[7]).unwrap()
        );
        assert!(GeneratorCheckpoint::from_discrete(&d, Some(vec!["a".into()])).is_err());
        assert!(back.to_gaussian().is_err());
    }

    #[test]
    fn unknown_version_rejected() {
        let text = GeneratorCheckpoint::from_gaussian(&gaussian()).to_json().unwrap();
        let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
        v["format_version"] = serde_json::json!(2);
        match GeneratorCheckpoint::from_json(&v.to_string()) {
            Err(Error::UnsupportedFormat(2)) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_field_and_bad_shapes_rejected() {
        let text = GeneratorCheckpoint::from_gaussian(&gaussian()).to_json().unwrap();
        let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
        v["extra"] = serde_json::json!(1);
        let err = GeneratorCheckpoint::from_json(&v.to_string()).unwrap_err().to_string();
        assert!(err.contains("extra"), "{err}");

        let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
        v["weights"]["embedder"]["biases"][0].as_array_mut().unwrap().pop();
        assert!(GeneratorCheckpoint::from_json(&v.to_string()).is_err());
    }

    #[test]
    fn save_load_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.json");
        let ckpt = GeneratorCheckpoint::from_gaussian(&gaussian());
        ckpt.save(&path).unwrap();
        assert_eq!(GeneratorCheckpoint::load(&path).unwrap(), ckpt);
        assert_eq!(GeneratorCheckpoint::load(&path).unwrap().role(), Role::Source);
    }
}
