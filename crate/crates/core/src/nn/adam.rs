use ndarray::Zip;

use super::mlp::{Mlp, MlpGrads};
use crate::error::{mismatch, Result};

/// Adam optimizer state for one [`Mlp`], with bias correction and optional
/// decoupled weight decay on the weight matrices (biases are not decayed).
#[derive(Debug, Clone)]
pub struct AdamState {
    pub step_count: u64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
    first_moment: MlpGrads,
    second_moment: MlpGrads,
}

impl AdamState {
    pub fn new(net: &Mlp, learning_rate: f64) -> Self {
        Self {
            step_count: 0,
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay: 0.0,
            first_moment: MlpGrads::zeros_like(net),
            second_moment: MlpGrads::zeros_like(net),
        }
    }

    pub fn with_weight_decay(mut self, weight_decay: f64) -> Self {
        self.weight_decay = weight_decay;
        self
    }

    pub fn first_moment(&self) -> &MlpGrads {
        &self.first_moment
    }

    pub fn second_moment(&self) -> &MlpGrads {
        &self.second_moment
    }

    /// Applies one Adam update to `net` in place.
    pub fn step(&mut self, net: &mut Mlp, grads: &MlpGrads) -> Result<()> {
        let shapes_ok = grads.weights.len() == net.num_layers()
            && grads.biases.len() == net.num_layers()
            && grads.weights.iter().zip(net.weights()).all(|(g, w)| g.dim() == w.dim())
            && grads.biases.iter().zip(net.biases()).all(|(g, b)| g.dim() == b.dim())
            && self.first_moment.weights.iter().zip(net.weights()).all(|(m, w)| m.dim() == w.dim());
        if !shapes_ok {
            return Err(mismatch("gradient or optimizer shapes differ from the network"));
        }
        self.step_count += 1;
        let t = self.step_count as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.learning_rate, self.epsilon);

        let shrink = 1.0 - lr * self.weight_decay;
        let update = |p: &mut f64, m: &mut f64, v: &mut f64, g: f64| {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        };

        for i in 0..net.num_layers() {
            Zip::from(&mut net.weights_mut()[i])
                .and(&mut self.first_moment.weights[i])
                .and(&mut self.second_moment.weights[i])
                .and(&grads.weights[i])
                .for_each(|p, m, v, &g| {
                    *p *= shrink;
                    update(p, m, v, g)
                });
            Zip::from(&mut net.biases_mut()[i])
                .and(&mut self.first_moment.biases[i])
                .and(&mut self.second_moment.biases[i])
                .and(&grads.biases[i])
                .for_each(|p, m, v, &g| update(p, m, v, g));
        }
        Ok(())
    }
}
