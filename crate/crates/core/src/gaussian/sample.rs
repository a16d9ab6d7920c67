use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Zip};
use rand::Rng;
use rand_distr::StandardNormal;

use super::ConditionalGenerator;
use crate::error::{invalid, mismatch, Result};
use crate::predict::SyntheticSampleSet;
use crate::rng::{chain_rng, derive_seed, GdpRng};

impl ConditionalGenerator {
    /// Ancestral reverse sampling of `m` responses at raw predictor vector `x`.
    ///
    /// Chain `k` draws all of its noise from its own stream derived from
    /// `(seed, k)`. With `stride > 1` the reverse pass visits
    /// `stride, 2*stride, ..., T` and uses the compounded step
    /// `alpha = alpha_bar(t) / alpha_bar(t_prev)` in place of the one-step value.
    pub fn sample_seeded(
        &self,
        x: &[f64],
        m: usize,
        stride: usize,
        seed: u64,
    ) -> Result<SyntheticSampleSet> {
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
        let visited = self.schedule().visited_steps(stride)?;
        let xz = self.x_scale().transform_row(x);
        let mut y = self.reverse_chains(&xz, m, &visited, seed)?;
        self.y_scale().inverse_in_place(&mut y);
        SyntheticSampleSet::continuous(x.to_vec(), y)
    }

    /// Samples at every row of `xs`; condition `i` uses seed `derive_seed(seed, i)`.
    pub fn sample_many(
        &self,
        xs: ArrayView2<f64>,
        m: usize,
        stride: usize,
        seed: u64,
    ) -> Result<Vec<SyntheticSampleSet>> {
        xs.rows()
            .into_iter()
            .enumerate()
            .map(|(i, row)| self.sample_seeded(&row.to_vec(), m, stride, derive_seed(seed, i as u64)))
            .collect()
    }

    /// Reverse chains in standardized space.
    fn reverse_chains(&self, xz: &[f64], m: usize, visited: &[usize], seed: u64) -> Result<Array2<f64>> {
        let d_y = self.response_dim();
        let net = self.score_net();
        let h = self.embedder().forward(xz)?;

        // First-layer pre-activation splits into y_t, condition and time blocks;
        // the condition block is fixed for the whole trajectory.
        let mut cond: Array1<f64> = net.first_layer_partial(d_y, ArrayView1::from(&h));
        cond += &net.biases()[0];
        let w_y = net.weights()[0].slice(s![.., 0..d_y]);
        let time_start = d_y + h.len();

        let mut rngs: Vec<GdpRng> = (0..m).map(|k| chain_rng(seed, k as u64)).collect();
        let mut y = Array2::zeros((m, d_y));
        fill_normal(&mut y, &mut rngs, 1.0);

        let schedule = self.schedule();
        for (k, &t) in visited.iter().enumerate().rev() {
            let prev = if k == 0 { 0 } else { visited[k - 1] };
            let mut bias = net.first_layer_partial(time_start, self.time_table().row(t));
            bias += &cond;
            let mut pre = y.dot(&w_y.t());
            pre += &bias;
            let eps = net.forward_from_first_preactivation(pre)?;

            let alpha = schedule.alpha_span(prev, t);
            let beta = 1.0 - alpha;
            let coef = beta / schedule.sigma(t);
            let inv_sqrt_alpha = 1.0 / alpha.sqrt();
            Zip::from(&mut y).and(&eps).for_each(|v, &e| *v = (*v - coef * e) * inv_sqrt_alpha);
            if k > 0 {
                fill_normal(&mut y, &mut rngs, beta.sqrt());
            }
        }
        Ok(y)
    }
}

// Adds `scale * z` to each row, with row i's noise drawn from rngs[i].
fn fill_normal(y: &mut Array2<f64>, rngs: &mut [GdpRng], scale: f64) {
    for (mut row, rng) in y.rows_mut().into_iter().zip(rngs.iter_mut()) {
        for v in row.iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *v += scale * z;
        }
    }
}
