use serde::{Deserialize, Serialize};

use crate::codec::{EmbeddingSpace, FeatureMatrix};
use crate::diffusion::{noised, Activations, Denoiser, DiffusionSchedule, LossKind, NoisePair};
use crate::error::{Error, Result};

/// Everything that is trained: the denoiser and the record embedding.
///
/// Flat parameter order is denoiser parameters followed by embedding
/// parameters; gradients, noise and optimizer state use the same order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub net: Denoiser,
    pub embeddings: EmbeddingSpace,
}

/// One training row: its features and the noise draw applied to it.
///
/// `pair.z_t` must have been produced from the current embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingExample {
    pub num: Vec<f64>,
    pub cat: Vec<usize>,
    pub pair: NoisePair,
    /// Multiplier on the example's loss (importance weight); 1 by default.
    pub weight: f64,
}

impl TrainingExample {
    pub fn from_row(features: &FeatureMatrix, row: usize, pair: NoisePair) -> Self {
        Self { num: features.num_row(row).to_vec(), cat: features.cat_row(row).to_vec(), pair, weight: 1.0 }
    }
}

/// Reusable buffers for per-example backprop.
#[derive(Debug, Clone)]
pub struct GradWorkspace {
    acts: Activations,
    g_out: Vec<f64>,
    g_input: Vec<f64>,
    hidden: Vec<f64>,
}

impl Model {
    pub fn n_params(&self) -> usize {
        self.net.n_params() + self.embeddings.n_params()
    }

    pub fn workspace(&self) -> GradWorkspace {
        let d = self.net.config.d;
        GradWorkspace {
            acts: self.net.new_activations(),
            g_out: vec![0.0; d],
            g_input: vec![0.0; d],
            hidden: Vec::new(),
        }
    }

    pub fn params(&self) -> impl Iterator<Item = &f64> {
        self.net.params.iter().chain(self.embeddings.params.iter())
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.net.params.iter_mut().chain(self.embeddings.params.iter_mut())
    }

    pub fn flat_params(&self) -> Vec<f64> {
        self.params().copied().collect()
    }

    pub fn set_flat_params(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.n_params() {
            return Err(Error::Shape { expected: self.n_params(), actual: values.len() });
        }
        for (p, v) in self.params_mut().zip(values) {
            *p = *v;
        }
        Ok(())
    }

    pub fn encode_row(&self, num: &[f64], cat: &[usize]) -> Vec<f64> {
        let mut z0 = vec![0.0; self.embeddings.width()];
        self.embeddings.encode_row(num, cat, &mut z0);
        z0
    }

    /// Loss of one example recomputed from scratch (encode, noise, predict).
    #[allow(clippy::too_many_arguments)]
    pub fn example_loss(
        &self,
        num: &[f64],
        cat: &[usize],
        eps: &[f64],
        t: usize,
        label: Option<usize>,
        loss: LossKind,
        schedule: &DiffusionSchedule,
    ) -> Result<f64> {
        let z0 = self.encode_row(num, cat);
        let z_t = noised(&z0, eps, t, schedule);
        let eps_hat = self.net.denoise(&z_t, t, label)?;
        Ok(loss.value(eps, &eps_hat))
    }

    /// Gradient of one example's (weighted) loss w.r.t. every parameter,
    /// written into `grad`. Returns the unweighted loss.
    pub fn example_grad(
        &self,
        ex: &TrainingExample,
        loss: LossKind,
        schedule: &DiffusionSchedule,
        ws: &mut GradWorkspace,
        grad: &mut [f64],
    ) -> Result<f64> {
        let n_net = self.net.n_params();
        if grad.len() != self.n_params() {
            return Err(Error::Shape { expected: self.n_params(), actual: grad.len() });
        }
        let pair = &ex.pair;
        self.net.forward(&pair.z_t, pair.t, pair.label, &mut ws.acts)?;
        let value = loss.value_and_grad(&pair.eps, &ws.acts.out, &mut ws.g_out);
        if ex.weight != 1.0 {
            ws.g_out.iter_mut().for_each(|g| *g *= ex.weight);
        }
        grad.fill(0.0);
        let (g_net, g_emb) = grad.split_at_mut(n_net);
        self.net.backward(&ws.acts, &ws.g_out, g_net, &mut ws.g_input, &mut ws.hidden);

        // z_t depends on z0 through sqrt(abar_t)
        let scale = schedule.alpha_bar(pair.t).sqrt();
        let emb = &self.embeddings;
        let de = emb.d_e;
        for (j, &x) in ex.num.iter().enumerate() {
            let o = emb.numeric_offset(j);
            for k in 0..de {
                g_emb[o + k] += scale * x * ws.g_input[j * de + k];
            }
        }
        let base = emb.d_num * de;
        for (j, &c) in ex.cat.iter().enumerate() {
            let o = emb.category_offset(j, c);
            for k in 0..de {
                g_emb[o + k] += scale * ws.g_input[base + j * de + k];
            }
        }
        Ok(value)
    }
}
