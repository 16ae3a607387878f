use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::accountant::PrivacyLedger;
use super::clip::l2_norm;
use super::DpConfig;
use crate::error::{Error, Result};
use crate::model::Model;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl Adam {
    pub fn new(n_params: usize, lr: f64) -> Self {
        Self { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, step: 0, m: vec![0.0; n_params], v: vec![0.0; n_params] }
    }

    pub fn update<'a>(&mut self, params: impl Iterator<Item = &'a mut f64>, grad: &[f64]) {
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for (((p, g), m), v) in params.zip(grad).zip(self.m.iter_mut()).zip(self.v.iter_mut()) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

/// Turn a sum of clipped gradients into the released gradient
/// `(sum + N(0, (sigma C)^2 I)) / B`, in place.
pub fn privatize_sum<R: Rng + ?Sized>(sum: &mut [f64], config: &DpConfig, rng: &mut R) {
    let sd = config.noise_multiplier * config.clip_norm;
    let inv_b = 1.0 / config.batch_size as f64;
    for g in sum.iter_mut() {
        let noise = if sd > 0.0 {
            let w: f64 = StandardNormal.sample(rng);
            sd * w
        } else {
            0.0
        };
        *g = (*g + noise) * inv_b;
    }
}

/// One DP-SGD update from already-clipped per-example gradients.
///
/// Refuses to step once the ledger has used its step allowance. Returns
/// the released (noised, averaged) gradient.
pub fn dp_step<R: Rng + ?Sized>(
    model: &mut Model,
    clipped: &[Vec<f64>],
    config: &DpConfig,
    ledger: &mut PrivacyLedger,
    adam: &mut Adam,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let mut sum = vec![0.0; model.n_params()];
    for g in clipped {
        if g.len() != sum.len() {
            return Err(Error::Shape { expected: sum.len(), actual: g.len() });
        }
        let norm = l2_norm(g);
        if norm > config.clip_norm + 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "gradient norm {norm} exceeds clip norm {}",
                config.clip_norm
            )));
        }
        for (s, v) in sum.iter_mut().zip(g) {
            *s += v;
        }
    }
    dp_step_from_sum(model, sum, config, ledger, adam, rng)
}

/// [`dp_step`] taking the running sum of clipped gradients directly.
pub fn dp_step_from_sum<R: Rng + ?Sized>(
    model: &mut Model,
    mut sum: Vec<f64>,
    config: &DpConfig,
    ledger: &mut PrivacyLedger,
    adam: &mut Adam,
    rng: &mut R,
) -> Result<Vec<f64>> {
    ledger.check_budget()?;
    privatize_sum(&mut sum, config, rng);
    adam.update(model.params_mut(), &sum);
    ledger.step()?;
    Ok(sum)
}
