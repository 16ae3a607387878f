//! DP-SGD: per-sample gradients, clipping, noisy aggregation, Adam and
//! Rényi-DP accounting.

mod accountant;
mod clip;
mod diagnostics;
mod grads;
mod optim;

use serde::{Deserialize, Serialize};

pub use accountant::{
    calibrate_sigma, default_orders, epsilon_for, rdp_subsampled_gaussian, rdp_to_epsilon, Calibration,
    PrivacyLedger, SIGMA_SEARCH_MAX, SIGMA_SEARCH_MIN,
};
pub use clip::{clip, clip_in_place, l2_norm};
pub use diagnostics::{grad_norm_diagnostics, GradNormStats};
pub use grads::per_sample_grads;
pub use optim::{dp_step, dp_step_from_sum, privatize_sum, Adam};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DpConfig {
    pub clip_norm: f64,
    pub noise_multiplier: f64,
    /// Poisson sampling rate `B / N`.
    pub sampling_rate: f64,
    /// Expected batch size `B`, the denominator of the released gradient.
    pub batch_size: usize,
    pub delta: f64,
    pub max_steps: Option<usize>,
}

impl DpConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.clip_norm > 0.0) {
            return Err(Error::Config("clip norm must be positive".into()));
        }
        if !(self.noise_multiplier >= 0.0) {
            return Err(Error::Config("noise multiplier must be non-negative".into()));
        }
        if !(self.sampling_rate > 0.0 && self.sampling_rate <= 1.0) {
            return Err(Error::Config("sampling rate must be in (0, 1]".into()));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::Config("delta must be in (0, 1)".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        Ok(())
    }
}
