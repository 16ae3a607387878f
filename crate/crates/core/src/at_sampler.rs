//! Adaptive timestep sampling: an annealed power-law distribution over
//! diffusion timesteps, `P_k(t) ∝ t^alpha_k`, with `alpha_k` moving linearly
//! from `alpha_start` to `alpha_end` across training epochs.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::codec::FeatureMatrix;
use crate::diffusion::{forward_noise, DiffusionSchedule, LossKind};
use crate::dp::l2_norm;
use crate::error::{Error, Result};
use crate::model::{Model, TrainingExample};

pub const DEFAULT_ALPHA_START: f64 = 3.0;
pub const DEFAULT_ALPHA_END: f64 = -1.0;

/// `alpha_start + (k / K) (alpha_end - alpha_start)`.
pub fn alpha_at(k: usize, total_epochs: usize, alpha_start: f64, alpha_end: f64) -> Result<f64> {
    if total_epochs == 0 {
        return Err(Error::InvalidArgument("total epochs must be positive".into()));
    }
    if k > total_epochs {
        return Err(Error::InvalidArgument(format!("epoch {k} beyond {total_epochs}")));
    }
    if k == 0 {
        return Ok(alpha_start);
    }
    if k == total_epochs {
        return Ok(alpha_end);
    }
    Ok(alpha_start + (k as f64 / total_epochs as f64) * (alpha_end - alpha_start))
}

/// `P(t) = t^alpha / sum_s s^alpha` over `t = 1..=T`; index `t - 1` holds `P(t)`.
pub fn timestep_pmf(alpha: f64, steps: usize) -> Result<Vec<f64>> {
    if !alpha.is_finite() {
        return Err(Error::InvalidArgument(format!("non-finite exponent {alpha}")));
    }
    if steps == 0 {
        return Err(Error::InvalidArgument("need at least one timestep".into()));
    }
    if alpha == 0.0 {
        return Ok(vec![1.0 / steps as f64; steps]);
    }
    // normalize in log space to stay finite for large |alpha|
    let logs: Vec<f64> = (1..=steps).map(|t| alpha * (t as f64).ln()).collect();
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = weights.iter().sum();
    Ok(weights.into_iter().map(|w| w / total).collect())
}

/// How timesteps are drawn during training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplerKind {
    #[default]
    Uniform,
    At,
}

impl std::str::FromStr for SamplerKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "uniform" => Ok(SamplerKind::Uniform),
            "at" => Ok(SamplerKind::At),
            other => Err(format!("unknown sampler `{other}` (expected uniform or at)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ATSamplerState {
    pub kind: SamplerKind,
    pub alpha_start: f64,
    pub alpha_end: f64,
    pub total_epochs: usize,
    pub epoch: usize,
    pub steps: usize,
    pmf: Vec<f64>,
    cdf: Vec<f64>,
}

impl ATSamplerState {
    pub fn new(kind: SamplerKind, alpha_start: f64, alpha_end: f64, total_epochs: usize, steps: usize) -> Result<Self> {
        let mut s = Self {
            kind,
            alpha_start,
            alpha_end,
            total_epochs,
            epoch: 0,
            steps,
            pmf: Vec::new(),
            cdf: Vec::new(),
        };
        s.set_epoch(0)?;
        Ok(s)
    }

    pub fn uniform(steps: usize) -> Result<Self> {
        Self::new(SamplerKind::Uniform, 0.0, 0.0, 1, steps)
    }

    /// Current exponent; 0 for the uniform sampler.
    pub fn alpha(&self) -> Result<f64> {
        match self.kind {
            SamplerKind::Uniform => Ok(0.0),
            SamplerKind::At => alpha_at(self.epoch, self.total_epochs, self.alpha_start, self.alpha_end),
        }
    }

    /// Freeze the pmf for completed-epoch count `k`.
    pub fn set_epoch(&mut self, k: usize) -> Result<()> {
        self.epoch = k;
        self.pmf = timestep_pmf(self.alpha()?, self.steps)?;
        let mut acc = 0.0;
        self.cdf = self
            .pmf
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        Ok(())
    }

    pub fn pmf(&self) -> &[f64] {
        &self.pmf
    }

    pub fn prob(&self, t: usize) -> f64 {
        self.pmf[t - 1]
    }

    /// Importance weight `u(t) / P(t) = 1 / (T P(t))`.
    pub fn importance_weight(&self, t: usize) -> f64 {
        1.0 / (self.steps as f64 * self.prob(t))
    }

    /// One timestep via inverse CDF.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random::<f64>() * self.cdf[self.steps - 1];
        let idx = self.cdf.partition_point(|&c| c <= u);
        idx.min(self.steps - 1) + 1
    }

    pub fn sample_timesteps<R: Rng + ?Sized>(&self, batch_size: usize, rng: &mut R) -> Vec<usize> {
        (0..batch_size).map(|_| self.draw(rng)).collect()
    }
}

/// Estimate the post-clipping signal `s(t) = E[min(||g_t||, C)]` at each
/// timestep of `t_grid`, averaged over the rows of `data`.
///
/// Diagnostic only: reads parameters, never updates them.
#[allow(clippy::too_many_arguments)]
pub fn measure_dp_signal<R: Rng + ?Sized>(
    model: &Model,
    data: &FeatureMatrix,
    schedule: &DiffusionSchedule,
    loss: LossKind,
    clip_norm: f64,
    t_grid: &[usize],
    rng: &mut R,
) -> Result<Vec<f64>> {
    if data.n_rows == 0 {
        return Err(Error::InvalidArgument("empty sample".into()));
    }
    let mut ws = model.workspace();
    let mut grad = vec![0.0; model.n_params()];
    t_grid
        .iter()
        .map(|&t| {
            schedule.check_t(t)?;
            let mut total = 0.0;
            for r in 0..data.n_rows {
                let z0 = model.encode_row(data.num_row(r), data.cat_row(r));
                let pair = forward_noise(&z0, t, data.label(r), schedule, rng)?;
                let ex = TrainingExample::from_row(data, r, pair);
                model.example_grad(&ex, loss, schedule, &mut ws, &mut grad)?;
                total += l2_norm(&grad).min(clip_norm);
            }
            Ok(total / data.n_rows as f64)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn alpha_endpoints_and_midpoint() {
        assert_eq!(alpha_at(0, 100, 3.0, -1.0).unwrap(), 3.0);
        assert_eq!(alpha_at(100, 100, 3.0, -1.0).unwrap(), -1.0);
        assert_eq!(alpha_at(50, 100, 3.0, -1.0).unwrap(), 1.0);
        assert!(alpha_at(0, 0, 3.0, -1.0).is_err());
    }

    #[test]
    fn pmf_cases() {
        assert!(timestep_pmf(0.0, 500).unwrap().iter().all(|&p| p == 1.0 / 500.0));
        let p = timestep_pmf(1.0, 4).unwrap();
        for (a, b) in p.iter().zip([0.1, 0.2, 0.3, 0.4]) {
            assert!((a - b).abs() < 1e-15);
        }
        // (1, 1/2, 1/3) / (11/6)
        let p = timestep_pmf(-1.0, 3).unwrap();
        for (a, b) in p.iter().zip([6.0 / 11.0, 3.0 / 11.0, 2.0 / 11.0]) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!(timestep_pmf(f64::NAN, 3).is_err());
    }

    #[test]
    fn late_mass_for_positive_alpha() {
        let mut s = ATSamplerState::new(SamplerKind::At, 3.0, -1.0, 10, 500).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let draws = s.sample_timesteps(10_000, &mut rng);
        let mean = draws.iter().sum::<usize>() as f64 / draws.len() as f64;
        assert!(mean > 250.0);
        assert!(s.sample_timesteps(0, &mut rng).is_empty());
        s.set_epoch(10).unwrap();
        assert!(s.prob(1) > s.prob(2));
    }

    #[test]
    fn draws_stay_in_range() {
        let s = ATSamplerState::new(SamplerKind::At, 5.0, -5.0, 2, 7).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert!(s.sample_timesteps(5000, &mut rng).iter().all(|&t| (1..=7).contains(&t)));
    }
}
