use rand::Rng;
use rand::distr::weighted::WeightedIndex;
use rand_distr::{Distribution, StandardNormal};

use super::denoiser::Denoiser;
use super::schedule::DiffusionSchedule;
use crate::codec::{decode, Dataset, EmbeddingSpace, EncodedBatch, ScalerParams, TableSchema};
use crate::error::{Error, Result};

/// A noised row together with everything needed to recompute it.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisePair {
    pub z_t: Vec<f64>,
    pub eps: Vec<f64>,
    pub t: usize,
    pub label: Option<usize>,
}

pub fn standard_normal_vec<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

/// `z_t = sqrt(abar_t) z0 + sqrt(1 - abar_t) eps` with fresh `eps ~ N(0, I)`.
pub fn forward_noise<R: Rng + ?Sized>(
    z0: &[f64],
    t: usize,
    label: Option<usize>,
    schedule: &DiffusionSchedule,
    rng: &mut R,
) -> Result<NoisePair> {
    schedule.check_t(t)?;
    let eps = standard_normal_vec(z0.len(), rng);
    let z_t = noised(z0, &eps, t, schedule);
    Ok(NoisePair { z_t, eps, t, label })
}

/// Closed-form forward marginal for a given noise draw.
pub fn noised(z0: &[f64], eps: &[f64], t: usize, schedule: &DiffusionSchedule) -> Vec<f64> {
    let ab = schedule.alpha_bar(t);
    let (a, b) = (ab.sqrt(), (1.0 - ab).sqrt());
    z0.iter().zip(eps).map(|(z, e)| a * z + b * e).collect()
}

/// Posterior mean step given a noise prediction; no randomness.
pub fn posterior_mean(z_t: &[f64], eps_hat: &[f64], t: usize, schedule: &DiffusionSchedule) -> Vec<f64> {
    let beta = schedule.beta(t);
    let coef = beta / (1.0 - schedule.alpha_bar(t)).sqrt();
    let inv_sqrt_alpha = 1.0 / schedule.alpha(t).sqrt();
    z_t.iter().zip(eps_hat).map(|(z, e)| inv_sqrt_alpha * (z - coef * e)).collect()
}

/// One ancestral step `z_t -> z_{t-1}` with posterior std `sqrt(beta_t)`.
///
/// No noise is added at `t = 1` regardless of `add_noise`.
pub fn reverse_step<R: Rng + ?Sized>(
    net: &Denoiser,
    z_t: &[f64],
    t: usize,
    label: Option<usize>,
    add_noise: bool,
    schedule: &DiffusionSchedule,
    rng: &mut R,
) -> Result<Vec<f64>> {
    schedule.check_t(t)?;
    let eps_hat = net.denoise(z_t, t, label)?;
    Ok(reverse_step_with(z_t, &eps_hat, t, add_noise, schedule, rng))
}

/// [`reverse_step`] with an externally supplied noise prediction.
pub fn reverse_step_with<R: Rng + ?Sized>(
    z_t: &[f64],
    eps_hat: &[f64],
    t: usize,
    add_noise: bool,
    schedule: &DiffusionSchedule,
    rng: &mut R,
) -> Vec<f64> {
    let mut z = posterior_mean(z_t, eps_hat, t, schedule);
    if t > 1 && add_noise {
        let sd = schedule.beta(t).sqrt();
        for v in z.iter_mut() {
            let w: f64 = StandardNormal.sample(rng);
            *v += sd * w;
        }
    }
    z
}

/// How conditioning labels are chosen for generated rows.
#[derive(Debug, Clone, PartialEq)]
pub enum LabelSource {
    Uniform,
    Fixed(usize),
    Proportions(Vec<f64>),
}

impl LabelSource {
    pub fn draw<R: Rng + ?Sized>(&self, n: usize, n_classes: usize, rng: &mut R) -> Result<Vec<usize>> {
        if n_classes == 0 {
            return Err(Error::InvalidArgument("model has no label classes".into()));
        }
        match self {
            LabelSource::Uniform => Ok((0..n).map(|_| rng.random_range(0..n_classes)).collect()),
            LabelSource::Fixed(c) if *c < n_classes => Ok(vec![*c; n]),
            LabelSource::Fixed(c) => Err(Error::InvalidArgument(format!("class {c} outside 0..{n_classes}"))),
            LabelSource::Proportions(p) => {
                if p.len() != n_classes {
                    return Err(Error::InvalidArgument(format!(
                        "{} proportions given for {n_classes} classes",
                        p.len()
                    )));
                }
                let total: f64 = p.iter().sum();
                if (total - 1.0).abs() > 1e-6 || p.iter().any(|v| *v < 0.0) {
                    return Err(Error::InvalidArgument(format!("proportions sum to {total}, expected 1")));
                }
                let dist = WeightedIndex::new(p).map_err(|e| Error::InvalidArgument(e.to_string()))?;
                Ok((0..n).map(|_| dist.sample(rng)).collect())
            }
        }
    }
}

/// Run the reverse chain from pure noise and return `z_0` rows.
pub fn sample_embeddings<R: Rng + ?Sized>(
    net: &Denoiser,
    n: usize,
    labels: Option<&[usize]>,
    schedule: &DiffusionSchedule,
    rng: &mut R,
) -> Result<EncodedBatch> {
    let d = net.config.d;
    let mut data = Vec::with_capacity(n * d);
    let mut acts = net.new_activations();
    for r in 0..n {
        let label = labels.map(|l| l[r]);
        let mut z = standard_normal_vec(d, rng);
        for t in (1..=schedule.steps()).rev() {
            net.forward(&z, t, label, &mut acts)?;
            z = reverse_step_with(&z, &acts.out, t, true, schedule, rng);
        }
        data.extend_from_slice(&z);
    }
    Ok(EncodedBatch { width: d, data, labels: labels.map(<[usize]>::to_vec) })
}

/// Generate `n` decoded records.
#[allow(clippy::too_many_arguments)]
pub fn sample<R: Rng + ?Sized>(
    net: &Denoiser,
    embeddings: &EmbeddingSpace,
    schema: &TableSchema,
    scaler: &ScalerParams,
    schedule: &DiffusionSchedule,
    n: usize,
    label_source: &LabelSource,
    rng: &mut R,
) -> Result<Dataset> {
    let labels = if schema.label_column.is_some() {
        Some(label_source.draw(n, schema.n_classes(), rng)?)
    } else {
        None
    };
    let z = sample_embeddings(net, n, labels.as_deref(), schedule, rng)?;
    decode(&z, schema, scaler, embeddings)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn low_noise_limit() {
        let s = DiffusionSchedule::linear(10, 1e-6, 0.02).unwrap();
        let z0 = [1.0, -2.0, 0.5];
        let pair = forward_noise(&z0, 1, None, &s, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let bound = 6.0 * 1e-6f64.sqrt();
        assert!(pair.z_t.iter().zip(&z0).all(|(a, b)| (a - b).abs() < bound));
    }

    #[test]
    fn pure_noise_limit() {
        let s = DiffusionSchedule::linear(2000, 0.05, 0.5).unwrap();
        assert!(s.alpha_bar(2000) < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 10_000;
        let mean: f64 =
            (0..n).map(|_| forward_noise(&[3.0], 2000, None, &s, &mut rng).unwrap().z_t[0]).sum::<f64>() / n as f64;
        assert!(mean.abs() < 0.05, "mean {mean}");
    }

    #[test]
    fn forward_is_reproducible() {
        let s = DiffusionSchedule::linear(50, 1e-4, 0.02).unwrap();
        let a = forward_noise(&[0.2, 0.4], 30, None, &s, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let b = forward_noise(&[0.2, 0.4], 30, None, &s, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert_eq!(a, b);
        assert!(forward_noise(&[0.2], 51, None, &s, &mut ChaCha8Rng::seed_from_u64(5)).is_err());
        assert!(forward_noise(&[0.2], 0, None, &s, &mut ChaCha8Rng::seed_from_u64(5)).is_err());
    }

    #[test]
    fn single_step_inversion() {
        let s = DiffusionSchedule::linear(1, 1e-4, 0.02).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let z0 = [0.3, -1.1, 2.4];
        let pair = forward_noise(&z0, 1, None, &s, &mut rng).unwrap();
        let back = reverse_step_with(&pair.z_t, &pair.eps, 1, true, &s, &mut rng);
        assert!(back.iter().zip(&z0).all(|(a, b)| (a - b).abs() < 1e-9));
    }

    #[test]
    fn terminal_step_adds_no_noise() {
        let s = DiffusionSchedule::linear(5, 1e-4, 0.02).unwrap();
        let mut r1 = ChaCha8Rng::seed_from_u64(1);
        let mut r2 = ChaCha8Rng::seed_from_u64(2);
        let a = reverse_step_with(&[1.0, 2.0], &[0.1, 0.2], 1, true, &s, &mut r1);
        let b = reverse_step_with(&[1.0, 2.0], &[0.1, 0.2], 1, false, &s, &mut r2);
        assert_eq!(a, b);
    }

    #[test]
    fn label_sources() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(LabelSource::Fixed(1).draw(3, 2, &mut rng).unwrap(), vec![1, 1, 1]);
        assert!(LabelSource::Fixed(2).draw(3, 2, &mut rng).is_err());
        assert!(LabelSource::Proportions(vec![0.5, 0.4]).draw(3, 2, &mut rng).is_err());
        let drawn = LabelSource::Proportions(vec![0.0, 1.0]).draw(50, 2, &mut rng).unwrap();
        assert!(drawn.iter().all(|&c| c == 1));
    }
}
