use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::at_sampler::{SamplerKind, DEFAULT_ALPHA_END, DEFAULT_ALPHA_START};
use crate::codec::DeclaredKinds;
use crate::diffusion::LossKind;
use crate::error::{Error, Result};

/// Full description of a training run, read from a TOML file.
///
/// Every key has a default; see `docs/config.md` for the reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    pub data: DataConfig,
    pub model: ModelConfig,
    pub training: TrainingConfig,
    pub privacy: PrivacyConfig,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub train: PathBuf,
    pub test: Option<PathBuf>,
    pub numeric: Vec<String>,
    pub categorical: Vec<String>,
    pub label: Option<String>,
    /// Keep at most this many training rows (seeded subsample); 0 keeps all.
    pub max_rows: usize,
}

impl DataConfig {
    pub fn declared_kinds(&self) -> DeclaredKinds {
        DeclaredKinds { numeric: self.numeric.clone(), categorical: self.categorical.clone(), label: self.label.clone() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub hidden: usize,
    pub d_e: usize,
    pub d_time: usize,
    pub steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self { hidden: 512, d_e: 2, d_time: 64, steps: 500, beta_start: 1e-4, beta_end: 0.02 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub loss: LossKind,
    pub sampler: SamplerKind,
    pub alpha_start: f64,
    pub alpha_end: f64,
    /// Weight each example by `u(t) / P(t)` under the AT sampler.
    pub importance_correction: bool,
    pub train_embeddings: bool,
    /// Re-project the embedding to fixed scale after every update.
    pub normalize_embeddings: bool,
    /// Decay of the weight average used for sampling; 0 samples from the
    /// last iterate.
    pub ema_decay: f64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            epochs: 1000,
            batch_size: 128,
            learning_rate: 1e-3,
            loss: LossKind::Mse,
            sampler: SamplerKind::Uniform,
            alpha_start: DEFAULT_ALPHA_START,
            alpha_end: DEFAULT_ALPHA_END,
            importance_correction: false,
            train_embeddings: true,
            normalize_embeddings: true,
            ema_decay: 0.999,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PrivacyConfig {
    pub enabled: bool,
    /// Target epsilon; the noise multiplier is calibrated to meet it.
    /// Defaults to 1 when neither `epsilon` nor `sigma` is given.
    pub epsilon: Option<f64>,
    /// Explicit noise multiplier; excludes `epsilon`.
    pub sigma: Option<f64>,
    pub delta: f64,
    pub clip_norm: f64,
}

impl Default for PrivacyConfig {
    fn default() -> Self {
        Self { enabled: true, epsilon: None, sigma: None, delta: 1e-5, clip_norm: 1.0 }
    }
}

/// Where the noise multiplier comes from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseSource {
    Target(f64),
    Explicit(f64),
}

impl PrivacyConfig {
    pub fn noise_source(&self) -> Result<NoiseSource> {
        match (self.epsilon, self.sigma) {
            (Some(_), Some(_)) => Err(Error::Config("privacy.epsilon and privacy.sigma are mutually exclusive".into())),
            (Some(e), None) => Ok(NoiseSource::Target(e)),
            (None, Some(s)) => Ok(NoiseSource::Explicit(s)),
            (None, None) => Ok(NoiseSource::Target(1.0)),
        }
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            output_dir: PathBuf::from("out"),
            data: DataConfig::default(),
            model: ModelConfig::default(),
            training: TrainingConfig::default(),
            privacy: PrivacyConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        // relative data paths are resolved against the config file
        if let Some(dir) = path.parent() {
            let fix = |p: &mut PathBuf| {
                if p.is_relative() && !p.as_os_str().is_empty() {
                    *p = dir.join(&*p);
                }
            };
            fix(&mut cfg.data.train);
            if let Some(t) = cfg.data.test.as_mut() {
                fix(t);
            }
            fix(&mut cfg.output_dir);
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let t = &self.training;
        if t.epochs == 0 {
            return Err(Error::Config("training.epochs must be at least 1".into()));
        }
        if t.batch_size == 0 {
            return Err(Error::Config("training.batch_size must be at least 1".into()));
        }
        if !(t.ema_decay >= 0.0 && t.ema_decay < 1.0) {
            return Err(Error::Config("training.ema_decay must lie in [0, 1)".into()));
        }
        if !(t.learning_rate > 0.0) {
            return Err(Error::Config("training.learning_rate must be positive".into()));
        }
        if !t.alpha_start.is_finite() || !t.alpha_end.is_finite() {
            return Err(Error::Config("sampler exponents must be finite".into()));
        }
        let m = &self.model;
        if m.hidden == 0 || m.d_e == 0 || m.d_time == 0 || m.steps == 0 {
            return Err(Error::Config("model dimensions must be positive".into()));
        }
        if !(m.beta_start > 0.0 && m.beta_start <= m.beta_end && m.beta_end < 1.0) {
            return Err(Error::Config("need 0 < model.beta_start <= model.beta_end < 1".into()));
        }
        let p = &self.privacy;
        if p.enabled {
            match p.noise_source()? {
                NoiseSource::Target(e) if !(e > 0.0) => {
                    return Err(Error::Config("privacy.epsilon must be positive".into()))
                }
                NoiseSource::Explicit(s) if !(s >= 0.0) => {
                    return Err(Error::Config("privacy.sigma must be non-negative".into()))
                }
                _ => {}
            }
            if !(p.delta > 0.0 && p.delta < 1.0) {
                return Err(Error::Config("privacy.delta must be in (0, 1)".into()));
            }
            if !(p.clip_norm > 0.0) {
                return Err(Error::Config("privacy.clip_norm must be positive".into()));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_reference_settings() {
        let c = RunConfig::default();
        assert_eq!(c.training.batch_size, 128);
        assert_eq!(c.training.epochs, 1000);
        assert_eq!(c.model.steps, 500);
        assert_eq!((c.model.beta_start, c.model.beta_end), (1e-4, 0.02));
        assert_eq!(c.model.d_e, 2);
        assert_eq!(c.privacy.clip_norm, 1.0);
        assert_eq!(c.privacy.delta, 1e-5);
        assert_eq!((c.training.alpha_start, c.training.alpha_end), (3.0, -1.0));
    }

    #[test]
    fn parse_sections() {
        let c = RunConfig::from_toml(
            r#"
            seed = 7
            [data]
            train = "t.csv"
            numeric = ["a"]
            label = "y"
            [training]
            loss = "fa"
            sampler = "at"
            epochs = 5
            [privacy]
            epsilon = 10.0
            "#,
        )
        .unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.training.loss, LossKind::Fa);
        assert_eq!(c.training.sampler, SamplerKind::At);
        assert_eq!(c.privacy.noise_source().unwrap(), NoiseSource::Target(10.0));
        assert_eq!(RunConfig::from_toml(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(RunConfig::from_toml("[privacy]\nepsilon = 1.0\nsigma = 2.0\n").is_err());
        assert!(RunConfig::from_toml("[training]\nepochs = 0\n").is_err());
        assert!(RunConfig::from_toml("bogus = 1\n").is_err());
    }
}
