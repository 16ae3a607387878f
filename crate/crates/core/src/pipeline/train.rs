use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{NoiseSource, RunConfig};
use crate::at_sampler::{ATSamplerState, SamplerKind};
use crate::codec::{Dataset, EmbeddingSpace, FeatureMatrix, ScalerParams, TableSchema};
use crate::diffusion::{forward_noise, Denoiser, DenoiserConfig, DiffusionSchedule};
use crate::dp::{
    calibrate_sigma, clip_in_place, dp_step_from_sum, grad_norm_diagnostics, l2_norm, Adam, DpConfig,
    GradNormStats, PrivacyLedger,
};
use crate::error::{Error, Result};
use crate::model::{Model, TrainingExample};

/// Per-epoch training record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    /// 1-based epoch number.
    pub epoch: usize,
    pub steps: usize,
    pub examples: usize,
    pub mean_loss: f64,
    pub epsilon: f64,
    pub alpha: f64,
    pub grad_norms: Option<GradNormStats>,
}

impl EpochLog {
    pub const CSV_HEADER: &'static str = "epoch,steps,examples,mean_loss,epsilon,alpha,mean,var,relvar,skew,frac_clipped";

    pub fn csv_row(&self) -> String {
        let g = self.grad_norms.map_or_else(
            || ",,,,".to_string(),
            |s| format!("{},{},{},{},{}", s.mean, s.variance, s.relative_variance, s.skewness, s.fraction_clipped),
        );
        format!("{},{},{},{},{},{},{}", self.epoch, self.steps, self.examples, self.mean_loss, self.epsilon, self.alpha, g)
    }
}

/// Running checks of the clipping contract, filled when auditing is on.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ClipAudit {
    pub checked: usize,
    pub clipped: usize,
    pub max_norm_after: f64,
    /// Gradients within the bound that changed during clipping.
    pub altered_within_bound: usize,
}

/// Why a run stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Completed,
    StopAfter,
    BudgetExhausted,
}

/// Resolved DP parameters of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DpSetup {
    pub config: DpConfig,
    pub target_epsilon: Option<f64>,
    pub steps_per_epoch: usize,
}

/// Everything that changes while training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainState {
    pub model: Model,
    pub adam: Adam,
    pub ledger: Option<PrivacyLedger>,
    pub sampler: ATSamplerState,
    pub epochs_done: usize,
    pub rng: ChaCha8Rng,
    /// Running average of the flat parameters, when enabled.
    pub ema: Option<Vec<f64>>,
}

impl TrainState {
    /// The model used for generation: the averaged weights if present.
    pub fn sampling_model(&self) -> Model {
        let mut model = self.model.clone();
        if let Some(ema) = &self.ema {
            model.set_flat_params(ema).expect("ema matches the parameter count");
        }
        model
    }
}

/// Training driver: owns the fitted codec, the data and the training state.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub config: RunConfig,
    pub schema: TableSchema,
    pub scaler: ScalerParams,
    pub schedule: DiffusionSchedule,
    pub dp: Option<DpSetup>,
    pub state: TrainState,
    pub audit: Option<ClipAudit>,
    features: FeatureMatrix,
}

pub fn steps_per_epoch(n_rows: usize, batch_size: usize) -> usize {
    n_rows.div_ceil(batch_size).max(1)
}

pub fn sampling_rate(n_rows: usize, batch_size: usize) -> f64 {
    (batch_size as f64 / n_rows as f64).min(1.0)
}

/// Noise multiplier, sampling rate and step budget for a dataset size.
pub fn resolve_dp(config: &RunConfig, n_rows: usize) -> Result<Option<DpSetup>> {
    if !config.privacy.enabled {
        return Ok(None);
    }
    let p = &config.privacy;
    let b = config.training.batch_size.min(n_rows);
    let q = sampling_rate(n_rows, config.training.batch_size);
    let spe = steps_per_epoch(n_rows, config.training.batch_size);
    let max_steps = spe * config.training.epochs;
    let (sigma, target) = match p.noise_source()? {
        NoiseSource::Explicit(s) => (s, None),
        NoiseSource::Target(e) => (calibrate_sigma(e, p.delta, q, max_steps)?.sigma, Some(e)),
    };
    let dp = DpConfig {
        clip_norm: p.clip_norm,
        noise_multiplier: sigma,
        sampling_rate: q,
        batch_size: b,
        delta: p.delta,
        max_steps: Some(max_steps),
    };
    dp.validate()?;
    Ok(Some(DpSetup { config: dp, target_epsilon: target, steps_per_epoch: spe }))
}

impl Trainer {
    /// Fit the codec on `data` and initialize a fresh model.
    pub fn new(config: RunConfig, schema: TableSchema, data: &Dataset) -> Result<Self> {
        config.validate()?;
        if data.n_rows() == 0 {
            return Err(Error::Schema("training table is empty".into()));
        }
        let scaler = ScalerParams::fit(data, &schema)?;
        let features = FeatureMatrix::from_dataset(data, &schema, &scaler)?;
        let m = &config.model;
        let schedule = DiffusionSchedule::linear(m.steps, m.beta_start, m.beta_end)?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut embeddings = EmbeddingSpace::init(&schema, m.d_e, &mut rng)?;
        if config.training.normalize_embeddings {
            embeddings.normalize();
        }
        let net_cfg =
            DenoiserConfig { d: embeddings.width(), hidden: m.hidden, d_time: m.d_time, n_classes: schema.n_classes() };
        let net = Denoiser::new(net_cfg, &mut rng)?;
        let model = Model { net, embeddings };
        let adam = Adam::new(model.n_params(), config.training.learning_rate);
        let dp = resolve_dp(&config, data.n_rows())?;
        let ledger = match &dp {
            Some(s) => Some(PrivacyLedger::new(s.config.noise_multiplier, s.config.sampling_rate, s.config.max_steps)?),
            None => None,
        };
        let t = &config.training;
        let sampler = ATSamplerState::new(t.sampler, t.alpha_start, t.alpha_end, t.epochs, m.steps)?;
        let ema = (config.training.ema_decay > 0.0).then(|| model.flat_params());
        let state = TrainState { model, adam, ledger, sampler, epochs_done: 0, rng, ema };
        Ok(Self { config, schema, scaler, schedule, dp, state, audit: None, features })
    }

    /// Rebuild a trainer from saved parts and the training data.
    pub fn resume(
        config: RunConfig,
        schema: TableSchema,
        scaler: ScalerParams,
        dp: Option<DpSetup>,
        state: TrainState,
        data: &Dataset,
    ) -> Result<Self> {
        let features = FeatureMatrix::from_dataset(data, &schema, &scaler)?;
        let m = &config.model;
        let schedule = DiffusionSchedule::linear(m.steps, m.beta_start, m.beta_end)?;
        Ok(Self { config, schema, scaler, schedule, dp, state, audit: None, features })
    }

    pub fn features(&self) -> &FeatureMatrix {
        &self.features
    }

    pub fn enable_clip_audit(&mut self) {
        self.audit = Some(ClipAudit::default());
    }

    pub fn epsilon(&self) -> f64 {
        match (&self.state.ledger, &self.dp) {
            (Some(l), Some(dp)) => l.epsilon(dp.config.delta),
            _ => 0.0,
        }
    }

    pub fn is_finished(&self) -> bool {
        self.state.epochs_done >= self.config.training.epochs
    }

    /// Train until the configured epoch count, the optional `stop_after`
    /// epoch count (cumulative) or the privacy budget is reached.
    pub fn run(&mut self, stop_after: Option<usize>, mut on_epoch: impl FnMut(&EpochLog)) -> Result<StopReason> {
        let total = self.config.training.epochs;
        let limit = stop_after.map_or(total, |s| s.min(total));
        while self.state.epochs_done < limit {
            let log = self.run_epoch()?;
            on_epoch(&log);
            if self.state.ledger.as_ref().is_some_and(PrivacyLedger::is_exhausted) && !self.is_finished() {
                return Ok(StopReason::BudgetExhausted);
            }
        }
        Ok(if self.is_finished() { StopReason::Completed } else { StopReason::StopAfter })
    }

    /// One pass over the data. The timestep pmf is frozen for the epoch.
    pub fn run_epoch(&mut self) -> Result<EpochLog> {
        let k = self.state.epochs_done;
        self.state.sampler.set_epoch(k)?;
        let alpha = self.state.sampler.alpha()?;
        let n = self.features.n_rows;
        let b = self.config.training.batch_size;

        let mut norms = Vec::new();
        let mut loss_sum = 0.0;
        let mut examples = 0;
        let mut steps = 0;

        match self.dp.clone() {
            Some(setup) => {
                for _ in 0..setup.steps_per_epoch {
                    if self.state.ledger.as_ref().is_some_and(PrivacyLedger::is_exhausted) {
                        break;
                    }
                    let q = setup.config.sampling_rate;
                    let batch: Vec<usize> = (0..n).filter(|_| self.state.rng.random::<f64>() < q).collect();
                    let (sum, loss) = self.accumulate(&batch, Some(setup.config.clip_norm), &mut norms)?;
                    loss_sum += loss;
                    examples += batch.len();
                    let ledger = self.state.ledger.as_mut().expect("dp run has a ledger");
                    dp_step_from_sum(
                        &mut self.state.model,
                        sum,
                        &setup.config,
                        ledger,
                        &mut self.state.adam,
                        &mut self.state.rng,
                    )?;
                    self.after_update();
                    steps += 1;
                }
            }
            None => {
                let mut order: Vec<usize> = (0..n).collect();
                order.shuffle(&mut self.state.rng);
                for batch in order.chunks(b) {
                    let (mut sum, loss) = self.accumulate(batch, None, &mut norms)?;
                    loss_sum += loss;
                    examples += batch.len();
                    let inv = 1.0 / batch.len() as f64;
                    sum.iter_mut().for_each(|g| *g *= inv);
                    self.state.adam.update(self.state.model.params_mut(), &sum);
                    self.after_update();
                    steps += 1;
                }
            }
        }
        self.state.epochs_done += 1;
        let clip = self.config.privacy.clip_norm;
        Ok(EpochLog {
            epoch: self.state.epochs_done,
            steps,
            examples,
            mean_loss: if examples > 0 { loss_sum / examples as f64 } else { f64::NAN },
            epsilon: self.epsilon(),
            alpha,
            grad_norms: grad_norm_diagnostics(&norms, clip).ok(),
        })
    }

    fn after_update(&mut self) {
        let t = &self.config.training;
        if t.normalize_embeddings && t.train_embeddings {
            self.state.model.embeddings.normalize();
        }
        if let Some(ema) = self.state.ema.as_mut() {
            let s = self.state.adam.step as f64;
            let d = t.ema_decay.min((1.0 + s) / (10.0 + s));
            for (a, p) in ema.iter_mut().zip(self.state.model.params()) {
                *a = d * *a + (1.0 - d) * p;
            }
        }
    }

    /// Sum of (clipped) per-example gradients over `rows`; pushes each
    /// example's pre-clip norm to `norms`. Returns the sum and total loss.
    fn accumulate(&mut self, rows: &[usize], clip: Option<f64>, norms: &mut Vec<f64>) -> Result<(Vec<f64>, f64)> {
        let model = &self.state.model;
        let n_params = model.n_params();
        let n_net = model.net.n_params();
        let mut sum = vec![0.0; n_params];
        let mut grad = vec![0.0; n_params];
        let mut before = Vec::new();
        let mut ws = model.workspace();
        let mut loss_total = 0.0;
        let importance = self.config.training.importance_correction && self.state.sampler.kind == SamplerKind::At;
        for (i, &r) in rows.iter().enumerate() {
            let f = &self.features;
            let z0 = model.encode_row(f.num_row(r), f.cat_row(r));
            let t = self.state.sampler.draw(&mut self.state.rng);
            let pair = forward_noise(&z0, t, f.label(r), &self.schedule, &mut self.state.rng)?;
            let mut ex = TrainingExample::from_row(f, r, pair);
            if importance {
                ex.weight = self.state.sampler.importance_weight(t);
            }
            let loss = model.example_grad(&ex, self.config.training.loss, &self.schedule, &mut ws, &mut grad)?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { index: i });
            }
            loss_total += loss;
            if !self.config.training.train_embeddings {
                grad[n_net..].fill(0.0);
            }
            if let Some(c) = clip {
                if self.audit.is_some() {
                    before.clone_from(&grad);
                }
                let norm = clip_in_place(&mut grad, c);
                norms.push(norm);
                let after = l2_norm(&grad);
                if after > c + 1e-9 {
                    return Err(Error::InvalidArgument(format!("clipped gradient norm {after} exceeds {c}")));
                }
                if let Some(audit) = self.audit.as_mut() {
                    audit.checked += 1;
                    audit.max_norm_after = audit.max_norm_after.max(after);
                    if norm > c {
                        audit.clipped += 1;
                    } else if before.iter().zip(&grad).any(|(a, b)| a.to_bits() != b.to_bits()) {
                        audit.altered_within_bound += 1;
                    }
                }
            } else {
                norms.push(l2_norm(&grad));
            }
            for (s, g) in sum.iter_mut().zip(&grad) {
                *s += g;
            }
        }
        Ok((sum, loss_total))
    }
}

/// Subsample rows deterministically when `max_rows` is set.
pub fn limit_rows(data: &Dataset, max_rows: usize, seed: u64) -> Dataset {
    if max_rows == 0 || data.n_rows() <= max_rows {
        return data.clone();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let mut idx = rand::seq::index::sample(&mut rng, data.n_rows(), max_rows).into_vec();
    idx.sort_unstable();
    data.select_rows(&idx)
}
