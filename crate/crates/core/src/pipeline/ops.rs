use std::fmt::Write as _;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::checkpoint::Checkpoint;
use super::config::RunConfig;
use super::train::{limit_rows, sampling_rate, steps_per_epoch, Trainer};
use crate::at_sampler::{alpha_at, measure_dp_signal, timestep_pmf};
use crate::codec::{fit_schema, Dataset, DeclaredKinds, FeatureMatrix, RawTable, TableSchema};
use crate::diffusion::{forward_noise, sample, DiffusionSchedule, LabelSource, LossKind};
use crate::dp::{calibrate_sigma, grad_norm_diagnostics, l2_norm, Calibration, GradNormStats};
use crate::error::{Error, Result};
use crate::eval::{fidelity, privacy_attacks, utility_phi, AttackConfig, EvalReport, UtilityConfig};
use crate::model::TrainingExample;

/// Read the training CSV named in `config`, fit its schema and apply
/// `max_rows`.
pub fn load_training_data(config: &RunConfig) -> Result<(TableSchema, Dataset)> {
    let raw = RawTable::read(&config.data.train)?;
    let schema = fit_schema(&raw, &config.data.declared_kinds())?;
    let data = Dataset::from_raw(&raw, &schema)?;
    Ok((schema, limit_rows(&data, config.data.max_rows, config.seed)))
}

impl Trainer {
    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            config: self.config.clone(),
            schema: self.schema.clone(),
            scaler: self.scaler.clone(),
            dp: self.dp.clone(),
            state: self.state.clone(),
        }
    }

    /// Continue a run from a checkpoint, on the same training data.
    pub fn from_checkpoint(ckpt: Checkpoint, data: &Dataset) -> Result<Self> {
        Trainer::resume(ckpt.config, ckpt.schema, ckpt.scaler, ckpt.dp, ckpt.state, data)
    }
}

/// Parse a label mode: `uniform`, `fixed:<class>` or `proportions:<file>`.
///
/// A proportions file is a CSV with header `class,proportion`; classes
/// not listed get zero mass.
pub fn parse_label_source(spec: &str, schema: &TableSchema) -> Result<LabelSource> {
    let label = schema.label_spec().ok_or_else(|| Error::Config("label modes need a label column".into()));
    if spec == "uniform" {
        return Ok(LabelSource::Uniform);
    }
    if let Some(class) = spec.strip_prefix("fixed:") {
        let label = label?;
        let c = label
            .category_index(class)
            .ok_or_else(|| Error::Config(format!("`{class}` is not a class of `{}`", label.name)))?;
        return Ok(LabelSource::Fixed(c));
    }
    if let Some(path) = spec.strip_prefix("proportions:") {
        let label = label?;
        let raw = RawTable::read(path)?;
        let (ci, pi) = match (raw.column_index("class"), raw.column_index("proportion")) {
            (Some(c), Some(p)) => (c, p),
            _ => return Err(Error::Config("proportions file needs columns `class,proportion`".into())),
        };
        let mut props = vec![0.0; label.vocab.len()];
        for row in &raw.rows {
            let c = label
                .category_index(&row[ci])
                .ok_or_else(|| Error::Config(format!("`{}` is not a class of `{}`", row[ci], label.name)))?;
            let p: f64 = row[pi].trim().parse().map_err(|_| Error::Config(format!("bad proportion `{}`", row[pi])))?;
            if !(p >= 0.0) {
                return Err(Error::Config(format!("proportion for `{}` is negative", row[ci])));
            }
            props[c] += p;
        }
        let total: f64 = props.iter().sum();
        if (total - 1.0).abs() > 1e-6 {
            return Err(Error::Config(format!("proportions sum to {total}, expected 1 within 1e-6")));
        }
        return Ok(LabelSource::Proportions(props));
    }
    Err(Error::Config(format!("unknown label mode `{spec}`")))
}

/// Sample `n` records from a checkpoint's model. Uses its own RNG stream so
/// generation never disturbs a resumable training state.
pub fn generate(ckpt: &Checkpoint, n: usize, labels: &LabelSource, seed: u64) -> Result<Dataset> {
    let m = &ckpt.config.model;
    let schedule = DiffusionSchedule::linear(m.steps, m.beta_start, m.beta_end)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let model = ckpt.state.sampling_model();
    sample(&model.net, &model.embeddings, &ckpt.schema, &ckpt.scaler, &schedule, n, labels, &mut rng)
}

/// Which metric families to compute.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Families {
    pub fidelity: bool,
    pub utility: bool,
    pub privacy: bool,
}

impl Default for Families {
    fn default() -> Self {
        Self { fidelity: true, utility: true, privacy: true }
    }
}

/// Tables for evaluation, decoded against one shared schema.
#[derive(Debug, Clone)]
pub struct EvalTables {
    pub schema: TableSchema,
    pub real_train: Dataset,
    pub synth: Dataset,
    pub real_test: Option<Dataset>,
}

/// Fit each table's schema with the same kind declarations, merge the
/// vocabularies and decode all tables against the merged schema.
pub fn prepare_eval_tables(
    real_train: &RawTable,
    synth: &RawTable,
    real_test: Option<&RawTable>,
    kinds: &DeclaredKinds,
) -> Result<EvalTables> {
    let check = |other: &RawTable, what: &str| -> Result<()> {
        let mut a = real_train.header.clone();
        let mut b = other.header.clone();
        a.sort();
        b.sort();
        if a != b {
            return Err(Error::Schema(format!(
                "{what} columns [{}] do not match training columns [{}]",
                other.header.join(","),
                real_train.header.join(",")
            )));
        }
        Ok(())
    };
    check(synth, "synthetic")?;
    if let Some(t) = real_test {
        check(t, "test")?;
    }
    let base = fit_schema(real_train, kinds)?;
    let mut schema = base.merged_vocab(&reorder(&fit_schema(synth, kinds)?, &base)?)?;
    if let Some(t) = real_test {
        schema = schema.merged_vocab(&reorder(&fit_schema(t, kinds)?, &base)?)?;
    }
    Ok(EvalTables {
        real_train: Dataset::from_raw(real_train, &schema)?,
        synth: Dataset::from_raw(synth, &schema)?,
        real_test: real_test.map(|t| Dataset::from_raw(t, &schema)).transpose()?,
        schema,
    })
}

fn reorder(schema: &TableSchema, like: &TableSchema) -> Result<TableSchema> {
    let columns = like
        .columns
        .iter()
        .map(|c| schema.column(&c.name).cloned().ok_or_else(|| Error::Schema(format!("missing column `{}`", c.name))))
        .collect::<Result<Vec<_>>>()?;
    TableSchema::new(columns, schema.label_column.clone())
}

/// Compute the selected metric families. Utility and privacy need the real
/// test table (the privacy holdout).
pub fn evaluate(
    tables: &EvalTables,
    families: Families,
    utility: &UtilityConfig,
    attacks: &AttackConfig,
) -> Result<EvalReport> {
    let mut report = EvalReport::default();
    if families.fidelity {
        report.fidelity = Some(fidelity(&tables.real_train, &tables.synth, &tables.schema)?);
    }
    let need_test = || tables.real_test.as_ref().ok_or_else(|| Error::Eval("a real test table is required".into()));
    if families.utility {
        report.utility = Some(utility_phi(&tables.synth, need_test()?, &tables.schema, utility)?);
    }
    if families.privacy {
        report.privacy = Some(privacy_attacks(&tables.real_train, &tables.synth, need_test()?, &tables.schema, attacks)?);
    }
    Ok(report)
}

/// Noise multiplier that a config would train with on `n_rows` rows.
pub fn calibrate_for(config: &RunConfig, n_rows: usize) -> Result<Calibration> {
    let p = &config.privacy;
    let q = sampling_rate(n_rows, config.training.batch_size);
    let steps = steps_per_epoch(n_rows, config.training.batch_size) * config.training.epochs;
    let eps = p.epsilon.unwrap_or(1.0);
    calibrate_sigma(eps, p.delta, q, steps)
}

/// Gradient-geometry report for a model on a sample of training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnoseReport {
    pub clip_norm: f64,
    pub mse: GradNormStats,
    pub fa: GradNormStats,
    /// `(t, s_mse(t), s_fa(t))` on the timestep grid.
    pub signal: Vec<(usize, f64, f64)>,
    /// `(epoch, alpha, pmf)` snapshots of the timestep sampler.
    pub sampler: Vec<(usize, f64, Vec<f64>)>,
}

fn norms_at_uniform_t(trainer: &Trainer, rows: &FeatureMatrix, loss: LossKind, seed: u64) -> Result<Vec<f64>> {
    let model = &trainer.state.model;
    let steps = trainer.schedule.steps();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ws = model.workspace();
    let mut grad = vec![0.0; model.n_params()];
    (0..rows.n_rows)
        .map(|r| {
            let t = rand::Rng::random_range(&mut rng, 1..=steps);
            let z0 = model.encode_row(rows.num_row(r), rows.cat_row(r));
            let pair = forward_noise(&z0, t, rows.label(r), &trainer.schedule, &mut rng)?;
            let ex = TrainingExample::from_row(rows, r, pair);
            model.example_grad(&ex, loss, &trainer.schedule, &mut ws, &mut grad)?;
            Ok(l2_norm(&grad))
        })
        .collect()
}

/// Per-sample gradient statistics under both losses, the post-clip signal
/// on `t_grid` and the sampler pmf at the start, middle and end of training.
pub fn diagnose(trainer: &Trainer, n_rows: usize, t_grid: &[usize], seed: u64) -> Result<DiagnoseReport> {
    let all = trainer.features();
    let n = n_rows.min(all.n_rows).max(1);
    let rows = subset(all, n);
    let c = trainer.config.privacy.clip_norm;
    let mse = grad_norm_diagnostics(&norms_at_uniform_t(trainer, &rows, LossKind::Mse, seed)?, c)?;
    let fa = grad_norm_diagnostics(&norms_at_uniform_t(trainer, &rows, LossKind::Fa, seed)?, c)?;
    let model = &trainer.state.model;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
    let s_mse = measure_dp_signal(model, &rows, &trainer.schedule, LossKind::Mse, c, t_grid, &mut rng)?;
    let s_fa = measure_dp_signal(model, &rows, &trainer.schedule, LossKind::Fa, c, t_grid, &mut rng)?;
    let signal = t_grid.iter().zip(s_mse.iter().zip(&s_fa)).map(|(&t, (&a, &b))| (t, a, b)).collect();
    let tc = &trainer.config.training;
    let k = tc.epochs;
    let mut sampler = Vec::new();
    for epoch in [0, k / 2, k] {
        let alpha = alpha_at(epoch, k, tc.alpha_start, tc.alpha_end)?;
        sampler.push((epoch, alpha, timestep_pmf(alpha, trainer.schedule.steps())?));
    }
    Ok(DiagnoseReport { clip_norm: c, mse, fa, signal, sampler })
}

fn subset(f: &FeatureMatrix, n: usize) -> FeatureMatrix {
    FeatureMatrix {
        n_rows: n,
        d_num: f.d_num,
        d_cat: f.d_cat,
        num: f.num[..n * f.d_num].to_vec(),
        cat: f.cat[..n * f.d_cat].to_vec(),
        labels: f.labels.as_ref().map(|l| l[..n].to_vec()),
    }
}

impl DiagnoseReport {
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        let mut s = String::from("loss,count,mean,var,relvar,skew,frac_clipped\n");
        for (name, g) in [("mse", &self.mse), ("fa", &self.fa)] {
            let _ = writeln!(
                s,
                "{name},{},{},{},{},{},{}",
                g.count, g.mean, g.variance, g.relative_variance, g.skewness, g.fraction_clipped
            );
        }
        std::fs::write(dir.join("grad_norms.csv"), s)?;
        let mut s = String::from("t,signal_mse,signal_fa\n");
        for (t, a, b) in &self.signal {
            let _ = writeln!(s, "{t},{a},{b}");
        }
        std::fs::write(dir.join("signal.csv"), s)?;
        let mut s = String::from("epoch,alpha,t,p\n");
        for (epoch, alpha, pmf) in &self.sampler {
            for (i, p) in pmf.iter().enumerate() {
                let _ = writeln!(s, "{epoch},{alpha},{},{p}", i + 1);
            }
        }
        std::fs::write(dir.join("sampler_pmf.csv"), s)?;
        Ok(())
    }
}
