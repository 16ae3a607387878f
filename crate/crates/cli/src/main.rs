use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use tabdp_core::at_sampler::SamplerKind;
use tabdp_core::codec::{fit_schema, DeclaredKinds, RawTable, TableSchema};
use tabdp_core::diffusion::LossKind;
use tabdp_core::dp::epsilon_for;
use tabdp_core::eval::{AttackConfig, UtilityConfig};
use tabdp_core::pipeline::{
    calibrate_for, diagnose, evaluate, generate, load_training_data, parse_label_source, prepare_eval_tables,
    sampling_rate, steps_per_epoch, Checkpoint, EpochLog, Families, RunConfig, StopReason, Trainer,
};
use tabdp_core::{Error, ErrorKind};

/// Differentially private synthetic tables from a diffusion model.
#[derive(Debug, Parser)]
#[command(name = "tabdp", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Infer the schema of a training CSV and write it as JSON.
    FitSchema {
        #[command(flatten)]
        run: RunArgs,
        /// Output path; defaults to <output_dir>/schema.json.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Noise multiplier needed for a privacy budget.
    Calibrate {
        #[arg(long)]
        epsilon: f64,
        #[arg(long, default_value_t = 1e-5)]
        delta: f64,
        /// Number of training rows.
        #[arg(long)]
        rows: usize,
        #[arg(long, default_value_t = 128)]
        batch_size: usize,
        #[arg(long, default_value_t = 1000)]
        epochs: usize,
    },
    /// Train a model and write a checkpoint plus a per-epoch log.
    Train {
        #[command(flatten)]
        run: RunArgs,
        /// Continue from this checkpoint; its config replaces all other settings.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Stop once this many epochs (in total) are done.
        #[arg(long)]
        stop_after: Option<usize>,
    },
    /// Sample synthetic records from a checkpoint.
    Generate {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Number of records.
        #[arg(long, short = 'n')]
        rows: usize,
        /// `uniform`, `fixed:<class>` or `proportions:<csv>`.
        #[arg(long, default_value = "uniform")]
        labels: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a synthetic table against real training and test tables.
    Evaluate {
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        synth: PathBuf,
        /// Real held-out table; needed for utility and privacy.
        #[arg(long)]
        test: Option<PathBuf>,
        /// Take column kinds from a schema JSON instead of the flags below.
        #[arg(long)]
        schema: Option<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        numeric: Vec<String>,
        #[arg(long, value_delimiter = ',')]
        categorical: Vec<String>,
        #[arg(long)]
        label: Option<String>,
        /// Metric families to run.
        #[arg(long, value_delimiter = ',', default_value = "fidelity,utility,privacy")]
        families: Vec<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 2000)]
        attacks: usize,
        /// Column targeted by the inference attack.
        #[arg(long)]
        secret: Option<String>,
        /// Directory for report.csv and report.txt.
        #[arg(long)]
        out: PathBuf,
    },
    /// Gradient-norm statistics for both losses and the sampler pmf.
    Diagnose {
        #[command(flatten)]
        run: RunArgs,
        /// Use this checkpoint's model instead of a fresh initialization.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Rows used for the statistics.
        #[arg(long, default_value_t = 512)]
        rows: usize,
        /// Timesteps at which to measure the clipped signal.
        #[arg(long, value_delimiter = ',', default_value = "1,10,50,100,200,300,400,500")]
        t_grid: Vec<usize>,
        /// Output directory; defaults to <output_dir>/diagnostics.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Run settings. Flags override the `--config` file, which overrides defaults.
#[derive(Debug, Args)]
struct RunArgs {
    /// TOML run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    train: Option<PathBuf>,
    #[arg(long)]
    test: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    numeric: Option<Vec<String>>,
    #[arg(long, value_delimiter = ',')]
    categorical: Option<Vec<String>>,
    #[arg(long)]
    label: Option<String>,
    /// Subsample the training table to this many rows (0 keeps all).
    #[arg(long)]
    max_rows: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    d_e: Option<usize>,
    #[arg(long)]
    d_time: Option<usize>,
    /// Diffusion steps T.
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    beta_start: Option<f64>,
    #[arg(long)]
    beta_end: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    /// `mse` or `fa`.
    #[arg(long)]
    loss: Option<LossKind>,
    /// `uniform` or `at`.
    #[arg(long)]
    sampler: Option<SamplerKind>,
    #[arg(long, allow_hyphen_values = true)]
    alpha_start: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    alpha_end: Option<f64>,
    /// Weight losses by 1/(T P(t)) under the adaptive sampler.
    #[arg(long)]
    importance_correction: bool,
    /// Decay of the sampling weight average (0 disables it).
    #[arg(long)]
    ema_decay: Option<f64>,
    /// Keep the record embedding fixed at its initialization.
    #[arg(long)]
    freeze_embeddings: bool,
    /// Target epsilon (calibrates the noise multiplier).
    #[arg(long, conflicts_with = "sigma")]
    epsilon: Option<f64>,
    /// Explicit noise multiplier.
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    clip_norm: Option<f64>,
    /// Train without differential privacy.
    #[arg(long)]
    no_dp: bool,
}

impl RunArgs {
    fn resolve(&self) -> anyhow::Result<RunConfig> {
        let mut c = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        macro_rules! set {
            ($field:expr, $value:expr) => {
                if let Some(v) = $value.clone() {
                    $field = v;
                }
            };
        }
        set!(c.data.train, self.train);
        if self.test.is_some() {
            c.data.test = self.test.clone();
        }
        set!(c.data.numeric, self.numeric);
        set!(c.data.categorical, self.categorical);
        if self.label.is_some() {
            c.data.label = self.label.clone();
        }
        set!(c.data.max_rows, self.max_rows);
        set!(c.seed, self.seed);
        set!(c.output_dir, self.output_dir);
        set!(c.model.hidden, self.hidden);
        set!(c.model.d_e, self.d_e);
        set!(c.model.d_time, self.d_time);
        set!(c.model.steps, self.steps);
        set!(c.model.beta_start, self.beta_start);
        set!(c.model.beta_end, self.beta_end);
        set!(c.training.epochs, self.epochs);
        set!(c.training.batch_size, self.batch_size);
        set!(c.training.learning_rate, self.learning_rate);
        set!(c.training.loss, self.loss);
        set!(c.training.sampler, self.sampler);
        set!(c.training.alpha_start, self.alpha_start);
        set!(c.training.alpha_end, self.alpha_end);
        set!(c.training.ema_decay, self.ema_decay);
        c.training.importance_correction |= self.importance_correction;
        if self.freeze_embeddings {
            c.training.train_embeddings = false;
        }
        if self.epsilon.is_some() {
            c.privacy.epsilon = self.epsilon;
            c.privacy.sigma = None;
        }
        if self.sigma.is_some() {
            c.privacy.sigma = self.sigma;
            c.privacy.epsilon = None;
        }
        set!(c.privacy.delta, self.delta);
        set!(c.privacy.clip_norm, self.clip_norm);
        if self.no_dp {
            c.privacy.enabled = false;
        }
        c.validate()?;
        if c.data.train.as_os_str().is_empty() {
            return Err(Error::Config("no training table given (data.train or --train)".into()).into());
        }
        Ok(c)
    }
}

fn write_log_header(path: &Path) -> anyhow::Result<fs::File> {
    let mut f = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    writeln!(f, "{}", EpochLog::CSV_HEADER)?;
    Ok(f)
}

fn cmd_fit_schema(run: &RunArgs, out: Option<PathBuf>) -> anyhow::Result<()> {
    let cfg = run.resolve()?;
    let raw = RawTable::read(&cfg.data.train)?;
    let schema = fit_schema(&raw, &cfg.data.declared_kinds())?;
    let out = out.unwrap_or_else(|| cfg.output_dir.join("schema.json"));
    if let Some(dir) = out.parent() {
        fs::create_dir_all(dir)?;
    }
    schema.save(&out)?;
    println!("schema with {} columns written to {}", schema.columns.len(), out.display());
    Ok(())
}

fn cmd_calibrate(epsilon: f64, delta: f64, rows: usize, batch_size: usize, epochs: usize) -> anyhow::Result<()> {
    if rows == 0 || batch_size == 0 || epochs == 0 {
        return Err(Error::Config("rows, batch size and epochs must be positive".into()).into());
    }
    if !(epsilon > 0.0) || !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Config(format!("need epsilon > 0 and 0 < delta < 1, got {epsilon}, {delta}")).into());
    }
    let mut cfg = RunConfig::default();
    cfg.training.batch_size = batch_size;
    cfg.training.epochs = epochs;
    cfg.privacy.epsilon = Some(epsilon);
    cfg.privacy.delta = delta;
    let cal = calibrate_for(&cfg, rows)?;
    let q = sampling_rate(rows, batch_size);
    let steps = steps_per_epoch(rows, batch_size) * epochs;
    if cal.at_lower_bound {
        eprintln!(
            "warning: budget is loose; sigma pinned at the search lower bound {} (epsilon {:.4})",
            cal.sigma, cal.epsilon
        );
    }
    println!("sigma = {}", cal.sigma);
    println!("epsilon = {}", epsilon_for(cal.sigma, q, steps, delta));
    println!("sampling_rate = {q}");
    println!("steps = {steps}");
    Ok(())
}

fn cmd_train(run: &RunArgs, resume: Option<PathBuf>, stop_after: Option<usize>) -> anyhow::Result<()> {
    let mut trainer = match resume {
        Some(path) => {
            let ckpt = Checkpoint::load(&path).with_context(|| format!("loading {}", path.display()))?;
            let (_, data) = load_training_data(&ckpt.config)?;
            Trainer::from_checkpoint(ckpt, &data)?
        }
        None => {
            let cfg = run.resolve()?;
            let (schema, data) = load_training_data(&cfg)?;
            Trainer::new(cfg, schema, &data)?
        }
    };
    let out = trainer.config.output_dir.clone();
    fs::create_dir_all(&out)?;
    fs::write(out.join("config.toml"), trainer.config.to_toml())?;
    trainer.schema.save(out.join("schema.json"))?;
    if let Some(dp) = &trainer.dp {
        println!(
            "sigma {:.6}, sampling rate {:.6}, {} steps per epoch",
            dp.config.noise_multiplier, dp.config.sampling_rate, dp.steps_per_epoch
        );
    }
    let log_path = out.join("train_log.csv");
    let mut log = if trainer.state.epochs_done > 0 && log_path.exists() {
        fs::OpenOptions::new().append(true).open(&log_path)?
    } else {
        write_log_header(&log_path)?
    };
    let mut io_err = None;
    let result = trainer.run(stop_after, |e| {
        println!("epoch {:>5}  loss {:.6}  epsilon {:.4}", e.epoch, e.mean_loss, e.epsilon);
        if let Err(err) = writeln!(log, "{}", e.csv_row()) {
            io_err.get_or_insert(err);
        }
    });
    let ckpt_path = out.join("model.ckpt");
    // a partially trained model is still private, so save it whatever happened
    trainer.checkpoint().save(&ckpt_path)?;
    if let Some(err) = io_err {
        return Err(err).context("writing the training log");
    }
    match result? {
        StopReason::Completed => println!("training complete"),
        StopReason::StopAfter => println!("stopped after {} epochs", trainer.state.epochs_done),
        StopReason::BudgetExhausted => println!("privacy budget exhausted; stopped cleanly"),
    }
    println!("epsilon spent {:.6}; checkpoint {}", trainer.epsilon(), ckpt_path.display());
    Ok(())
}

fn cmd_generate(checkpoint: &Path, rows: usize, labels: &str, seed: u64, out: &Path) -> anyhow::Result<()> {
    let ckpt = Checkpoint::load(checkpoint).with_context(|| format!("loading {}", checkpoint.display()))?;
    let source = if ckpt.schema.label_column.is_some() {
        parse_label_source(labels, &ckpt.schema)?
    } else if labels != "uniform" {
        return Err(Error::Config("this model has no label column".into()).into());
    } else {
        tabdp_core::LabelSource::Uniform
    };
    let data = generate(&ckpt, rows, &source, seed)?;
    if let Some(dir) = out.parent() {
        fs::create_dir_all(dir)?;
    }
    data.to_raw(&ckpt.schema).write(out)?;
    println!("{rows} records written to {}", out.display());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_evaluate(
    train: &Path,
    synth: &Path,
    test: Option<&Path>,
    schema: Option<&Path>,
    kinds: DeclaredKinds,
    families: &[String],
    seed: u64,
    attacks: usize,
    secret: Option<String>,
    out: &Path,
) -> anyhow::Result<()> {
    let kinds = match schema {
        Some(p) => kinds_of(&TableSchema::load(p)?),
        None => kinds,
    };
    let mut fam = Families { fidelity: false, utility: false, privacy: false };
    for f in families {
        match f.as_str() {
            "fidelity" => fam.fidelity = true,
            "utility" => fam.utility = true,
            "privacy" => fam.privacy = true,
            other => bail!(Error::Config(format!("unknown metric family `{other}`"))),
        }
    }
    if fam.utility && kinds.label.is_none() {
        return Err(Error::Config("utility needs a label column (--label)".into()).into());
    }
    let train = RawTable::read(train)?;
    let synth = RawTable::read(synth)?;
    let test = test.map(RawTable::read).transpose()?;
    let tables = prepare_eval_tables(&train, &synth, test.as_ref(), &kinds)?;
    let utility = UtilityConfig { seed, ..UtilityConfig::default() };
    let attack = AttackConfig { seed, n_attacks: attacks, secret_column: secret, ..AttackConfig::default() };
    let report = evaluate(&tables, fam, &utility, &attack)?;
    report.write(out)?;
    print!("{}", report.to_text());
    Ok(())
}

fn kinds_of(schema: &TableSchema) -> DeclaredKinds {
    let label = schema.label_column.clone();
    let mut kinds = DeclaredKinds { label: label.clone(), ..DeclaredKinds::default() };
    for c in &schema.columns {
        if Some(&c.name) == label.as_ref() {
            continue;
        }
        match c.kind {
            tabdp_core::codec::ColumnKind::Numeric => kinds.numeric.push(c.name.clone()),
            tabdp_core::codec::ColumnKind::Categorical => kinds.categorical.push(c.name.clone()),
        }
    }
    kinds
}

fn cmd_diagnose(
    run: &RunArgs,
    checkpoint: Option<PathBuf>,
    rows: usize,
    t_grid: &[usize],
    out: Option<PathBuf>,
) -> anyhow::Result<()> {
    let trainer = match checkpoint {
        Some(path) => {
            let ckpt = Checkpoint::load(&path)?;
            let (_, data) = load_training_data(&ckpt.config)?;
            Trainer::from_checkpoint(ckpt, &data)?
        }
        None => {
            let cfg = run.resolve()?;
            let (schema, data) = load_training_data(&cfg)?;
            Trainer::new(cfg, schema, &data)?
        }
    };
    let report = diagnose(&trainer, rows, t_grid, trainer.config.seed)?;
    let out = out.unwrap_or_else(|| trainer.config.output_dir.join("diagnostics"));
    report.write(&out)?;
    for (name, g) in [("mse", &report.mse), ("fa", &report.fa)] {
        println!(
            "{name}: mean {:.4e} var {:.4e} relvar {:.4} skew {:.4} clipped {:.3}",
            g.mean, g.variance, g.relative_variance, g.skewness, g.fraction_clipped
        );
    }
    println!("written to {}", out.display());
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::FitSchema { run, out } => cmd_fit_schema(&run, out),
        Command::Calibrate { epsilon, delta, rows, batch_size, epochs } => {
            cmd_calibrate(epsilon, delta, rows, batch_size, epochs)
        }
        Command::Train { run, resume, stop_after } => cmd_train(&run, resume, stop_after),
        Command::Generate { checkpoint, rows, labels, seed, out } => {
            cmd_generate(&checkpoint, rows, &labels, seed, &out)
        }
        Command::Evaluate {
            train,
            synth,
            test,
            schema,
            numeric,
            categorical,
            label,
            families,
            seed,
            attacks,
            secret,
            out,
        } => cmd_evaluate(
            &train,
            &synth,
            test.as_deref(),
            schema.as_deref(),
            DeclaredKinds { numeric, categorical, label },
            &families,
            seed,
            attacks,
            secret,
            &out,
        ),
        Command::Diagnose { run, checkpoint, rows, t_grid, out } => cmd_diagnose(&run, checkpoint, rows, &t_grid, out),
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.chain().find_map(|e| e.downcast_ref::<Error>()).map(Error::kind) {
        Some(ErrorKind::Config) => 2,
        Some(ErrorKind::Budget) => 3,
        Some(ErrorKind::Data) | None => 4,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
