//! Simplified singling-out, linkability and inference attacks.
//!
//! Each attack runs twice: once against the training records and once
//! against a disjoint holdout drawn from the same population. The reported
//! risk is the success-rate gap, clamped to `[0, 1]`, so a generator that
//! memorizes nothing scores close to zero.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::codec::{ColumnData, Dataset, TableSchema};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackConfig {
    pub n_attacks: usize,
    pub seed: u64,
    /// Column the inference attacker tries to recover; defaults to the
    /// label column, else the last column.
    pub secret_column: Option<String>,
    /// Half-width of numeric singling-out intervals, as a fraction of the
    /// real column range.
    pub interval_half_width: f64,
    /// A numeric secret counts as recovered within this fraction of range.
    pub numeric_tolerance: f64,
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self { n_attacks: 2000, seed: 0, secret_column: None, interval_half_width: 0.001, numeric_tolerance: 0.05 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttackOutcome {
    pub successes: usize,
    pub trials: usize,
    pub baseline_successes: usize,
    pub baseline_trials: usize,
}

impl AttackOutcome {
    pub fn rate(&self) -> f64 {
        self.successes as f64 / self.trials.max(1) as f64
    }

    pub fn baseline_rate(&self) -> f64 {
        self.baseline_successes as f64 / self.baseline_trials.max(1) as f64
    }

    /// Success-rate gap over the holdout baseline, in `[0, 1]`.
    pub fn risk(&self) -> f64 {
        (self.rate() - self.baseline_rate()).clamp(0.0, 1.0)
    }

    /// Standard error of the gap under independent binomials.
    pub fn stderr(&self) -> f64 {
        let var = |p: f64, n: usize| p * (1.0 - p) / n.max(1) as f64;
        (var(self.rate(), self.trials) + var(self.baseline_rate(), self.baseline_trials)).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrivacyRiskReport {
    pub sor: f64,
    pub lr: f64,
    pub ir: f64,
    pub singling_out: AttackOutcome,
    pub linkability: AttackOutcome,
    pub inference: AttackOutcome,
}

/// Per-column ranges from the real training table, for Gower distances.
struct Gower {
    ranges: Vec<Option<f64>>,
}

impl Gower {
    fn fit(real: &Dataset) -> Self {
        let ranges = real
            .columns
            .iter()
            .map(|c| match c {
                ColumnData::Numeric(v) => {
                    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
                    let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    Some(if hi > lo { hi - lo } else { 1.0 })
                }
                ColumnData::Categorical(_) => None,
            })
            .collect();
        Self { ranges }
    }

    fn distance(&self, a: &Dataset, ra: usize, b: &Dataset, rb: usize, cols: &[usize]) -> f64 {
        let mut total = 0.0;
        for &c in cols {
            total += match (&a.columns[c], &b.columns[c]) {
                (ColumnData::Numeric(x), ColumnData::Numeric(y)) => {
                    ((x[ra] - y[rb]).abs() / self.ranges[c].unwrap_or(1.0)).min(1.0)
                }
                (ColumnData::Categorical(x), ColumnData::Categorical(y)) => {
                    if x[ra] == y[rb] {
                        0.0
                    } else {
                        1.0
                    }
                }
                _ => 1.0,
            };
        }
        total / cols.len().max(1) as f64
    }

    /// Index of the row of `pool` nearest to `query[row]`; ties go to the lowest index.
    fn nearest(&self, query: &Dataset, row: usize, pool: &Dataset, cols: &[usize]) -> usize {
        let mut best = (f64::INFINITY, 0);
        for r in 0..pool.n_rows() {
            let d = self.distance(query, row, pool, r, cols);
            if d < best.0 {
                best = (d, r);
            }
        }
        best.1
    }
}

fn subsample(data: &Dataset, n: usize, rng: &mut ChaCha8Rng) -> Dataset {
    if data.n_rows() <= n {
        return data.clone();
    }
    let mut idx = sample(rng, data.n_rows(), n).into_vec();
    idx.sort_unstable();
    data.select_rows(&idx)
}

fn draw_rows(n_rows: usize, count: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    if count >= n_rows {
        (0..n_rows).collect()
    } else {
        sample(rng, n_rows, count).into_vec()
    }
}

/// Predicates are built from synthetic records (one random column each);
/// a predicate succeeds if it matches exactly one record of the target set.
/// The training side is subsampled to the holdout size so both sides face
/// the same uniqueness odds.
fn singling_out(
    train: &Dataset,
    synth: &Dataset,
    holdout: &Dataset,
    gower: &Gower,
    config: &AttackConfig,
    rng: &mut ChaCha8Rng,
) -> AttackOutcome {
    let m = train.n_rows().min(holdout.n_rows());
    let target = subsample(train, m, rng);
    let control = subsample(holdout, m, rng);
    let n_cols = synth.columns.len();
    let (mut hit, mut hit_ctl) = (0, 0);
    for _ in 0..config.n_attacks {
        let row = rng.random_range(0..synth.n_rows());
        let col = rng.random_range(0..n_cols);
        let matches = |table: &Dataset| -> usize {
            match (&synth.columns[col], &table.columns[col]) {
                (ColumnData::Numeric(s), ColumnData::Numeric(v)) => {
                    let w = config.interval_half_width * gower.ranges[col].unwrap_or(1.0);
                    v.iter().filter(|x| (*x - s[row]).abs() <= w).count()
                }
                (ColumnData::Categorical(s), ColumnData::Categorical(v)) => {
                    v.iter().filter(|&&c| c == s[row]).count()
                }
                _ => 0,
            }
        };
        hit += usize::from(matches(&target) == 1);
        hit_ctl += usize::from(matches(&control) == 1);
    }
    AttackOutcome {
        successes: hit,
        trials: config.n_attacks,
        baseline_successes: hit_ctl,
        baseline_trials: config.n_attacks,
    }
}

/// For each target record, find its nearest synthetic neighbour using only
/// one half of the attributes and using only the other half; the link
/// succeeds when both halves point at the same synthetic record. Columns
/// alternate between the halves, numeric columns first.
fn linkability(
    train: &Dataset,
    synth: &Dataset,
    holdout: &Dataset,
    gower: &Gower,
    config: &AttackConfig,
    rng: &mut ChaCha8Rng,
) -> Result<AttackOutcome> {
    let n_cols = synth.columns.len();
    if n_cols < 2 {
        return Err(Error::Eval("linkability needs at least two columns".into()));
    }
    let mut order: Vec<usize> = (0..n_cols).filter(|&c| gower.ranges[c].is_some()).collect();
    order.extend((0..n_cols).filter(|&c| gower.ranges[c].is_none()));
    let left: Vec<usize> = order.iter().copied().step_by(2).collect();
    let right: Vec<usize> = order.iter().copied().skip(1).step_by(2).collect();
    let n = config.n_attacks.min(train.n_rows()).min(holdout.n_rows());
    let run = |targets: &Dataset, rows: &[usize]| -> usize {
        rows.iter()
            .filter(|&&r| gower.nearest(targets, r, synth, &left) == gower.nearest(targets, r, synth, &right))
            .count()
    };
    let rows_t = draw_rows(train.n_rows(), n, rng);
    let rows_c = draw_rows(holdout.n_rows(), n, rng);
    Ok(AttackOutcome {
        successes: run(train, &rows_t),
        trials: rows_t.len(),
        baseline_successes: run(holdout, &rows_c),
        baseline_trials: rows_c.len(),
    })
}

/// The attacker knows every attribute of a target except the secret,
/// looks up the nearest synthetic record on the known attributes and
/// guesses its secret value.
fn inference(
    train: &Dataset,
    synth: &Dataset,
    holdout: &Dataset,
    secret: usize,
    gower: &Gower,
    config: &AttackConfig,
    rng: &mut ChaCha8Rng,
) -> AttackOutcome {
    let known: Vec<usize> = (0..synth.columns.len()).filter(|&c| c != secret).collect();
    let n = config.n_attacks.min(train.n_rows()).min(holdout.n_rows());
    let correct = |targets: &Dataset, r: usize, s: usize| -> bool {
        match (&targets.columns[secret], &synth.columns[secret]) {
            (ColumnData::Numeric(t), ColumnData::Numeric(v)) => {
                (t[r] - v[s]).abs() <= config.numeric_tolerance * gower.ranges[secret].unwrap_or(1.0)
            }
            (ColumnData::Categorical(t), ColumnData::Categorical(v)) => t[r] == v[s],
            _ => false,
        }
    };
    let run = |targets: &Dataset, rows: &[usize]| -> usize {
        rows.iter().filter(|&&r| correct(targets, r, gower.nearest(targets, r, synth, &known))).count()
    };
    let rows_t = draw_rows(train.n_rows(), n, rng);
    let rows_c = draw_rows(holdout.n_rows(), n, rng);
    AttackOutcome {
        successes: run(train, &rows_t),
        trials: rows_t.len(),
        baseline_successes: run(holdout, &rows_c),
        baseline_trials: rows_c.len(),
    }
}

pub fn privacy_attacks(
    real_train: &Dataset,
    synth: &Dataset,
    holdout: &Dataset,
    schema: &TableSchema,
    config: &AttackConfig,
) -> Result<PrivacyRiskReport> {
    if holdout.n_rows() == 0 {
        return Err(Error::Eval("holdout is empty".into()));
    }
    if real_train.n_rows() == 0 || synth.n_rows() == 0 {
        return Err(Error::Eval("training or synthetic table is empty".into()));
    }
    let secret = match &config.secret_column {
        Some(name) => schema
            .column_index(name)
            .ok_or_else(|| Error::Eval(format!("secret column `{name}` not in schema")))?,
        None => schema.label_index().unwrap_or(schema.columns.len() - 1),
    };
    let gower = Gower::fit(real_train);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let singling_out = singling_out(real_train, synth, holdout, &gower, config, &mut rng);
    let linkability = linkability(real_train, synth, holdout, &gower, config, &mut rng)?;
    let inference = inference(real_train, synth, holdout, secret, &gower, config, &mut rng);
    Ok(PrivacyRiskReport {
        sor: singling_out.risk(),
        lr: linkability.risk(),
        ir: inference.risk(),
        singling_out,
        linkability,
        inference,
    })
}
