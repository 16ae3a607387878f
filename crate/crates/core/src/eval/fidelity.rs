use serde::{Deserialize, Serialize};

use crate::codec::{ColumnData, Dataset, TableSchema};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnScore {
    pub column: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairScore {
    pub a: String,
    pub b: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FidelityReport {
    pub columns: Vec<ColumnScore>,
    pub pairs: Vec<PairScore>,
    pub omega_col: f64,
    pub omega_row: f64,
    pub omega_total: f64,
    pub warnings: Vec<String>,
}

/// Wasserstein-1 distance between two empirical distributions.
pub fn wasserstein_1(a: &[f64], b: &[f64]) -> f64 {
    let mut xs = a.to_vec();
    let mut ys = b.to_vec();
    xs.sort_by(f64::total_cmp);
    ys.sort_by(f64::total_cmp);
    let (na, nb) = (xs.len() as f64, ys.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut prev = xs[0].min(ys[0]);
    let mut total = 0.0;
    while i < xs.len() || j < ys.len() {
        let next = match (xs.get(i), ys.get(j)) {
            (Some(&x), Some(&y)) => x.min(y),
            (Some(&x), None) => x,
            (None, Some(&y)) => y,
            (None, None) => unreachable!(),
        };
        total += (next - prev) * (i as f64 / na - j as f64 / nb).abs();
        while i < xs.len() && xs[i] == next {
            i += 1;
        }
        while j < ys.len() && ys[j] == next {
            j += 1;
        }
        prev = next;
    }
    total
}

fn distribution(values: &[usize], support: usize) -> Vec<f64> {
    let mut p = vec![0.0; support];
    for &v in values {
        p[v] += 1.0;
    }
    let n = values.len() as f64;
    p.iter_mut().for_each(|x| *x /= n);
    p
}

/// Jensen-Shannon divergence with base-2 logarithms, in `[0, 1]`.
pub fn js_divergence(p: &[f64], q: &[f64]) -> f64 {
    let kl = |a: &[f64], m: &[f64]| -> f64 {
        a.iter().zip(m).filter(|(x, _)| **x > 0.0).map(|(x, y)| x * (x / y).log2()).sum()
    };
    let m: Vec<f64> = p.iter().zip(q).map(|(a, b)| 0.5 * (a + b)).collect();
    (0.5 * kl(p, &m) + 0.5 * kl(q, &m)).clamp(0.0, 1.0)
}

/// Similarity of one column: `1 - W1` on real-range-normalized values for
/// numeric data, `1 - JS` for categorical data.
pub fn fidelity_column(real: &ColumnData, synth: &ColumnData) -> Result<f64> {
    if real.is_empty() || synth.is_empty() {
        return Err(Error::Eval("empty column".into()));
    }
    match (real, synth) {
        (ColumnData::Numeric(r), ColumnData::Numeric(s)) => {
            let lo = r.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = r.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let range = hi - lo;
            if !(range > 0.0) {
                return Err(Error::Eval("real numeric column has zero range".into()));
            }
            let norm = |v: &[f64]| -> Vec<f64> { v.iter().map(|x| (x - lo) / range).collect() };
            Ok((1.0 - wasserstein_1(&norm(r), &norm(s))).clamp(0.0, 1.0))
        }
        (ColumnData::Categorical(r), ColumnData::Categorical(s)) => {
            let support = r.iter().chain(s).max().map_or(0, |m| m + 1);
            Ok(1.0 - js_divergence(&distribution(r, support), &distribution(s, support)))
        }
        _ => Err(Error::Eval("column kinds differ".into())),
    }
}

pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

fn entropy(counts: impl Iterator<Item = f64>, n: f64) -> f64 {
    counts.filter(|&c| c > 0.0).map(|c| -(c / n) * (c / n).ln()).sum()
}

/// Uncertainty coefficient `U(a -> b) = (H(b) - H(b|a)) / H(b)`, with 0/0 = 0.
pub fn theils_u(a: &[usize], b: &[usize]) -> f64 {
    let n = a.len() as f64;
    let ka = a.iter().max().map_or(0, |m| m + 1);
    let kb = b.iter().max().map_or(0, |m| m + 1);
    let mut joint = vec![0.0; ka * kb];
    let mut ca = vec![0.0; ka];
    let mut cb = vec![0.0; kb];
    for (&x, &y) in a.iter().zip(b) {
        joint[x * kb + y] += 1.0;
        ca[x] += 1.0;
        cb[y] += 1.0;
    }
    let h_b = entropy(cb.iter().copied(), n);
    if h_b == 0.0 {
        return 0.0;
    }
    // H(b|a) = sum_a p(a) H(b | a = x)
    let mut h_b_given_a = 0.0;
    for x in 0..ka {
        if ca[x] > 0.0 {
            h_b_given_a += ca[x] / n * entropy(joint[x * kb..(x + 1) * kb].iter().copied(), ca[x]);
        }
    }
    ((h_b - h_b_given_a) / h_b).clamp(0.0, 1.0)
}

/// Pair score for columns `(a, b)`. `Ok(None)` when the pair is skipped
/// (mixed kinds or an undefined correlation).
pub fn fidelity_row(
    real_a: &ColumnData,
    real_b: &ColumnData,
    synth_a: &ColumnData,
    synth_b: &ColumnData,
) -> Result<Option<f64>> {
    if real_a.len() < 2 || synth_a.len() < 2 {
        return Err(Error::Eval("need at least two rows per table".into()));
    }
    match (real_a, real_b, synth_a, synth_b) {
        (ColumnData::Numeric(ra), ColumnData::Numeric(rb), ColumnData::Numeric(sa), ColumnData::Numeric(sb)) => {
            match (pearson(ra, rb), pearson(sa, sb)) {
                (Some(r), Some(s)) => Ok(Some((1.0 - (r - s).abs() / 2.0).clamp(0.0, 1.0))),
                _ => Ok(None),
            }
        }
        (
            ColumnData::Categorical(ra),
            ColumnData::Categorical(rb),
            ColumnData::Categorical(sa),
            ColumnData::Categorical(sb),
        ) => Ok(Some((1.0 - (theils_u(ra, rb) - theils_u(sa, sb)).abs()).clamp(0.0, 1.0))),
        _ => Ok(None),
    }
}

/// Column and row fidelity of `synth` against `real`.
///
/// With no scorable pair, row fidelity is vacuously 1.
pub fn fidelity(real: &Dataset, synth: &Dataset, schema: &TableSchema) -> Result<FidelityReport> {
    if real.columns.len() != schema.columns.len() || synth.columns.len() != schema.columns.len() {
        return Err(Error::Eval("tables do not match the schema".into()));
    }
    let mut warnings = Vec::new();
    let mut columns = Vec::new();
    for (i, spec) in schema.columns.iter().enumerate() {
        match fidelity_column(&real.columns[i], &synth.columns[i]) {
            Ok(score) => columns.push(ColumnScore { column: spec.name.clone(), score }),
            Err(e) => warnings.push(format!("column `{}` skipped: {e}", spec.name)),
        }
    }
    let mut pairs = Vec::new();
    for a in 0..schema.columns.len() {
        for b in a + 1..schema.columns.len() {
            let (na, nb) = (&schema.columns[a].name, &schema.columns[b].name);
            match fidelity_row(&real.columns[a], &real.columns[b], &synth.columns[a], &synth.columns[b])? {
                Some(score) => pairs.push(PairScore { a: na.clone(), b: nb.clone(), score }),
                None if schema.columns[a].kind == schema.columns[b].kind => {
                    warnings.push(format!("pair ({na}, {nb}) skipped: undefined correlation"))
                }
                None => {}
            }
        }
    }
    if columns.is_empty() {
        return Err(Error::Eval("no column could be scored".into()));
    }
    let omega_col = columns.iter().map(|c| c.score).sum::<f64>() / columns.len() as f64;
    let omega_row = if pairs.is_empty() {
        1.0
    } else {
        pairs.iter().map(|p| p.score).sum::<f64>() / pairs.len() as f64
    };
    Ok(FidelityReport { columns, pairs, omega_col, omega_row, omega_total: 0.5 * (omega_col + omega_row), warnings })
}
