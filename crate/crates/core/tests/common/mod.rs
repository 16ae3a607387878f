#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StudentT};
use tabdp_core::codec::{ColumnData, ColumnSpec, Dataset, TableSchema};
use tabdp_core::pipeline::RunConfig;

pub const CLASSES: [&str; 2] = ["a", "b"];

/// Two-component Gaussian mixture: `x1`, `x2` numeric and `y` the component.
/// Component `b` has weight 0.35. The components overlap enough that a
/// Bayes classifier reaches an AUC of about 0.95, not 1.
pub fn mixture(n: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 1.5).unwrap();
    let (mut x1, mut x2, mut y) = (Vec::new(), Vec::new(), Vec::new());
    for _ in 0..n {
        let c = usize::from(rng.random::<f64>() < 0.35);
        let (m1, m2) = if c == 1 { (2.0, 1.5) } else { (-1.0, -0.5) };
        x1.push(m1 + noise.sample(&mut rng));
        x2.push(m2 + noise.sample(&mut rng));
        y.push(c);
    }
    Dataset { columns: vec![ColumnData::Numeric(x1), ColumnData::Numeric(x2), ColumnData::Categorical(y)] }
}

/// As [`mixture`] but `x2` carries Student-t (2 dof) noise.
pub fn heavy_tailed(n: usize, seed: u64) -> Dataset {
    let mut data = mixture(n, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xdead);
    let t = StudentT::new(2.0).unwrap();
    if let ColumnData::Numeric(x2) = &mut data.columns[1] {
        for v in x2.iter_mut() {
            *v += t.sample(&mut rng);
        }
    }
    data
}

/// [`heavy_tailed`] plus two categorical features: `c1` (four levels, tied to
/// the component) and `c2` (three levels, independent).
pub fn mixed_heavy_tailed(n: usize, seed: u64) -> Dataset {
    let mut data = heavy_tailed(n, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xbeef);
    let y = data.columns[2].as_categorical().unwrap().to_vec();
    let c1 = y
        .iter()
        .map(|&c| if rng.random::<f64>() < 0.8 { 2 * c + rng.random_range(0..2) } else { rng.random_range(0..4) })
        .collect();
    let c2 = (0..n).map(|_| rng.random_range(0..3)).collect();
    data.columns.insert(2, ColumnData::Categorical(c1));
    data.columns.insert(3, ColumnData::Categorical(c2));
    data
}

pub fn mixed_schema() -> TableSchema {
    TableSchema::new(
        vec![
            ColumnSpec::numeric("x1"),
            ColumnSpec::numeric("x2"),
            ColumnSpec::categorical("c1", ["p", "q", "r", "s"]),
            ColumnSpec::categorical("c2", ["u", "v", "w"]),
            ColumnSpec::categorical("y", CLASSES),
        ],
        Some("y".to_string()),
    )
    .unwrap()
}

pub fn schema(labelled: bool) -> TableSchema {
    TableSchema::new(
        vec![ColumnSpec::numeric("x1"), ColumnSpec::numeric("x2"), ColumnSpec::categorical("y", CLASSES)],
        labelled.then(|| "y".to_string()),
    )
    .unwrap()
}

/// Uniform noise over the real ranges with random labels.
pub fn noise_like(real: &Dataset, n: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let columns = real
        .columns
        .iter()
        .map(|c| match c {
            ColumnData::Numeric(v) => {
                let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                ColumnData::Numeric((0..n).map(|_| rng.random_range(lo..=hi)).collect())
            }
            ColumnData::Categorical(v) => {
                let k = v.iter().max().map_or(1, |m| m + 1).max(2);
                ColumnData::Categorical((0..n).map(|_| rng.random_range(0..k)).collect())
            }
        })
        .collect();
    Dataset { columns }
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// A small, fast configuration for pipeline tests.
pub fn small_config(seed: u64) -> RunConfig {
    let mut c = RunConfig { seed, ..RunConfig::default() };
    c.model.hidden = 16;
    c.model.d_time = 8;
    c.model.steps = 20;
    c.training.epochs = 4;
    c.training.batch_size = 32;
    c.privacy.epsilon = Some(5.0);
    c
}
