//! Fixtures shared by the benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tabdp_core::codec::{ColumnSpec, EmbeddingSpace, TableSchema};
use tabdp_core::diffusion::{forward_noise, Denoiser, DenoiserConfig, DiffusionSchedule};
use tabdp_core::model::{Model, TrainingExample};

/// Two numeric columns, one 4-way categorical and a binary label.
pub fn schema() -> TableSchema {
    TableSchema::new(
        vec![
            ColumnSpec::numeric("x1"),
            ColumnSpec::numeric("x2"),
            ColumnSpec::categorical("c", ["a", "b", "c", "d"]),
            ColumnSpec::categorical("y", ["0", "1"]),
        ],
        Some("y".into()),
    )
    .expect("valid schema")
}

pub fn model(hidden: usize, seed: u64) -> Model {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let schema = schema();
    let embeddings = EmbeddingSpace::init(&schema, 2, &mut rng).expect("embedding");
    let cfg = DenoiserConfig { d: embeddings.width(), hidden, d_time: 64, n_classes: 2 };
    Model { net: Denoiser::new(cfg, &mut rng).expect("denoiser"), embeddings }
}

pub fn batch(model: &Model, schedule: &DiffusionSchedule, n: usize, seed: u64) -> Vec<TrainingExample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let num = vec![rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
            let cat = vec![rng.random_range(0..4)];
            let z0 = model.encode_row(&num, &cat);
            let t = rng.random_range(1..=schedule.steps());
            let pair = forward_noise(&z0, t, Some(rng.random_range(0..2)), schedule, &mut rng).expect("valid t");
            TrainingExample { num, cat, pair, weight: 1.0 }
        })
        .collect()
}
