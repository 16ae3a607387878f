use crate::diffusion::{DiffusionSchedule, LossKind};
use crate::error::{Error, Result};
use crate::model::{Model, TrainingExample};

/// One gradient vector per example, each covering denoiser and embedding
/// parameters. Computed by independent single-example backprop.
pub fn per_sample_grads(
    model: &Model,
    batch: &[TrainingExample],
    loss: LossKind,
    schedule: &DiffusionSchedule,
) -> Result<Vec<Vec<f64>>> {
    if batch.is_empty() {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    let mut ws = model.workspace();
    batch
        .iter()
        .enumerate()
        .map(|(i, ex)| {
            let mut g = vec![0.0; model.n_params()];
            let value = model.example_grad(ex, loss, schedule, &mut ws, &mut g)?;
            if !value.is_finite() {
                return Err(Error::NonFiniteLoss { index: i });
            }
            Ok(g)
        })
        .collect()
}
