//! Gaussian diffusion in embedding space: schedule, denoiser, losses,
//! forward perturbation and ancestral sampling.

mod denoiser;
mod loss;
mod process;
mod schedule;

pub use denoiser::{timestep_embedding, Activations, Denoiser, DenoiserConfig};
pub use loss::{loss_fa, loss_mse, LossKind};
pub use process::{
    forward_noise, noised, posterior_mean, reverse_step, reverse_step_with, sample, sample_embeddings,
    standard_normal_vec, LabelSource, NoisePair,
};
pub use schedule::DiffusionSchedule;
