//! Differentially private diffusion model for mixed-type tables.
//!
//! Records are embedded into a continuous space ([`codec`]), a denoising
//! diffusion model is trained on the embeddings ([`diffusion`]) with
//! DP-SGD ([`dp`]) and an adaptive timestep sampler ([`at_sampler`]), and
//! synthetic tables are scored by [`eval`]. [`pipeline`] ties it together.

pub mod at_sampler;
pub mod codec;
pub mod diffusion;
pub mod dp;
pub mod error;
pub mod eval;
pub mod model;
pub mod pipeline;

pub use at_sampler::{ATSamplerState, SamplerKind};
pub use codec::{Dataset, EmbeddingSpace, RawTable, ScalerParams, TableSchema};
pub use diffusion::{Denoiser, DenoiserConfig, DiffusionSchedule, LabelSource, LossKind};
pub use dp::{DpConfig, PrivacyLedger};
pub use error::{Error, ErrorKind, Result};
pub use eval::EvalReport;
pub use model::Model;
pub use pipeline::{Checkpoint, RunConfig, Trainer};
