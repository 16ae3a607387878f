use std::io::{Read, Write};
use std::path::Path;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::train::{DpSetup, TrainState};
use crate::at_sampler::ATSamplerState;
use crate::codec::{EmbeddingSpace, ScalerParams, TableSchema};
use crate::diffusion::{Denoiser, DenoiserConfig};
use crate::dp::{Adam, PrivacyLedger};
use crate::error::{Error, Result};
use crate::model::Model;

const MAGIC: &[u8; 8] = b"TABDPCKP";
pub const FORMAT_VERSION: u32 = 1;

/// A complete snapshot of a run: enough to resume training bit-exactly or
/// to generate records without the training data.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: RunConfig,
    pub schema: TableSchema,
    pub scaler: ScalerParams,
    pub dp: Option<DpSetup>,
    pub state: TrainState,
}

#[derive(Debug, Serialize, Deserialize)]
struct Section {
    name: String,
    len: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    format_version: u32,
    config: RunConfig,
    schema: TableSchema,
    scaler: ScalerParams,
    dp: Option<DpSetup>,
    net_config: DenoiserConfig,
    d_e: usize,
    d_num: usize,
    vocab_sizes: Vec<usize>,
    adam_lr: f64,
    adam_beta1: f64,
    adam_beta2: f64,
    adam_eps: f64,
    adam_step: u64,
    ledger: Option<PrivacyLedger>,
    sampler: ATSamplerState,
    epochs_done: usize,
    rng: ChaCha8Rng,
    sections: Vec<Section>,
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

impl Checkpoint {
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let st = &self.state;
        let mut blocks: Vec<(&str, &[f64])> = vec![
            ("net", &st.model.net.params),
            ("embeddings", &st.model.embeddings.params),
            ("adam_m", &st.adam.m),
            ("adam_v", &st.adam.v),
        ];
        if let Some(ema) = &st.ema {
            blocks.push(("ema", ema));
        }
        let manifest = Manifest {
            format_version: FORMAT_VERSION,
            config: self.config.clone(),
            schema: self.schema.clone(),
            scaler: self.scaler.clone(),
            dp: self.dp.clone(),
            net_config: st.model.net.config,
            d_e: st.model.embeddings.d_e,
            d_num: st.model.embeddings.d_num,
            vocab_sizes: st.model.embeddings.vocab_sizes.clone(),
            adam_lr: st.adam.lr,
            adam_beta1: st.adam.beta1,
            adam_beta2: st.adam.beta2,
            adam_eps: st.adam.eps,
            adam_step: st.adam.step,
            ledger: st.ledger.clone(),
            sampler: st.sampler.clone(),
            epochs_done: st.epochs_done,
            rng: st.rng.clone(),
            sections: blocks.iter().map(|(n, b)| Section { name: (*n).to_string(), len: b.len() }).collect(),
        };
        let json = serde_json::to_vec(&manifest)?;
        w.write_all(MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        w.write_all(&(json.len() as u64).to_le_bytes())?;
        w.write_all(&json)?;
        for (_, block) in blocks {
            let mut buf = Vec::with_capacity(block.len() * 8);
            for x in block {
                buf.extend_from_slice(&x.to_le_bytes());
            }
            w.write_all(&buf)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(|_| bad("file too short"))?;
        if &magic != MAGIC {
            return Err(bad("not a checkpoint file"));
        }
        let mut word = [0u8; 4];
        r.read_exact(&mut word)?;
        let version = u32::from_le_bytes(word);
        if version != FORMAT_VERSION {
            return Err(bad(format!("unsupported format version {version} (expected {FORMAT_VERSION})")));
        }
        let mut len = [0u8; 8];
        r.read_exact(&mut len)?;
        let len = usize::try_from(u64::from_le_bytes(len)).map_err(|_| bad("manifest too large"))?;
        let mut json = vec![0u8; len];
        r.read_exact(&mut json).map_err(|_| bad("truncated manifest"))?;
        let m: Manifest = serde_json::from_slice(&json)?;
        if m.format_version != version {
            return Err(bad("manifest version disagrees with header"));
        }

        let mut blocks = Vec::with_capacity(m.sections.len());
        for s in &m.sections {
            let mut bytes = vec![0u8; s.len * 8];
            r.read_exact(&mut bytes).map_err(|_| bad(format!("truncated section `{}`", s.name)))?;
            let values: Vec<f64> =
                bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk"))).collect();
            blocks.push((s.name.as_str(), values));
        }
        let mut trailing = [0u8; 1];
        if r.read(&mut trailing)? != 0 {
            return Err(bad("trailing bytes after last section"));
        }
        let mut take = |name: &str| -> Result<Vec<f64>> {
            let i = blocks.iter().position(|(n, _)| *n == name).ok_or_else(|| bad(format!("missing section `{name}`")))?;
            Ok(std::mem::take(&mut blocks[i].1))
        };
        let net_params = take("net")?;
        let emb_params = take("embeddings")?;
        let adam_m = take("adam_m")?;
        let adam_v = take("adam_v")?;
        let ema = m.sections.iter().any(|s| s.name == "ema").then(|| take("ema")).transpose()?;

        let net = Denoiser::from_params(m.net_config, net_params)?;
        let embeddings = EmbeddingSpace { d_e: m.d_e, d_num: m.d_num, vocab_sizes: m.vocab_sizes, params: emb_params };
        let expected_emb = (embeddings.d_num + embeddings.vocab_sizes.iter().sum::<usize>()) * embeddings.d_e;
        if embeddings.params.len() != expected_emb {
            return Err(bad("embedding section has the wrong length"));
        }
        if embeddings.width() != net.config.d {
            return Err(bad("embedding width does not match the denoiser"));
        }
        let model = Model { net, embeddings };
        let n = model.n_params();
        if adam_m.len() != n || adam_v.len() != n {
            return Err(bad("optimizer state does not match the parameter count"));
        }
        if ema.as_ref().is_some_and(|e| e.len() != n) {
            return Err(bad("weight average does not match the parameter count"));
        }
        let adam = Adam {
            lr: m.adam_lr,
            beta1: m.adam_beta1,
            beta2: m.adam_beta2,
            eps: m.adam_eps,
            step: m.adam_step,
            m: adam_m,
            v: adam_v,
        };
        m.schema.validate()?;
        let state = TrainState {
            model,
            adam,
            ledger: m.ledger,
            sampler: m.sampler,
            epochs_done: m.epochs_done,
            rng: m.rng,
            ema,
        };
        Ok(Self { config: m.config, schema: m.schema, scaler: m.scaler, dp: m.dp, state })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_to(std::io::BufWriter::new(f))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        Self::read_from(std::io::BufReader::new(f))
    }
}
