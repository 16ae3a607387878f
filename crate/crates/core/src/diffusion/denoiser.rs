use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DenoiserConfig {
    /// Width of the diffused embedding.
    pub d: usize,
    pub hidden: usize,
    /// Width of the sinusoidal timestep embedding.
    pub d_time: usize,
    /// Number of label classes; 0 for an unconditional model.
    pub n_classes: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Layout {
    w1: usize,
    b1: usize,
    wt: usize,
    label: usize,
    w2: usize,
    b2: usize,
    w3: usize,
    b3: usize,
    len: usize,
}

impl Layout {
    fn new(c: &DenoiserConfig) -> Self {
        let (d, h, dt) = (c.d, c.hidden, c.d_time);
        let w1 = 0;
        let b1 = w1 + h * d;
        let wt = b1 + h;
        let label = wt + h * dt;
        let w2 = label + c.n_classes * dt;
        let b2 = w2 + h * h;
        let w3 = b2 + h;
        let b3 = w3 + d * h;
        let len = b3 + d;
        Self { w1, b1, wt, label, w2, b2, w3, b3, len }
    }
}

/// MLP noise predictor `eps_theta(z_t, t, y)`.
///
/// `h1 = silu(W1 z + b1 + Wt (time(t) + L[y]))`, `h2 = silu(W2 h1 + b2)`,
/// `out = W3 h2 + b3`. Parameters are stored flat; see [`Denoiser::params`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Denoiser {
    pub config: DenoiserConfig,
    pub params: Vec<f64>,
}

/// Intermediate values of one forward pass, reused by backprop.
#[derive(Debug, Clone, Default)]
pub struct Activations {
    input: Vec<f64>,
    cond: Vec<f64>,
    label: Option<usize>,
    h1_pre: Vec<f64>,
    h1: Vec<f64>,
    h2_pre: Vec<f64>,
    h2: Vec<f64>,
    pub out: Vec<f64>,
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[inline]
fn silu(x: f64) -> f64 {
    x * sigmoid(x)
}

#[inline]
fn silu_grad(x: f64) -> f64 {
    let s = sigmoid(x);
    s * (1.0 + x * (1.0 - s))
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Sinusoidal embedding of timestep `t` into `out`.
pub fn timestep_embedding(t: usize, out: &mut [f64]) {
    let half = out.len() / 2;
    out.fill(0.0);
    for i in 0..half {
        let freq = (-(10_000f64).ln() * i as f64 / half as f64).exp();
        let arg = t as f64 * freq;
        out[i] = arg.sin();
        out[half + i] = arg.cos();
    }
}

impl Denoiser {
    pub fn new<R: Rng + ?Sized>(config: DenoiserConfig, rng: &mut R) -> Result<Self> {
        if config.d == 0 || config.hidden == 0 || config.d_time == 0 {
            return Err(Error::InvalidArgument("denoiser dimensions must be positive".into()));
        }
        let l = Layout::new(&config);
        let mut params = vec![0.0; l.len];
        let mut uniform = |slice: &mut [f64], fan_in: usize| {
            let bound = 1.0 / (fan_in as f64).sqrt();
            for p in slice {
                *p = rng.random_range(-bound..bound);
            }
        };
        uniform(&mut params[l.w1..l.b1], config.d);
        uniform(&mut params[l.b1..l.wt], config.d);
        uniform(&mut params[l.wt..l.label], config.d_time);
        uniform(&mut params[l.w2..l.b2], config.hidden);
        uniform(&mut params[l.b2..l.w3], config.hidden);
        uniform(&mut params[l.w3..l.b3], config.hidden);
        uniform(&mut params[l.b3..l.len], config.hidden);
        for p in &mut params[l.label..l.w2] {
            *p = StandardNormal.sample(rng);
        }
        Ok(Self { config, params })
    }

    fn layout(&self) -> Layout {
        Layout::new(&self.config)
    }

    /// Wrap existing parameters, checking their count against the layout.
    pub fn from_params(config: DenoiserConfig, params: Vec<f64>) -> Result<Self> {
        let expected = Layout::new(&config).len;
        if params.len() != expected {
            return Err(Error::Shape { expected, actual: params.len() });
        }
        Ok(Self { config, params })
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    /// Zero the output layer, making the prediction identically zero.
    pub fn zero_output_layer(&mut self) {
        let l = self.layout();
        self.params[l.w3..l.len].fill(0.0);
    }

    pub fn new_activations(&self) -> Activations {
        let c = &self.config;
        Activations {
            input: vec![0.0; c.d],
            cond: vec![0.0; c.d_time],
            label: None,
            h1_pre: vec![0.0; c.hidden],
            h1: vec![0.0; c.hidden],
            h2_pre: vec![0.0; c.hidden],
            h2: vec![0.0; c.hidden],
            out: vec![0.0; c.d],
        }
    }

    fn check_inputs(&self, z_t: &[f64], label: Option<usize>) -> Result<()> {
        if z_t.len() != self.config.d {
            return Err(Error::Shape { expected: self.config.d, actual: z_t.len() });
        }
        if let Some(y) = label {
            if y >= self.config.n_classes {
                return Err(Error::InvalidArgument(format!(
                    "label {y} outside 0..{}",
                    self.config.n_classes
                )));
            }
        }
        Ok(())
    }

    /// Forward pass keeping activations for backprop. `acts.out` holds `eps_hat`.
    pub fn forward(&self, z_t: &[f64], t: usize, label: Option<usize>, acts: &mut Activations) -> Result<()> {
        self.check_inputs(z_t, label)?;
        let c = &self.config;
        let l = self.layout();
        let p = &self.params;
        let (d, h, dt) = (c.d, c.hidden, c.d_time);

        acts.input.copy_from_slice(z_t);
        acts.label = label;
        timestep_embedding(t, &mut acts.cond);
        if let Some(y) = label {
            axpy(1.0, &p[l.label + y * dt..l.label + (y + 1) * dt], &mut acts.cond);
        }
        for i in 0..h {
            let pre = p[l.b1 + i]
                + dot(&p[l.w1 + i * d..l.w1 + (i + 1) * d], z_t)
                + dot(&p[l.wt + i * dt..l.wt + (i + 1) * dt], &acts.cond);
            acts.h1_pre[i] = pre;
            acts.h1[i] = silu(pre);
        }
        for i in 0..h {
            let pre = p[l.b2 + i] + dot(&p[l.w2 + i * h..l.w2 + (i + 1) * h], &acts.h1);
            acts.h2_pre[i] = pre;
            acts.h2[i] = silu(pre);
        }
        for i in 0..d {
            acts.out[i] = p[l.b3 + i] + dot(&p[l.w3 + i * h..l.w3 + (i + 1) * h], &acts.h2);
        }
        Ok(())
    }

    /// Predict the noise in `z_t`.
    pub fn denoise(&self, z_t: &[f64], t: usize, label: Option<usize>) -> Result<Vec<f64>> {
        let mut acts = self.new_activations();
        self.forward(z_t, t, label, &mut acts)?;
        Ok(acts.out)
    }

    /// Backprop `g_out = dL/d eps_hat` through the last forward pass.
    ///
    /// Parameter gradients are added into `grad` (length `n_params`); the
    /// input gradient `dL/dz_t` is written to `g_input`. `scratch` must have
    /// room for two hidden-width vectors.
    pub fn backward(&self, acts: &Activations, g_out: &[f64], grad: &mut [f64], g_input: &mut [f64], scratch: &mut Vec<f64>) {
        let c = &self.config;
        let l = self.layout();
        let p = &self.params;
        let (d, h, dt) = (c.d, c.hidden, c.d_time);
        scratch.clear();
        scratch.resize(2 * h, 0.0);
        let (g_h2, g_h1) = scratch.split_at_mut(h);

        // output layer
        for i in 0..d {
            let g = g_out[i];
            grad[l.b3 + i] += g;
            axpy(g, &acts.h2, &mut grad[l.w3 + i * h..l.w3 + (i + 1) * h]);
            axpy(g, &p[l.w3 + i * h..l.w3 + (i + 1) * h], g_h2);
        }
        for i in 0..h {
            g_h2[i] *= silu_grad(acts.h2_pre[i]);
        }

        // second hidden layer
        for i in 0..h {
            let g = g_h2[i];
            grad[l.b2 + i] += g;
            axpy(g, &acts.h1, &mut grad[l.w2 + i * h..l.w2 + (i + 1) * h]);
            axpy(g, &p[l.w2 + i * h..l.w2 + (i + 1) * h], g_h1);
        }
        for i in 0..h {
            g_h1[i] *= silu_grad(acts.h1_pre[i]);
        }

        // first layer, timestep projection, label table
        g_input.fill(0.0);
        for i in 0..h {
            let g = g_h1[i];
            if g == 0.0 {
                continue;
            }
            grad[l.b1 + i] += g;
            axpy(g, &acts.input, &mut grad[l.w1 + i * d..l.w1 + (i + 1) * d]);
            axpy(g, &acts.cond, &mut grad[l.wt + i * dt..l.wt + (i + 1) * dt]);
            axpy(g, &p[l.w1 + i * d..l.w1 + (i + 1) * d], g_input);
            if let Some(y) = acts.label {
                let (wt_row, lab) = (l.wt + i * dt, l.label + y * dt);
                for k in 0..dt {
                    grad[lab + k] += g * p[wt_row + k];
                }
            }
        }
    }
}
