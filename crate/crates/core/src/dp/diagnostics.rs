use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Moments of per-sample gradient norms within one epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradNormStats {
    pub count: usize,
    pub mean: f64,
    pub variance: f64,
    /// `variance / mean^2`.
    pub relative_variance: f64,
    pub skewness: f64,
    pub fraction_clipped: f64,
}

/// Population moments of `norms`; skewness is the standardized third moment.
pub fn grad_norm_diagnostics(norms: &[f64], clip_norm: f64) -> Result<GradNormStats> {
    if norms.len() < 2 {
        return Err(Error::InvalidArgument("need at least two gradient norms".into()));
    }
    let n = norms.len() as f64;
    let mean = norms.iter().sum::<f64>() / n;
    let (mut m2, mut m3) = (0.0, 0.0);
    for &x in norms {
        let d = x - mean;
        m2 += d * d;
        m3 += d * d * d;
    }
    m2 /= n;
    m3 /= n;
    let relative_variance = if mean != 0.0 { m2 / (mean * mean) } else { 0.0 };
    let skewness = if m2 > 0.0 { m3 / m2.powf(1.5) } else { 0.0 };
    let clipped = norms.iter().filter(|&&x| x > clip_norm).count();
    Ok(GradNormStats {
        count: norms.len(),
        mean,
        variance: m2,
        relative_variance,
        skewness,
        fraction_clipped: clipped as f64 / n,
    })
}
