use serde::{Deserialize, Serialize};

/// Per-sample reconstruction loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    /// Mean of squared errors over features.
    #[default]
    Mse,
    /// Sum of squared errors over features (feature-aggregated).
    Fa,
}

impl LossKind {
    /// Loss value and `dL/d eps_hat` written into `grad`.
    pub fn value_and_grad(self, eps: &[f64], eps_hat: &[f64], grad: &mut [f64]) -> f64 {
        let scale = match self {
            LossKind::Mse => 1.0 / eps.len() as f64,
            LossKind::Fa => 1.0,
        };
        let mut total = 0.0;
        for ((g, e), p) in grad.iter_mut().zip(eps).zip(eps_hat) {
            let r = e - p;
            total += r * r;
            *g = -2.0 * scale * r;
        }
        total * scale
    }

    pub fn value(self, eps: &[f64], eps_hat: &[f64]) -> f64 {
        match self {
            LossKind::Mse => loss_mse(eps, eps_hat),
            LossKind::Fa => loss_fa(eps, eps_hat),
        }
    }
}

impl std::str::FromStr for LossKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mse" => Ok(LossKind::Mse),
            "fa" => Ok(LossKind::Fa),
            other => Err(format!("unknown loss `{other}` (expected mse or fa)")),
        }
    }
}

pub fn loss_mse(eps: &[f64], eps_hat: &[f64]) -> f64 {
    loss_fa(eps, eps_hat) / eps.len() as f64
}

pub fn loss_fa(eps: &[f64], eps_hat: &[f64]) -> f64 {
    eps.iter().zip(eps_hat).map(|(a, b)| (a - b) * (a - b)).sum()
}
