//! Rényi-DP accounting for the Poisson-subsampled Gaussian mechanism.
//!
//! Per-step RDP at each order is computed with the exact series for integer
//! orders and the two-sided erfc series for fractional orders, composed
//! linearly over steps and converted to `(epsilon, delta)` with the
//! `log((a-1)/a) - (log delta + log a)/(a-1)` bound.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

/// Lower and upper ends of the noise-multiplier search.
pub const SIGMA_SEARCH_MIN: f64 = 0.3;
pub const SIGMA_SEARCH_MAX: f64 = 100.0;

/// Orders 1.25, 1.5, ..., 64.
pub fn default_orders() -> Vec<f64> {
    (5..=256).map(|i| i as f64 * 0.25).collect()
}

fn log_add(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    if lo == f64::NEG_INFINITY {
        return hi;
    }
    hi + (lo - hi).exp().ln_1p()
}

fn log_sub(a: f64, b: f64) -> f64 {
    if b == f64::NEG_INFINITY {
        return a;
    }
    if a <= b {
        return f64::NEG_INFINITY;
    }
    a + (-(b - a).exp()).ln_1p()
}

fn log_erfc(x: f64) -> f64 {
    if x < 20.0 {
        erfc(x).ln()
    } else {
        let x2 = x * x;
        let series = 1.0 - 1.0 / (2.0 * x2) + 3.0 / (4.0 * x2 * x2) - 15.0 / (8.0 * x2 * x2 * x2);
        -x2 - x.ln() - 0.5 * std::f64::consts::PI.ln() + series.ln()
    }
}

fn ln_binom_int(n: u64, k: u64) -> f64 {
    ln_gamma(n as f64 + 1.0) - ln_gamma(k as f64 + 1.0) - ln_gamma((n - k) as f64 + 1.0)
}

fn log_a_int(q: f64, sigma: f64, alpha: u64) -> f64 {
    let mut log_a = f64::NEG_INFINITY;
    for i in 0..=alpha {
        let fi = i as f64;
        let coef = ln_binom_int(alpha, i) + fi * q.ln() + (alpha - i) as f64 * (1.0 - q).ln();
        log_a = log_add(log_a, coef + (fi * fi - fi) / (2.0 * sigma * sigma));
    }
    log_a
}

fn log_a_frac(q: f64, sigma: f64, alpha: f64) -> f64 {
    let (mut log_a0, mut log_a1) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    let z0 = sigma * sigma * (1.0 / q - 1.0).ln() + 0.5;
    let s2 = 2.0 * sigma * sigma;
    let sqrt2_sigma = std::f64::consts::SQRT_2 * sigma;
    let mut coef = 1.0f64;
    let mut i = 0u64;
    loop {
        let fi = i as f64;
        let j = alpha - fi;
        let log_coef = coef.abs().ln();
        let log_t0 = log_coef + fi * q.ln() + j * (1.0 - q).ln();
        let log_t1 = log_coef + j * q.ln() + fi * (1.0 - q).ln();
        let log_e0 = 0.5f64.ln() + log_erfc((fi - z0) / sqrt2_sigma);
        let log_e1 = 0.5f64.ln() + log_erfc((z0 - j) / sqrt2_sigma);
        let log_s0 = log_t0 + (fi * fi - fi) / s2 + log_e0;
        let log_s1 = log_t1 + (j * j - j) / s2 + log_e1;
        if coef > 0.0 {
            log_a0 = log_add(log_a0, log_s0);
            log_a1 = log_add(log_a1, log_s1);
        } else {
            log_a0 = log_sub(log_a0, log_s0);
            log_a1 = log_sub(log_a1, log_s1);
        }
        i += 1;
        if log_s0.max(log_s1) < -30.0 || i > 100_000 {
            break;
        }
        coef *= (alpha - fi) / i as f64;
    }
    log_add(log_a0, log_a1)
}

/// RDP of one step of the subsampled Gaussian mechanism at order `alpha`.
pub fn rdp_subsampled_gaussian(q: f64, sigma: f64, alpha: f64) -> f64 {
    if q == 0.0 {
        return 0.0;
    }
    if sigma == 0.0 {
        return f64::INFINITY;
    }
    if q == 1.0 {
        return alpha / (2.0 * sigma * sigma);
    }
    let log_a = if alpha.fract() == 0.0 {
        log_a_int(q, sigma, alpha as u64)
    } else {
        log_a_frac(q, sigma, alpha)
    };
    log_a / (alpha - 1.0)
}

/// Best `(epsilon, order)` over the order grid for total RDP values `rdp`.
pub fn rdp_to_epsilon(orders: &[f64], rdp: &[f64], delta: f64) -> (f64, f64) {
    let mut best = (f64::INFINITY, f64::NAN);
    for (&a, &r) in orders.iter().zip(rdp) {
        if !r.is_finite() {
            continue;
        }
        let eps = r + ((a - 1.0) / a).ln() - (delta.ln() + a.ln()) / (a - 1.0);
        if eps < best.0 {
            best = (eps, a);
        }
    }
    (best.0.max(0.0), best.1)
}

/// `epsilon` after `steps` compositions at fixed `(sigma, q)`.
pub fn epsilon_for(sigma: f64, q: f64, steps: usize, delta: f64) -> f64 {
    let orders = default_orders();
    let rdp: Vec<f64> = orders.iter().map(|&a| steps as f64 * rdp_subsampled_gaussian(q, sigma, a)).collect();
    rdp_to_epsilon(&orders, &rdp, delta).0
}

/// Privacy state of one training run at fixed `(sigma, q)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrivacyLedger {
    pub noise_multiplier: f64,
    pub sampling_rate: f64,
    pub steps_taken: usize,
    pub max_steps: Option<usize>,
    pub orders: Vec<f64>,
    /// Per-step RDP at each order.
    pub rdp_per_step: Vec<f64>,
    /// Accumulated RDP at each order.
    pub rdp_total: Vec<f64>,
}

impl PrivacyLedger {
    pub fn new(noise_multiplier: f64, sampling_rate: f64, max_steps: Option<usize>) -> Result<Self> {
        if !(noise_multiplier >= 0.0) || !(sampling_rate > 0.0 && sampling_rate <= 1.0) {
            return Err(Error::Config(format!(
                "invalid ledger parameters sigma={noise_multiplier}, q={sampling_rate}"
            )));
        }
        let orders = default_orders();
        let rdp_per_step: Vec<f64> =
            orders.iter().map(|&a| rdp_subsampled_gaussian(sampling_rate, noise_multiplier, a)).collect();
        let rdp_total = vec![0.0; orders.len()];
        Ok(Self { noise_multiplier, sampling_rate, steps_taken: 0, max_steps, orders, rdp_per_step, rdp_total })
    }

    pub fn check_budget(&self) -> Result<()> {
        match self.max_steps {
            Some(max) if self.steps_taken >= max => {
                Err(Error::BudgetExceeded { steps_taken: self.steps_taken, max_steps: max })
            }
            _ => Ok(()),
        }
    }

    pub fn is_exhausted(&self) -> bool {
        self.check_budget().is_err()
    }

    /// Record one release.
    pub fn step(&mut self) -> Result<()> {
        self.check_budget()?;
        self.steps_taken += 1;
        let n = self.steps_taken as f64;
        for (total, per) in self.rdp_total.iter_mut().zip(&self.rdp_per_step) {
            *total = n * per;
        }
        Ok(())
    }

    pub fn epsilon(&self, delta: f64) -> f64 {
        if self.steps_taken == 0 {
            return 0.0;
        }
        rdp_to_epsilon(&self.orders, &self.rdp_total, delta).0
    }
}

/// Result of a noise-multiplier search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Calibration {
    pub sigma: f64,
    pub epsilon: f64,
    /// The target was met even at the smallest searched sigma.
    pub at_lower_bound: bool,
}

/// Smallest sigma in `[0.3, 100]` (to bisection tolerance) whose epsilon
/// after `steps` does not exceed `epsilon_target`.
pub fn calibrate_sigma(epsilon_target: f64, delta: f64, q: f64, steps: usize) -> Result<Calibration> {
    if !(epsilon_target > 0.0) || !(delta > 0.0 && delta < 1.0) || !(q > 0.0 && q <= 1.0) || steps == 0 {
        return Err(Error::Calibration(format!(
            "invalid inputs epsilon={epsilon_target}, delta={delta}, q={q}, steps={steps}"
        )));
    }
    let eps_of = |s: f64| epsilon_for(s, q, steps, delta);
    let eps_lo = eps_of(SIGMA_SEARCH_MIN);
    if eps_lo <= epsilon_target {
        return Ok(Calibration { sigma: SIGMA_SEARCH_MIN, epsilon: eps_lo, at_lower_bound: true });
    }
    let eps_hi = eps_of(SIGMA_SEARCH_MAX);
    if eps_hi > epsilon_target {
        return Err(Error::Calibration(format!(
            "epsilon {epsilon_target} unreachable: sigma={SIGMA_SEARCH_MAX} still gives {eps_hi:.4}"
        )));
    }
    let (mut lo, mut hi, mut eps_at_hi) = (SIGMA_SEARCH_MIN, SIGMA_SEARCH_MAX, eps_hi);
    while hi - lo > 1e-6 * hi {
        let mid = 0.5 * (lo + hi);
        let e = eps_of(mid);
        if e > epsilon_target {
            lo = mid;
        } else {
            hi = mid;
            eps_at_hi = e;
        }
    }
    Ok(Calibration { sigma: hi, epsilon: eps_at_hi, at_lower_bound: false })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn orders_grid() {
        let o = default_orders();
        assert_eq!(o.first(), Some(&1.25));
        assert_eq!(o.last(), Some(&64.0));
        assert_eq!(o.len(), 252);
    }

    #[test]
    fn integer_and_fractional_series_agree_nearby() {
        // RDP is continuous in the order; compare order 8 against 8 +/- tiny.
        let (q, s) = (0.01, 1.1);
        let r8 = rdp_subsampled_gaussian(q, s, 8.0);
        let r8a = rdp_subsampled_gaussian(q, s, 8.0 + 1e-7);
        let r8b = rdp_subsampled_gaussian(q, s, 8.0 - 1e-7);
        assert!((r8 - r8a).abs() / r8 < 1e-4, "{r8} vs {r8a}");
        assert!((r8 - r8b).abs() / r8 < 1e-4, "{r8} vs {r8b}");
    }

    #[test]
    fn full_batch_is_plain_gaussian() {
        assert!((rdp_subsampled_gaussian(1.0, 2.0, 3.0) - 3.0 / 8.0).abs() < 1e-15);
    }

    #[test]
    fn high_noise_vanishes() {
        // floor set by the largest order, (ln(1/delta) - ln 64) / 63 ~ 0.11
        let e = epsilon_for(100.0, 0.01, 10_000, 1e-5);
        assert!(e < 0.13, "{e}");
        assert!(e < epsilon_for(10.0, 0.01, 10_000, 1e-5));
    }

    #[test]
    fn ledger_refuses_after_max() {
        let mut l = PrivacyLedger::new(1.0, 0.1, Some(2)).unwrap();
        l.step().unwrap();
        l.step().unwrap();
        assert!(matches!(l.step(), Err(Error::BudgetExceeded { .. })));
        assert_eq!(l.epsilon(1e-5), epsilon_for(1.0, 0.1, 2, 1e-5));
    }

    #[test]
    fn unreachable_target() {
        assert!(matches!(calibrate_sigma(1e-4, 1e-5, 1.0, 1000), Err(Error::Calibration(_))));
        let c = calibrate_sigma(1e6, 1e-5, 0.01, 10).unwrap();
        assert!(c.at_lower_bound && c.sigma == SIGMA_SEARCH_MIN);
    }
}
