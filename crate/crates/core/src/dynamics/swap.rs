use serde::{Deserialize, Serialize};

use super::TemperatureLadder;
use crate::error::{Error, Result};

/// Exponents are clamped to `±EXPONENT_LIMIT` before `exp`, so statistics
/// saturate at `exp(700) ≈ 1.0e304` instead of overflowing.
pub const EXPONENT_LIMIT: f64 = 700.0;

/// Swap configuration for plain and multi-variance (m-repCNLD) exchange.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SwapPolicy {
    pub correction_enabled: bool,
    /// `r_σ = σ̃² / σ_o²`.
    pub variance_ratio: f64,
    /// `n_d`, the number of observations.
    pub obs_count: usize,
}

impl Default for SwapPolicy {
    fn default() -> Self {
        Self::plain()
    }
}

impl SwapPolicy {
    pub fn plain() -> Self {
        Self {
            correction_enabled: false,
            variance_ratio: 0.0,
            obs_count: 0,
        }
    }

    pub fn corrected(variance_ratio: f64, obs_count: usize) -> Self {
        Self {
            correction_enabled: true,
            variance_ratio,
            obs_count,
        }
    }

    /// `1 / (τ_δ² + τ_δ)`; infinite when `τ_δ = 0`.
    pub fn admissibility_bound(ladder: &TemperatureLadder) -> f64 {
        let t = ladder.tau_delta;
        1.0 / (t * t + t)
    }

    pub fn validate(&self, ladder: &TemperatureLadder) -> Result<()> {
        if !(self.variance_ratio >= 0.0 && self.variance_ratio.is_finite()) {
            return Err(Error::Config(format!(
                "variance_ratio must be finite and nonnegative, got {}",
                self.variance_ratio
            )));
        }
        if self.correction_enabled {
            let bound = Self::admissibility_bound(ladder);
            if self.variance_ratio >= bound {
                return Err(Error::Precondition(format!(
                    "variance_ratio {} violates r_sigma < 1/(tau_delta^2 + tau_delta) = {bound}",
                    self.variance_ratio
                )));
            }
        }
        Ok(())
    }

    /// `(n_d/2) log[1 − (τ_δ + τ_δ²) r_σ]`.
    pub fn log_correction(&self, ladder: &TemperatureLadder) -> f64 {
        let t = ladder.tau_delta;
        0.5 * self.obs_count as f64 * (1.0 - (t + t * t) * self.variance_ratio).ln()
    }
}

fn finite_energies(u1: f64, u2: f64) -> Result<()> {
    if u1.is_finite() && u2.is_finite() {
        Ok(())
    } else {
        Err(Error::Numerical(format!(
            "swap statistic needs finite energies, got {u1} and {u2}"
        )))
    }
}

fn clamped_exp(x: f64) -> f64 {
    x.clamp(-EXPONENT_LIMIT, EXPONENT_LIMIT).exp()
}

/// `S = exp(τ_δ (U₁ − U₂))` with the exponent clamped.
pub fn swap_statistic(u1: f64, u2: f64, ladder: &TemperatureLadder) -> Result<f64> {
    finite_energies(u1, u2)?;
    if ladder.tau_delta == 0.0 {
        return Ok(1.0);
    }
    Ok(clamped_exp(ladder.tau_delta * (u1 - u2)))
}

/// `S̃_m = [1 − (τ_δ + τ_δ²) r_σ]^{n_d/2} exp(τ_δ (U₁ − Ũ₂))`, evaluated in
/// log space with one clamp on the total exponent.
pub fn corrected_swap_statistic(
    u1: f64,
    u2_tilde: f64,
    ladder: &TemperatureLadder,
    policy: &SwapPolicy,
) -> Result<f64> {
    if !policy.correction_enabled {
        return Err(Error::Precondition(
            "corrected swap statistic requires correction_enabled".into(),
        ));
    }
    policy.validate(ladder)?;
    finite_energies(u1, u2_tilde)?;
    if ladder.tau_delta == 0.0 {
        return Ok(1.0);
    }
    let exponent = policy.log_correction(ladder) + ladder.tau_delta * (u1 - u2_tilde);
    Ok(clamped_exp(exponent))
}

pub fn swap_probability(statistic: f64) -> f64 {
    statistic.min(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn examples() {
        let l = TemperatureLadder::new(1.0, 15.0).unwrap();
        assert_eq!(swap_statistic(3.5, 3.5, &l).unwrap(), 1.0);
        let s = swap_statistic(0.0, 1.0, &l).unwrap();
        assert!((s - 0.393_240_720_868_598_26).abs() < 1e-15);
        let flat = TemperatureLadder::new(2.0, 2.0).unwrap();
        assert_eq!(swap_statistic(-100.0, 900.0, &flat).unwrap(), 1.0);
    }

    #[test]
    fn corrected_examples() {
        let l = TemperatureLadder::new(1.0, 2.0).unwrap();
        assert_eq!(l.tau_delta, 0.5);
        let p = SwapPolicy::corrected(0.5, 2);
        let s = corrected_swap_statistic(4.0, 4.0, &l, &p).unwrap();
        assert!((s - 0.625).abs() < 1e-15);
        let l = TemperatureLadder::new(1.0, 15.0).unwrap();
        let p0 = SwapPolicy::corrected(0.0, 45);
        for (a, b) in [(0.0, 1.0), (3.0, -2.0), (10.0, 10.0)] {
            assert_eq!(
                corrected_swap_statistic(a, b, &l, &p0).unwrap(),
                swap_statistic(a, b, &l).unwrap()
            );
        }
    }

    #[test]
    fn admissibility_enforced() {
        let l = TemperatureLadder::new(1.0, 15.0).unwrap();
        let bound = SwapPolicy::admissibility_bound(&l);
        assert!((bound - 0.554_187_192_118_226_6).abs() < 1e-12);
        let err = corrected_swap_statistic(0.0, 0.0, &l, &SwapPolicy::corrected(0.6, 5))
            .unwrap_err()
            .to_string();
        assert!(err.contains("1/(tau_delta^2 + tau_delta)"), "{err}");
        assert!(SwapPolicy::corrected(-0.1, 5).validate(&l).is_err());
        assert!(corrected_swap_statistic(0.0, 0.0, &l, &SwapPolicy::plain()).is_err());
    }

    #[test]
    fn saturates_without_nan() {
        let l = TemperatureLadder::new(1.0, 15.0).unwrap();
        let big = swap_statistic(1e300, -1e300, &l).unwrap();
        assert_eq!(big, 700f64.exp());
        assert!(big.is_finite());
        assert_eq!(swap_statistic(-1e300, 1e300, &l).unwrap(), (-700f64).exp());
        assert!(swap_statistic(f64::NAN, 0.0, &l).is_err());
        assert!(swap_statistic(f64::INFINITY, 0.0, &l).is_err());
    }

    proptest! {
        #[test]
        fn detailed_balance_ratio(u1 in -30.0f64..30.0, u2 in -30.0f64..30.0,
                                  t1 in 0.1f64..5.0, gap in 0.0f64..50.0) {
            let l = TemperatureLadder::new(t1, t1 + gap).unwrap();
            let forward = swap_probability(swap_statistic(u1, u2, &l).unwrap());
            let backward = swap_probability(swap_statistic(u2, u1, &l).unwrap());
            let expected = (l.tau_delta * (u1 - u2)).exp();
            let ratio = forward / backward;
            prop_assert!((ratio - expected).abs() <= 1e-12 * expected.max(1.0));
        }

        #[test]
        fn probability_in_unit_interval(u1 in -1e6f64..1e6, u2 in -1e6f64..1e6) {
            let l = TemperatureLadder::new(1.0, 20.0).unwrap();
            let p = swap_probability(swap_statistic(u1, u2, &l).unwrap());
            prop_assert!((0.0..=1.0).contains(&p));
        }
    }
}
