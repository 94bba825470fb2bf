use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `β = 2√(2δ)/(2+δ)`, defined on the closed interval `δ ∈ [0, 2]`.
pub fn beta_for(delta: f64) -> f64 {
    2.0 * (2.0 * delta).sqrt() / (2.0 + delta)
}

/// Update weights derived from `β`: `√(1−β²)` and `1 − √(1−β²)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PcnCoefficients {
    pub beta: f64,
    pub contraction: f64,
    pub drift: f64,
}

impl PcnCoefficients {
    pub fn from_beta(beta: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&beta) {
            return Err(Error::Config(format!("beta must lie in [0, 1], got {beta}")));
        }
        let contraction = (1.0 - beta * beta).sqrt();
        // 1 − √(1−β²) without cancellation
        let drift = beta * beta / (1.0 + contraction);
        Ok(Self {
            beta,
            contraction,
            drift,
        })
    }
}

/// Step size `δ` with its derived `β` and `η = 2/(2+δ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepSchedule {
    pub delta: f64,
    pub beta: f64,
    pub eta: f64,
    pub coefficients: PcnCoefficients,
}

impl StepSchedule {
    pub fn new(delta: f64) -> Result<Self> {
        if !(delta > 0.0 && delta < 2.0) {
            return Err(Error::Config(format!(
                "step size delta must lie in the open interval (0, 2), got {delta}"
            )));
        }
        let beta = beta_for(delta);
        // closed forms: √(1−β²) = (2−δ)/(2+δ), 1 − √(1−β²) = 2δ/(2+δ)
        let coefficients = PcnCoefficients {
            beta,
            contraction: (2.0 - delta) / (2.0 + delta),
            drift: 2.0 * delta / (2.0 + delta),
        };
        Ok(Self {
            delta,
            beta,
            eta: 2.0 / (2.0 + delta),
            coefficients,
        })
    }
}

pub fn beta_from_delta(delta: f64) -> Result<StepSchedule> {
    StepSchedule::new(delta)
}

/// Two-rung temperature ladder `τ₁ ≤ τ₂`.
///
/// `τ₁ = τ₂` is accepted: every swap then has statistic 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TemperatureLadder {
    pub tau1: f64,
    pub tau2: f64,
    pub tau_delta: f64,
}

impl TemperatureLadder {
    pub fn new(tau1: f64, tau2: f64) -> Result<Self> {
        if !(tau1 > 0.0 && tau1.is_finite()) {
            return Err(Error::Config(format!("tau1 must be positive, got {tau1}")));
        }
        if !(tau2 >= tau1 && tau2.is_finite()) {
            return Err(Error::Config(format!(
                "tau2 must be finite and at least tau1 = {tau1}, got {tau2}"
            )));
        }
        Ok(Self {
            tau1,
            tau2,
            tau_delta: 1.0 / tau1 - 1.0 / tau2,
        })
    }

    pub fn temperature(&self, chain: usize) -> f64 {
        if chain == 0 {
            self.tau1
        } else {
            self.tau2
        }
    }
}
