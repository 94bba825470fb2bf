//! Target distributions: Gaussian mixtures and Bayesian PDE posteriors.

mod mixture;
mod posterior;

use serde::{Deserialize, Serialize};

use crate::error::Result;

pub use mixture::{
    mixture_grad_log_density, mixture_log_density, mixture_potential, GaussianMixture,
    MixtureComponent, MixtureTarget,
};
pub use posterior::{
    estimate_variance_ratio, posterior_energy, posterior_potential, BayesianPosterior,
    ForwardModel, LinearForward,
};

/// Forward-solver resolution a target is evaluated at.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Fidelity {
    High,
    Low,
}

/// Energy `U(ξ)` and potential gradient `∇ψ(ξ)` at one position.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub energy: f64,
    pub grad_potential: Vec<f64>,
}

/// Energy and potential-gradient provider.
///
/// Implementations must be pure in `(xi, fidelity)`: repeated calls return
/// bitwise-identical results, and calls from several threads are allowed.
pub trait TargetModel: Sync {
    fn dim(&self) -> usize;

    fn evaluate(&self, xi: &[f64], fidelity: Fidelity) -> Result<Evaluation>;
}

impl<T: TargetModel + ?Sized> TargetModel for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn evaluate(&self, xi: &[f64], fidelity: Fidelity) -> Result<Evaluation> {
        (**self).evaluate(xi, fidelity)
    }
}
