use std::sync::Arc;

use faer::Mat;
use rand::Rng;
use rand_distr::StandardNormal;

use super::{Evaluation, Fidelity, TargetModel};
use crate::error::{check_len, Error, Result};
use crate::linalg::mat_vec;
use crate::priors::{sample_prior, GaussianPrior};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Parameter-to-observable map `G`, available at two fidelities.
pub trait ForwardModel: Sync + Send {
    fn input_dim(&self) -> usize;

    fn output_dim(&self) -> usize;

    /// `G(ξ)` at the requested fidelity.
    fn observe(&self, xi: &[f64], fidelity: Fidelity) -> Result<Vec<f64>>;

    /// `G(ξ)` together with `J(ξ)ᵀ(G(ξ) − d)`.
    fn observe_with_adjoint(
        &self,
        xi: &[f64],
        fidelity: Fidelity,
        data: &[f64],
    ) -> Result<(Vec<f64>, Vec<f64>)>;
}

/// Affine map `G(ξ) = Aξ + b` with an optional per-fidelity offset.
#[derive(Debug, Clone)]
pub struct LinearForward {
    pub a: Mat<f64>,
    pub b: Vec<f64>,
    pub low_offset: Vec<f64>,
}

impl LinearForward {
    pub fn new(a: Mat<f64>, b: Vec<f64>) -> Result<Self> {
        check_len("offset", a.nrows(), b.len())?;
        let low_offset = vec![0.0; b.len()];
        Ok(Self { a, b, low_offset })
    }

    pub fn with_low_offset(mut self, offset: Vec<f64>) -> Result<Self> {
        check_len("low-fidelity offset", self.b.len(), offset.len())?;
        self.low_offset = offset;
        Ok(self)
    }
}

impl ForwardModel for LinearForward {
    fn input_dim(&self) -> usize {
        self.a.ncols()
    }

    fn output_dim(&self) -> usize {
        self.a.nrows()
    }

    fn observe(&self, xi: &[f64], fidelity: Fidelity) -> Result<Vec<f64>> {
        check_len("forward input", self.input_dim(), xi.len())?;
        let mut g = mat_vec(&self.a, xi);
        for (i, gi) in g.iter_mut().enumerate() {
            *gi += self.b[i];
            if fidelity == Fidelity::Low {
                *gi += self.low_offset[i];
            }
        }
        Ok(g)
    }

    fn observe_with_adjoint(
        &self,
        xi: &[f64],
        fidelity: Fidelity,
        data: &[f64],
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        check_len("data", self.output_dim(), data.len())?;
        let g = self.observe(xi, fidelity)?;
        let r: Vec<f64> = g.iter().zip(data).map(|(g, d)| g - d).collect();
        let jt = mat_vec(&self.a.transpose().to_owned(), &r);
        Ok((g, jt))
    }
}

/// Posterior `∝ exp(−½(ξ−m)ᵀB⁻¹(ξ−m) − ψ(ξ))` for data `d = G(ξ) + ε`,
/// `ε ~ N(0, σ_o² I)`.
#[derive(Clone)]
pub struct BayesianPosterior {
    pub forward: Arc<dyn ForwardModel>,
    pub data: Vec<f64>,
    pub noise_sd: f64,
    pub prior: GaussianPrior,
}

impl std::fmt::Debug for BayesianPosterior {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BayesianPosterior")
            .field("n_obs", &self.data.len())
            .field("noise_sd", &self.noise_sd)
            .field("dim", &self.prior.dim())
            .finish()
    }
}

impl BayesianPosterior {
    pub fn new(
        forward: Arc<dyn ForwardModel>,
        data: Vec<f64>,
        noise_sd: f64,
        prior: GaussianPrior,
    ) -> Result<Self> {
        if !(noise_sd > 0.0 && noise_sd.is_finite()) {
            return Err(Error::Config(format!(
                "noise_sd must be positive and finite, got {noise_sd}"
            )));
        }
        check_len("data vector", forward.output_dim(), data.len())?;
        check_len("prior dimension", forward.input_dim(), prior.dim())?;
        Ok(Self {
            forward,
            data,
            noise_sd,
            prior,
        })
    }

    pub fn obs_count(&self) -> usize {
        self.data.len()
    }

    fn constant(&self) -> f64 {
        0.5 * self.data.len() as f64 * (LN_2PI + 2.0 * self.noise_sd.ln())
    }

    /// `ψ` given a forward output.
    pub fn potential_from_output(&self, g: &[f64]) -> f64 {
        let misfit: f64 = g.iter().zip(&self.data).map(|(g, d)| (d - g).powi(2)).sum();
        self.constant() + misfit / (2.0 * self.noise_sd * self.noise_sd)
    }
}

fn ensure_finite(xi: &[f64], energy: f64, grad: &[f64]) -> Result<()> {
    if energy.is_finite() && grad.iter().all(|g| g.is_finite()) {
        Ok(())
    } else {
        Err(Error::Model {
            position: xi.to_vec(),
            reason: "non-finite energy or gradient".into(),
        })
    }
}

/// `ψ(ξ) = (n_d/2) log 2πσ_o² + ‖d − G(ξ)‖² / (2σ_o²)`.
pub fn posterior_potential(post: &BayesianPosterior, xi: &[f64], fidelity: Fidelity) -> Result<f64> {
    let g = post.forward.observe(xi, fidelity)?;
    Ok(post.potential_from_output(&g))
}

/// `U(ξ) = ½(ξ−m)ᵀB⁻¹(ξ−m) + ψ(ξ)`.
pub fn posterior_energy(post: &BayesianPosterior, xi: &[f64], fidelity: Fidelity) -> Result<f64> {
    Ok(post.prior.quadratic(xi) + posterior_potential(post, xi, fidelity)?)
}

impl TargetModel for BayesianPosterior {
    fn dim(&self) -> usize {
        self.prior.dim()
    }

    fn evaluate(&self, xi: &[f64], fidelity: Fidelity) -> Result<Evaluation> {
        let (g, jt) = self.forward.observe_with_adjoint(xi, fidelity, &self.data)?;
        let energy = self.prior.quadratic(xi) + self.potential_from_output(&g);
        let s2 = self.noise_sd * self.noise_sd;
        let grad_potential: Vec<f64> = jt.iter().map(|v| v / s2).collect();
        ensure_finite(xi, energy, &grad_potential)?;
        Ok(Evaluation {
            energy,
            grad_potential,
        })
    }
}

/// Offline estimate of `r_σ = σ̃²/σ_o²`: the pooled sample variance of the
/// component-wise discrepancy `G − G̃` over prior draws, divided by `σ_o²`.
pub fn estimate_variance_ratio<R: Rng + ?Sized>(
    forward: &dyn ForwardModel,
    prior: &GaussianPrior,
    noise_sd: f64,
    draws: usize,
    rng: &mut R,
) -> Result<f64> {
    if draws < 2 {
        return Err(Error::Precondition(format!(
            "variance-ratio estimate needs at least 2 draws, got {draws}"
        )));
    }
    let mut diffs = Vec::with_capacity(draws * forward.output_dim());
    for _ in 0..draws {
        let w: Vec<f64> = (0..prior.dim()).map(|_| rng.sample(StandardNormal)).collect();
        let xi = sample_prior(prior, &w)?;
        let hi = forward.observe(&xi, Fidelity::High)?;
        let lo = forward.observe(&xi, Fidelity::Low)?;
        diffs.extend(hi.iter().zip(&lo).map(|(h, l)| h - l));
    }
    let n = diffs.len() as f64;
    let mean = diffs.iter().sum::<f64>() / n;
    let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok(var / (noise_sd * noise_sd))
}
