use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Anisotropic Matérn covariance parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaternParams {
    pub variance: f64,
    pub smoothness: f64,
    pub length_scales: Vec<f64>,
}

impl Default for MaternParams {
    /// `σ² = 1`, `ν = 0.2`, `l = (1, 0.5)`.
    fn default() -> Self {
        Self {
            variance: 1.0,
            smoothness: 0.2,
            length_scales: vec![1.0, 0.5],
        }
    }
}

impl MaternParams {
    pub fn new(variance: f64, smoothness: f64, length_scales: Vec<f64>) -> Result<Self> {
        let p = Self {
            variance,
            smoothness,
            length_scales,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.variance > 0.0 && self.variance.is_finite()) {
            return Err(Error::Config(format!(
                "matern variance must be > 0, got {}",
                self.variance
            )));
        }
        if !(self.smoothness > 0.0 && self.smoothness.is_finite()) {
            return Err(Error::Config(format!(
                "matern smoothness must be > 0, got {}",
                self.smoothness
            )));
        }
        if self.length_scales.is_empty() || self.length_scales.iter().any(|&l| !(l > 0.0)) {
            return Err(Error::Config(format!(
                "matern length scales must all be > 0, got {:?}",
                self.length_scales
            )));
        }
        Ok(())
    }

    /// `√(Σ_k (Δx_k / l_k)²)`.
    pub fn scaled_distance(&self, x1: &[f64], x2: &[f64]) -> f64 {
        x1.iter()
            .zip(x2)
            .zip(&self.length_scales)
            .map(|((a, b), l)| {
                let t = (a - b) / l;
                t * t
            })
            .sum::<f64>()
            .sqrt()
    }

    pub(crate) fn kernel(&self) -> MaternKernel {
        MaternKernel::new(self)
    }
}

/// Matérn kernel with the order-dependent constants hoisted.
#[derive(Debug, Clone)]
pub(crate) struct MaternKernel {
    params: MaternParams,
    scale: f64,
    root_two_nu: f64,
}

// K_ν(z) underflows well before this and I_ν(z) overflows just past it.
const BESSEL_CUTOFF: f64 = 700.0;

impl MaternKernel {
    fn new(params: &MaternParams) -> Self {
        let nu = params.smoothness;
        Self {
            params: params.clone(),
            scale: params.variance * 2f64.powf(1.0 - nu) / puruspe::gamma(nu),
            root_two_nu: (2.0 * nu).sqrt(),
        }
    }

    pub(crate) fn cov(&self, x1: &[f64], x2: &[f64]) -> f64 {
        let d = self.params.scaled_distance(x1, x2);
        if d == 0.0 {
            return self.params.variance;
        }
        let z = self.root_two_nu * d;
        if z > BESSEL_CUTOFF {
            return 0.0;
        }
        let nu = self.params.smoothness;
        let (_, k) = puruspe::Inu_Knu(nu, z);
        // the zero-distance limit is reached continuously; guard the last ulp
        (self.scale * z.powf(nu) * k).min(self.params.variance)
    }
}

/// Matérn covariance between two points. Returns `σ²` exactly at zero distance.
pub fn matern_cov(x1: &[f64], x2: &[f64], params: &MaternParams) -> f64 {
    params.kernel().cov(x1, x2)
}
