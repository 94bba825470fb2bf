//! Gaussian priors, the Matérn covariance, and Karhunen-Loève expansions of
//! log-permeability fields.

mod gaussian;
mod kl;
mod matern;

pub use gaussian::{factorize_covariance, sample_prior, GaussianPrior};
pub use kl::{
    field_from_coeffs, kl_decompose, kl_decompose_modes, log_field_from_coeffs, KLBasis,
    StructuredGrid,
};
pub use matern::{matern_cov, MaternParams};
