//! Replica-exchange preconditioned Crank-Nicolson Langevin (repCNLD) sampling
//! for multimodal targets and PDE-constrained Bayesian posteriors.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod diagnostics;
pub mod dynamics;
pub mod error;
pub mod experiments;
pub mod linalg;
pub mod pde;
pub mod priors;
pub mod rng;
pub mod targets;
pub mod verify;

pub use dynamics::{
    run_replica_exchange, run_single_chain, ChainState, SamplerConfig, SamplerTrace, StepSchedule,
    SwapPolicy, TemperatureLadder,
};
pub use error::{Error, Result};
pub use priors::{GaussianPrior, KLBasis, MaternParams, StructuredGrid};
pub use rng::{seed_streams, SeedStreams};
pub use targets::{BayesianPosterior, Evaluation, Fidelity, ForwardModel, GaussianMixture, TargetModel};
