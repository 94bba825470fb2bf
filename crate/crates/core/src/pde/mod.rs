//! Backward-Euler finite element solver for `∂u/∂t = ∇·(κ∇u) + f` on the
//! unit square, with discrete-adjoint gradients of the data misfit.

mod fixture;
mod mesh;
mod problem;
mod solver;
mod sparse;


pub use fixture::{ProblemFixture, FIXTURE_VERSION};
pub use mesh::{element_mass, element_stiffness, StructuredMesh};
pub use problem::{
    build_initial_center_problem, build_permeability_problem, AdjointMode, FidelityPair,
    InitialCenterConfig, InitialCenterParams, ParabolicProblem, PermeabilityConfig,
    PermeabilityParams, ProblemKind, Resolution,
};
pub use solver::{
    adjoint_contraction, apply_block_operator, apply_block_transpose, assemble, block_rhs,
    costate_with, forward_with, gradient_loglik, observation_adjoint, solve_costate,
    solve_forward, AssembledSystem, ForwardSolution,
};
pub use sparse::{BandedCholesky, CsrMatrix};
