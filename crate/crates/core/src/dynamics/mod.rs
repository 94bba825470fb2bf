//! pCN Langevin dynamics: single-chain updates, two-chain replica exchange,
//! and the multi-variance swap correction.

mod chain;
mod sampler;
mod schedule;
mod swap;

pub use chain::{pcn_update, pcn_update_energy_form, pcnld_step, ChainState};
pub use sampler::{run_replica_exchange, run_single_chain, SamplerConfig, SamplerTrace};
pub use schedule::{beta_for, beta_from_delta, PcnCoefficients, StepSchedule, TemperatureLadder};
pub use swap::{
    corrected_swap_statistic, swap_probability, swap_statistic, SwapPolicy, EXPONENT_LIMIT,
};
