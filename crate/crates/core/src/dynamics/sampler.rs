use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{
    corrected_swap_statistic, pcnld_step, swap_probability, swap_statistic, ChainState,
    StepSchedule, SwapPolicy, TemperatureLadder,
};
use crate::error::{check_len, Error, Result};
use crate::priors::GaussianPrior;
use crate::rng::seed_streams;
use crate::targets::{Fidelity, TargetModel};

/// Per-iteration records of one chain, stored column-wise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerTrace {
    pub chain: usize,
    pub dim: usize,
    /// Row-major `len × dim` positions.
    pub positions: Vec<f64>,
    pub energies: Vec<f64>,
    pub swapped: Vec<bool>,
    pub swap_attempts: usize,
    pub swap_accepts: usize,
}

impl SamplerTrace {
    pub fn new(chain: usize, dim: usize, capacity: usize) -> Self {
        Self {
            chain,
            dim,
            positions: Vec::with_capacity(capacity * dim),
            energies: Vec::with_capacity(capacity),
            swapped: Vec::with_capacity(capacity),
            swap_attempts: 0,
            swap_accepts: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.energies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.energies.is_empty()
    }

    pub fn push(&mut self, position: &[f64], energy: f64, swapped: bool) {
        debug_assert_eq!(position.len(), self.dim);
        self.positions.extend_from_slice(position);
        self.energies.push(energy);
        self.swapped.push(swapped);
    }

    pub fn position(&self, i: usize) -> &[f64] {
        &self.positions[i * self.dim..(i + 1) * self.dim]
    }

    /// Series of coordinate `j` over all records.
    pub fn coordinate(&self, j: usize) -> Vec<f64> {
        self.positions.iter().skip(j).step_by(self.dim).copied().collect()
    }

    /// Records from index `start` on.
    pub fn tail(&self, start: usize) -> SamplerTrace {
        let start = start.min(self.len());
        SamplerTrace {
            chain: self.chain,
            dim: self.dim,
            positions: self.positions[start * self.dim..].to_vec(),
            energies: self.energies[start..].to_vec(),
            swapped: self.swapped[start..].to_vec(),
            swap_attempts: self.swap_attempts,
            swap_accepts: self.swap_accepts,
        }
    }

    pub fn acceptance_rate(&self) -> f64 {
        if self.swap_attempts == 0 {
            0.0
        } else {
            self.swap_accepts as f64 / self.swap_attempts as f64
        }
    }
}

/// Settings for a two-chain replica-exchange run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub schedule: StepSchedule,
    pub ladder: TemperatureLadder,
    pub policy: SwapPolicy,
    pub n_iter: usize,
    pub seed: u64,
    /// Probability that an iteration attempts a swap at all (1 = every one).
    pub swap_attempt_prob: f64,
    /// Step the two chains on separate threads.
    pub parallel_chains: bool,
    pub fidelities: [Fidelity; 2],
}

impl SamplerConfig {
    pub fn new(schedule: StepSchedule, ladder: TemperatureLadder, n_iter: usize, seed: u64) -> Self {
        Self {
            schedule,
            ladder,
            policy: SwapPolicy::plain(),
            n_iter,
            seed,
            swap_attempt_prob: 1.0,
            parallel_chains: false,
            fidelities: [Fidelity::High, Fidelity::High],
        }
    }

    /// Multi-variance mode: chain 2 runs at low fidelity with corrected swaps.
    pub fn multi_variance(mut self, variance_ratio: f64, obs_count: usize) -> Self {
        self.policy = SwapPolicy::corrected(variance_ratio, obs_count);
        self.fidelities = [Fidelity::High, Fidelity::Low];
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.policy.validate(&self.ladder)?;
        if !(0.0..=1.0).contains(&self.swap_attempt_prob) {
            return Err(Error::Config(format!(
                "swap_attempt_prob must lie in [0, 1], got {}",
                self.swap_attempt_prob
            )));
        }
        if self.policy.correction_enabled && self.fidelities != [Fidelity::High, Fidelity::Low] {
            return Err(Error::Config(
                "corrected swaps require chain 1 at high and chain 2 at low fidelity".into(),
            ));
        }
        Ok(())
    }
}

fn standard_normals(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

fn at_iteration(iteration: usize) -> impl FnOnce(Error) -> Error {
    move |e| Error::Sampler {
        iteration,
        source: Box::new(e),
    }
}

/// Single pCNLD chain at temperature `tau`, high fidelity.
pub fn run_single_chain<M: TargetModel + ?Sized>(
    model: &M,
    prior: &GaussianPrior,
    schedule: &StepSchedule,
    tau: f64,
    init: Vec<f64>,
    n_iter: usize,
    seed: u64,
) -> Result<SamplerTrace> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::Config(format!("temperature must be positive, got {tau}")));
    }
    check_len("prior dimension", model.dim(), prior.dim())?;
    let mut rng = seed_streams(seed).chain1_rng();
    let mut trace = SamplerTrace::new(0, model.dim(), n_iter);
    let mut state = ChainState::new(model, init, Fidelity::High).map_err(at_iteration(0))?;
    for it in 0..n_iter {
        let w = standard_normals(&mut rng, model.dim());
        state = pcnld_step(&state, model, prior, schedule, tau, &w).map_err(at_iteration(it))?;
        trace.push(&state.position, state.energy, false);
    }
    Ok(trace)
}

/// Two-chain replica exchange: both chains step, then one swap attempt.
///
/// Records are taken after the swap. When the chains run at different
/// fidelities, swapped positions are re-evaluated at the receiving chain's
/// fidelity so that no chain is driven by the other fidelity's gradient.
pub fn run_replica_exchange<M: TargetModel + ?Sized>(
    model: &M,
    prior: &GaussianPrior,
    config: &SamplerConfig,
    init: [Vec<f64>; 2],
) -> Result<(SamplerTrace, SamplerTrace)> {
    config.validate()?;
    check_len("prior dimension", model.dim(), prior.dim())?;
    let n = model.dim();
    let streams = seed_streams(config.seed);
    let mut rngs = [streams.chain1_rng(), streams.chain2_rng()];
    let mut swap_rng = streams.swap_rng();
    let [f1, f2] = config.fidelities;
    let [x1, x2] = init;
    let mut s1 = ChainState::new(model, x1, f1).map_err(at_iteration(0))?;
    let mut s2 = ChainState::new(model, x2, f2).map_err(at_iteration(0))?;
    let mut t1 = SamplerTrace::new(0, n, config.n_iter);
    let mut t2 = SamplerTrace::new(1, n, config.n_iter);
    let taus = [config.ladder.tau1, config.ladder.tau2];
    let sched = &config.schedule;

    for it in 0..config.n_iter {
        let [r1, r2] = &mut rngs;
        let mut step1 = || -> Result<ChainState> {
            let w = standard_normals(r1, n);
            pcnld_step(&s1, model, prior, sched, taus[0], &w)
        };
        let mut step2 = || -> Result<ChainState> {
            let w = standard_normals(r2, n);
            pcnld_step(&s2, model, prior, sched, taus[1], &w)
        };
        let (a, b) = if config.parallel_chains {
            rayon::join(step1, step2)
        } else {
            (step1(), step2())
        };
        s1 = a.map_err(at_iteration(it))?;
        s2 = b.map_err(at_iteration(it))?;

        let attempt = config.swap_attempt_prob >= 1.0
            || swap_rng.random::<f64>() < config.swap_attempt_prob;
        let mut swapped = false;
        if attempt {
            t1.swap_attempts += 1;
            t2.swap_attempts += 1;
            let u: f64 = swap_rng.random();
            let stat = if config.policy.correction_enabled {
                corrected_swap_statistic(s1.energy, s2.energy, &config.ladder, &config.policy)
            } else {
                swap_statistic(s1.energy, s2.energy, &config.ladder)
            }
            .map_err(at_iteration(it))?;
            if u < swap_probability(stat) {
                swapped = true;
                t1.swap_accepts += 1;
                t2.swap_accepts += 1;
                std::mem::swap(&mut s1, &mut s2);
                if f1 != f2 {
                    s1 = s1.at_fidelity(model, f1).map_err(at_iteration(it))?;
                    s2 = s2.at_fidelity(model, f2).map_err(at_iteration(it))?;
                }
            }
        }
        t1.push(&s1.position, s1.energy, swapped);
        t2.push(&s2.position, s2.energy, swapped);
    }
    Ok((t1, t2))
}
