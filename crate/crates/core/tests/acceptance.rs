//! Acceptance criteria 1-10. Prints one PASS/FAIL line per criterion and
//! exits nonzero when any criterion fails. Positional arguments select
//! criteria by number.

use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use repcn_core::diagnostics::{ess_report, integrated_autocorrelation_time, kde_1d, mode_occupancy, tv_distance, KdeGrid};
use repcn_core::dynamics::{beta_from_delta, run_replica_exchange, run_single_chain, SamplerConfig, StepSchedule, TemperatureLadder};
use repcn_core::experiments::{bimodal_1d, far_bimodal_1d, mixture_modes, quantile, trimodal_2d, SolutionEllipse};
use repcn_core::pde::{build_initial_center_problem, AdjointMode, InitialCenterConfig, ProblemKind};
use repcn_core::priors::{kl_decompose, MaternParams, StructuredGrid};
use repcn_core::targets::{mixture_log_density, BayesianPosterior, GaussianMixture, MixtureTarget};
use repcn_core::verify::{gradient_suite, strong_error_suite, swap_suite, GradientSuiteConfig, StrongErrorConfig, SwapSuiteConfig};
use repcn_core::{GaussianPrior, Result, SamplerTrace};

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Result<Outcome> {
    Ok(Outcome { passed, detail })
}

fn criterion_1() -> Result<Outcome> {
    let beta = beta_from_delta(0.001)?.beta;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let delta: f64 = rng.random_range(1e-9..2.0);
        let s = StepSchedule::new(delta)?;
        let lhs = 1.0 - (1.0 - s.beta * s.beta).sqrt();
        worst = worst.max((lhs - s.eta * delta).abs());
    }
    outcome(
        (beta - 0.0447).abs() <= 5e-4 && worst <= 1e-12,
        format!("beta(0.001) = {beta:.6}; worst |1-sqrt(1-beta^2) - eta*delta| = {worst:.1e}"),
    )
}

fn mixture_run(
    mix: &GaussianMixture,
    prior: &GaussianPrior,
    tau2: f64,
    start: Vec<f64>,
    n_iter: usize,
    seed: u64,
) -> Result<(SamplerTrace, SamplerTrace)> {
    let target = MixtureTarget::new(mix.clone(), prior.clone())?;
    let schedule = StepSchedule::new(1e-3)?;
    let cfg = SamplerConfig::new(schedule, TemperatureLadder::new(1.0, tau2)?, n_iter, seed);
    let (rep, _) = run_replica_exchange(&target, prior, &cfg, [start.clone(), start.clone()])?;
    let single = run_single_chain(&target, prior, &schedule, 1.0, start, n_iter, seed)?;
    Ok((rep, single))
}

fn left_fraction(xs: &[f64], cut: f64) -> f64 {
    xs.iter().filter(|&&x| x < cut).count() as f64 / xs.len() as f64
}

fn criterion_2() -> Result<Outcome> {
    let (mix, prior) = bimodal_1d();
    let (rep, single) = mixture_run(&mix, &prior, 15.0, vec![2.0], 100_000, 2)?;
    let xs = rep.coordinate(0);
    let grid = KdeGrid::linspace(-8.0, 6.0, 1401);
    let reference: Vec<f64> = grid
        .iter()
        .map(|&x| mixture_log_density(&mix, &[x]).map(f64::exp))
        .collect::<Result<_>>()?;
    let tv = tv_distance(&kde_1d(&xs, grid)?, &reference)?;
    let left = left_fraction(&xs, -0.5);
    let left_single = left_fraction(&single.coordinate(0), -0.5);
    outcome(
        tv < 0.10 && (left - 0.40).abs() <= 0.08 && left_single < 0.05,
        format!("TV = {tv:.4}; mass left of -0.5: repCNLD {left:.3}, pCNLD {left_single:.3}"),
    )
}

fn criterion_3() -> Result<Outcome> {
    let (mix, prior) = far_bimodal_1d();
    let (rep, single) = mixture_run(&mix, &prior, 40.0, vec![2.0], 100_000, 3)?;
    let modes = mixture_modes(&mix)?;
    let occ_rep = mode_occupancy(&rep.positions, 1, &modes, 3.0)?;
    let occ_single = mode_occupancy(&single.positions, 1, &modes, 3.0)?;
    let occupied = occ_single.iter().filter(|&&o| o >= 0.2).count();
    outcome(
        occ_rep.iter().all(|&o| o >= 0.2) && occupied == 1,
        format!("occupancy repCNLD {occ_rep:.3?}, pCNLD {occ_single:.3?}"),
    )
}

fn criterion_4() -> Result<Outcome> {
    let (mix, prior) = trimodal_2d();
    let (rep, single) = mixture_run(&mix, &prior, 20.0, vec![0.0, 0.0], 100_000, 4)?;
    let modes = mixture_modes(&mix)?;
    let occ_rep = mode_occupancy(&rep.positions, 2, &modes, 2.0)?;
    let occ_single = mode_occupancy(&single.positions, 2, &modes, 2.0)?;
    outcome(
        occ_rep.iter().all(|&o| o >= 0.10) && occ_single.iter().any(|&o| o < 0.02),
        format!("occupancy repCNLD {occ_rep:.3?}, pCNLD {occ_single:.3?}"),
    )
}

fn criterion_5() -> Result<Outcome> {
    let report = gradient_suite(&GradientSuiteConfig::default())?;
    outcome(report.passed, report.summary)
}

fn criterion_6() -> Result<Outcome> {
    let report = swap_suite(&SwapSuiteConfig::default())?;
    outcome(report.passed, report.summary)
}

fn criterion_7() -> Result<Outcome> {
    let report = strong_error_suite(&StrongErrorConfig::default())?;
    outcome(report.passed, report.summary)
}

fn criterion_8() -> Result<Outcome> {
    let basis = kl_decompose(&MaternParams::default(), StructuredGrid::square(40)?, 0.86)?;
    let spectrum = basis.spectrum();
    let sorted = spectrum.windows(2).all(|w| w[0] >= w[1]);
    let n = basis.truncation();
    outcome(
        sorted && (12..=18).contains(&n),
        format!("eigenvalues nonincreasing: {sorted}; smallest n with e(n) >= 0.86: {n}"),
    )
}

/// Low-temperature repCNLD and single-chain pCNLD traces on the
/// InitialCenter problem, burn-in removed.
struct CenterRuns {
    seed: u64,
    rep: SamplerTrace,
    single: SamplerTrace,
}

const CENTER_ITERS: usize = 30_000;
const CENTER_BURN_IN: usize = 3_000;
const CENTER_SEEDS: [u64; 5] = [1, 2, 3, 4, 5];

fn center_config() -> InitialCenterConfig {
    InitialCenterConfig {
        high_cells: 20,
        low_cells: 10,
        add_noise: false,
        adjoint: AdjointMode::Precomputed,
        ..Default::default()
    }
}

fn center_runs() -> Result<Vec<CenterRuns>> {
    let problem = build_initial_center_problem(&center_config(), 0)?;
    let prior = problem.default_prior()?;
    let post = BayesianPosterior::new(
        Arc::new(problem.clone()),
        problem.data.clone(),
        problem.noise_sd,
        prior.clone(),
    )?;
    let schedule = StepSchedule::new(1e-5)?;
    let ladder = TemperatureLadder::new(1.0, 15.0)?;
    let start = prior.mean().to_vec();
    CENTER_SEEDS
        .iter()
        .map(|&seed| {
            let cfg = SamplerConfig::new(schedule, ladder, CENTER_ITERS, seed);
            let (rep, _) = run_replica_exchange(&post, &prior, &cfg, [start.clone(), start.clone()])?;
            let single = run_single_chain(&post, &prior, &schedule, 1.0, start.clone(), CENTER_ITERS, seed)?;
            Ok(CenterRuns {
                seed,
                rep: rep.tail(CENTER_BURN_IN),
                single: single.tail(CENTER_BURN_IN),
            })
        })
        .collect()
}

fn criterion_9(runs: &[CenterRuns]) -> Result<Outcome> {
    let mut wins = 0;
    let mut lines = Vec::new();
    for r in runs {
        let iat_rep = integrated_autocorrelation_time(&r.rep.energies)?;
        let iat_single = integrated_autocorrelation_time(&r.single.energies)?;
        let (a1, a2) = (r.rep.coordinate(0), r.rep.coordinate(1));
        let (b1, b2) = (r.single.coordinate(0), r.single.coordinate(1));
        let e_rep = ess_report(&[&a1, &a2])?.ess;
        let e_single = ess_report(&[&b1, &b2])?.ess;
        let win = iat_rep < iat_single && e_rep[0] > e_single[0] && e_rep[1] > e_single[1];
        wins += win as usize;
        lines.push(format!(
            "seed {}: IAT {iat_rep:.0}/{iat_single:.0}, ESS {:.0}/{:.0} {:.0}/{:.0}",
            r.seed, e_rep[0], e_single[0], e_rep[1], e_single[1]
        ));
    }
    outcome(
        wins >= 4,
        format!("repCNLD better on {wins}/{} seeds (rep/single) [{}]", runs.len(), lines.join("; ")),
    )
}

fn criterion_10(runs: &[CenterRuns]) -> Result<Outcome> {
    let cfg = center_config();
    let problem = build_initial_center_problem(&cfg, 0)?;
    let ProblemKind::InitialCenter(params) = problem.kind else {
        unreachable!("center problem")
    };
    let ellipse = SolutionEllipse::new(&params, cfg.sensor);
    let r = &runs[0];
    let distances: Vec<f64> = r.rep.positions.chunks(2).map(|p| ellipse.distance(p)).collect();
    let p90 = quantile(&distances, 0.9)?;
    let bins_rep = ellipse.angular_coverage(&r.rep.positions, 12, 0.01)?;
    let bins_single = ellipse.angular_coverage(&r.single.positions, 12, 0.01)?;
    outcome(
        p90 < 0.05 && bins_rep >= 8 && bins_single <= 4,
        format!(
            "seed {}: distance p90 = {p90:.4}; bins covered repCNLD {bins_rep}/12, pCNLD {bins_single}/12",
            r.seed
        ),
    )
}

const NAMES: [&str; 10] = [
    "beta consistency",
    "1D multimodality",
    "far-mode variant",
    "2D three-mode target",
    "adjoint gradients",
    "swap-estimator unbiasedness",
    "strong-error order",
    "KL energy target",
    "mixing improvement",
    "solution-set recovery",
];

fn report(k: usize, result: Result<Outcome>, started: Instant) -> bool {
    let secs = started.elapsed().as_secs_f64();
    let (passed, detail) = match result {
        Ok(o) => (o.passed, o.detail),
        Err(e) => (false, format!("error: {e}")),
    };
    let tag = if passed { "PASS" } else { "FAIL" };
    println!("{tag} criterion {k:>2} {} ({secs:.1} s): {detail}", NAMES[k - 1]);
    passed
}

fn main() -> ExitCode {
    let selected: Vec<usize> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .filter_map(|a| a.parse().ok())
        .filter(|k| (1..=10).contains(k))
        .collect();
    let wanted = |k: usize| selected.is_empty() || selected.contains(&k);
    let simple: [fn() -> Result<Outcome>; 8] = [
        criterion_1,
        criterion_2,
        criterion_3,
        criterion_4,
        criterion_5,
        criterion_6,
        criterion_7,
        criterion_8,
    ];
    let mut all = true;
    for (i, f) in simple.iter().enumerate() {
        if wanted(i + 1) {
            let t = Instant::now();
            all &= report(i + 1, f(), t);
        }
    }
    if wanted(9) || wanted(10) {
        let t = Instant::now();
        match center_runs() {
            Ok(runs) => {
                if wanted(9) {
                    all &= report(9, criterion_9(&runs), t);
                }
                if wanted(10) {
                    all &= report(10, criterion_10(&runs), Instant::now());
                }
            }
            Err(e) => {
                for k in [9, 10].into_iter().filter(|&k| wanted(k)) {
                    all &= report(k, Err(repcn_core::Error::Numerical(format!("sampling failed: {e}"))), t);
                }
            }
        }
    }
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
