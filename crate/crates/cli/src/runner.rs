//! Experiment execution: target construction, sampling, diagnostics, and
//! artifact bookkeeping.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use log::{info, warn};
use serde::{Deserialize, Serialize};

use repcn_core::diagnostics::{
    acf, ess_report, field_moments, integrated_autocorrelation_time, kde_1d, kde_2d, mode_occupancy,
    silverman_bandwidth, KdeGrid, MIN_KDE_SAMPLES,
};
use repcn_core::experiments::{bimodal_1d, mixture_modes, quantile, trimodal_2d, SolutionEllipse};
use repcn_core::pde::{build_initial_center_problem, build_permeability_problem, ParabolicProblem, ProblemFixture, ProblemKind};
use repcn_core::priors::kl_decompose_modes;
use repcn_core::targets::MixtureTarget;
use repcn_core::verify::{gradient_suite, strong_error_suite, swap_suite, SuiteReport};
use repcn_core::{
    run_replica_exchange, run_single_chain, seed_streams, BayesianPosterior, GaussianMixture, GaussianPrior,
    KLBasis, SamplerConfig, SamplerTrace, StepSchedule, StructuredGrid, TargetModel, TemperatureLadder,
};

use crate::config::{ExperimentKind, Method, RunConfig, Suite, VerifySettings};
use crate::output::{self, EssRow, Manifest, RunStatus};

/// Per-chain statistics after burn-in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainSummary {
    pub chain: usize,
    pub temperature: Option<f64>,
    pub samples: usize,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub ess: Vec<f64>,
    pub energy_iat: f64,
    pub swap_attempts: usize,
    pub swap_accepts: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EllipseSummary {
    pub distance_p90: f64,
    pub bins: usize,
    pub bins_covered: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub kind: ExperimentKind,
    pub method: Option<Method>,
    pub dim: usize,
    pub burn_in: usize,
    pub chains: Vec<ChainSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode_occupancy: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ellipse: Option<EllipseSummary>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub verify: Vec<SuiteReport>,
    pub passed: bool,
}

pub struct RunOutcome {
    pub dir: PathBuf,
    pub summary: RunSummary,
    pub manifest: Manifest,
}

fn mixture_for(config: &RunConfig) -> Result<(GaussianMixture, GaussianPrior)> {
    Ok(match (&config.mixture, config.kind) {
        (Some(settings), _) => settings.build()?,
        (None, ExperimentKind::Mixture1d) => bimodal_1d(),
        (None, _) => trimodal_2d(),
    })
}

fn write_fixture(problem: &ParabolicProblem, dir: &Path) -> Result<()> {
    ProblemFixture::from_problem(problem).write(&dir.join(output::FIXTURE_FILE))?;
    Ok(())
}

fn write_basis(basis: &KLBasis, dir: &Path) -> Result<()> {
    let path = dir.join(output::BASIS_FILE);
    let f = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = BufWriter::new(f);
    basis.write_to(&mut w)?;
    w.flush()?;
    Ok(())
}

fn sample<M: TargetModel + ?Sized>(
    config: &RunConfig,
    model: &M,
    prior: &GaussianPrior,
    obs_count: usize,
) -> Result<Vec<SamplerTrace>> {
    let schedule = StepSchedule::new(config.delta)?;
    let init = config.init.clone().unwrap_or_else(|| prior.mean().to_vec());
    info!("sampling {} iterations with {:?}", config.n_iter, config.method);
    if config.method == Method::Pcnld {
        let t = run_single_chain(model, prior, &schedule, config.tau1, init, config.n_iter, config.seed)?;
        return Ok(vec![t]);
    }
    let ladder = TemperatureLadder::new(config.tau1, config.tau2)?;
    let mut cfg = SamplerConfig::new(schedule, ladder, config.n_iter, config.seed);
    cfg.swap_attempt_prob = config.swap_attempt_prob;
    cfg.parallel_chains = config.parallel_chains;
    if config.method == Method::MRepcnld {
        let r = config.variance_ratio.context("m-repcnld requires variance_ratio")?;
        cfg = cfg.multi_variance(r, obs_count);
    }
    let (a, b) = run_replica_exchange(model, prior, &cfg, [init.clone(), init])?;
    Ok(vec![a, b])
}

fn chain_temperature(config: &RunConfig, chain: usize) -> f64 {
    if chain == 0 {
        config.tau1
    } else {
        config.tau2
    }
}

/// Moments, ESS and energy IAT of each chain; writes `ess.csv` and, for the
/// target chain, `acf.csv` and `kde_grid.csv`.
fn chain_diagnostics(
    traces: &[SamplerTrace],
    temperatures: Option<&[f64]>,
    max_lag: usize,
    kde_points: (usize, usize),
    dir: &Path,
) -> Result<Vec<ChainSummary>> {
    let mut rows = Vec::new();
    let mut summaries = Vec::new();
    for (k, t) in traces.iter().enumerate() {
        let n = t.len();
        let coords: Vec<Vec<f64>> = (0..t.dim).map(|j| t.coordinate(j)).collect();
        let mean: Vec<f64> = coords.iter().map(|c| c.iter().sum::<f64>() / n as f64).collect();
        let std: Vec<f64> = coords
            .iter()
            .zip(&mean)
            .map(|(c, m)| (c.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n as f64 - 1.0).max(1.0)).sqrt())
            .collect();
        let refs: Vec<&[f64]> = coords.iter().map(Vec::as_slice).collect();
        let report = ess_report(&refs)?;
        let energy_iat = integrated_autocorrelation_time(&t.energies)?;
        for j in 0..t.dim {
            rows.push(EssRow {
                chain: t.chain,
                series: format!("xi_{j}"),
                ess: report.ess[j],
                rho: report.rho[j],
                iat: 1.0 + 2.0 * report.rho[j],
                samples: n,
            });
        }
        rows.push(EssRow {
            chain: t.chain,
            series: "energy".into(),
            ess: n as f64 / energy_iat,
            rho: 0.5 * (energy_iat - 1.0),
            iat: energy_iat,
            samples: n,
        });
        if k == 0 {
            let lag = max_lag.min(n.saturating_sub(1));
            let mut names: Vec<String> = (0..t.dim).map(|j| format!("xi_{j}")).collect();
            names.push("energy".into());
            let series = coords
                .iter()
                .chain(std::iter::once(&t.energies))
                .map(|s| acf(s, lag))
                .collect::<repcn_core::Result<Vec<_>>>()?;
            output::write_acf(&dir.join(output::ACF_FILE), &names, &series)?;
            write_density(&coords, kde_points, dir)?;
        }
        summaries.push(ChainSummary {
            chain: t.chain,
            temperature: temperatures.map(|ts| ts[k]),
            samples: n,
            mean,
            std,
            ess: report.ess,
            energy_iat,
            swap_attempts: t.swap_attempts,
            swap_accepts: t.swap_accepts,
        });
    }
    output::write_ess(&dir.join(output::ESS_FILE), &rows)?;
    Ok(summaries)
}

fn padded_axis(samples: &[f64], dim: usize, points: usize) -> Result<Vec<f64>> {
    let lo = samples.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let pad = 3.0 * silverman_bandwidth(samples, dim)?;
    Ok(KdeGrid::linspace(lo - pad, hi + pad, points))
}

/// KDE of the first coordinate (1D targets) or the first two (otherwise).
fn write_density(coords: &[Vec<f64>], (points_1d, points_2d): (usize, usize), dir: &Path) -> Result<()> {
    let n = coords.first().map_or(0, Vec::len);
    if n < MIN_KDE_SAMPLES {
        warn!("{n} samples after burn-in; skipping the density estimate");
        return Ok(());
    }
    let estimate = if coords.len() == 1 {
        kde_1d(&coords[0], padded_axis(&coords[0], 1, points_1d)?)?
    } else {
        let pairs: Vec<[f64; 2]> = coords[0].iter().zip(&coords[1]).map(|(&a, &b)| [a, b]).collect();
        let gx = padded_axis(&coords[0], 2, points_2d)?;
        let gy = padded_axis(&coords[1], 2, points_2d)?;
        kde_2d(&pairs, gx, gy)?
    };
    output::write_kde(&dir.join(output::KDE_FILE), &estimate)
}

pub fn run_suites(settings: &VerifySettings) -> Result<Vec<SuiteReport>> {
    settings.suites
        .iter()
        .map(|s| {
            info!("running {s:?} suite");
            Ok(match s {
                Suite::Gradient => gradient_suite(&settings.gradient)?,
                Suite::Swap => swap_suite(&settings.swap)?,
                Suite::StrongError => strong_error_suite(&settings.strong_error)?,
            })
        })
        .collect()
}

fn execute(config: &RunConfig, dir: &Path) -> Result<RunSummary> {
    let burn = config.burn_in;
    let diag = &config.diagnostics;
    let kde_points = (diag.kde_points, diag.kde_points_2d);
    let temps: Vec<f64> = (0..2).map(|c| chain_temperature(config, c)).collect();
    let mut summary = RunSummary {
        kind: config.kind,
        method: Some(config.method),
        dim: config.dimension().unwrap_or(0),
        burn_in: burn,
        chains: Vec::new(),
        mode_occupancy: None,
        ellipse: None,
        verify: Vec::new(),
        passed: true,
    };
    match config.kind {
        ExperimentKind::Verify => {
            let reports = run_suites(&config.verify)?;
            output::write_json(&dir.join(output::VERIFY_FILE), &reports)?;
            summary.method = None;
            summary.burn_in = 0;
            summary.passed = reports.iter().all(|r| r.passed);
            summary.verify = reports;
        }
        ExperimentKind::Mixture1d | ExperimentKind::Mixture2d => {
            let (mix, prior) = mixture_for(config)?;
            let modes = mixture_modes(&mix)?;
            let target = MixtureTarget::new(mix, prior.clone())?;
            let traces = sample(config, &target, &prior, 0)?;
            output::write_trace(&dir.join(output::TRACE_FILE), &traces.iter().collect::<Vec<_>>())?;
            let tails: Vec<SamplerTrace> = traces.iter().map(|t| t.tail(burn)).collect();
            summary.mode_occupancy = Some(mode_occupancy(&tails[0].positions, tails[0].dim, &modes, diag.mode_radius)?);
            summary.chains = chain_diagnostics(&tails, Some(&temps), diag.max_lag, kde_points, dir)?;
        }
        ExperimentKind::Center => {
            let problem = build_initial_center_problem(&config.center, config.seed)?;
            write_fixture(&problem, dir)?;
            let ProblemKind::InitialCenter(params) = problem.kind else {
                unreachable!("center builder returns an initial-center problem")
            };
            let prior = problem.default_prior()?;
            let obs = problem.obs_count();
            let post = BayesianPosterior::new(Arc::new(problem.clone()), problem.data.clone(), problem.noise_sd, prior.clone())?;
            let traces = sample(config, &post, &prior, obs)?;
            output::write_trace(&dir.join(output::TRACE_FILE), &traces.iter().collect::<Vec<_>>())?;
            let tails: Vec<SamplerTrace> = traces.iter().map(|t| t.tail(burn)).collect();
            let ellipse = SolutionEllipse::new(&params, config.center.sensor);
            let distances: Vec<f64> = tails[0].positions.chunks(2).map(|p| ellipse.distance(p)).collect();
            summary.ellipse = Some(EllipseSummary {
                distance_p90: quantile(&distances, 0.9)?,
                bins: diag.ellipse_bins,
                bins_covered: ellipse.angular_coverage(&tails[0].positions, diag.ellipse_bins, diag.min_bin_share)?,
            });
            summary.chains = chain_diagnostics(&tails, Some(&temps), diag.max_lag, kde_points, dir)?;
        }
        ExperimentKind::Permeability => {
            let kl = &config.permeability.kl;
            info!("computing {} KL modes on a {}x{} grid", kl.modes, kl.grid, kl.grid);
            let basis = Arc::new(kl_decompose_modes(&kl.matern, StructuredGrid::square(kl.grid)?, kl.modes)?);
            write_basis(&basis, dir)?;
            info!("generating synthetic data");
            let problem = build_permeability_problem(&config.permeability.problem, basis.clone(), config.seed)?;
            write_fixture(&problem, dir)?;
            let prior = problem.default_prior()?;
            let obs = problem.obs_count();
            let post = BayesianPosterior::new(Arc::new(problem.clone()), problem.data.clone(), problem.noise_sd, prior.clone())?;
            let traces = sample(config, &post, &prior, obs)?;
            output::write_trace(&dir.join(output::TRACE_FILE), &traces.iter().collect::<Vec<_>>())?;
            let tails: Vec<SamplerTrace> = traces.iter().map(|t| t.tail(burn)).collect();
            let moments = field_moments(&tails[0].positions, tails[0].dim, &basis)?;
            output::write_field_moments(&dir.join(output::MOMENTS_FILE), basis.grid(), &moments)?;
            summary.chains = chain_diagnostics(&tails, Some(&temps), diag.max_lag, kde_points, dir)?;
        }
    }
    if config.method == Method::Pcnld {
        for c in summary.chains.iter_mut() {
            c.temperature = Some(config.tau1);
        }
    }
    output::write_json(&dir.join(output::SUMMARY_FILE), &summary)?;
    Ok(summary)
}

const ARTIFACTS: [&str; 9] = [
    output::FIXTURE_FILE,
    output::BASIS_FILE,
    output::TRACE_FILE,
    output::ACF_FILE,
    output::ESS_FILE,
    output::KDE_FILE,
    output::MOMENTS_FILE,
    output::SUMMARY_FILE,
    output::VERIFY_FILE,
];

/// Runs `config` into its output directory. The manifest is written before
/// any work starts and rewritten with the final status, also on failure.
pub fn run_experiment(config: &RunConfig, config_source: Option<String>) -> Result<RunOutcome> {
    let dir = config.output_dir.clone();
    std::fs::create_dir_all(&dir).with_context(|| format!("creating output directory {}", dir.display()))?;
    let started = Instant::now();
    let mut manifest = Manifest {
        status: RunStatus::Running,
        version: env!("CARGO_PKG_VERSION").to_string(),
        config: config.clone(),
        config_source,
        seeds: seed_streams(config.seed),
        started_unix: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
        duration_secs: None,
        fixture_sha256: None,
        artifacts: BTreeMap::new(),
        failure: None,
    };
    manifest.write(&dir)?;
    let result = execute(config, &dir);
    manifest.duration_secs = Some(started.elapsed().as_secs_f64());
    manifest.record_artifacts(&dir, &ARTIFACTS)?;
    match result {
        Ok(summary) => {
            manifest.status = RunStatus::Completed;
            manifest.write(&dir)?;
            Ok(RunOutcome { dir, summary, manifest })
        }
        Err(e) => {
            manifest.status = RunStatus::Failed;
            manifest.failure = Some(format!("{e:#}"));
            manifest.write(&dir)?;
            Err(e)
        }
    }
}

/// Trace-only diagnostics for `diagnose`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceDiagnosis {
    pub burn_in: usize,
    pub chains: Vec<ChainSummary>,
}

pub fn diagnose_trace(path: &Path, burn_in: usize, max_lag: usize, out_dir: &Path) -> Result<TraceDiagnosis> {
    let traces = output::read_trace(path)?;
    let len = traces[0].len();
    anyhow::ensure!(burn_in < len, "burn-in {burn_in} must be below the trace length {len}");
    let tails: Vec<SamplerTrace> = traces.iter().map(|t| t.tail(burn_in)).collect();
    std::fs::create_dir_all(out_dir)?;
    let chains = chain_diagnostics(&tails, None, max_lag, (401, 101), out_dir)?;
    Ok(TraceDiagnosis { burn_in, chains })
}
