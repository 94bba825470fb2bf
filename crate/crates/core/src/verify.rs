//! Self-check suites: adjoint gradients against finite differences, the
//! multi-variance swap estimator, and the strong discretization error.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dynamics::{
    corrected_swap_statistic, pcn_update, swap_statistic, StepSchedule, SwapPolicy, TemperatureLadder,
};
use crate::error::{Error, Result};
use crate::linalg::{matrix_from_rows, norm};
use crate::pde::{
    build_initial_center_problem, build_permeability_problem, gradient_loglik, InitialCenterConfig,
    ParabolicProblem, PermeabilityConfig,
};
use crate::priors::{kl_decompose_modes, sample_prior, GaussianPrior, KLBasis, MaternParams, StructuredGrid};
use crate::targets::{posterior_potential, BayesianPosterior, Fidelity};

/// Outcome of one suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub name: String,
    pub passed: bool,
    pub summary: String,
    pub metrics: Vec<(String, f64)>,
}

impl SuiteReport {
    pub fn metric(&self, key: &str) -> Option<f64> {
        self.metrics.iter().find(|(k, _)| k == key).map(|(_, v)| *v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GradientSuiteConfig {
    pub center: InitialCenterConfig,
    pub permeability: PermeabilityConfig,
    pub kl_grid: usize,
    pub kl_modes: usize,
    pub draws: usize,
    pub tolerance: f64,
    pub seed: u64,
}

impl Default for GradientSuiteConfig {
    fn default() -> Self {
        Self {
            center: InitialCenterConfig::default(),
            permeability: PermeabilityConfig::default(),
            kl_grid: 30,
            kl_modes: 15,
            draws: 20,
            tolerance: 1e-4,
            seed: 11,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SwapSuiteConfig {
    pub obs_count: usize,
    pub tau1: f64,
    pub tau2: f64,
    pub variance_ratio: f64,
    pub noise_sd: f64,
    pub draws: usize,
    pub seed: u64,
}

impl Default for SwapSuiteConfig {
    fn default() -> Self {
        Self {
            obs_count: 5,
            tau1: 1.0,
            tau2: 15.0,
            variance_ratio: 0.2,
            noise_sd: 1.0,
            draws: 100_000,
            seed: 12,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StrongErrorConfig {
    pub horizon: f64,
    pub paths: usize,
    /// Coarse steps are `2^-k` for each `k` listed.
    pub exponents: Vec<u32>,
    pub refinement: usize,
    pub slope_range: (f64, f64),
    pub seed: u64,
}

impl Default for StrongErrorConfig {
    fn default() -> Self {
        Self {
            horizon: 1.0,
            paths: 200,
            exponents: vec![4, 5, 6, 7, 8],
            refinement: 64,
            slope_range: (0.8, 1.2),
            seed: 13,
        }
    }
}

fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    norm(&diff) / norm(b).max(f64::MIN_POSITIVE)
}

/// Worst relative error of `∇ψ` against central differences of `ψ` with step
/// `1e-5 (1 + |ξ_i|)`, over prior draws at both fidelities.
pub fn worst_gradient_error(problem: &ParabolicProblem, draws: usize, seed: u64) -> Result<f64> {
    let prior = problem.default_prior()?;
    let post = BayesianPosterior::new(
        Arc::new(problem.clone()),
        problem.data.clone(),
        problem.noise_sd,
        prior.clone(),
    )?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = problem.parameter_dim();
    let mut worst: f64 = 0.0;
    for _ in 0..draws {
        let w: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let xi = sample_prior(&prior, &w)?;
        for fid in [Fidelity::High, Fidelity::Low] {
            let g = gradient_loglik(problem, &xi, fid)?;
            let mut fd = Vec::with_capacity(n);
            for i in 0..n {
                let h = 1e-5 * (1.0 + xi[i].abs());
                let mut a = xi.clone();
                let mut b = xi.clone();
                a[i] += h;
                b[i] -= h;
                fd.push((posterior_potential(&post, &a, fid)? - posterior_potential(&post, &b, fid)?) / (2.0 * h));
            }
            worst = worst.max(relative_error(&g, &fd));
        }
    }
    Ok(worst)
}

pub fn permeability_basis(grid: usize, modes: usize) -> Result<Arc<KLBasis>> {
    Ok(Arc::new(kl_decompose_modes(
        &MaternParams::default(),
        StructuredGrid::square(grid)?,
        modes,
    )?))
}

pub fn gradient_suite(config: &GradientSuiteConfig) -> Result<SuiteReport> {
    let center = build_initial_center_problem(&config.center, config.seed)?;
    let basis = permeability_basis(config.kl_grid, config.kl_modes)?;
    let perm = build_permeability_problem(&config.permeability, basis, config.seed)?;
    let e_center = worst_gradient_error(&center, config.draws, config.seed ^ 1)?;
    let e_perm = worst_gradient_error(&perm, config.draws, config.seed ^ 2)?;
    let passed = e_center < config.tolerance && e_perm < config.tolerance;
    Ok(SuiteReport {
        name: "gradient".into(),
        passed,
        summary: format!(
            "worst relative error: center {e_center:.2e}, permeability {e_perm:.2e} (tolerance {:.0e}, {} draws each)",
            config.tolerance, config.draws
        ),
        metrics: vec![
            ("center_error".into(), e_center),
            ("permeability_error".into(), e_perm),
        ],
    })
}

/// Sample mean and its standard error.
fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Draws of `(S̃, S̃_m)` for the synthetic model `d = G + X`, `G̃ = G + Z`
/// with `X ~ N(0, σ_o² I)` and `Z ~ N(0, σ̃² I)`, each divided by the exact `S`.
pub fn swap_estimator_draws(config: &SwapSuiteConfig) -> Result<(Vec<f64>, Vec<f64>)> {
    let ladder = TemperatureLadder::new(config.tau1, config.tau2)?;
    let policy = SwapPolicy::corrected(config.variance_ratio, config.obs_count);
    policy.validate(&ladder)?;
    let sd_o = config.noise_sd;
    let sd_tilde = (config.variance_ratio).sqrt() * sd_o;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    // fixed energies of the two states apart from the second chain's misfit
    let u1 = 3.0;
    let prior2 = 2.5;
    let mut plain = Vec::with_capacity(config.draws);
    let mut corrected = Vec::with_capacity(config.draws);
    for _ in 0..config.draws {
        let (mut m, mut mt) = (0.0, 0.0);
        for _ in 0..config.obs_count {
            let x: f64 = sd_o * rng.sample::<f64, _>(StandardNormal);
            let z: f64 = sd_tilde * rng.sample::<f64, _>(StandardNormal);
            m += x * x;
            mt += (x - z) * (x - z);
        }
        let u2 = prior2 + m / (2.0 * sd_o * sd_o);
        let u2_tilde = prior2 + mt / (2.0 * sd_o * sd_o);
        let s = swap_statistic(u1, u2, &ladder)?;
        plain.push(swap_statistic(u1, u2_tilde, &ladder)? / s);
        corrected.push(corrected_swap_statistic(u1, u2_tilde, &ladder, &policy)? / s);
    }
    Ok((plain, corrected))
}

pub fn swap_suite(config: &SwapSuiteConfig) -> Result<SuiteReport> {
    if config.draws < 2 {
        return Err(Error::Config("swap suite needs at least 2 draws".into()));
    }
    let ladder = TemperatureLadder::new(config.tau1, config.tau2)?;
    let (plain, corrected) = swap_estimator_draws(config)?;
    let td = ladder.tau_delta;
    let n = config.obs_count as f64;
    let r = config.variance_ratio;
    let claimed = (1.0 - (td + td * td) * r).powf(-n / 2.0);
    // the Gaussian integral of exp(τ_δ(U − Ũ)) with U − Ũ = −(2XᵀZ + ZᵀZ)/(2σ_o²)
    let exact = (1.0 + (td - td * td) * r).powf(-n / 2.0);
    let (m_corr, se_corr) = mean_se(&corrected);
    let (m_plain, se_plain) = mean_se(&plain);
    let unbiased = (m_corr - 1.0).abs() <= 2.0 * se_corr;
    let bias_matches = (m_plain - claimed).abs() <= 2.0 * se_plain;
    Ok(SuiteReport {
        name: "swap".into(),
        passed: unbiased && bias_matches,
        summary: format!(
            "mean(S̃_m)/S = {m_corr:.4} ± {se_corr:.4}; mean(S̃)/S = {m_plain:.4} ± {se_plain:.4} \
             vs factor {claimed:.4} (Gaussian integral gives {exact:.4})"
        ),
        metrics: vec![
            ("corrected_ratio".into(), m_corr),
            ("corrected_se".into(), se_corr),
            ("plain_ratio".into(), m_plain),
            ("plain_se".into(), se_plain),
            ("claimed_bias".into(), claimed),
            ("integral_bias".into(), exact),
        ],
    })
}

/// Quadratic test energy `U = ½ξᵀB⁻¹ξ + ½|ξ − c|²` with `B = [[1, 0.3], [0.3, 1]]`.
pub struct QuadraticModel {
    pub prior: GaussianPrior,
    pub center: [f64; 2],
    pub start: [f64; 2],
}

impl Default for QuadraticModel {
    fn default() -> Self {
        let b = matrix_from_rows(&[vec![1.0, 0.3], vec![0.3, 1.0]]).expect("2x2 rows");
        Self {
            prior: GaussianPrior::new(vec![0.0, 0.0], b).expect("B is positive definite"),
            center: [1.0, -0.5],
            start: [1.0, 1.0],
        }
    }
}

impl QuadraticModel {
    fn endpoint(&self, schedule: &StepSchedule, increments: &[[f64; 2]]) -> Result<Vec<f64>> {
        let scale = schedule.delta.sqrt();
        let mut xi = self.start.to_vec();
        for dw in increments {
            let grad = [xi[0] - self.center[0], xi[1] - self.center[1]];
            let w = [dw[0] / scale, dw[1] / scale];
            xi = pcn_update(&xi, &grad, &self.prior, &schedule.coefficients, 1.0, &w)?;
        }
        Ok(xi)
    }
}

/// Mean-squared endpoint error at each coarse step against a reference path
/// with `refinement`-times smaller steps driven by the same Brownian increments.
pub fn strong_errors(config: &StrongErrorConfig) -> Result<Vec<(f64, f64)>> {
    let model = QuadraticModel::default();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut out = Vec::with_capacity(config.exponents.len());
    for &k in &config.exponents {
        let delta = 2f64.powi(-(k as i32));
        let steps = (config.horizon / delta).round() as usize;
        if steps == 0 || ((steps as f64) * delta - config.horizon).abs() > 1e-12 {
            return Err(Error::Config(format!(
                "step 2^-{k} does not divide the horizon {}",
                config.horizon
            )));
        }
        let coarse = StepSchedule::new(delta)?;
        let fine = StepSchedule::new(delta / config.refinement as f64)?;
        let fine_sd = (delta / config.refinement as f64).sqrt();
        let mut mse = 0.0;
        for _ in 0..config.paths {
            let fine_dw: Vec<[f64; 2]> = (0..steps * config.refinement)
                .map(|_| {
                    [
                        fine_sd * rng.sample::<f64, _>(StandardNormal),
                        fine_sd * rng.sample::<f64, _>(StandardNormal),
                    ]
                })
                .collect();
            let coarse_dw: Vec<[f64; 2]> = fine_dw
                .chunks(config.refinement)
                .map(|c| c.iter().fold([0.0, 0.0], |a, d| [a[0] + d[0], a[1] + d[1]]))
                .collect();
            let a = model.endpoint(&coarse, &coarse_dw)?;
            let b = model.endpoint(&fine, &fine_dw)?;
            mse += (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2);
        }
        out.push((delta, mse / config.paths as f64));
    }
    Ok(out)
}

/// Least-squares slope of `log y` on `log x`.
pub fn log_log_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

pub fn strong_error_suite(config: &StrongErrorConfig) -> Result<SuiteReport> {
    let errors = strong_errors(config)?;
    let slope = log_log_slope(&errors);
    let (lo, hi) = config.slope_range;
    let mut metrics = vec![("slope".into(), slope)];
    metrics.extend(errors.iter().map(|(d, e)| (format!("mse@{d}"), *e)));
    Ok(SuiteReport {
        name: "strong-error".into(),
        passed: slope >= lo && slope <= hi,
        summary: format!("mean-squared error slope {slope:.3} (required [{lo}, {hi}])"),
        metrics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pde::Resolution;

    #[test]
    fn slope_of_exact_power_law() {
        let pts: Vec<(f64, f64)> = (1..6).map(|k| (2f64.powi(-k), 3.0 * 2f64.powi(-2 * k))).collect();
        assert!((log_log_slope(&pts) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn swap_draws_follow_gaussian_integral() {
        // Monte Carlo oracle for E[exp(τ_δ(U − Ũ))]
        let cfg = SwapSuiteConfig { draws: 200_000, ..Default::default() };
        let report = swap_suite(&cfg).unwrap();
        let m = report.metric("plain_ratio").unwrap();
        let se = report.metric("plain_se").unwrap();
        let exact = report.metric("integral_bias").unwrap();
        assert!((m - exact).abs() < 3.0 * se, "{m} ± {se} vs {exact}");
    }

    #[test]
    fn gaussian_integral_in_small_ratio_limit() {
        let cfg = SwapSuiteConfig { variance_ratio: 0.0, draws: 10, ..Default::default() };
        let report = swap_suite(&cfg).unwrap();
        assert_eq!(report.metric("corrected_ratio").unwrap(), 1.0);
        assert_eq!(report.metric("plain_ratio").unwrap(), 1.0);
        assert!(report.passed);
    }

    #[test]
    fn strong_error_decreases() {
        let cfg = StrongErrorConfig { paths: 20, exponents: vec![3, 4, 5], refinement: 16, ..Default::default() };
        let errs = strong_errors(&cfg).unwrap();
        assert!(errs.windows(2).all(|w| w[1].1 < w[0].1), "{errs:?}");
        // drift is linear and the noise additive, so the MSE is O(δ²)
        let slope = log_log_slope(&errs);
        assert!(slope > 1.5, "{slope}");
    }

    #[test]
    fn rejects_nondividing_steps() {
        let cfg = StrongErrorConfig { horizon: 0.3, exponents: vec![2], ..Default::default() };
        assert!(strong_errors(&cfg).is_err());
    }

    #[test]
    fn small_gradient_suite_passes() {
        let cfg = GradientSuiteConfig {
            center: InitialCenterConfig { high_cells: 10, low_cells: 5, dt: 0.005, ..Default::default() },
            permeability: PermeabilityConfig {
                high: Resolution::new(8, 10).unwrap(),
                low: Resolution::new(8, 5).unwrap(),
                data_resolution: Resolution::new(12, 20).unwrap(),
                ..Default::default()
            },
            kl_grid: 8,
            kl_modes: 4,
            draws: 2,
            ..Default::default()
        };
        let report = gradient_suite(&cfg).unwrap();
        assert!(report.passed, "{}", report.summary);
    }
}
