//! Run configuration: TOML parsing over kind presets, environment overrides,
//! and validation that reports every violation at once.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use repcn_core::dynamics::{StepSchedule, SwapPolicy, TemperatureLadder};
use repcn_core::linalg::matrix_from_rows;
use repcn_core::pde::{AdjointMode, FidelityPair, InitialCenterConfig, PermeabilityConfig, Resolution};
use repcn_core::priors::MaternParams;
use repcn_core::targets::GaussianMixture;
use repcn_core::verify::{GradientSuiteConfig, StrongErrorConfig, SwapSuiteConfig};
use repcn_core::GaussianPrior;

pub const SEED_ENV: &str = "REPCNLD_SEED";
pub const OUTPUT_DIR_ENV: &str = "REPCNLD_OUTPUT_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExperimentKind {
    Mixture1d,
    Mixture2d,
    Center,
    Permeability,
    Verify,
}

impl ExperimentKind {
    pub fn is_pde(self) -> bool {
        matches!(self, Self::Center | Self::Permeability)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Pcnld,
    Repcnld,
    MRepcnld,
}

/// `full` uses the reference-scale iteration counts and meshes; `ci` the
/// desk-scale counterparts (3×10⁴ iterations, coarser meshes).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    #[default]
    Full,
    Ci,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    Gradient,
    Swap,
    StrongError,
}

/// Explicit mixture target; absent selects the kind's reference mixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixtureSettings {
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub covariances: Vec<Vec<Vec<f64>>>,
    pub prior_mean: Vec<f64>,
    pub prior_covariance: Vec<Vec<f64>>,
}

impl MixtureSettings {
    pub fn build(&self) -> repcn_core::Result<(GaussianMixture, GaussianPrior)> {
        let covs = self
            .covariances
            .iter()
            .map(|c| matrix_from_rows(c))
            .collect::<repcn_core::Result<Vec<_>>>()?;
        let mix = GaussianMixture::new(self.weights.clone(), self.means.clone(), covs)?;
        let prior = GaussianPrior::new(self.prior_mean.clone(), matrix_from_rows(&self.prior_covariance)?)?;
        Ok((mix, prior))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KlSettings {
    /// Cells per side of the eigenproblem grid.
    pub grid: usize,
    pub modes: usize,
    pub matern: MaternParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PermeabilitySettings {
    pub problem: PermeabilityConfig,
    pub kl: KlSettings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifySettings {
    pub suites: Vec<Suite>,
    pub gradient: GradientSuiteConfig,
    pub swap: SwapSuiteConfig,
    pub strong_error: StrongErrorConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnosticsSettings {
    pub max_lag: usize,
    pub kde_points: usize,
    pub kde_points_2d: usize,
    pub mode_radius: f64,
    pub ellipse_bins: usize,
    pub min_bin_share: f64,
}

impl Default for DiagnosticsSettings {
    fn default() -> Self {
        Self {
            max_lag: 200,
            kde_points: 401,
            kde_points_2d: 101,
            mode_radius: 2.0,
            ellipse_bins: 12,
            min_bin_share: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub kind: ExperimentKind,
    pub preset: Preset,
    pub method: Method,
    pub delta: f64,
    pub tau1: f64,
    pub tau2: f64,
    pub n_iter: usize,
    pub seed: u64,
    pub burn_in: usize,
    pub output_dir: PathBuf,
    /// Starting point of every chain; absent starts at the prior mean.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init: Option<Vec<f64>>,
    pub swap_attempt_prob: f64,
    pub parallel_chains: bool,
    /// `r_σ = σ̃²/σ_o²`, required by `m-repcnld`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variance_ratio: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mixture: Option<MixtureSettings>,
    pub center: InitialCenterConfig,
    pub permeability: PermeabilitySettings,
    pub verify: VerifySettings,
    pub diagnostics: DiagnosticsSettings,
}

impl RunConfig {
    /// Defaults for `kind` at the given preset.
    pub fn preset(kind: ExperimentKind, preset: Preset) -> Self {
        let ci = preset == Preset::Ci;
        let mut c = Self {
            kind,
            preset,
            method: Method::Repcnld,
            delta: 1e-3,
            tau1: 1.0,
            tau2: 15.0,
            n_iter: if ci { 30_000 } else { 100_000 },
            seed: 1,
            burn_in: 0,
            output_dir: PathBuf::from("output"),
            init: None,
            swap_attempt_prob: 1.0,
            parallel_chains: false,
            variance_ratio: None,
            mixture: None,
            center: InitialCenterConfig {
                add_noise: false,
                ..Default::default()
            },
            permeability: PermeabilitySettings {
                problem: PermeabilityConfig::default(),
                kl: KlSettings {
                    grid: 30,
                    modes: 15,
                    matern: MaternParams::default(),
                },
            },
            verify: VerifySettings {
                suites: vec![Suite::Gradient, Suite::Swap, Suite::StrongError],
                gradient: GradientSuiteConfig::default(),
                swap: SwapSuiteConfig::default(),
                strong_error: StrongErrorConfig::default(),
            },
            diagnostics: DiagnosticsSettings::default(),
        };
        match kind {
            ExperimentKind::Mixture1d => c.init = Some(vec![2.0]),
            ExperimentKind::Mixture2d => {
                c.tau2 = 20.0;
                c.init = Some(vec![0.0, 0.0]);
            }
            ExperimentKind::Center => {
                c.delta = 1e-5;
                c.center.adjoint = AdjointMode::Precomputed;
                if ci {
                    c.burn_in = 3_000;
                    c.center.high_cells = 20;
                    c.center.low_cells = 10;
                } else {
                    c.n_iter = 300_000;
                    c.burn_in = 270_000;
                }
            }
            ExperimentKind::Permeability => {
                c.delta = 2e-3;
                c.tau2 = 1.5;
                if ci {
                    c.burn_in = 3_000;
                } else {
                    c.n_iter = 500_000;
                    c.burn_in = 50_000;
                    let p = &mut c.permeability;
                    p.problem.high = Resolution { cells: 60, steps: 50 };
                    p.problem.low = Resolution { cells: 60, steps: 20 };
                    p.problem.data_resolution = Resolution { cells: 120, steps: 100 };
                    p.kl.grid = 60;
                }
            }
            ExperimentKind::Verify => {}
        }
        c
    }

    pub fn dimension(&self) -> Option<usize> {
        match self.kind {
            ExperimentKind::Mixture1d => Some(self.mixture.as_ref().map_or(1, |m| m.prior_mean.len())),
            ExperimentKind::Mixture2d => Some(self.mixture.as_ref().map_or(2, |m| m.prior_mean.len())),
            ExperimentKind::Center => Some(2),
            ExperimentKind::Permeability => Some(self.permeability.kl.modes),
            ExperimentKind::Verify => None,
        }
    }

    /// Every constraint the configuration breaks.
    pub fn violations(&self) -> Vec<Violation> {
        let mut v = Vec::new();
        let mut bad = |field: &str, constraint: String| v.push(Violation { field: field.into(), constraint });
        if self.kind == ExperimentKind::Verify {
            if self.verify.suites.is_empty() {
                bad("verify.suites", "must list at least one suite".into());
            }
            return v;
        }
        if StepSchedule::new(self.delta).is_err() {
            bad("delta", format!("must lie in (0, 2), got {}", self.delta));
        }
        if self.n_iter == 0 {
            bad("n_iter", "must be > 0".into());
        }
        if self.burn_in >= self.n_iter.max(1) {
            bad("burn_in", format!("must be below n_iter ({}), got {}", self.n_iter, self.burn_in));
        }
        if !(self.tau1 > 0.0 && self.tau1.is_finite()) {
            bad("tau1", format!("must be positive, got {}", self.tau1));
        }
        let ladder = if self.method == Method::Pcnld {
            None
        } else {
            match TemperatureLadder::new(self.tau1, self.tau2) {
                Ok(l) => Some(l),
                Err(_) => {
                    bad("tau2", format!("must satisfy 0 < tau1 <= tau2, got tau1 = {}, tau2 = {}", self.tau1, self.tau2));
                    None
                }
            }
        };
        if !(0.0..=1.0).contains(&self.swap_attempt_prob) {
            bad("swap_attempt_prob", format!("must lie in [0, 1], got {}", self.swap_attempt_prob));
        }
        if self.method == Method::MRepcnld {
            if !self.kind.is_pde() {
                bad("method", "m-repcnld requires a PDE experiment (center or permeability) with a fidelity pair".into());
            }
            match (self.variance_ratio, ladder) {
                (None, _) => bad("variance_ratio", "m-repcnld requires r_sigma".into()),
                (Some(r), Some(l)) => {
                    if let Err(e) = SwapPolicy::corrected(r, 1).validate(&l) {
                        bad("variance_ratio", e.to_string());
                    }
                }
                (Some(_), None) => {}
            }
        }
        match self.kind {
            ExperimentKind::Mixture1d | ExperimentKind::Mixture2d => {
                let want = if self.kind == ExperimentKind::Mixture1d { 1 } else { 2 };
                if let Some(m) = &self.mixture {
                    if let Err(e) = m.build() {
                        bad("mixture", e.to_string());
                    }
                    if m.prior_mean.len() != want {
                        bad("mixture.prior_mean", format!("must have dimension {want} for this kind"));
                    }
                }
            }
            ExperimentKind::Center => {
                let c = &self.center;
                let steps = (c.horizon / c.dt).round().max(1.0) as usize;
                let pair = Resolution::new(c.high_cells, steps)
                    .and_then(|h| Resolution::new(c.low_cells, steps).map(|l| (h, l)))
                    .and_then(|(h, l)| FidelityPair::new(h, l));
                if let Err(e) = pair {
                    bad("center", e.to_string());
                }
            }
            ExperimentKind::Permeability => {
                let p = &self.permeability;
                if let Err(e) = FidelityPair::new(p.problem.high, p.problem.low) {
                    bad("permeability.problem", e.to_string());
                }
                if !p.problem.data_resolution.strictly_finer_than(&p.problem.high) {
                    bad("permeability.problem.data_resolution", "must be strictly finer than high in space and time".into());
                }
                if p.kl.grid < 2 {
                    bad("permeability.kl.grid", "must be >= 2".into());
                }
                if p.kl.modes == 0 || p.kl.modes > p.kl.grid * p.kl.grid {
                    bad("permeability.kl.modes", format!("must lie in [1, grid^2], got {}", p.kl.modes));
                }
                if let Err(e) = p.kl.matern.validate() {
                    bad("permeability.kl.matern", e.to_string());
                }
                if !p.problem.truth.is_empty() && p.problem.truth.len() != p.kl.modes {
                    bad("permeability.problem.truth", format!("must have {} entries", p.kl.modes));
                }
            }
            ExperimentKind::Verify => unreachable!("handled above"),
        }
        if let (Some(init), Some(n)) = (&self.init, self.dimension()) {
            if init.len() != n {
                bad("init", format!("must have {n} entries, got {}", init.len()));
            }
        }
        let d = &self.diagnostics;
        if d.max_lag == 0 {
            bad("diagnostics.max_lag", "must be > 0".into());
        }
        if d.kde_points < 2 || d.kde_points_2d < 2 {
            bad("diagnostics.kde_points", "grids need at least 2 points".into());
        }
        if d.ellipse_bins == 0 {
            bad("diagnostics.ellipse_bins", "must be > 0".into());
        }
        v
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub field: String,
    pub constraint: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.constraint)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("malformed config: {0}")]
    Parse(String),
    #[error("invalid config:\n  {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("\n  "))]
    Invalid(Vec<Violation>),
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

/// Parses TOML text: user keys are laid over the preset for the declared
/// kind, then environment overrides apply, then validation runs.
pub fn parse_config_str(text: &str) -> Result<RunConfig, ConfigError> {
    let user: toml::Table = text.parse().map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
    let kind: ExperimentKind = user
        .get("kind")
        .cloned()
        .ok_or_else(|| ConfigError::Parse("missing required field `kind`".into()))?
        .try_into()
        .map_err(|e: toml::de::Error| ConfigError::Parse(format!("kind: {e}")))?;
    let preset: Preset = match user.get("preset") {
        Some(p) => p
            .clone()
            .try_into()
            .map_err(|e: toml::de::Error| ConfigError::Parse(format!("preset: {e}")))?,
        None => Preset::default(),
    };
    let mut table = toml::Table::try_from(RunConfig::preset(kind, preset))
        .map_err(|e| ConfigError::Parse(e.to_string()))?;
    merge(&mut table, user);
    let config: RunConfig = toml::Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
    finish(config)
}

/// Applies environment overrides and validates.
pub fn finish(mut config: RunConfig) -> Result<RunConfig, ConfigError> {
    let mut violations = Vec::new();
    if let Ok(s) = std::env::var(SEED_ENV) {
        match s.trim().parse() {
            Ok(seed) => config.seed = seed,
            Err(_) => violations.push(Violation {
                field: SEED_ENV.into(),
                constraint: format!("must be an unsigned 64-bit integer, got {s:?}"),
            }),
        }
    }
    if let Ok(dir) = std::env::var(OUTPUT_DIR_ENV) {
        config.output_dir = PathBuf::from(dir);
    }
    violations.extend(config.violations());
    if violations.is_empty() {
        Ok(config)
    } else {
        Err(ConfigError::Invalid(violations))
    }
}

pub fn parse_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config_str(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn invalid(text: &str) -> Vec<Violation> {
        match parse_config_str(text) {
            Err(ConfigError::Invalid(v)) => v,
            other => panic!("expected violations, got {other:?}"),
        }
    }

    #[test]
    fn minimal_mixture_defaults() {
        let c = parse_config_str("kind = \"mixture1d\"").unwrap();
        assert_eq!(c.delta, 1e-3);
        assert_eq!((c.tau1, c.tau2), (1.0, 15.0));
        assert_eq!(c.n_iter, 100_000);
        assert_eq!(c.method, Method::Repcnld);
        assert!(c.mixture.is_none());
    }

    #[test]
    fn delta_out_of_range_names_interval() {
        let v = invalid("kind = \"mixture1d\"\ndelta = 3.0");
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].field, "delta");
        assert!(v[0].constraint.contains("(0, 2)"));
    }

    #[test]
    fn all_violations_reported() {
        let v = invalid("kind = \"mixture1d\"\ndelta = 0.0\nn_iter = 0\nburn_in = 10\ntau2 = 0.5\nmethod = \"m-repcnld\"\ninit = [1.0, 2.0]");
        let fields: Vec<&str> = v.iter().map(|x| x.field.as_str()).collect();
        for f in ["delta", "n_iter", "burn_in", "tau2", "method", "variance_ratio", "init"] {
            assert!(fields.contains(&f), "{f} missing from {fields:?}");
        }
    }

    #[test]
    fn center_recipe_is_valid_multi_variance() {
        let text = r#"
            kind = "center"
            method = "m-repcnld"
            delta = 1e-5
            tau1 = 1.0
            tau2 = 15.0
            n_iter = 300000
            variance_ratio = 0.01
            [center]
            high_cells = 40
            low_cells = 20
            dt = 0.001
        "#;
        let c = parse_config_str(text).unwrap();
        assert_eq!(c.method, Method::MRepcnld);
        assert_eq!(c.center.high_cells, 40);
        assert_eq!(c.center.l2, 0.2);
    }

    #[test]
    fn multi_variance_ratio_must_be_admissible() {
        let v = invalid("kind = \"center\"\nmethod = \"m-repcnld\"\nvariance_ratio = 0.6");
        assert_eq!(v[0].field, "variance_ratio");
        assert!(v[0].constraint.contains("1/(tau_delta^2 + tau_delta)"), "{}", v[0].constraint);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(matches!(parse_config_str("kind = \"center\"\ndeltaa = 1.0"), Err(ConfigError::Parse(_))));
        assert!(matches!(parse_config_str("kind = \"center\"\n[center]\nhigh = 3"), Err(ConfigError::Parse(_))));
        assert!(matches!(parse_config_str("delta = 1.0"), Err(ConfigError::Parse(_))));
    }

    #[test]
    fn ci_preset_is_coarser() {
        let c = parse_config_str("kind = \"center\"\npreset = \"ci\"").unwrap();
        assert_eq!(c.n_iter, 30_000);
        assert_eq!(c.center.high_cells, 20);
        let p = parse_config_str("kind = \"permeability\"").unwrap();
        assert_eq!(p.permeability.problem.high.cells, 60);
        assert_eq!(p.n_iter, 500_000);
    }

    #[test]
    fn round_trips_through_json() {
        let c = parse_config_str("kind = \"permeability\"\npreset = \"ci\"\nvariance_ratio = 0.1").unwrap();
        let back: RunConfig = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn explicit_mixture_is_checked() {
        let text = r#"
            kind = "mixture1d"
            [mixture]
            weights = [0.5, 0.6]
            means = [[-1.0], [1.0]]
            covariances = [[[1.0]], [[1.0]]]
            prior_mean = [0.0]
            prior_covariance = [[3.0]]
        "#;
        let v = invalid(text);
        assert_eq!(v[0].field, "mixture");
    }
}
