use std::sync::{Arc, OnceLock};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::mesh::{element_mass, element_stiffness, StructuredMesh};
use super::sparse::{BandedCholesky, CsrMatrix};
use crate::error::{Error, Result};
use crate::priors::{GaussianPrior, KLBasis};
use crate::rng::seed_streams;
use crate::targets::Fidelity;

/// Spatial cells per side and time steps over the horizon.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Resolution {
    pub cells: usize,
    pub steps: usize,
}

impl Resolution {
    pub fn new(cells: usize, steps: usize) -> Result<Self> {
        StructuredMesh::new(cells)?;
        if steps == 0 {
            return Err(Error::Config("time grid needs at least one step".into()));
        }
        Ok(Self { cells, steps })
    }

    /// `true` when strictly finer than `other` in both space and time.
    pub fn strictly_finer_than(&self, other: &Resolution) -> bool {
        self.cells > other.cells && self.steps > other.steps
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FidelityPair {
    pub high: Resolution,
    pub low: Resolution,
}

impl FidelityPair {
    pub fn new(high: Resolution, low: Resolution) -> Result<Self> {
        let coarser = low.cells <= high.cells
            && low.steps <= high.steps
            && (low.cells < high.cells || low.steps < high.steps);
        if !coarser {
            return Err(Error::Config(format!(
                "low fidelity {low:?} must be coarser than high fidelity {high:?} in space or time"
            )));
        }
        Ok(Self { high, low })
    }

    pub fn get(&self, fidelity: Fidelity) -> Resolution {
        match fidelity {
            Fidelity::High => self.high,
            Fidelity::Low => self.low,
        }
    }
}

/// Gaussian pollution source `u₀(x; ξ) = q/(2π l₁ l₂) exp(−(x₁−ξ₁)²/(2l₁²) − (x₂−ξ₂)²/(2l₂²))`
/// with the manufactured solution `u = u₀ e^{−t}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitialCenterParams {
    pub l1: f64,
    pub l2: f64,
    pub q: f64,
}

impl InitialCenterParams {
    pub fn amplitude(&self) -> f64 {
        self.q / (2.0 * std::f64::consts::PI * self.l1 * self.l2)
    }

    /// `u₀`, `Δu₀`, and their `ξ`-derivatives at `x`.
    pub(crate) fn profile(&self, x: [f64; 2], xi: &[f64]) -> Profile {
        let (il1, il2) = (1.0 / (self.l1 * self.l1), 1.0 / (self.l2 * self.l2));
        let (d1, d2) = (x[0] - xi[0], x[1] - xi[1]);
        let u0 = self.amplitude() * (-0.5 * (d1 * d1 * il1 + d2 * d2 * il2)).exp();
        let (a, b) = (d1 * il1, d2 * il2);
        let p = (a * a - il1) + (b * b - il2);
        Profile {
            u0,
            lap: u0 * p,
            du0: [a * u0, b * u0],
            dlap: [a * u0 * (p - 2.0 * il1), b * u0 * (p - 2.0 * il2)],
        }
    }

    /// `u₀(x_o; ξ)` on the level set `(x_o1−ξ₁)²/(2l₁²) + (x_o2−ξ₂)²/(2l₂²) = r²`
    /// at time `t`.
    pub fn level_value(&self, r: f64, t: f64) -> f64 {
        self.amplitude() * (-r * r).exp() * (-t).exp()
    }
}

pub(crate) struct Profile {
    pub u0: f64,
    pub lap: f64,
    pub du0: [f64; 2],
    pub dlap: [f64; 2],
}

/// Well-driven flow with a KL log-permeability field and no-flow boundary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PermeabilityParams {
    pub wells: Vec<[f64; 2]>,
    pub rate: f64,
    pub well_width: f64,
    pub initial_value: f64,
}

impl PermeabilityParams {
    pub fn source(&self, x: [f64; 2]) -> f64 {
        let w2 = self.well_width * self.well_width;
        let c = self.rate / (2.0 * std::f64::consts::PI * w2);
        self.wells
            .iter()
            .map(|w| {
                let r2 = (x[0] - w[0]).powi(2) + (x[1] - w[1]).powi(2);
                c * (-r2 / (2.0 * w2)).exp()
            })
            .sum()
    }

    /// `k × k` interior lattice at `(i+1)/(k+1)`-style positions given by `coords`.
    pub fn lattice(coords: &[f64]) -> Vec<[f64; 2]> {
        coords
            .iter()
            .flat_map(|&y| coords.iter().map(move |&x| [x, y]))
            .collect()
    }
}

#[derive(Debug, Clone)]
pub enum ProblemKind {
    InitialCenter(InitialCenterParams),
    Permeability {
        params: PermeabilityParams,
        basis: Arc<KLBasis>,
    },
}

impl ProblemKind {
    pub fn name(&self) -> &'static str {
        match self {
            Self::InitialCenter(_) => "initial_center",
            Self::Permeability { .. } => "permeability",
        }
    }

    pub fn parameter_dim(&self) -> usize {
        match self {
            Self::InitialCenter(_) => 2,
            Self::Permeability { basis, .. } => basis.truncation(),
        }
    }

    fn has_dirichlet(&self) -> bool {
        matches!(self, Self::InitialCenter(_))
    }
}

/// How `G` and `Jᵀr` are computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AdjointMode {
    /// Forward sweep, costate sweep, and contraction at every evaluation.
    #[default]
    Full,
    /// For a parameter-independent operator, the per-observation costates
    /// are solved once and `G`, `Jᵀr` reduce to inner products with the
    /// load derivatives. Algebraically identical to `Full`.
    Precomputed,
}

#[derive(Debug, Clone)]
pub(crate) struct Observation {
    pub level: usize,
    pub weights: [(usize, f64); 4],
}

/// Per-observation costate summaries for [`AdjointMode::Precomputed`]:
/// `G_j = −(a_j·u₀ + b_j·s)` with `s = −(u₀ + Δu₀)`.
#[derive(Debug, Clone)]
pub(crate) struct ReducedAdjoint {
    pub a: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
}

/// Mesh, operators, and observation map at one resolution.
#[derive(Debug)]
pub(crate) struct Discretization {
    pub mesh: StructuredMesh,
    pub steps: usize,
    pub dt: f64,
    pub mass: CsrMatrix,
    /// Free (non-Dirichlet) nodes in increasing order and the inverse map.
    pub free: Vec<usize>,
    pub local: Vec<Option<usize>>,
    pub observations: Vec<Observation>,
    pub max_snap: f64,
    /// Per-element `Ȳ(c_e)` and `√λ_i φ_i(c_e)` for permeability fields.
    pub field_mean: Vec<f64>,
    pub field_modes: Vec<Vec<f64>>,
    /// `M f` for a parameter-independent source.
    pub fixed_load: Option<Vec<f64>>,
    /// System matrix and factor when `κ` does not depend on `ξ`.
    pub fixed_system: OnceLock<(Arc<CsrMatrix>, Arc<BandedCholesky>)>,
    pub reduced: OnceLock<ReducedAdjoint>,
}

impl Discretization {
    pub fn new(kind: &ProblemKind, res: Resolution, horizon: f64, sensors: &[[f64; 2]], times: &[f64]) -> Result<Self> {
        let mesh = StructuredMesh::new(res.cells)?;
        let dt = horizon / res.steps as f64;
        let n = mesh.node_count();
        let mass = CsrMatrix::assemble(&mesh, &element_mass(mesh.spacing()), &vec![1.0; mesh.element_count()]);
        let free: Vec<usize> = (0..n)
            .filter(|&v| !(kind.has_dirichlet() && mesh.is_boundary(v)))
            .collect();
        let mut local = vec![None; n];
        for (li, &g) in free.iter().enumerate() {
            local[g] = Some(li);
        }
        let mut observations = Vec::with_capacity(times.len() * sensors.len());
        let mut max_snap = 0.0f64;
        for &t in times {
            if !(t > 0.0 && t <= horizon * (1.0 + 1e-12)) {
                return Err(Error::Config(format!(
                    "observation time {t} must lie in (0, {horizon}]"
                )));
            }
            let level = ((t / dt).round() as usize).clamp(1, res.steps);
            max_snap = max_snap.max((level as f64 * dt - t).abs());
            for &x in sensors {
                observations.push(Observation {
                    level,
                    weights: mesh.interpolation(x)?,
                });
            }
        }
        let (field_mean, field_modes, fixed_load) = match kind {
            ProblemKind::InitialCenter(_) => (Vec::new(), Vec::new(), None),
            ProblemKind::Permeability { params, basis } => {
                let cents: Vec<[f64; 2]> = (0..mesh.element_count()).map(|e| mesh.element_centroid(e)).collect();
                let mean = cents.iter().map(|&c| basis.mean_at(c)).collect();
                let modes = (0..basis.truncation())
                    .map(|i| {
                        let s = basis.eigenvalues()[i].sqrt();
                        cents.iter().map(|&c| s * basis.eigenfunction_at(i, c)).collect()
                    })
                    .collect();
                let f: Vec<f64> = (0..n).map(|v| params.source(mesh.node_coords(v))).collect();
                (mean, modes, Some(mass.mul_vec(&f)))
            }
        };
        Ok(Self {
            mesh,
            steps: res.steps,
            dt,
            mass,
            free,
            local,
            observations,
            max_snap,
            field_mean,
            field_modes,
            fixed_load,
            fixed_system: OnceLock::new(),
            reduced: OnceLock::new(),
        })
    }

    /// `M/Δt + K(κ)` with piecewise-constant element coefficients.
    pub fn system(&self, kappa: &[f64]) -> Result<(Arc<CsrMatrix>, Arc<BandedCholesky>)> {
        let k = CsrMatrix::assemble(&self.mesh, &element_stiffness(), kappa);
        let s = self.mass.combine(1.0 / self.dt, &k, 1.0);
        let chol = BandedCholesky::factor_submatrix(&s, &self.free, &self.local).map_err(|e| {
            Error::Numerical(format!("system assembly produced a non-SPD matrix: {e}"))
        })?;
        Ok((Arc::new(s), Arc::new(chol)))
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }
}

/// A parabolic inverse problem `∂u/∂t = ∇·(κ∇u) + f` on the unit square
/// with two solver fidelities.
#[derive(Debug, Clone)]
pub struct ParabolicProblem {
    pub kind: ProblemKind,
    pub horizon: f64,
    pub fidelities: FidelityPair,
    pub sensors: Vec<[f64; 2]>,
    pub obs_times: Vec<f64>,
    pub data: Vec<f64>,
    pub noise_sd: f64,
    pub adjoint: AdjointMode,
    /// Seed of the data-generation stream, and the truth used.
    pub generation_seed: u64,
    pub truth: Vec<f64>,
    pub(crate) levels: Arc<[Discretization; 2]>,
}

impl ParabolicProblem {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        kind: ProblemKind,
        horizon: f64,
        fidelities: FidelityPair,
        sensors: Vec<[f64; 2]>,
        obs_times: Vec<f64>,
        data: Vec<f64>,
        noise_sd: f64,
        adjoint: AdjointMode,
    ) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::Config(format!("horizon must be positive, got {horizon}")));
        }
        if !(noise_sd > 0.0 && noise_sd.is_finite()) {
            return Err(Error::Config(format!("noise_sd must be positive, got {noise_sd}")));
        }
        if sensors.is_empty() || obs_times.is_empty() {
            return Err(Error::Config("at least one sensor and one observation time required".into()));
        }
        let n_obs = sensors.len() * obs_times.len();
        if !data.is_empty() && data.len() != n_obs {
            return Err(Error::dim("data vector", n_obs, data.len()));
        }
        if adjoint == AdjointMode::Precomputed && !matches!(kind, ProblemKind::InitialCenter(_)) {
            return Err(Error::Config(
                "precomputed adjoints need a parameter-independent operator (initial_center only)".into(),
            ));
        }
        let levels = [
            Discretization::new(&kind, fidelities.high, horizon, &sensors, &obs_times)?,
            Discretization::new(&kind, fidelities.low, horizon, &sensors, &obs_times)?,
        ];
        Ok(Self {
            kind,
            horizon,
            fidelities,
            sensors,
            obs_times,
            data,
            noise_sd,
            adjoint,
            generation_seed: 0,
            truth: Vec::new(),
            levels: Arc::new(levels),
        })
    }

    pub fn parameter_dim(&self) -> usize {
        self.kind.parameter_dim()
    }

    /// Observations are ordered time-major: index `a · n_sensors + b` is
    /// sensor `b` at time `a`.
    pub fn obs_count(&self) -> usize {
        self.sensors.len() * self.obs_times.len()
    }

    pub(crate) fn level(&self, fidelity: Fidelity) -> &Discretization {
        match fidelity {
            Fidelity::High => &self.levels[0],
            Fidelity::Low => &self.levels[1],
        }
    }

    /// Largest distance between a requested observation time and the time
    /// level it was snapped to.
    pub fn snap_distance(&self, fidelity: Fidelity) -> f64 {
        self.level(fidelity).max_snap
    }

    pub fn with_data(mut self, data: Vec<f64>) -> Result<Self> {
        if data.len() != self.obs_count() {
            return Err(Error::dim("data vector", self.obs_count(), data.len()));
        }
        self.data = data;
        Ok(self)
    }

    /// The prior the problem is posed with.
    pub fn default_prior(&self) -> Result<GaussianPrior> {
        match &self.kind {
            ProblemKind::InitialCenter(_) => GaussianPrior::isotropic(vec![0.5, 0.5], 0.25),
            ProblemKind::Permeability { basis, .. } => Ok(GaussianPrior::standard(basis.truncation())),
        }
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} must be positive and finite, got {v}")))
    }
}

fn steps_for(horizon: f64, dt: f64) -> Result<usize> {
    let steps = (horizon / dt).round();
    if steps < 1.0 || ((steps * dt) - horizon).abs() > 1e-9 * horizon {
        return Err(Error::Config(format!(
            "time step {dt} does not divide the horizon {horizon}"
        )));
    }
    Ok(steps as usize)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitialCenterConfig {
    pub l1: f64,
    pub l2: f64,
    pub q: f64,
    pub sensor: [f64; 2],
    pub noise_sd: f64,
    pub horizon: f64,
    pub dt: f64,
    pub high_cells: usize,
    pub low_cells: usize,
    pub add_noise: bool,
    pub adjoint: AdjointMode,
}

impl Default for InitialCenterConfig {
    fn default() -> Self {
        Self {
            l1: 0.1,
            l2: 0.2,
            q: 1.0,
            sensor: [0.5, 0.3],
            noise_sd: 0.1,
            horizon: 0.1,
            dt: 0.001,
            high_cells: 40,
            low_cells: 20,
            add_noise: true,
            adjoint: AdjointMode::Full,
        }
    }
}

/// Pollution-center problem with data `u(x_o, T) = M e^{−1} e^{−T}`,
/// `M = q/(2π l₁ l₂)`, the exact value on the unit level set. The exact value
/// plays the role of an infinitely fine data solver.
pub fn build_initial_center_problem(config: &InitialCenterConfig, seed: u64) -> Result<ParabolicProblem> {
    positive("l1", config.l1)?;
    positive("l2", config.l2)?;
    positive("q", config.q)?;
    positive("horizon", config.horizon)?;
    positive("dt", config.dt)?;
    let steps = steps_for(config.horizon, config.dt)?;
    let params = InitialCenterParams {
        l1: config.l1,
        l2: config.l2,
        q: config.q,
    };
    let fidelities = FidelityPair::new(
        Resolution::new(config.high_cells, steps)?,
        Resolution::new(config.low_cells, steps)?,
    )?;
    let mut value = params.level_value(1.0, config.horizon);
    if config.add_noise {
        let mut rng = seed_streams(seed).data_rng();
        let e: f64 = rng.sample(StandardNormal);
        value += config.noise_sd * e;
    }
    let mut p = ParabolicProblem::new(
        ProblemKind::InitialCenter(params),
        config.horizon,
        fidelities,
        vec![config.sensor],
        vec![config.horizon],
        vec![value],
        config.noise_sd,
        config.adjoint,
    )?;
    p.generation_seed = seed;
    Ok(p)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PermeabilityConfig {
    pub rate: f64,
    pub well_width: f64,
    pub initial_value: f64,
    /// Well coordinates; empty selects the 3×3 lattice on {0.2, 0.5, 0.8}².
    pub wells: Vec<[f64; 2]>,
    pub obs_times: Vec<f64>,
    pub noise_sd: f64,
    pub horizon: f64,
    pub high: Resolution,
    pub low: Resolution,
    /// Resolution of the synthetic-data solver; must be strictly finer than
    /// `high`.
    pub data_resolution: Resolution,
    pub add_noise: bool,
    /// Truth coefficients; empty draws them from the prior.
    pub truth: Vec<f64>,
}

impl Default for PermeabilityConfig {
    fn default() -> Self {
        Self {
            rate: 1.5,
            well_width: 0.05,
            initial_value: 4.0,
            wells: Vec::new(),
            obs_times: vec![0.01, 0.04, 0.06, 0.08, 0.10],
            noise_sd: 0.1,
            horizon: 0.1,
            high: Resolution { cells: 30, steps: 50 },
            low: Resolution { cells: 30, steps: 20 },
            data_resolution: Resolution { cells: 60, steps: 100 },
            add_noise: true,
            truth: Vec::new(),
        }
    }
}

impl PermeabilityConfig {
    pub fn resolved_wells(&self) -> Vec<[f64; 2]> {
        if self.wells.is_empty() {
            PermeabilityParams::lattice(&[0.2, 0.5, 0.8])
        } else {
            self.wells.clone()
        }
    }
}

/// Permeability problem with synthetic data from a finer solver.
pub fn build_permeability_problem(
    config: &PermeabilityConfig,
    basis: Arc<KLBasis>,
    seed: u64,
) -> Result<ParabolicProblem> {
    positive("rate", config.rate)?;
    positive("well_width", config.well_width)?;
    positive("horizon", config.horizon)?;
    if !config.initial_value.is_finite() {
        return Err(Error::Config("initial_value must be finite".into()));
    }
    let fidelities = FidelityPair::new(config.high, config.low)?;
    if !config.data_resolution.strictly_finer_than(&config.high) {
        return Err(Error::Config(format!(
            "data resolution {:?} must be strictly finer than the high fidelity {:?}",
            config.data_resolution, config.high
        )));
    }
    let wells = config.resolved_wells();
    let params = PermeabilityParams {
        wells: wells.clone(),
        rate: config.rate,
        well_width: config.well_width,
        initial_value: config.initial_value,
    };
    let kind = ProblemKind::Permeability {
        params,
        basis: basis.clone(),
    };
    let mut rng = seed_streams(seed).data_rng();
    let truth: Vec<f64> = if config.truth.is_empty() {
        (0..basis.truncation()).map(|_| rng.sample(StandardNormal)).collect()
    } else {
        if config.truth.len() != basis.truncation() {
            return Err(Error::dim("truth coefficients", basis.truncation(), config.truth.len()));
        }
        config.truth.clone()
    };
    let generator = ParabolicProblem::new(
        kind.clone(),
        config.horizon,
        FidelityPair::new(config.data_resolution, config.high)?,
        wells.clone(),
        config.obs_times.clone(),
        Vec::new(),
        config.noise_sd,
        AdjointMode::Full,
    )?;
    let mut data = super::solver::solve_forward(&generator, &truth, Fidelity::High)?.observed;
    if config.add_noise {
        for d in data.iter_mut() {
            let e: f64 = rng.sample(StandardNormal);
            *d += config.noise_sd * e;
        }
    }
    let mut p = ParabolicProblem::new(
        kind,
        config.horizon,
        fidelities,
        wells,
        config.obs_times.clone(),
        data,
        config.noise_sd,
        AdjointMode::Full,
    )?;
    p.generation_seed = seed;
    p.truth = truth;
    Ok(p)
}
