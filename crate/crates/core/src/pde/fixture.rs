use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::problem::{
    AdjointMode, FidelityPair, InitialCenterParams, ParabolicProblem, PermeabilityParams,
    ProblemKind,
};
use crate::error::{Error, Result};
use crate::priors::KLBasis;

pub const FIXTURE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FixtureKind {
    InitialCenter(InitialCenterParams),
    /// The KL basis is stored beside the fixture in its own text format.
    Permeability(PermeabilityParams),
}

/// Serialized problem definition and synthetic data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemFixture {
    pub version: u32,
    pub problem: FixtureKind,
    pub horizon: f64,
    pub fidelities: FidelityPair,
    pub sensors: Vec<[f64; 2]>,
    pub obs_times: Vec<f64>,
    pub data: Vec<f64>,
    pub noise_sd: f64,
    pub adjoint: AdjointMode,
    pub generation_seed: u64,
    pub truth: Vec<f64>,
}

impl ProblemFixture {
    pub fn from_problem(p: &ParabolicProblem) -> Self {
        let problem = match &p.kind {
            ProblemKind::InitialCenter(c) => FixtureKind::InitialCenter(*c),
            ProblemKind::Permeability { params, .. } => FixtureKind::Permeability(params.clone()),
        };
        Self {
            version: FIXTURE_VERSION,
            problem,
            horizon: p.horizon,
            fidelities: p.fidelities,
            sensors: p.sensors.clone(),
            obs_times: p.obs_times.clone(),
            data: p.data.clone(),
            noise_sd: p.noise_sd,
            adjoint: p.adjoint,
            generation_seed: p.generation_seed,
            truth: p.truth.clone(),
        }
    }

    pub fn into_problem(self, basis: Option<Arc<KLBasis>>) -> Result<ParabolicProblem> {
        if self.version != FIXTURE_VERSION {
            return Err(Error::Format(format!(
                "fixture version {} is not supported (expected {FIXTURE_VERSION})",
                self.version
            )));
        }
        let kind = match self.problem {
            FixtureKind::InitialCenter(c) => ProblemKind::InitialCenter(c),
            FixtureKind::Permeability(params) => ProblemKind::Permeability {
                params,
                basis: basis.ok_or_else(|| {
                    Error::Format("permeability fixture needs its KL basis".into())
                })?,
            },
        };
        let mut p = ParabolicProblem::new(
            kind,
            self.horizon,
            self.fidelities,
            self.sensors,
            self.obs_times,
            self.data,
            self.noise_sd,
            self.adjoint,
        )?;
        p.generation_seed = self.generation_seed;
        p.truth = self.truth;
        Ok(p)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::Format(e.to_string()))?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
    }
}
