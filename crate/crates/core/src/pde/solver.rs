use std::sync::Arc;

use super::mesh::element_stiffness;
use super::problem::{Discretization, ParabolicProblem, ProblemKind, ReducedAdjoint};
use super::sparse::{BandedCholesky, CsrMatrix};
use crate::error::{check_len, Error, Result};
use crate::targets::{Fidelity, ForwardModel};

/// Space-time block system `A(ξ) v = F(ξ)` of one backward-Euler solve.
///
/// Block row 0 is `u⁰ = u₀`. Block row `k ≥ 1` is
/// `(M/Δt + K) u^k − (M/Δt) u^{k−1} = φ_k b` on free nodes and
/// `u^k = φ_k g` on Dirichlet nodes.
#[derive(Debug, Clone)]
pub struct AssembledSystem {
    pub fidelity: Fidelity,
    /// `M/Δt + K(κ)` over all nodes.
    pub system: Arc<CsrMatrix>,
    pub factor: Arc<BandedCholesky>,
    /// Element coefficients `κ_e`.
    pub kappa: Vec<f64>,
    /// Load shape `b` (full nodal vector).
    pub load: Vec<f64>,
    /// Dirichlet data shape `g` (read on boundary nodes only).
    pub boundary: Vec<f64>,
    /// Time factors `φ_k`, `k = 0..=steps`.
    pub time_factors: Vec<f64>,
    pub initial: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardSolution {
    /// `u^k` for `k = 0..=steps`.
    pub states: Vec<Vec<f64>>,
    pub observed: Vec<f64>,
    /// `G − d`; empty when the problem carries no data.
    pub residual: Vec<f64>,
}

struct CenterLoads {
    u0: Vec<f64>,
    /// `s = −(u₀ + Δu₀)`, so that `f = e^{−t} s`.
    s: Vec<f64>,
    du0: [Vec<f64>; 2],
    ds: [Vec<f64>; 2],
}

fn center_loads(level: &Discretization, params: &super::InitialCenterParams, xi: &[f64]) -> CenterLoads {
    let n = level.mesh.node_count();
    let mut out = CenterLoads {
        u0: Vec::with_capacity(n),
        s: Vec::with_capacity(n),
        du0: [Vec::with_capacity(n), Vec::with_capacity(n)],
        ds: [Vec::with_capacity(n), Vec::with_capacity(n)],
    };
    for v in 0..n {
        let p = params.profile(level.mesh.node_coords(v), xi);
        out.u0.push(p.u0);
        out.s.push(-(p.u0 + p.lap));
        for i in 0..2 {
            out.du0[i].push(p.du0[i]);
            out.ds[i].push(-(p.du0[i] + p.dlap[i]));
        }
    }
    out
}

fn fixed_system(level: &Discretization) -> Result<(Arc<CsrMatrix>, Arc<BandedCholesky>)> {
    if let Some(sys) = level.fixed_system.get() {
        return Ok(sys.clone());
    }
    let sys = level.system(&vec![1.0; level.mesh.element_count()])?;
    Ok(level.fixed_system.get_or_init(|| sys).clone())
}

fn check_xi(problem: &ParabolicProblem, xi: &[f64]) -> Result<()> {
    check_len("PDE parameter", problem.parameter_dim(), xi.len())?;
    if xi.iter().any(|v| !v.is_finite()) {
        return Err(Error::Model {
            position: xi.to_vec(),
            reason: "non-finite parameter".into(),
        });
    }
    Ok(())
}

pub fn assemble(problem: &ParabolicProblem, xi: &[f64], fidelity: Fidelity) -> Result<AssembledSystem> {
    check_xi(problem, xi)?;
    let level = problem.level(fidelity);
    let n = level.mesh.node_count();
    match &problem.kind {
        ProblemKind::InitialCenter(params) => {
            let (system, factor) = fixed_system(level)?;
            let loads = center_loads(level, params, xi);
            Ok(AssembledSystem {
                fidelity,
                system,
                factor,
                kappa: vec![1.0; level.mesh.element_count()],
                load: level.mass.mul_vec(&loads.s),
                boundary: loads.u0.clone(),
                time_factors: (0..=level.steps).map(|k| (-level.time(k)).exp()).collect(),
                initial: loads.u0,
            })
        }
        ProblemKind::Permeability { params, .. } => {
            let kappa: Vec<f64> = (0..level.mesh.element_count())
                .map(|e| {
                    let y = level.field_mean[e]
                        + level.field_modes.iter().zip(xi).map(|(m, x)| m[e] * x).sum::<f64>();
                    y.exp()
                })
                .collect();
            if kappa.iter().any(|k| !(k.is_finite() && *k > 0.0)) {
                return Err(Error::Model {
                    position: xi.to_vec(),
                    reason: "permeability field overflowed".into(),
                });
            }
            let (system, factor) = level.system(&kappa)?;
            Ok(AssembledSystem {
                fidelity,
                system,
                factor,
                kappa,
                load: level.fixed_load.clone().expect("permeability source assembled"),
                boundary: vec![0.0; n],
                time_factors: vec![1.0; level.steps + 1],
                initial: vec![params.initial_value; n],
            })
        }
    }
}

fn gather(level: &Discretization, full: &[f64]) -> Vec<f64> {
    level.free.iter().map(|&g| full[g]).collect()
}

fn extend_free(level: &Discretization, values: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; level.mesh.node_count()];
    for (li, &g) in level.free.iter().enumerate() {
        out[g] = values[li];
    }
    out
}

pub(crate) fn forward_states(level: &Discretization, sys: &AssembledSystem) -> Result<Vec<Vec<f64>>> {
    let n = level.mesh.node_count();
    let inv_dt = 1.0 / level.dt;
    let has_dirichlet = level.free.len() < n;
    let mut states = Vec::with_capacity(level.steps + 1);
    states.push(sys.initial.clone());
    let mut mu = vec![0.0; n];
    for k in 1..=level.steps {
        let phi = sys.time_factors[k];
        level.mass.mul_vec_into(&states[k - 1], &mut mu);
        let mut rhs: Vec<f64> = (0..n).map(|v| phi * sys.load[v] + inv_dt * mu[v]).collect();
        let mut next = vec![0.0; n];
        if has_dirichlet {
            for v in 0..n {
                if level.local[v].is_none() {
                    next[v] = phi * sys.boundary[v];
                }
            }
            let lift = sys.system.mul_vec(&next);
            for v in 0..n {
                rhs[v] -= lift[v];
            }
        }
        let mut x = gather(level, &rhs);
        sys.factor.solve_in_place(&mut x);
        for (li, &g) in level.free.iter().enumerate() {
            next[g] = x[li];
        }
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::Solver {
                step: k,
                reason: "non-finite state".into(),
            });
        }
        states.push(next);
    }
    Ok(states)
}

pub(crate) fn observe_states(level: &Discretization, states: &[Vec<f64>]) -> Vec<f64> {
    level
        .observations
        .iter()
        .map(|o| o.weights.iter().map(|&(v, w)| w * states[o.level][v]).sum())
        .collect()
}

/// `Cᵀ r` as a block vector over time levels.
pub fn observation_adjoint(problem: &ParabolicProblem, fidelity: Fidelity, residual: &[f64]) -> Result<Vec<Vec<f64>>> {
    check_len("residual", problem.obs_count(), residual.len())?;
    let level = problem.level(fidelity);
    let mut out = vec![vec![0.0; level.mesh.node_count()]; level.steps + 1];
    for (o, r) in level.observations.iter().zip(residual) {
        for &(v, w) in &o.weights {
            out[o.level][v] += w * r;
        }
    }
    Ok(out)
}

fn costate_states(level: &Discretization, system: &CsrMatrix, factor: &BandedCholesky, injections: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let n = level.mesh.node_count();
    let inv_dt = 1.0 / level.dt;
    let mut z = vec![Vec::new(); level.steps + 1];
    let mut carry = vec![0.0; n];
    for k in (1..=level.steps).rev() {
        // q = −(Cᵀr)^k + (1/Δt) M ext(z_F^{k+1})
        let q: Vec<f64> = (0..n).map(|v| -injections[k][v] + carry[v]).collect();
        let mut zf = gather(level, &q);
        factor.solve_in_place(&mut zf);
        let ext = extend_free(level, &zf);
        let mut zk = ext.clone();
        if level.free.len() < n {
            let sz = system.mul_vec(&ext);
            for v in 0..n {
                if level.local[v].is_none() {
                    zk[v] = q[v] - sz[v];
                }
            }
        }
        if zk.iter().any(|v| !v.is_finite()) {
            return Err(Error::Solver {
                step: k,
                reason: "non-finite costate".into(),
            });
        }
        carry = level.mass.mul_vec(&ext).into_iter().map(|v| v * inv_dt).collect();
        z[k] = zk;
    }
    z[0] = (0..n).map(|v| -injections[0][v] + carry[v]).collect();
    Ok(z)
}

pub fn solve_forward(problem: &ParabolicProblem, xi: &[f64], fidelity: Fidelity) -> Result<ForwardSolution> {
    let sys = assemble(problem, xi, fidelity)?;
    forward_with(problem, &sys)
}

pub fn forward_with(problem: &ParabolicProblem, sys: &AssembledSystem) -> Result<ForwardSolution> {
    let level = problem.level(sys.fidelity);
    let states = forward_states(level, sys)?;
    let observed = observe_states(level, &states);
    let residual = if problem.data.is_empty() {
        Vec::new()
    } else {
        observed.iter().zip(&problem.data).map(|(g, d)| g - d).collect()
    };
    Ok(ForwardSolution {
        states,
        observed,
        residual,
    })
}

/// Solves `A(ξ)ᵀ z = −Cᵀ r` backward in time.
pub fn solve_costate(problem: &ParabolicProblem, xi: &[f64], fidelity: Fidelity, residual: &[f64]) -> Result<Vec<Vec<f64>>> {
    let sys = assemble(problem, xi, fidelity)?;
    costate_with(problem, &sys, residual)
}

pub fn costate_with(problem: &ParabolicProblem, sys: &AssembledSystem, residual: &[f64]) -> Result<Vec<Vec<f64>>> {
    let level = problem.level(sys.fidelity);
    let inj = observation_adjoint(problem, sys.fidelity, residual)?;
    costate_states(level, &sys.system, &sys.factor, &inj)
}

/// `Jᵀ r = [A'_i v − F'_i] · z` for every parameter `i`.
pub fn adjoint_contraction(
    problem: &ParabolicProblem,
    xi: &[f64],
    sys: &AssembledSystem,
    states: &[Vec<f64>],
    costate: &[Vec<f64>],
) -> Result<Vec<f64>> {
    let level = problem.level(sys.fidelity);
    match &problem.kind {
        ProblemKind::InitialCenter(params) => {
            // A' = 0; F'^0 = ∂u₀, F'^k = φ_k ((M ∂s)_F, ∂u₀_D)
            let loads = center_loads(level, params, xi);
            let n = level.mesh.node_count();
            let mut zhat = vec![0.0; n];
            for k in 1..=level.steps {
                let phi = sys.time_factors[k];
                for v in 0..n {
                    zhat[v] += phi * costate[k][v];
                }
            }
            let (a, b) = split_summary(level, &costate[0], &zhat);
            Ok((0..2)
                .map(|i| -(dot(&a, &loads.du0[i]) + dot(&b, &loads.ds[i])))
                .collect())
        }
        ProblemKind::Permeability { .. } => {
            // F' = 0; A'_i = K(κ √λ_i φ_i) on free rows
            let kref = element_stiffness();
            let mesh = &level.mesh;
            let mut ge = vec![0.0; mesh.element_count()];
            for k in 1..=level.steps {
                let (u, z) = (&states[k], &costate[k]);
                for (e, g) in ge.iter_mut().enumerate() {
                    let nodes = mesh.element_nodes(e);
                    let mut s = 0.0;
                    for (a, &na) in nodes.iter().enumerate() {
                        if level.local[na].is_none() {
                            continue;
                        }
                        let mut ku = 0.0;
                        for (b, &nb) in nodes.iter().enumerate() {
                            ku += kref[a][b] * u[nb];
                        }
                        s += z[na] * ku;
                    }
                    *g += s;
                }
            }
            Ok(level
                .field_modes
                .iter()
                .map(|m| {
                    m.iter()
                        .zip(&sys.kappa)
                        .zip(&ge)
                        .map(|((mi, k), g)| mi * k * g)
                        .sum()
                })
                .collect())
        }
    }
}

/// `(z⁰ + ext_D(Ẑ_D), M ext_F(Ẑ_F))`: pairing these with `(u₀, s)` gives
/// `z · F`.
fn split_summary(level: &Discretization, z0: &[f64], zhat: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = zhat.len();
    let mut a = z0.to_vec();
    let mut zf = vec![0.0; n];
    for v in 0..n {
        if level.local[v].is_some() {
            zf[v] = zhat[v];
        } else {
            a[v] += zhat[v];
        }
    }
    (a, level.mass.mul_vec(&zf))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `∇ψ(ξ) = J(ξ)ᵀ (G(ξ) − d) / σ_o²`.
pub fn gradient_loglik(problem: &ParabolicProblem, xi: &[f64], fidelity: Fidelity) -> Result<Vec<f64>> {
    let (_, jt) = problem.observe_with_adjoint(xi, fidelity, &problem.data)?;
    let s2 = problem.noise_sd * problem.noise_sd;
    Ok(jt.into_iter().map(|v| v / s2).collect())
}

fn full_adjoint(problem: &ParabolicProblem, xi: &[f64], fidelity: Fidelity, data: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let sys = assemble(problem, xi, fidelity)?;
    let level = problem.level(fidelity);
    let states = forward_states(level, &sys)?;
    let g = observe_states(level, &states);
    let r: Vec<f64> = g.iter().zip(data).map(|(g, d)| g - d).collect();
    let z = costate_with(problem, &sys, &r)?;
    let jt = adjoint_contraction(problem, xi, &sys, &states, &z)?;
    Ok((g, jt))
}

fn reduced(problem: &ParabolicProblem, fidelity: Fidelity) -> Result<&ReducedAdjoint> {
    let level = problem.level(fidelity);
    if let Some(r) = level.reduced.get() {
        return Ok(r);
    }
    let (system, factor) = fixed_system(level)?;
    let phi: Vec<f64> = (0..=level.steps).map(|k| (-level.time(k)).exp()).collect();
    let n = level.mesh.node_count();
    let mut a = Vec::with_capacity(problem.obs_count());
    let mut b = Vec::with_capacity(problem.obs_count());
    for j in 0..problem.obs_count() {
        let mut unit = vec![0.0; problem.obs_count()];
        unit[j] = 1.0;
        let inj = observation_adjoint(problem, fidelity, &unit)?;
        let z = costate_states(level, &system, &factor, &inj)?;
        let mut zhat = vec![0.0; n];
        for k in 1..=level.steps {
            for v in 0..n {
                zhat[v] += phi[k] * z[k][v];
            }
        }
        let (aj, bj) = split_summary(level, &z[0], &zhat);
        a.push(aj);
        b.push(bj);
    }
    Ok(level.reduced.get_or_init(|| ReducedAdjoint { a, b }))
}

fn reduced_adjoint(problem: &ParabolicProblem, xi: &[f64], fidelity: Fidelity, data: Option<&[f64]>) -> Result<(Vec<f64>, Vec<f64>)> {
    check_xi(problem, xi)?;
    let ProblemKind::InitialCenter(params) = &problem.kind else {
        return Err(Error::Config("precomputed adjoints need the initial_center problem".into()));
    };
    let red = reduced(problem, fidelity)?;
    let loads = center_loads(problem.level(fidelity), params, xi);
    // z^{(j)} solves Aᵀz = −C_jᵀ, so G_j = C_j A⁻¹F = −z^{(j)}·F
    let g: Vec<f64> = red
        .a
        .iter()
        .zip(&red.b)
        .map(|(a, b)| -(dot(a, &loads.u0) + dot(b, &loads.s)))
        .collect();
    let Some(data) = data else {
        return Ok((g, Vec::new()));
    };
    let mut jt = vec![0.0; 2];
    for ((a, b), (gj, dj)) in red.a.iter().zip(&red.b).zip(g.iter().zip(data)) {
        let r = gj - dj;
        for (i, out) in jt.iter_mut().enumerate() {
            *out -= r * (dot(a, &loads.du0[i]) + dot(b, &loads.ds[i]));
        }
    }
    Ok((g, jt))
}

impl ForwardModel for ParabolicProblem {
    fn input_dim(&self) -> usize {
        self.parameter_dim()
    }

    fn output_dim(&self) -> usize {
        self.obs_count()
    }

    fn observe(&self, xi: &[f64], fidelity: Fidelity) -> Result<Vec<f64>> {
        match self.adjoint {
            super::AdjointMode::Precomputed => Ok(reduced_adjoint(self, xi, fidelity, None)?.0),
            super::AdjointMode::Full => Ok(solve_forward(self, xi, fidelity)?.observed),
        }
    }

    fn observe_with_adjoint(&self, xi: &[f64], fidelity: Fidelity, data: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        check_len("data", self.obs_count(), data.len())?;
        match self.adjoint {
            super::AdjointMode::Precomputed => reduced_adjoint(self, xi, fidelity, Some(data)),
            super::AdjointMode::Full => full_adjoint(self, xi, fidelity, data),
        }
    }
}

/// Right-hand side `F(ξ)` as a block vector.
pub fn block_rhs(problem: &ParabolicProblem, sys: &AssembledSystem) -> Vec<Vec<f64>> {
    let level = problem.level(sys.fidelity);
    let mut out = vec![sys.initial.clone()];
    for k in 1..=level.steps {
        let phi = sys.time_factors[k];
        out.push(
            (0..level.mesh.node_count())
                .map(|v| {
                    if level.local[v].is_some() {
                        phi * sys.load[v]
                    } else {
                        phi * sys.boundary[v]
                    }
                })
                .collect(),
        );
    }
    out
}

/// `A v` for a block vector `v`.
pub fn apply_block_operator(problem: &ParabolicProblem, sys: &AssembledSystem, v: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let level = problem.level(sys.fidelity);
    let inv_dt = 1.0 / level.dt;
    let mut out = vec![v[0].clone()];
    for k in 1..v.len() {
        let sv = sys.system.mul_vec(&v[k]);
        let mv = level.mass.mul_vec(&v[k - 1]);
        out.push(
            (0..sv.len())
                .map(|i| {
                    if level.local[i].is_some() {
                        sv[i] - inv_dt * mv[i]
                    } else {
                        v[k][i]
                    }
                })
                .collect(),
        );
    }
    out
}

/// `Aᵀ z` for a block vector `z`, assembled independently of the costate
/// sweep.
pub fn apply_block_transpose(problem: &ParabolicProblem, sys: &AssembledSystem, z: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let level = problem.level(sys.fidelity);
    let inv_dt = 1.0 / level.dt;
    let n = level.mesh.node_count();
    let last = z.len() - 1;
    let mut out = Vec::with_capacity(z.len());
    for k in 0..z.len() {
        let mut col = if k == 0 {
            z[0].clone()
        } else {
            let zf: Vec<f64> = (0..n).map(|i| if level.local[i].is_some() { z[k][i] } else { 0.0 }).collect();
            let mut c = sys.system.transpose_mul_vec(&zf);
            for i in 0..n {
                if level.local[i].is_none() {
                    c[i] += z[k][i];
                }
            }
            c
        };
        if k < last {
            let zf: Vec<f64> = (0..n).map(|i| if level.local[i].is_some() { z[k + 1][i] } else { 0.0 }).collect();
            let m = level.mass.transpose_mul_vec(&zf);
            for i in 0..n {
                col[i] -= inv_dt * m[i];
            }
        }
        out.push(col);
    }
    out
}
