use super::{PcnCoefficients, StepSchedule};
use crate::error::{check_len, Error, Result};
use crate::priors::GaussianPrior;
use crate::targets::{Evaluation, Fidelity, TargetModel};

/// One replica: position plus the energy and potential gradient cached at it.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainState {
    pub position: Vec<f64>,
    pub energy: f64,
    pub grad_potential: Vec<f64>,
    pub fidelity: Fidelity,
}

impl ChainState {
    /// Evaluates `model` at `position` to fill the cache.
    pub fn new<M: TargetModel + ?Sized>(
        model: &M,
        position: Vec<f64>,
        fidelity: Fidelity,
    ) -> Result<Self> {
        check_len("chain position", model.dim(), position.len())?;
        let eval = evaluate_checked(model, &position, fidelity)?;
        Ok(Self::from_evaluation(position, eval, fidelity))
    }

    pub fn from_evaluation(position: Vec<f64>, eval: Evaluation, fidelity: Fidelity) -> Self {
        Self {
            position,
            energy: eval.energy,
            grad_potential: eval.grad_potential,
            fidelity,
        }
    }

    /// Moves to `fidelity`, re-evaluating only if it differs.
    pub fn at_fidelity<M: TargetModel + ?Sized>(self, model: &M, fidelity: Fidelity) -> Result<Self> {
        if self.fidelity == fidelity {
            Ok(self)
        } else {
            Self::new(model, self.position, fidelity)
        }
    }
}

fn evaluate_checked<M: TargetModel + ?Sized>(
    model: &M,
    xi: &[f64],
    fidelity: Fidelity,
) -> Result<Evaluation> {
    let eval = model.evaluate(xi, fidelity).map_err(|e| match e {
        Error::Model { .. } => e,
        other => Error::Model {
            position: xi.to_vec(),
            reason: other.to_string(),
        },
    })?;
    if !eval.energy.is_finite() || eval.grad_potential.iter().any(|g| !g.is_finite()) {
        return Err(Error::Model {
            position: xi.to_vec(),
            reason: "non-finite energy or gradient".into(),
        });
    }
    Ok(eval)
}

/// `ξ' = √(1−β²) ξ + (1−√(1−β²))(m − B∇ψ) + β√τ S w` with `S = √B`.
pub fn pcn_update(
    position: &[f64],
    grad_potential: &[f64],
    prior: &GaussianPrior,
    coefficients: &PcnCoefficients,
    tau: f64,
    noise: &[f64],
) -> Result<Vec<f64>> {
    let n = prior.dim();
    check_len("position", n, position.len())?;
    check_len("potential gradient", n, grad_potential.len())?;
    check_len("noise", n, noise.len())?;
    let b_grad = prior.apply_covariance(grad_potential);
    let sw = prior.apply_sqrt(noise);
    let scale = coefficients.beta * tau.sqrt();
    Ok((0..n)
        .map(|i| {
            coefficients.contraction * position[i]
                + coefficients.drift * (prior.mean()[i] - b_grad[i])
                + scale * sw[i]
        })
        .collect())
}

/// `ξ' = ξ − (1−√(1−β²)) B∇U(ξ) + β√τ S w`, given the full energy gradient.
pub fn pcn_update_energy_form(
    position: &[f64],
    grad_energy: &[f64],
    prior: &GaussianPrior,
    coefficients: &PcnCoefficients,
    tau: f64,
    noise: &[f64],
) -> Result<Vec<f64>> {
    let n = prior.dim();
    check_len("position", n, position.len())?;
    check_len("energy gradient", n, grad_energy.len())?;
    check_len("noise", n, noise.len())?;
    let b_grad = prior.apply_covariance(grad_energy);
    let sw = prior.apply_sqrt(noise);
    let scale = coefficients.beta * tau.sqrt();
    Ok((0..n)
        .map(|i| position[i] - coefficients.drift * b_grad[i] + scale * sw[i])
        .collect())
}

/// Advances one chain by one pCNLD step and refreshes its cache.
pub fn pcnld_step<M: TargetModel + ?Sized>(
    state: &ChainState,
    model: &M,
    prior: &GaussianPrior,
    schedule: &StepSchedule,
    tau: f64,
    noise: &[f64],
) -> Result<ChainState> {
    let next = pcn_update(
        &state.position,
        &state.grad_potential,
        prior,
        &schedule.coefficients,
        tau,
        noise,
    )?;
    ChainState::new(model, next, state.fidelity)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::matrix_from_rows;
    use crate::targets::{GaussianMixture, MixtureTarget};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    struct Flat(usize);

    impl TargetModel for Flat {
        fn dim(&self) -> usize {
            self.0
        }
        fn evaluate(&self, _xi: &[f64], _f: Fidelity) -> Result<Evaluation> {
            Ok(Evaluation {
                energy: 0.0,
                grad_potential: vec![0.0; self.0],
            })
        }
    }

    struct Broken;

    impl TargetModel for Broken {
        fn dim(&self) -> usize {
            1
        }
        fn evaluate(&self, xi: &[f64], _f: Fidelity) -> Result<Evaluation> {
            Ok(Evaluation {
                energy: if xi[0] > 0.5 { f64::NAN } else { 0.0 },
                grad_potential: vec![0.0],
            })
        }
    }

    #[test]
    fn zero_beta_is_identity() {
        let prior = GaussianPrior::standard(2);
        let c = PcnCoefficients::from_beta(0.0).unwrap();
        let x = pcn_update(&[0.3, -2.0], &[5.0, 1.0], &prior, &c, 4.0, &[1.0, -1.0]).unwrap();
        assert_eq!(x, vec![0.3, -2.0]);
    }

    #[test]
    fn deterministic_contraction() {
        let prior = GaussianPrior::standard(1);
        let c = PcnCoefficients::from_beta(0.6).unwrap();
        let x = pcn_update(&[1.0], &[0.0], &prior, &c, 1.0, &[0.0]).unwrap();
        assert!((x[0] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn psi_and_energy_forms_agree() {
        let prior = GaussianPrior::new(
            vec![0.5, -1.0],
            matrix_from_rows(&[vec![1.0, 0.3], vec![0.3, 2.0]]).unwrap(),
        )
        .unwrap();
        let s = StepSchedule::new(0.01).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..200 {
            let x: Vec<f64> = (0..2).map(|_| rng.random_range(-3.0..3.0)).collect();
            let gpsi: Vec<f64> = (0..2).map(|_| rng.random_range(-3.0..3.0)).collect();
            let w: Vec<f64> = (0..2).map(|_| rng.sample(StandardNormal)).collect();
            let pull = prior.precision_residual(&x);
            let gu: Vec<f64> = gpsi.iter().zip(&pull).map(|(a, b)| a + b).collect();
            let a = pcn_update(&x, &gpsi, &prior, &s.coefficients, 3.0, &w).unwrap();
            let b = pcn_update_energy_form(&x, &gu, &prior, &s.coefficients, 3.0, &w).unwrap();
            for (p, q) in a.iter().zip(&b) {
                assert!((p - q).abs() <= 1e-10 * p.abs().max(1.0));
            }
        }
    }

    #[test]
    fn noise_covariance_is_beta2_tau_b() {
        let b = matrix_from_rows(&[
            vec![2.0, 0.4, 0.0],
            vec![0.4, 1.0, -0.3],
            vec![0.0, -0.3, 0.5],
        ])
        .unwrap();
        let prior = GaussianPrior::new(vec![0.0; 3], b.clone()).unwrap();
        let c = PcnCoefficients::from_beta(0.4).unwrap();
        let tau = 2.5;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 100_000;
        let mut acc = [[0.0; 3]; 3];
        let zero = [0.0; 3];
        for _ in 0..n {
            let w: Vec<f64> = (0..3).map(|_| rng.sample(StandardNormal)).collect();
            let x = pcn_update(&zero, &zero, &prior, &c, tau, &w).unwrap();
            for i in 0..3 {
                for j in 0..3 {
                    acc[i][j] += x[i] * x[j];
                }
            }
        }
        let s2 = 0.16 * tau;
        for i in 0..3 {
            for j in 0..3 {
                let target = s2 * b[(i, j)];
                let se = s2 * ((b[(i, j)].powi(2) + b[(i, i)] * b[(j, j)]) / n as f64).sqrt();
                let est = acc[i][j] / n as f64;
                assert!((est - target).abs() < 3.0 * se, "({i},{j}) {est} vs {target}");
            }
        }
    }

    #[test]
    fn step_refreshes_cache() {
        let mix = GaussianMixture::new(
            vec![0.4, 0.6],
            vec![vec![-3.0], vec![2.0]],
            vec![crate::linalg::diagonal(&[0.49]), crate::linalg::diagonal(&[0.25])],
        )
        .unwrap();
        let prior = GaussianPrior::isotropic(vec![0.0], 3.0).unwrap();
        let model = MixtureTarget::new(mix, prior.clone()).unwrap();
        let s = StepSchedule::new(0.001).unwrap();
        let st = ChainState::new(&model, vec![2.0], Fidelity::High).unwrap();
        let next = pcnld_step(&st, &model, &prior, &s, 1.0, &[0.7]).unwrap();
        let again = ChainState::new(&model, next.position.clone(), Fidelity::High).unwrap();
        assert_eq!(next, again);
    }

    #[test]
    fn failures_carry_position() {
        let prior = GaussianPrior::standard(1);
        let st = ChainState::new(&Broken, vec![0.0], Fidelity::High).unwrap();
        let c = PcnCoefficients::from_beta(1.0).unwrap();
        let s = StepSchedule { delta: 2.0, beta: 1.0, eta: 0.5, coefficients: c };
        match pcnld_step(&st, &Broken, &prior, &s, 1.0, &[1.0]) {
            Err(Error::Model { position, .. }) => assert_eq!(position, vec![1.0]),
            other => panic!("unexpected {other:?}"),
        }
        let _ = ChainState::new(&Flat(2), vec![0.0; 2], Fidelity::Low).unwrap();
        assert!(ChainState::new(&Flat(2), vec![0.0; 3], Fidelity::Low).is_err());
    }
}
