use faer::Mat;

use super::{Evaluation, Fidelity, TargetModel};
use crate::error::{check_len, Error, Result};
use crate::linalg::{self, mat_vec};
use crate::priors::GaussianPrior;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone)]
pub struct MixtureComponent {
    pub weight: f64,
    pub mean: Vec<f64>,
    pub covariance: Mat<f64>,
    precision: Mat<f64>,
    log_norm: f64,
}

impl MixtureComponent {
    pub fn precision(&self) -> &Mat<f64> {
        &self.precision
    }

    fn log_density(&self, xi: &[f64]) -> f64 {
        let d: Vec<f64> = xi.iter().zip(&self.mean).map(|(x, m)| x - m).collect();
        self.log_norm - 0.5 * linalg::quad_form(&self.precision, &d)
    }
}

/// `π(ξ) = Σ_k γ_k N(ξ; m_k, B_k)`.
#[derive(Debug, Clone)]
pub struct GaussianMixture {
    dim: usize,
    components: Vec<MixtureComponent>,
}

impl GaussianMixture {
    pub fn new(weights: Vec<f64>, means: Vec<Vec<f64>>, covariances: Vec<Mat<f64>>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::Config("mixture needs at least one component".into()));
        }
        check_len("mixture means", weights.len(), means.len())?;
        check_len("mixture covariances", weights.len(), covariances.len())?;
        if weights.iter().any(|&w| !(w >= 0.0)) {
            return Err(Error::Config(format!(
                "mixture weights must be nonnegative, got {weights:?}"
            )));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Config(format!(
                "mixture weights must sum to 1, got {total}"
            )));
        }
        let dim = means[0].len();
        let mut components = Vec::with_capacity(weights.len());
        for ((weight, mean), covariance) in weights.into_iter().zip(means).zip(covariances) {
            check_len("component mean", dim, mean.len())?;
            check_len("component covariance", dim, covariance.nrows())?;
            let (precision, log_det) = linalg::spd_inverse_logdet(&covariance)?;
            let log_norm = -0.5 * (dim as f64 * LN_2PI + log_det);
            components.push(MixtureComponent {
                weight,
                mean,
                covariance,
                precision,
                log_norm,
            });
        }
        Ok(Self { dim, components })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn components(&self) -> &[MixtureComponent] {
        &self.components
    }

    /// `log γ_k + log φ_k(ξ)` per component (`-∞` for zero weight).
    fn weighted_log_densities(&self, xi: &[f64]) -> Vec<f64> {
        self.components
            .iter()
            .map(|c| {
                if c.weight == 0.0 {
                    f64::NEG_INFINITY
                } else {
                    c.weight.ln() + c.log_density(xi)
                }
            })
            .collect()
    }

    /// Component responsibilities at `ξ` and the log density, via max-shifted
    /// exponentials.
    fn responsibilities(&self, xi: &[f64]) -> (Vec<f64>, f64) {
        let logs = self.weighted_log_densities(xi);
        let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
        let sum: f64 = exps.iter().sum();
        (exps.iter().map(|e| e / sum).collect(), max + sum.ln())
    }
}

pub fn mixture_log_density(mix: &GaussianMixture, xi: &[f64]) -> Result<f64> {
    check_len("mixture position", mix.dim, xi.len())?;
    Ok(mix.responsibilities(xi).1)
}

/// `∇ log π(ξ) = Σ_k w_k(ξ) B_k⁻¹ (m_k - ξ)`.
pub fn mixture_grad_log_density(mix: &GaussianMixture, xi: &[f64]) -> Result<Vec<f64>> {
    check_len("mixture position", mix.dim, xi.len())?;
    Ok(grad_from_responsibilities(mix, xi, &mix.responsibilities(xi).0))
}

fn grad_from_responsibilities(mix: &GaussianMixture, xi: &[f64], resp: &[f64]) -> Vec<f64> {
    let mut g = vec![0.0; mix.dim];
    for (c, &w) in mix.components.iter().zip(resp) {
        if w == 0.0 {
            continue;
        }
        let d: Vec<f64> = c.mean.iter().zip(xi).map(|(m, x)| m - x).collect();
        for (gi, v) in g.iter_mut().zip(mat_vec(&c.precision, &d)) {
            *gi += w * v;
        }
    }
    g
}

/// `ψ(ξ) = -log π(ξ) - ½(ξ-m)ᵀB⁻¹(ξ-m)`, so that `U = -log π`.
pub fn mixture_potential(mix: &GaussianMixture, prior: &GaussianPrior, xi: &[f64]) -> Result<f64> {
    check_len("prior dimension", mix.dim, prior.dim())?;
    Ok(-mixture_log_density(mix, xi)? - prior.quadratic(xi))
}

/// A mixture sampled through the prior-preconditioned scheme. The prior only
/// supplies the preconditioner `B`; the energy is `-log π(ξ)`.
#[derive(Debug, Clone)]
pub struct MixtureTarget {
    pub mixture: GaussianMixture,
    pub prior: GaussianPrior,
}

impl MixtureTarget {
    pub fn new(mixture: GaussianMixture, prior: GaussianPrior) -> Result<Self> {
        check_len("prior dimension", mixture.dim(), prior.dim())?;
        Ok(Self { mixture, prior })
    }
}

impl TargetModel for MixtureTarget {
    fn dim(&self) -> usize {
        self.mixture.dim()
    }

    fn evaluate(&self, xi: &[f64], _fidelity: Fidelity) -> Result<Evaluation> {
        check_len("mixture position", self.dim(), xi.len())?;
        let (resp, log_density) = self.mixture.responsibilities(xi);
        let grad_log = grad_from_responsibilities(&self.mixture, xi, &resp);
        let prior_pull = self.prior.precision_residual(xi);
        let grad_potential = grad_log
            .iter()
            .zip(&prior_pull)
            .map(|(g, p)| -g - p)
            .collect();
        Ok(Evaluation {
            energy: -log_density,
            grad_potential,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{diagonal, matrix_from_rows};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn reference_1d() -> GaussianMixture {
        GaussianMixture::new(
            vec![0.4, 0.6],
            vec![vec![-3.0], vec![2.0]],
            vec![diagonal(&[0.49]), diagonal(&[0.25])],
        )
        .unwrap()
    }

    pub(crate) fn reference_2d() -> GaussianMixture {
        GaussianMixture::new(
            vec![0.3, 0.3, 0.4],
            vec![vec![4.0, 2.0], vec![-4.0, 2.0], vec![0.0, -3.0]],
            vec![
                matrix_from_rows(&[vec![1.0, 0.6], vec![0.6, 1.0]]).unwrap(),
                matrix_from_rows(&[vec![1.0, -0.6], vec![-0.6, 1.0]]).unwrap(),
                diagonal(&[1.0, 1.0]),
            ],
        )
        .unwrap()
    }

    fn fd_grad(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
        (0..x.len())
            .map(|i| {
                let mut p = x.to_vec();
                let mut m = x.to_vec();
                p[i] += h;
                m[i] -= h;
                (f(&p) - f(&m)) / (2.0 * h)
            })
            .collect()
    }

    fn rel_err(a: &[f64], b: &[f64]) -> f64 {
        let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        let den: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
        num / den.max(1e-300)
    }

    #[test]
    fn standard_normal_at_zero() {
        let mix = GaussianMixture::new(vec![1.0], vec![vec![0.0]], vec![diagonal(&[1.0])]).unwrap();
        let v = mixture_log_density(&mix, &[0.0]).unwrap();
        assert!((v + 0.918_938_533_204_672_7).abs() < 1e-14);
    }

    #[test]
    fn reference_mixture_at_two() {
        // direct two-term sum (mpmath): log 0.478730736... = -0.7366169764...
        let v = mixture_log_density(&reference_1d(), &[2.0]).unwrap();
        assert!((v + 0.736_616_976_406_747_7).abs() < 1e-12, "{v}");
    }

    #[test]
    fn symmetric_mixture_is_even() {
        let mix = GaussianMixture::new(
            vec![0.5, 0.5],
            vec![vec![-1.0], vec![3.0]],
            vec![diagonal(&[0.7]), diagonal(&[0.7])],
        )
        .unwrap();
        for off in [0.1, 0.9, 2.5, 7.0] {
            let a = mixture_log_density(&mix, &[1.0 + off]).unwrap();
            let b = mixture_log_density(&mix, &[1.0 - off]).unwrap();
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn densities_integrate_to_one() {
        // 1D: trapezoid over a 6-sd box around every component
        let mix = reference_1d();
        let (lo, hi, n) = (-3.0 - 6.0 * 0.7, 2.0 + 6.0 * 0.5, 20_000);
        let h = (hi - lo) / n as f64;
        let mut s = 0.0;
        for k in 0..=n {
            let x = lo + k as f64 * h;
            let w = if k == 0 || k == n { 0.5 } else { 1.0 };
            s += w * mixture_log_density(&mix, &[x]).unwrap().exp();
        }
        assert!((s * h - 1.0).abs() < 1e-4);

        let mix = reference_2d();
        let (lo, hi, n) = (-11.0, 11.0, 600);
        let h = (hi - lo) / n as f64;
        let mut s = 0.0;
        for i in 0..=n {
            for j in 0..=n {
                let wx = if i == 0 || i == n { 0.5 } else { 1.0 };
                let wy = if j == 0 || j == n { 0.5 } else { 1.0 };
                let x = [lo + i as f64 * h, lo + j as f64 * h];
                s += wx * wy * mixture_log_density(&mix, &x).unwrap().exp();
            }
        }
        assert!((s * h * h - 1.0).abs() < 1e-4, "{}", s * h * h);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for mix in [reference_1d(), reference_2d()] {
            for _ in 0..100 {
                let x: Vec<f64> = (0..mix.dim()).map(|_| rng.random_range(-6.0..6.0)).collect();
                let g = mixture_grad_log_density(&mix, &x).unwrap();
                let fd = fd_grad(|p| mixture_log_density(&mix, p).unwrap(), &x, 1e-5);
                assert!(rel_err(&g, &fd) < 1e-6, "x = {x:?}");
            }
        }
    }

    #[test]
    fn gradient_zero_at_single_mean() {
        let mix = GaussianMixture::new(
            vec![1.0],
            vec![vec![1.0, 2.0]],
            vec![matrix_from_rows(&[vec![1.0, 0.3], vec![0.3, 2.0]]).unwrap()],
        )
        .unwrap();
        let g = mixture_grad_log_density(&mix, &[1.0, 2.0]).unwrap();
        assert_eq!(g, vec![0.0, 0.0]);
    }

    #[test]
    fn reference_2d_gradient_at_first_mean() {
        let mix = reference_2d();
        let x = [4.0, 2.0];
        let g = mixture_grad_log_density(&mix, &x).unwrap();
        let fd = fd_grad(|p| mixture_log_density(&mix, p).unwrap(), &x, 1e-5);
        // the gradient vanishes up to the tiny pull of the far components
        for (a, b) in g.iter().zip(&fd) {
            assert!((a - b).abs() < 1e-8, "{g:?} vs {fd:?}");
        }
        assert!(g.iter().all(|v| v.abs() < 1e-6), "{g:?}");
        let off = [3.5, 2.5];
        let g = mixture_grad_log_density(&mix, &off).unwrap();
        let fd = fd_grad(|p| mixture_log_density(&mix, p).unwrap(), &off, 1e-5);
        assert!(rel_err(&g, &fd) < 1e-6);
    }

    #[test]
    fn energy_identity_and_target_gradient() {
        let mix = reference_1d();
        let prior = GaussianPrior::isotropic(vec![0.0], 3.0).unwrap();
        let target = MixtureTarget::new(mix.clone(), prior.clone()).unwrap();
        // ψ(0) = -log π(0) from mpmath: 8.6005255175985854
        let psi = mixture_potential(&mix, &prior, &[0.0]).unwrap();
        assert!((psi - 8.600_525_517_598_585).abs() < 1e-10);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let x = [rng.random_range(-6.0..6.0)];
            let psi = mixture_potential(&mix, &prior, &x).unwrap();
            let u = psi + prior.quadratic(&x);
            let lp = mixture_log_density(&mix, &x).unwrap();
            assert!((u + lp).abs() <= 1e-12 * (1.0 + lp.abs()));
            let eval = target.evaluate(&x, Fidelity::High).unwrap();
            assert_eq!(eval.energy, -lp);
            let fd = fd_grad(|p| mixture_potential(&mix, &prior, p).unwrap(), &x, 1e-5);
            assert!(rel_err(&eval.grad_potential, &fd) < 1e-5);
        }
    }

    #[test]
    fn prior_equal_target_gives_constant_potential() {
        let prior = GaussianPrior::isotropic(vec![0.5, -0.5], 2.0).unwrap();
        let mix = GaussianMixture::new(
            vec![1.0],
            vec![vec![0.5, -0.5]],
            vec![diagonal(&[2.0, 2.0])],
        )
        .unwrap();
        let c = 0.5 * (2.0 * LN_2PI + 2.0 * 2f64.ln());
        for x in [[0.0, 0.0], [3.0, -1.0], [-2.0, 4.0]] {
            let psi = mixture_potential(&mix, &prior, &x).unwrap();
            assert!((psi - c).abs() < 1e-12);
        }
    }

    #[test]
    fn invalid_mixtures_rejected() {
        assert!(GaussianMixture::new(vec![0.5, 0.4], vec![vec![0.0], vec![1.0]], vec![diagonal(&[1.0]), diagonal(&[1.0])]).is_err());
        assert!(GaussianMixture::new(vec![1.0], vec![vec![0.0]], vec![diagonal(&[-1.0])]).is_err());
        assert!(mixture_log_density(&reference_1d(), &[0.0, 1.0]).is_err());
    }

    #[test]
    fn evaluation_is_pure() {
        let target = MixtureTarget::new(reference_2d(), GaussianPrior::isotropic(vec![0.0, 0.0], 10.0).unwrap()).unwrap();
        let a = target.evaluate(&[0.3, -1.2], Fidelity::High).unwrap();
        let b = target.evaluate(&[0.3, -1.2], Fidelity::High).unwrap();
        assert_eq!(a, b);
    }
}
