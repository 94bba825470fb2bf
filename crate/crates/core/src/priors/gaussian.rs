use faer::Mat;

use crate::error::{check_len, Error, Result};
use crate::linalg::{self, mat_vec};

const SYMMETRY_TOL: f64 = 1e-12;
const CLIP_TOL: f64 = 1e-10;

/// Symmetric square root `S` with `S·S = B`.
///
/// Eigenvalues in `[-1e-10·‖B‖, 0)` are clipped to zero; anything more
/// negative is rejected.
pub fn factorize_covariance(b: &Mat<f64>) -> Result<Mat<f64>> {
    Ok(SpectralFactor::new(b)?.sqrt)
}

struct SpectralFactor {
    values: Vec<f64>,
    vectors: Mat<f64>,
    sqrt: Mat<f64>,
}

impl SpectralFactor {
    fn new(b: &Mat<f64>) -> Result<Self> {
        if b.nrows() != b.ncols() {
            return Err(Error::dim("covariance columns", b.nrows(), b.ncols()));
        }
        let scale = linalg::max_abs(b).max(f64::MIN_POSITIVE);
        let asym = linalg::asymmetry(b);
        if asym > SYMMETRY_TOL * scale {
            return Err(Error::Precondition(format!(
                "covariance is not symmetric (max |b_ij - b_ji| = {asym:e})"
            )));
        }
        let (mut values, vectors) = linalg::symmetric_eigen(b)?;
        let norm = linalg::frobenius(b);
        let tolerance = CLIP_TOL * norm;
        for v in values.iter_mut() {
            if *v < -tolerance {
                return Err(Error::NotPositiveSemidefinite {
                    eigenvalue: *v,
                    tolerance,
                });
            }
            if *v < 0.0 {
                *v = 0.0;
            }
        }
        let sqrt = linalg::spectral_map(&values, &vectors, f64::sqrt);
        Ok(Self {
            values,
            vectors,
            sqrt,
        })
    }
}

/// Gaussian prior `N(m, B)` with its symmetric square root and precision.
#[derive(Debug, Clone)]
pub struct GaussianPrior {
    mean: Vec<f64>,
    covariance: Mat<f64>,
    sqrt_factor: Mat<f64>,
    precision: Mat<f64>,
    log_det: f64,
}

impl GaussianPrior {
    pub fn new(mean: Vec<f64>, covariance: Mat<f64>) -> Result<Self> {
        check_len("prior mean", covariance.nrows(), mean.len())?;
        let factor = SpectralFactor::new(&covariance)?;
        let min = factor.values.iter().cloned().fold(f64::INFINITY, f64::min);
        if min <= 0.0 {
            return Err(Error::Precondition(format!(
                "prior covariance must be positive definite (smallest eigenvalue {min:e})"
            )));
        }
        let precision = linalg::spectral_map(&factor.values, &factor.vectors, |v| 1.0 / v);
        let log_det = factor.values.iter().map(|v| v.ln()).sum();
        Ok(Self {
            mean,
            covariance,
            sqrt_factor: factor.sqrt,
            precision,
            log_det,
        })
    }

    /// `N(m, s²I)`.
    pub fn isotropic(mean: Vec<f64>, variance: f64) -> Result<Self> {
        let n = mean.len();
        Self::new(mean, linalg::diagonal(&vec![variance; n]))
    }

    pub fn standard(dim: usize) -> Self {
        Self::isotropic(vec![0.0; dim], 1.0).expect("identity covariance is valid")
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn covariance(&self) -> &Mat<f64> {
        &self.covariance
    }

    pub fn sqrt_factor(&self) -> &Mat<f64> {
        &self.sqrt_factor
    }

    pub fn precision(&self) -> &Mat<f64> {
        &self.precision
    }

    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    /// `B v`.
    pub fn apply_covariance(&self, v: &[f64]) -> Vec<f64> {
        mat_vec(&self.covariance, v)
    }

    /// `S w`.
    pub fn apply_sqrt(&self, w: &[f64]) -> Vec<f64> {
        mat_vec(&self.sqrt_factor, w)
    }

    /// `B⁻¹ (ξ - m)`.
    pub fn precision_residual(&self, xi: &[f64]) -> Vec<f64> {
        let centered: Vec<f64> = xi.iter().zip(&self.mean).map(|(x, m)| x - m).collect();
        mat_vec(&self.precision, &centered)
    }

    /// `½ (ξ - m)ᵀ B⁻¹ (ξ - m)`.
    pub fn quadratic(&self, xi: &[f64]) -> f64 {
        let centered: Vec<f64> = xi.iter().zip(&self.mean).map(|(x, m)| x - m).collect();
        0.5 * linalg::quad_form(&self.precision, &centered)
    }
}

/// `m + S w`.
pub fn sample_prior(prior: &GaussianPrior, noise: &[f64]) -> Result<Vec<f64>> {
    check_len("prior noise", prior.dim(), noise.len())?;
    let sw = prior.apply_sqrt(noise);
    Ok(prior.mean.iter().zip(sw).map(|(m, s)| m + s).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::matrix_from_rows;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn residual(s: &Mat<f64>, b: &Mat<f64>) -> f64 {
        let ss = s * s;
        let diff = Mat::from_fn(b.nrows(), b.ncols(), |i, j| ss[(i, j)] - b[(i, j)]);
        linalg::frobenius(&diff) / linalg::frobenius(b)
    }

    #[test]
    fn identity_root_is_identity() {
        let s = factorize_covariance(&linalg::diagonal(&[1.0, 1.0, 1.0])).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((s[(i, j)] - expect).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn quarter_diagonal_root() {
        let s = factorize_covariance(&linalg::diagonal(&[0.25, 0.25])).unwrap();
        assert!((s[(0, 0)] - 0.5).abs() < 1e-15);
        assert!((s[(1, 1)] - 0.5).abs() < 1e-15);
        assert!(s[(0, 1)].abs() < 1e-15);
    }

    #[test]
    fn random_spd_root_matches_independent_reconstruction() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 5;
        let a = Mat::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let b = Mat::from_fn(n, n, |i, j| {
            (0..n).map(|k| a[(i, k)] * a[(j, k)]).sum::<f64>() + if i == j { 0.5 } else { 0.0 }
        });
        let s = factorize_covariance(&b).unwrap();
        assert!(linalg::asymmetry(&s) < 1e-12);
        assert!(residual(&s, &b) < 1e-10);

        // oracle: Cholesky factor L satisfies L Lᵀ = B; S and L differ by an
        // orthogonal factor, so Sᵀ S must equal L Lᵀ as well.
        let llt = b.llt(faer::Side::Lower).unwrap();
        let l = llt.L().to_owned();
        let llt_b = &l * l.transpose();
        let sts = s.transpose() * &s;
        let diff = Mat::from_fn(n, n, |i, j| sts[(i, j)] - llt_b[(i, j)]);
        assert!(linalg::frobenius(&diff) / linalg::frobenius(&b) < 1e-10);
    }

    #[test]
    fn tiny_negative_eigenvalue_is_clipped() {
        let b = matrix_from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0 - 1e-13]]).unwrap();
        let s = factorize_covariance(&b).unwrap();
        assert!(residual(&s, &b) < 1e-10);
    }

    #[test]
    fn indefinite_is_rejected() {
        let b = matrix_from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]).unwrap();
        assert!(matches!(
            factorize_covariance(&b),
            Err(Error::NotPositiveSemidefinite { .. })
        ));
    }

    #[test]
    fn asymmetric_is_rejected() {
        let b = matrix_from_rows(&[vec![1.0, 0.2], vec![0.1, 1.0]]).unwrap();
        assert!(matches!(factorize_covariance(&b), Err(Error::Precondition(_))));
    }

    #[test]
    fn sample_prior_edge_cases() {
        let prior = GaussianPrior::new(vec![0.5, -1.0], linalg::diagonal(&[2.0, 3.0])).unwrap();
        assert_eq!(sample_prior(&prior, &[0.0, 0.0]).unwrap(), vec![0.5, -1.0]);
        let std = GaussianPrior::standard(3);
        assert_eq!(
            sample_prior(&std, &[0.3, -0.2, 1.5]).unwrap(),
            vec![0.3, -0.2, 1.5]
        );
        assert!(sample_prior(&std, &[0.0]).is_err());
    }

    #[test]
    fn sample_covariance_matches_prior() {
        let prior = GaussianPrior::new(vec![0.5, 0.5], linalg::diagonal(&[0.25, 0.25])).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 100_000;
        let mut acc = [[0.0; 2]; 2];
        let mut mean = [0.0; 2];
        let draws: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                let w: Vec<f64> = (0..2).map(|_| rng.sample(StandardNormal)).collect();
                sample_prior(&prior, &w).unwrap()
            })
            .collect();
        for d in &draws {
            mean[0] += d[0] / n as f64;
            mean[1] += d[1] / n as f64;
        }
        for d in &draws {
            for i in 0..2 {
                for j in 0..2 {
                    acc[i][j] += (d[i] - mean[i]) * (d[j] - mean[j]) / n as f64;
                }
            }
        }
        // standard error of a Gaussian sample covariance entry: sqrt((B_ii B_jj + B_ij²)/n)
        let target = [[0.25, 0.0], [0.0, 0.25]];
        for i in 0..2 {
            for j in 0..2 {
                let se = ((0.25 * 0.25 + target[i][j] * target[i][j]) / n as f64).sqrt();
                assert!(
                    (acc[i][j] - target[i][j]).abs() < 3.0 * se,
                    "entry ({i},{j}) = {}",
                    acc[i][j]
                );
            }
        }
    }

    #[test]
    fn quadratic_matches_closed_form_inverse() {
        let b = matrix_from_rows(&[vec![2.0, 0.5], vec![0.5, 1.0]]).unwrap();
        let prior = GaussianPrior::new(vec![1.0, -1.0], b).unwrap();
        let xi = [1.5, 0.0];
        let det = 2.0 * 1.0 - 0.25;
        let (d0, d1) = (0.5, 1.0);
        let q = (1.0 * d0 * d0 - 2.0 * 0.5 * d0 * d1 + 2.0 * d1 * d1) / det;
        assert!((prior.quadratic(&xi) - 0.5 * q).abs() < 1e-14);
    }
}
