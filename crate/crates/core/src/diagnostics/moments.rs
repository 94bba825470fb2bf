use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::linalg::{quad_form, spd_inverse_logdet};
use crate::priors::{log_field_from_coeffs, KLBasis};

/// Nodewise mean, standard deviation and skewness of `log κ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldMoments {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub skewness: Vec<f64>,
    /// Nodes with zero variance, whose skewness is reported as 0.
    pub zero_variance: Vec<bool>,
    pub samples: usize,
}

/// Pushes each sample (row of `positions`, `dim` coefficients) through the
/// KL log-field and accumulates the first three standardized moments.
pub fn field_moments(positions: &[f64], dim: usize, basis: &KLBasis) -> Result<FieldMoments> {
    check_len("KL coefficient count", basis.truncation(), dim)?;
    if dim == 0 || positions.is_empty() || !positions.len().is_multiple_of(dim) {
        return Err(Error::Precondition("field moments need a nonempty trace".into()));
    }
    let fields: Vec<Vec<f64>> = positions
        .chunks_exact(dim)
        .map(|xi| log_field_from_coeffs(basis, xi))
        .collect::<Result<_>>()?;
    let n = fields.len() as f64;
    let nodes = basis.grid().len();
    let mut out = FieldMoments {
        mean: vec![0.0; nodes],
        std: vec![0.0; nodes],
        skewness: vec![0.0; nodes],
        zero_variance: vec![false; nodes],
        samples: fields.len(),
    };
    for j in 0..nodes {
        let mean = fields.iter().map(|f| f[j]).sum::<f64>() / n;
        let (mut m2, mut m3) = (0.0, 0.0);
        for f in &fields {
            let d = f[j] - mean;
            m2 += d * d;
            m3 += d * d * d;
        }
        m2 /= n;
        m3 /= n;
        out.mean[j] = mean;
        out.std[j] = m2.sqrt();
        if m2 <= (1e-14 * mean.abs().max(1.0)).powi(2) {
            out.zero_variance[j] = true;
            out.std[j] = 0.0;
        } else {
            out.skewness[j] = m3 / m2.powf(1.5);
        }
    }
    Ok(out)
}

/// A mode for occupancy counting.
#[derive(Debug, Clone)]
pub struct Mode {
    pub mean: Vec<f64>,
    precision: Mat<f64>,
}

impl Mode {
    pub fn new(mean: Vec<f64>, covariance: &Mat<f64>) -> Result<Self> {
        check_len("mode covariance", mean.len(), covariance.nrows())?;
        let (precision, _) = spd_inverse_logdet(covariance)?;
        Ok(Self { mean, precision })
    }

    pub fn mahalanobis(&self, x: &[f64]) -> f64 {
        let d: Vec<f64> = x.iter().zip(&self.mean).map(|(a, b)| a - b).collect();
        quad_form(&self.precision, &d).max(0.0).sqrt()
    }
}

/// Fraction of samples within Mahalanobis `radius` of each mode.
pub fn mode_occupancy(positions: &[f64], dim: usize, modes: &[Mode], radius: f64) -> Result<Vec<f64>> {
    if modes.is_empty() {
        return Ok(Vec::new());
    }
    for m in modes {
        check_len("mode dimension", dim, m.mean.len())?;
    }
    if dim == 0 || !positions.len().is_multiple_of(dim) {
        return Err(Error::dim("sample matrix", dim, positions.len() % dim.max(1)));
    }
    let n = positions.len() / dim;
    if n == 0 {
        return Ok(vec![0.0; modes.len()]);
    }
    let mut counts = vec![0usize; modes.len()];
    for x in positions.chunks_exact(dim) {
        for (c, m) in counts.iter_mut().zip(modes) {
            if m.mahalanobis(x) <= radius {
                *c += 1;
            }
        }
    }
    Ok(counts.into_iter().map(|c| c as f64 / n as f64).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{diagonal, matrix_from_rows};
    use crate::priors::{kl_decompose, MaternParams, StructuredGrid};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn basis() -> KLBasis {
        let p = MaternParams::new(1.0, 0.5, vec![0.3, 0.3]).unwrap();
        kl_decompose(&p, StructuredGrid::square(8).unwrap(), 0.9).unwrap()
    }

    #[test]
    fn identical_samples_flagged() {
        let b = basis();
        let n = b.truncation();
        let pos: Vec<f64> = (0..10).flat_map(|_| vec![0.3; n]).collect();
        let m = field_moments(&pos, n, &b).unwrap();
        assert!(m.std.iter().all(|&s| s == 0.0));
        assert!(m.zero_variance.iter().all(|&f| f));
        assert!(m.skewness.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn symmetric_pair_has_zero_skew() {
        let b = basis();
        let n = b.truncation();
        let xi: Vec<f64> = (0..n).map(|i| 0.1 * (i as f64 + 1.0)).collect();
        let neg: Vec<f64> = xi.iter().map(|v| -v).collect();
        let pos: Vec<f64> = xi.iter().chain(&neg).copied().collect();
        let m = field_moments(&pos, n, &b).unwrap();
        for (j, s) in m.skewness.iter().enumerate() {
            assert!(s.abs() < 1e-8 || m.zero_variance[j], "{s}");
        }
    }

    #[test]
    fn prior_moments() {
        let b = basis();
        let n = b.truncation();
        let draws = 20_000;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pos: Vec<f64> = (0..draws * n).map(|_| rng.sample(StandardNormal)).collect();
        let m = field_moments(&pos, n, &b).unwrap();
        for j in 0..b.grid().len() {
            let var: f64 = (0..n)
                .map(|i| b.eigenvalues()[i] * b.eigenfunction(i)[j].powi(2))
                .sum();
            let se_mean = (var / draws as f64).sqrt();
            assert!((m.mean[j] - b.mean_field()[j]).abs() < 3.0 * se_mean);
            // var of sample variance for a Gaussian: 2σ⁴/N
            let se_var = var * (2.0 / draws as f64).sqrt();
            assert!((m.std[j].powi(2) - var).abs() < 3.0 * se_var, "node {j}");
        }
    }

    #[test]
    fn occupancy_examples() {
        let modes = vec![
            Mode::new(vec![-3.0], &diagonal(&[0.49])).unwrap(),
            Mode::new(vec![2.0], &diagonal(&[0.25])).unwrap(),
        ];
        let pos = vec![-3.0; 50];
        assert_eq!(mode_occupancy(&pos, 1, &modes, 2.0).unwrap(), vec![1.0, 0.0]);
        assert!(mode_occupancy(&pos, 1, &[], 2.0).unwrap().is_empty());
    }

    #[test]
    fn occupancy_of_exact_mixture_draws() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let weights = [0.3, 0.3, 0.4];
        let means = [[4.0, 2.0], [-4.0, 2.0], [0.0, -3.0]];
        let covs = [
            matrix_from_rows(&[vec![1.0, 0.6], vec![0.6, 1.0]]).unwrap(),
            matrix_from_rows(&[vec![1.0, -0.6], vec![-0.6, 1.0]]).unwrap(),
            diagonal(&[1.0, 1.0]),
        ];
        let roots: Vec<Mat<f64>> = covs.iter().map(|c| crate::priors::factorize_covariance(c).unwrap()).collect();
        let n = 50_000;
        let mut pos = Vec::with_capacity(2 * n);
        for _ in 0..n {
            let u: f64 = rng.random();
            let k = if u < 0.3 { 0 } else if u < 0.6 { 1 } else { 2 };
            let w: Vec<f64> = (0..2).map(|_| rng.sample(StandardNormal)).collect();
            let sw = crate::linalg::mat_vec(&roots[k], &w);
            pos.push(means[k][0] + sw[0]);
            pos.push(means[k][1] + sw[1]);
        }
        let modes: Vec<Mode> = means.iter().zip(&covs).map(|(m, c)| Mode::new(m.to_vec(), c).unwrap()).collect();
        let occ = mode_occupancy(&pos, 2, &modes, 2.0).unwrap();
        // P(χ²₂ ≤ 4) = 1 − e⁻²
        let capture = 1.0 - (-2.0f64).exp();
        for (o, w) in occ.iter().zip(weights) {
            assert!((o - w * capture).abs() < 0.015, "{o} vs {}", w * capture);
        }
    }
}
