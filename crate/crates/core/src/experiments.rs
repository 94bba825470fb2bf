//! Reference targets and geometry shared by the runner and the acceptance
//! suite.

use crate::diagnostics::Mode;
use crate::error::{Error, Result};
use crate::linalg::{diagonal, matrix_from_rows};
use crate::pde::InitialCenterParams;
use crate::priors::GaussianPrior;
use crate::targets::GaussianMixture;

/// Weights `(0.4, 0.6)`, means `−3, 2`, standard deviations `0.7, 0.5`;
/// prior `N(0, 3)`.
pub fn bimodal_1d() -> (GaussianMixture, GaussianPrior) {
    let mix = GaussianMixture::new(
        vec![0.4, 0.6],
        vec![vec![-3.0], vec![2.0]],
        vec![diagonal(&[0.49]), diagonal(&[0.25])],
    )
    .expect("valid mixture");
    (mix, GaussianPrior::isotropic(vec![0.0], 3.0).expect("valid prior"))
}

/// As [`bimodal_1d`] with means `−6, 4` and prior `N(0, 9)`.
pub fn far_bimodal_1d() -> (GaussianMixture, GaussianPrior) {
    let mix = GaussianMixture::new(
        vec![0.4, 0.6],
        vec![vec![-6.0], vec![4.0]],
        vec![diagonal(&[0.49]), diagonal(&[0.25])],
    )
    .expect("valid mixture");
    (mix, GaussianPrior::isotropic(vec![0.0], 9.0).expect("valid prior"))
}

/// Three correlated modes at `(4, 2)`, `(−4, 2)`, `(0, −3)`; prior `N(0, 10 I)`.
pub fn trimodal_2d() -> (GaussianMixture, GaussianPrior) {
    let mix = GaussianMixture::new(
        vec![0.3, 0.3, 0.4],
        vec![vec![4.0, 2.0], vec![-4.0, 2.0], vec![0.0, -3.0]],
        vec![
            matrix_from_rows(&[vec![1.0, 0.6], vec![0.6, 1.0]]).expect("2x2"),
            matrix_from_rows(&[vec![1.0, -0.6], vec![-0.6, 1.0]]).expect("2x2"),
            diagonal(&[1.0, 1.0]),
        ],
    )
    .expect("valid mixture");
    (mix, GaussianPrior::isotropic(vec![0.0, 0.0], 10.0).expect("valid prior"))
}

/// One [`Mode`] per mixture component.
pub fn mixture_modes(mix: &GaussianMixture) -> Result<Vec<Mode>> {
    mix.components()
        .iter()
        .map(|c| Mode::new(c.mean.clone(), &c.covariance))
        .collect()
}

/// Solution set `{ξ : u₀(x_o; ξ) = M e^{−1}}`, the ellipse
/// `(ξ₁−x₁)²/(2l₁²) + (ξ₂−x₂)²/(2l₂²) = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolutionEllipse {
    pub center: [f64; 2],
    pub semi_axes: [f64; 2],
}

impl SolutionEllipse {
    pub fn new(params: &InitialCenterParams, sensor: [f64; 2]) -> Self {
        let s = std::f64::consts::SQRT_2;
        Self {
            center: sensor,
            semi_axes: [s * params.l1, s * params.l2],
        }
    }

    pub fn point(&self, theta: f64) -> [f64; 2] {
        [
            self.center[0] + self.semi_axes[0] * theta.cos(),
            self.center[1] + self.semi_axes[1] * theta.sin(),
        ]
    }

    /// Parametric angle of `ξ` in the normalized frame, in `[0, 2π)`.
    pub fn angle(&self, xi: &[f64]) -> f64 {
        let u = (xi[0] - self.center[0]) / self.semi_axes[0];
        let v = (xi[1] - self.center[1]) / self.semi_axes[1];
        v.atan2(u).rem_euclid(std::f64::consts::TAU)
    }

    /// Euclidean distance from `ξ` to the ellipse.
    pub fn distance(&self, xi: &[f64]) -> f64 {
        let d2 = |t: f64| {
            let p = self.point(t);
            (p[0] - xi[0]).powi(2) + (p[1] - xi[1]).powi(2)
        };
        let coarse = 720;
        let step = std::f64::consts::TAU / coarse as f64;
        let best = (0..coarse)
            .map(|k| k as f64 * step)
            .min_by(|a, b| d2(*a).total_cmp(&d2(*b)))
            .expect("nonempty grid");
        // golden-section refinement around the best grid angle
        let (mut lo, mut hi) = (best - step, best + step);
        let g = 0.5 * (5f64.sqrt() - 1.0);
        for _ in 0..80 {
            let a = hi - g * (hi - lo);
            let b = lo + g * (hi - lo);
            if d2(a) < d2(b) {
                hi = b;
            } else {
                lo = a;
            }
        }
        d2(0.5 * (lo + hi)).sqrt()
    }

    /// Number of equal angular bins holding at least `min_share` of the
    /// points in `positions` (row-major, two columns).
    pub fn angular_coverage(&self, positions: &[f64], bins: usize, min_share: f64) -> Result<usize> {
        if bins == 0 || !positions.len().is_multiple_of(2) || positions.is_empty() {
            return Err(Error::Precondition(
                "angular coverage needs bins > 0 and a nonempty two-column sample".into(),
            ));
        }
        let mut counts = vec![0usize; bins];
        for xi in positions.chunks(2) {
            let b = (self.angle(xi) / std::f64::consts::TAU * bins as f64) as usize;
            counts[b.min(bins - 1)] += 1;
        }
        let n = (positions.len() / 2) as f64;
        Ok(counts.iter().filter(|&&c| c as f64 / n >= min_share).count())
    }
}

/// Empirical `q`-quantile by linear interpolation of the order statistics.
pub fn quantile(values: &[f64], q: f64) -> Result<f64> {
    if values.is_empty() || !(0.0..=1.0).contains(&q) {
        return Err(Error::Precondition("quantile needs values and q in [0, 1]".into()));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q * (v.len() - 1) as f64;
    let i = pos.floor() as usize;
    let j = (i + 1).min(v.len() - 1);
    Ok(v[i] + (pos - i as f64) * (v[j] - v[i]))
}
