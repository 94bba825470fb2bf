use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MIN_KDE_SAMPLES: usize = 100;

/// Kernel contributions beyond this many bandwidths are dropped.
const CUTOFF: f64 = 9.0;
const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Evaluation grid: one axis for 1D, two tensor-product axes for 2D.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum KdeGrid {
    OneD(Vec<f64>),
    TwoD(Vec<f64>, Vec<f64>),
}

impl KdeGrid {
    /// `n` equally spaced points on `[lo, hi]`.
    pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
        if n == 1 {
            return vec![0.5 * (lo + hi)];
        }
        (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityEstimate {
    pub grid: KdeGrid,
    /// Density values; for 2D, row-major with the second axis fastest.
    pub density: Vec<f64>,
    pub bandwidths: Vec<f64>,
}

fn trapezoid_weights(axis: &[f64]) -> Vec<f64> {
    let n = axis.len();
    if n < 2 {
        return vec![0.0; n];
    }
    (0..n)
        .map(|i| {
            let left = if i > 0 { axis[i] - axis[i - 1] } else { 0.0 };
            let right = if i + 1 < n { axis[i + 1] - axis[i] } else { 0.0 };
            0.5 * (left + right)
        })
        .collect()
}

impl DensityEstimate {
    /// Trapezoid-rule quadrature weights of the grid, aligned with `density`.
    pub fn quadrature_weights(&self) -> Vec<f64> {
        match &self.grid {
            KdeGrid::OneD(x) => trapezoid_weights(x),
            KdeGrid::TwoD(x, y) => {
                let (wx, wy) = (trapezoid_weights(x), trapezoid_weights(y));
                wx.iter().flat_map(|a| wy.iter().map(move |b| a * b)).collect()
            }
        }
    }

    pub fn integral(&self) -> f64 {
        self.quadrature_weights()
            .iter()
            .zip(&self.density)
            .map(|(w, d)| w * d)
            .sum()
    }
}

fn quantile(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Silverman's rule `A · min(σ, IQR/1.34) · N^{-1/(d+4)}`, with `A = 0.9` for
/// one dimension and the normal-reference constant `(4/(d+2))^{1/(d+4)} = 1`
/// for two.
pub fn silverman_bandwidth(samples: &[f64], dimension: usize) -> Result<f64> {
    let n = samples.len();
    if n < 2 {
        return Err(Error::Precondition("bandwidth needs at least 2 samples".into()));
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    let sd = (samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let iqr = quantile(&sorted, 0.75) - quantile(&sorted, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    if !(spread > 0.0) {
        return Err(Error::DegenerateSeries("samples have zero spread".into()));
    }
    let (a, power) = match dimension {
        1 => (0.9, -0.2),
        2 => (1.0, -1.0 / 6.0),
        d => {
            return Err(Error::Precondition(format!(
                "KDE supports dimension 1 or 2, got {d}"
            )))
        }
    };
    Ok(a * spread * (n as f64).powf(power))
}

fn check_samples(n: usize) -> Result<()> {
    if n < MIN_KDE_SAMPLES {
        return Err(Error::Precondition(format!(
            "KDE needs at least {MIN_KDE_SAMPLES} samples, got {n}"
        )));
    }
    Ok(())
}

pub fn kde_1d(samples: &[f64], grid: Vec<f64>) -> Result<DensityEstimate> {
    check_samples(samples.len())?;
    let h = silverman_bandwidth(samples, 1)?;
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let norm = INV_SQRT_2PI / (h * samples.len() as f64);
    let density = grid
        .iter()
        .map(|&x| {
            let lo = sorted.partition_point(|&s| s < x - CUTOFF * h);
            let hi = sorted.partition_point(|&s| s <= x + CUTOFF * h);
            let sum: f64 = sorted[lo..hi]
                .iter()
                .map(|&s| (-0.5 * ((x - s) / h).powi(2)).exp())
                .sum();
            norm * sum
        })
        .collect();
    Ok(DensityEstimate {
        grid: KdeGrid::OneD(grid),
        density,
        bandwidths: vec![h],
    })
}

/// Product-Gaussian KDE of 2D samples given as `(x, y)` pairs.
pub fn kde_2d(samples: &[[f64; 2]], gx: Vec<f64>, gy: Vec<f64>) -> Result<DensityEstimate> {
    check_samples(samples.len())?;
    let xs: Vec<f64> = samples.iter().map(|p| p[0]).collect();
    let ys: Vec<f64> = samples.iter().map(|p| p[1]).collect();
    let hx = silverman_bandwidth(&xs, 2)?;
    let hy = silverman_bandwidth(&ys, 2)?;
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a[0].total_cmp(&b[0]));
    let norm = INV_SQRT_2PI * INV_SQRT_2PI / (hx * hy * samples.len() as f64);
    let mut density = Vec::with_capacity(gx.len() * gy.len());
    for &x in &gx {
        let lo = sorted.partition_point(|p| p[0] < x - CUTOFF * hx);
        let hi = sorted.partition_point(|p| p[0] <= x + CUTOFF * hx);
        let window = &sorted[lo..hi];
        let kx: Vec<f64> = window
            .iter()
            .map(|p| (-0.5 * ((x - p[0]) / hx).powi(2)).exp())
            .collect();
        for &y in &gy {
            let sum: f64 = window
                .iter()
                .zip(&kx)
                .filter(|(p, _)| (p[1] - y).abs() <= CUTOFF * hy)
                .map(|(p, k)| k * (-0.5 * ((y - p[1]) / hy).powi(2)).exp())
                .sum();
            density.push(norm * sum);
        }
    }
    Ok(DensityEstimate {
        grid: KdeGrid::TwoD(gx, gy),
        density,
        bandwidths: vec![hx, hy],
    })
}

/// Dispatches on the grid dimension; `samples` is row-major with `grid`'s
/// dimension per row.
pub fn kde(samples: &[f64], grid: KdeGrid) -> Result<DensityEstimate> {
    match grid {
        KdeGrid::OneD(g) => kde_1d(samples, g),
        KdeGrid::TwoD(gx, gy) => {
            if !samples.len().is_multiple_of(2) {
                return Err(Error::dim("2D samples", samples.len() + 1, samples.len()));
            }
            let pts: Vec<[f64; 2]> = samples.chunks_exact(2).map(|c| [c[0], c[1]]).collect();
            kde_2d(&pts, gx, gy)
        }
    }
}

/// `½ ∫ |p − q|` by the estimate's quadrature, with `q` given on the same grid.
pub fn tv_distance(estimate: &DensityEstimate, reference: &[f64]) -> Result<f64> {
    if reference.len() != estimate.density.len() {
        return Err(Error::dim("reference density", estimate.density.len(), reference.len()));
    }
    Ok(0.5
        * estimate
            .quadrature_weights()
            .iter()
            .zip(estimate.density.iter().zip(reference))
            .map(|(w, (p, q))| w * (p - q).abs())
            .sum::<f64>())
}
