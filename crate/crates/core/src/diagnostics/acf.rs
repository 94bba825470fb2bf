use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Autocorrelation at lags `0..=max_lag`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcfSeries {
    pub values: Vec<f64>,
}

impl AcfSeries {
    pub fn max_lag(&self) -> usize {
        self.values.len().saturating_sub(1)
    }
}

/// Per-coordinate effective sample sizes `N/(1+2ρ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EssReport {
    pub ess: Vec<f64>,
    pub rho: Vec<f64>,
    pub n: usize,
}

fn centered(series: &[f64]) -> Result<(Vec<f64>, f64)> {
    let n = series.len();
    if n < 2 {
        return Err(Error::DegenerateSeries(format!(
            "series needs at least 2 points, got {n}"
        )));
    }
    if let Some(bad) = series.iter().find(|v| !v.is_finite()) {
        return Err(Error::DegenerateSeries(format!("series contains {bad}")));
    }
    let mean = series.iter().sum::<f64>() / n as f64;
    let c: Vec<f64> = series.iter().map(|v| v - mean).collect();
    let var = c.iter().map(|v| v * v).sum::<f64>() / n as f64;
    let scale = series.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if var <= (f64::EPSILON * scale).powi(2) * 16.0 || var == 0.0 {
        return Err(Error::DegenerateSeries(format!(
            "series has zero variance (mean {mean})"
        )));
    }
    Ok((c, var))
}

/// Biased autocovariance `(1/N) Σ_t x_t x_{t+k}` over lag-0, computed with a
/// zero-padded FFT.
fn autocorrelation_full(series: &[f64]) -> Result<Vec<f64>> {
    let (c, _) = centered(series)?;
    let n = c.len();
    let size = (2 * n).next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(size);
    let inv = planner.plan_fft_inverse(size);
    let mut buf: Vec<Complex<f64>> = c
        .iter()
        .map(|&v| Complex::new(v, 0.0))
        .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
        .take(size)
        .collect();
    fwd.process(&mut buf);
    for z in buf.iter_mut() {
        *z = Complex::new(z.norm_sqr(), 0.0);
    }
    inv.process(&mut buf);
    let c0 = buf[0].re;
    Ok(buf[..n].iter().map(|z| (z.re / c0).clamp(-1.0, 1.0)).collect())
}

pub fn acf(series: &[f64], max_lag: usize) -> Result<AcfSeries> {
    if max_lag >= series.len() {
        return Err(Error::Precondition(format!(
            "max_lag {max_lag} must be below the series length {}",
            series.len()
        )));
    }
    let mut values = autocorrelation_full(series)?;
    values.truncate(max_lag + 1);
    values[0] = 1.0;
    Ok(AcfSeries { values })
}

/// `ρ = Σ_{k≥1} ACF(k)`, stopping before the first negative term.
fn integrated_time(values: &[f64]) -> f64 {
    values[1..].iter().take_while(|&&v| v >= 0.0).sum()
}

pub fn ess(series: &[f64]) -> Result<EssReport> {
    ess_report(&[series])
}

/// `1 + 2ρ`, the integrated autocorrelation time in iterations.
pub fn integrated_autocorrelation_time(series: &[f64]) -> Result<f64> {
    Ok(1.0 + 2.0 * integrated_time(&autocorrelation_full(series)?))
}

pub fn ess_report(coordinates: &[&[f64]]) -> Result<EssReport> {
    let mut report = EssReport {
        ess: Vec::with_capacity(coordinates.len()),
        rho: Vec::with_capacity(coordinates.len()),
        n: coordinates.first().map_or(0, |c| c.len()),
    };
    for series in coordinates {
        if series.len() != report.n {
            return Err(Error::dim("ESS coordinate series", report.n, series.len()));
        }
        let rho = integrated_time(&autocorrelation_full(series)?);
        report.rho.push(rho);
        report.ess.push(series.len() as f64 / (1.0 + 2.0 * rho));
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn ar1(phi: f64, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = (1.0 - phi * phi).sqrt();
        let mut x: f64 = rng.sample(StandardNormal);
        (0..n)
            .map(|_| {
                let e: f64 = rng.sample(StandardNormal);
                x = phi * x + s * e;
                x
            })
            .collect()
    }

    fn direct_acf(x: &[f64], lag: usize) -> f64 {
        let n = x.len();
        let m = x.iter().sum::<f64>() / n as f64;
        let c0: f64 = x.iter().map(|v| (v - m).powi(2)).sum();
        let ck: f64 = (0..n - lag).map(|t| (x[t] - m) * (x[t + lag] - m)).sum();
        ck / c0
    }

    #[test]
    fn matches_direct_sum() {
        let x = ar1(0.6, 777, 1);
        let a = acf(&x, 20).unwrap();
        assert_eq!(a.values[0], 1.0);
        for k in 0..=20 {
            assert!((a.values[k] - direct_acf(&x, k)).abs() < 1e-12);
        }
    }

    #[test]
    fn alternating_series() {
        let x: Vec<f64> = (0..1000).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let a = acf(&x, 2).unwrap();
        assert!((a.values[1] + 1.0).abs() < 2e-3);
    }

    #[test]
    fn ar1_acf_within_three_se() {
        let phi: f64 = 0.9;
        let n = 100_000;
        let x = ar1(phi, n, 2);
        let a = acf(&x, 10).unwrap();
        for k in 1..=10 {
            let r = phi.powi(k as i32);
            // Bartlett variance of the lag-k sample autocorrelation for AR(1)
            let p2 = phi * phi;
            let var = ((1.0 + p2) * (1.0 - p2.powi(k as i32)) / (1.0 - p2)
                - 2.0 * k as f64 * p2.powi(k as i32))
                / n as f64;
            assert!((a.values[k] - r).abs() < 3.0 * var.sqrt(), "lag {k}");
        }
    }

    #[test]
    fn ess_iid_and_ar1() {
        let n = 100_000;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let iid: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let r = ess(&iid).unwrap();
        assert!((r.ess[0] / n as f64 - 1.0).abs() < 0.1, "{:?}", r);
        assert_eq!(r.ess[0], n as f64 / (1.0 + 2.0 * r.rho[0]));
        let x = ar1(0.9, n, 4);
        let r = ess(&x).unwrap();
        let target = n as f64 / 19.0;
        assert!((r.ess[0] / target - 1.0).abs() < 0.15, "{} vs {target}", r.ess[0]);
    }

    #[test]
    fn ar1_integrated_time() {
        // (1 + φ)/(1 − φ) for AR(1)
        let t = integrated_autocorrelation_time(&ar1(0.8, 200_000, 6)).unwrap();
        assert!((t / 9.0 - 1.0).abs() < 0.1, "{t}");
    }

    #[test]
    fn ess_monotone_in_correlation() {
        let n = 50_000;
        let e: Vec<f64> = [0.0, 0.5, 0.9].iter().map(|&p| ess(&ar1(p, n, 5)).unwrap().ess[0]).collect();
        assert!(e[0] >= e[1] && e[1] >= e[2], "{e:?}");
    }

    #[test]
    fn degenerate_rejected() {
        assert!(acf(&[2.5; 100], 3).is_err());
        assert!(ess(&[1.0; 50]).is_err());
        assert!(acf(&[1.0, 2.0], 2).is_err());
    }

    proptest! {
        #[test]
        fn sign_and_affine_invariance(seed in 0u64..1000, scale in 0.01f64..100.0, shift in -50.0f64..50.0) {
            let x = ar1(0.7, 500, seed);
            let a = acf(&x, 30).unwrap();
            let neg: Vec<f64> = x.iter().map(|v| -v).collect();
            let aff: Vec<f64> = x.iter().map(|v| scale * v + shift).collect();
            let b = acf(&neg, 30).unwrap();
            let c = acf(&aff, 30).unwrap();
            for k in 0..=30 {
                prop_assert!((a.values[k] - b.values[k]).abs() < 1e-12);
                prop_assert!((a.values[k] - c.values[k]).abs() < 1e-12);
                prop_assert!(a.values[k].abs() <= 1.0);
            }
        }
    }
}
