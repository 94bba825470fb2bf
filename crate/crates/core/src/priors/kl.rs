use std::io::{BufRead, Write};

use faer::Mat;
use serde::{Deserialize, Serialize};

use super::matern::MaternParams;
use crate::error::{check_len, Error, Result};
use crate::linalg;

/// Cell-centred grid on the unit square with midpoint quadrature weights.
///
/// Point `(i, j)` sits at `((i + ½)/nx, (j + ½)/ny)` and is stored row-major
/// (`j * nx + i`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StructuredGrid {
    pub nx: usize,
    pub ny: usize,
}

impl StructuredGrid {
    pub fn new(nx: usize, ny: usize) -> Result<Self> {
        if nx == 0 || ny == 0 {
            return Err(Error::Config(format!(
                "grid must have at least one cell per axis, got {nx}x{ny}"
            )));
        }
        Ok(Self { nx, ny })
    }

    pub fn square(n: usize) -> Result<Self> {
        Self::new(n, n)
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn weight(&self) -> f64 {
        1.0 / self.len() as f64
    }

    pub fn point(&self, k: usize) -> [f64; 2] {
        let (i, j) = (k % self.nx, k / self.nx);
        [
            (i as f64 + 0.5) / self.nx as f64,
            (j as f64 + 0.5) / self.ny as f64,
        ]
    }

    pub fn points(&self) -> Vec<[f64; 2]> {
        (0..self.len()).map(|k| self.point(k)).collect()
    }

    /// Bilinear interpolation weights of the cell-centre values at `x`
    /// (clamped to the outermost centres).
    pub fn interpolation(&self, x: [f64; 2]) -> [(usize, f64); 4] {
        let axis = |v: f64, n: usize| -> (usize, usize, f64) {
            if n == 1 {
                return (0, 0, 0.0);
            }
            let s = (v * n as f64 - 0.5).clamp(0.0, (n - 1) as f64);
            let i0 = (s.floor() as usize).min(n - 2);
            (i0, i0 + 1, s - i0 as f64)
        };
        let (i0, i1, tx) = axis(x[0], self.nx);
        let (j0, j1, ty) = axis(x[1], self.ny);
        [
            (j0 * self.nx + i0, (1.0 - tx) * (1.0 - ty)),
            (j0 * self.nx + i1, tx * (1.0 - ty)),
            (j1 * self.nx + i0, (1.0 - tx) * ty),
            (j1 * self.nx + i1, tx * ty),
        ]
    }
}

/// Truncated Karhunen-Loève basis of a Gaussian field on a [`StructuredGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct KLBasis {
    grid: StructuredGrid,
    eigenvalues: Vec<f64>,
    eigenfunctions: Vec<Vec<f64>>,
    mean_field: Vec<f64>,
    spectrum: Vec<f64>,
}

impl KLBasis {
    pub fn grid(&self) -> StructuredGrid {
        self.grid
    }

    /// Number of retained modes.
    pub fn truncation(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn eigenfunction(&self, i: usize) -> &[f64] {
        &self.eigenfunctions[i]
    }

    pub fn mean_field(&self) -> &[f64] {
        &self.mean_field
    }

    /// Every discrete eigenvalue (negatives clipped to zero), nonincreasing.
    pub fn spectrum(&self) -> &[f64] {
        &self.spectrum
    }

    /// `e(n) = Σ_{i≤n} λ_i / Σ_i λ_i` over the full discrete spectrum.
    pub fn energy_fraction(&self, n: usize) -> f64 {
        energy_fraction(&self.spectrum, n)
    }

    pub fn with_mean_field(mut self, mean_field: Vec<f64>) -> Result<Self> {
        check_len("mean field", self.grid.len(), mean_field.len())?;
        self.mean_field = mean_field;
        Ok(self)
    }

    /// Keeps only the leading `n` modes.
    pub fn truncated(mut self, n: usize) -> Result<Self> {
        if n == 0 || n > self.truncation() {
            return Err(Error::Config(format!(
                "cannot truncate a {}-mode basis to {n} modes",
                self.truncation()
            )));
        }
        self.eigenvalues.truncate(n);
        self.eigenfunctions.truncate(n);
        Ok(self)
    }

    /// Value of eigenfunction `i` at an arbitrary point, by bilinear
    /// interpolation of the grid values.
    pub fn eigenfunction_at(&self, i: usize, x: [f64; 2]) -> f64 {
        self.grid
            .interpolation(x)
            .iter()
            .map(|&(k, w)| w * self.eigenfunctions[i][k])
            .sum()
    }

    pub fn mean_at(&self, x: [f64; 2]) -> f64 {
        self.grid
            .interpolation(x)
            .iter()
            .map(|&(k, w)| w * self.mean_field[k])
            .sum()
    }

    /// Coefficients of `field - Ȳ` against the retained modes
    /// (`ξ_i = λ_i^{-½} Σ_j w φ_i(x_j)(Y_j - Ȳ_j)`).
    pub fn project(&self, log_field: &[f64]) -> Result<Vec<f64>> {
        check_len("log field", self.grid.len(), log_field.len())?;
        let w = self.grid.weight();
        Ok(self
            .eigenvalues
            .iter()
            .zip(&self.eigenfunctions)
            .map(|(lam, phi)| {
                let inner: f64 = phi
                    .iter()
                    .zip(log_field.iter().zip(&self.mean_field))
                    .map(|(p, (y, m))| p * (y - m))
                    .sum();
                w * inner / lam.sqrt()
            })
            .collect())
    }

    /// Writes the basis as text: a `nx,ny,n` header, the eigenvalues, the
    /// mean field, then one row-major line per eigenfunction. Values use the
    /// shortest round-trip representation, so reading back is bit-exact.
    pub fn write_to<W: Write>(&self, mut out: W) -> Result<()> {
        let join = |v: &[f64]| {
            v.iter()
                .map(|x| x.to_string())
                .collect::<Vec<_>>()
                .join(",")
        };
        writeln!(out, "{},{},{}", self.grid.nx, self.grid.ny, self.truncation())?;
        writeln!(out, "{}", join(&self.eigenvalues))?;
        writeln!(out, "{}", join(&self.spectrum))?;
        writeln!(out, "{}", join(&self.mean_field))?;
        for phi in &self.eigenfunctions {
            writeln!(out, "{}", join(phi))?;
        }
        Ok(())
    }

    pub fn read_from<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines();
        let mut next = |what: &str| -> Result<String> {
            lines
                .next()
                .ok_or_else(|| Error::Format(format!("missing {what} line")))?
                .map_err(Error::from)
        };
        let parse = |line: &str| -> Result<Vec<f64>> {
            line.split(',')
                .map(|t| {
                    t.trim()
                        .parse::<f64>()
                        .map_err(|e| Error::Format(format!("bad number {t:?}: {e}")))
                })
                .collect()
        };
        let header = next("header")?;
        let dims: Vec<usize> = header
            .split(',')
            .map(|t| {
                t.trim()
                    .parse::<usize>()
                    .map_err(|e| Error::Format(format!("bad header field {t:?}: {e}")))
            })
            .collect::<Result<_>>()?;
        if dims.len() != 3 {
            return Err(Error::Format(format!("header must be nx,ny,n: {header:?}")));
        }
        let grid = StructuredGrid::new(dims[0], dims[1])?;
        let n = dims[2];
        let eigenvalues = parse(&next("eigenvalue")?)?;
        let spectrum = parse(&next("spectrum")?)?;
        let mean_field = parse(&next("mean field")?)?;
        check_len("eigenvalue line", n, eigenvalues.len())?;
        check_len("mean field line", grid.len(), mean_field.len())?;
        let mut eigenfunctions = Vec::with_capacity(n);
        for i in 0..n {
            let phi = parse(&next(&format!("eigenfunction {i}"))?)?;
            check_len("eigenfunction line", grid.len(), phi.len())?;
            eigenfunctions.push(phi);
        }
        Ok(Self {
            grid,
            eigenvalues,
            eigenfunctions,
            mean_field,
            spectrum,
        })
    }
}

fn energy_fraction(spectrum: &[f64], n: usize) -> f64 {
    let total: f64 = spectrum.iter().sum();
    let head: f64 = spectrum.iter().take(n).sum();
    if n >= spectrum.len() {
        1.0
    } else {
        head / total
    }
}

struct Nystrom {
    grid: StructuredGrid,
    /// Clipped eigenvalues, nonincreasing.
    spectrum: Vec<f64>,
    /// Eigenvectors in ascending-eigenvalue column order.
    vectors: Mat<f64>,
}

/// Nyström discretization of the covariance integral operator with midpoint
/// weights.
fn nystrom(params: &MaternParams, grid: StructuredGrid) -> Result<Nystrom> {
    params.validate()?;
    let kernel = params.kernel();
    let pts = grid.points();
    let n = grid.len();
    let w = grid.weight();
    let mut k = Mat::<f64>::zeros(n, n);
    for a in 0..n {
        for b in 0..=a {
            let c = w * kernel.cov(&pts[a], &pts[b]);
            k[(a, b)] = c;
            k[(b, a)] = c;
        }
    }
    let (values, vectors) = linalg::symmetric_eigen(&k)?;

    // residual check ‖K v - λ v‖ on the leading pair
    let top = n - 1;
    let v_top: Vec<f64> = (0..n).map(|i| vectors[(i, top)]).collect();
    let kv = linalg::mat_vec(&k, &v_top);
    let res: f64 = kv
        .iter()
        .zip(&v_top)
        .map(|(a, b)| (a - values[top] * b).powi(2))
        .sum::<f64>()
        .sqrt();
    if !(res <= 1e-8 * values[top].abs().max(1.0)) {
        return Err(Error::Numerical(format!(
            "eigen-solve residual {res:e} exceeds tolerance"
        )));
    }
    let spectrum = values.iter().rev().map(|&v| v.max(0.0)).collect();
    Ok(Nystrom {
        grid,
        spectrum,
        vectors,
    })
}

impl Nystrom {
    fn positive(&self) -> usize {
        self.spectrum.iter().take_while(|&&v| v > 0.0).count()
    }

    fn into_basis(self, keep: usize) -> KLBasis {
        let n = self.grid.len();
        let scale = 1.0 / self.grid.weight().sqrt();
        let eigenfunctions: Vec<Vec<f64>> = (0..keep)
            .map(|m| {
                let col = n - 1 - m;
                (0..n).map(|i| self.vectors[(i, col)] * scale).collect()
            })
            .collect();
        KLBasis {
            grid: self.grid,
            eigenvalues: self.spectrum[..keep].to_vec(),
            eigenfunctions,
            mean_field: vec![0.0; n],
            spectrum: self.spectrum,
        }
    }
}

/// KL basis keeping the fewest leading modes whose energy reaches
/// `energy_target`.
pub fn kl_decompose(
    params: &MaternParams,
    grid: StructuredGrid,
    energy_target: f64,
) -> Result<KLBasis> {
    if !(energy_target > 0.0 && energy_target < 1.0) {
        return Err(Error::Config(format!(
            "energy target must lie in (0, 1), got {energy_target}"
        )));
    }
    let ny = nystrom(params, grid)?;
    let keep = (1..=ny.spectrum.len())
        .find(|&m| energy_fraction(&ny.spectrum, m) >= energy_target)
        .unwrap_or(ny.spectrum.len())
        .min(ny.positive().max(1));
    Ok(ny.into_basis(keep))
}

/// KL basis with exactly `modes` leading modes.
pub fn kl_decompose_modes(params: &MaternParams, grid: StructuredGrid, modes: usize) -> Result<KLBasis> {
    let ny = nystrom(params, grid)?;
    if modes == 0 || modes > ny.positive() {
        return Err(Error::Config(format!(
            "requested {modes} modes but the discrete spectrum has {} positive eigenvalues",
            ny.positive()
        )));
    }
    Ok(ny.into_basis(modes))
}

/// `Ȳ + Σ_i √λ_i φ_i ξ_i` on the grid.
pub fn log_field_from_coeffs(basis: &KLBasis, xi: &[f64]) -> Result<Vec<f64>> {
    check_len("KL coefficients", basis.truncation(), xi.len())?;
    let mut y = basis.mean_field.clone();
    for ((lam, phi), x) in basis.eigenvalues.iter().zip(&basis.eigenfunctions).zip(xi) {
        let a = lam.sqrt() * x;
        for (yk, p) in y.iter_mut().zip(phi) {
            *yk += a * p;
        }
    }
    Ok(y)
}

/// `κ = exp(Ȳ + Σ_i √λ_i φ_i ξ_i)` on the grid.
pub fn field_from_coeffs(basis: &KLBasis, xi: &[f64]) -> Result<Vec<f64>> {
    Ok(log_field_from_coeffs(basis, xi)?
        .into_iter()
        .map(f64::exp)
        .collect())
}
