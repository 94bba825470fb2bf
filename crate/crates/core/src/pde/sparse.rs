use super::mesh::StructuredMesh;
use crate::error::{Error, Result};

/// Compressed sparse row matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub cols: Vec<usize>,
    pub vals: Vec<f64>,
}

impl CsrMatrix {
    /// Assembles `Σ_e w_e local` over the mesh elements.
    pub fn assemble(mesh: &StructuredMesh, local: &[[f64; 4]; 4], weights: &[f64]) -> Self {
        let n = mesh.node_count();
        let side = mesh.nodes_per_side();
        // 9-point stencil, columns sorted per row
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::with_capacity(9 * n);
        row_ptr.push(0);
        for node in 0..n {
            let (i, j) = ((node % side) as isize, (node / side) as isize);
            for dj in -1..=1 {
                for di in -1..=1 {
                    let (a, b) = (i + di, j + dj);
                    if a >= 0 && b >= 0 && (a as usize) < side && (b as usize) < side {
                        cols.push(b as usize * side + a as usize);
                    }
                }
            }
            row_ptr.push(cols.len());
        }
        let mut m = Self {
            n,
            row_ptr,
            vals: vec![0.0; cols.len()],
            cols,
        };
        for e in 0..mesh.element_count() {
            let nodes = mesh.element_nodes(e);
            let w = weights[e];
            for (a, &ra) in nodes.iter().enumerate() {
                for (b, &cb) in nodes.iter().enumerate() {
                    let idx = m.position(ra, cb).expect("stencil covers element couplings");
                    m.vals[idx] += w * local[a][b];
                }
            }
        }
        m
    }

    fn position(&self, row: usize, col: usize) -> Option<usize> {
        let range = self.row_ptr[row]..self.row_ptr[row + 1];
        self.cols[range.clone()]
            .binary_search(&col)
            .ok()
            .map(|k| range.start + k)
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.position(row, col).map_or(0.0, |k| self.vals[k])
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.mul_vec_into(x, &mut y);
        y
    }

    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        for (r, yr) in y.iter_mut().enumerate() {
            let mut s = 0.0;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                s += self.vals[k] * x[self.cols[k]];
            }
            *yr = s;
        }
    }

    pub fn transpose_mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for (r, &xr) in x.iter().enumerate() {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                y[self.cols[k]] += self.vals[k] * xr;
            }
        }
        y
    }

    /// `αA + βB` for matrices sharing one sparsity pattern.
    pub fn combine(&self, alpha: f64, other: &CsrMatrix, beta: f64) -> Self {
        debug_assert_eq!(self.cols, other.cols);
        Self {
            n: self.n,
            row_ptr: self.row_ptr.clone(),
            cols: self.cols.clone(),
            vals: self
                .vals
                .iter()
                .zip(&other.vals)
                .map(|(a, b)| alpha * a + beta * b)
                .collect(),
        }
    }
}

/// Banded Cholesky factor `A = L Lᵀ` of a symmetric positive-definite matrix.
#[derive(Debug, Clone)]
pub struct BandedCholesky {
    n: usize,
    bw: usize,
    /// `l[i (bw+1) + d] = L[i][i−d]`.
    l: Vec<f64>,
}

impl BandedCholesky {
    /// Factors the principal submatrix of `a` on `index` (global node ids in
    /// increasing order).
    pub fn factor_submatrix(a: &CsrMatrix, index: &[usize], local: &[Option<usize>]) -> Result<Self> {
        let n = index.len();
        let mut bw = 0;
        for (li, &g) in index.iter().enumerate() {
            for k in a.row_ptr[g]..a.row_ptr[g + 1] {
                if let Some(lj) = local[a.cols[k]] {
                    if lj < li {
                        bw = bw.max(li - lj);
                    }
                }
            }
        }
        let w = bw + 1;
        let mut l = vec![0.0; n * w];
        for (li, &g) in index.iter().enumerate() {
            for k in a.row_ptr[g]..a.row_ptr[g + 1] {
                if let Some(lj) = local[a.cols[k]] {
                    if lj <= li {
                        l[li * w + (li - lj)] = a.vals[k];
                    }
                }
            }
        }
        for i in 0..n {
            let j0 = i.saturating_sub(bw);
            for j in j0..=i {
                let mut s = l[i * w + (i - j)];
                let k0 = j0.max(j.saturating_sub(bw));
                for k in k0..j {
                    s -= l[i * w + (i - k)] * l[j * w + (j - k)];
                }
                if j == i {
                    if !(s > 0.0) {
                        return Err(Error::Numerical(format!(
                            "banded Cholesky pivot {s:e} at row {i} is not positive"
                        )));
                    }
                    l[i * w] = s.sqrt();
                } else {
                    l[i * w + (i - j)] = s / l[j * w];
                }
            }
        }
        Ok(Self { n, bw, l })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        let w = self.bw + 1;
        for i in 0..self.n {
            let mut s = b[i];
            for k in i.saturating_sub(self.bw)..i {
                s -= self.l[i * w + (i - k)] * b[k];
            }
            b[i] = s / self.l[i * w];
        }
        for i in (0..self.n).rev() {
            let mut s = b[i];
            for k in i + 1..(i + w).min(self.n) {
                s -= self.l[k * w + (k - i)] * b[k];
            }
            b[i] = s / self.l[i * w];
        }
    }
}
