use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Unit-square mesh of `cells × cells` bilinear elements.
///
/// Node `(i, j)` sits at `(i h, j h)` with index `j (cells+1) + i`; element
/// `(ex, ey)` has index `ey cells + ex` and counter-clockwise nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StructuredMesh {
    pub cells: usize,
}

impl StructuredMesh {
    pub fn new(cells: usize) -> Result<Self> {
        if cells < 2 {
            return Err(Error::Config(format!("mesh needs at least 2 cells per side, got {cells}")));
        }
        Ok(Self { cells })
    }

    pub fn spacing(&self) -> f64 {
        1.0 / self.cells as f64
    }

    pub fn nodes_per_side(&self) -> usize {
        self.cells + 1
    }

    pub fn node_count(&self) -> usize {
        self.nodes_per_side().pow(2)
    }

    pub fn element_count(&self) -> usize {
        self.cells * self.cells
    }

    pub fn node(&self, i: usize, j: usize) -> usize {
        j * self.nodes_per_side() + i
    }

    pub fn node_coords(&self, node: usize) -> [f64; 2] {
        let n = self.nodes_per_side();
        let h = self.spacing();
        [(node % n) as f64 * h, (node / n) as f64 * h]
    }

    pub fn is_boundary(&self, node: usize) -> bool {
        let n = self.nodes_per_side();
        let (i, j) = (node % n, node / n);
        i == 0 || j == 0 || i == self.cells || j == self.cells
    }

    pub fn element_nodes(&self, e: usize) -> [usize; 4] {
        let (ex, ey) = (e % self.cells, e / self.cells);
        [
            self.node(ex, ey),
            self.node(ex + 1, ey),
            self.node(ex + 1, ey + 1),
            self.node(ex, ey + 1),
        ]
    }

    pub fn element_centroid(&self, e: usize) -> [f64; 2] {
        let h = self.spacing();
        let (ex, ey) = (e % self.cells, e / self.cells);
        [(ex as f64 + 0.5) * h, (ey as f64 + 0.5) * h]
    }

    /// Nodes and bilinear weights reproducing the finite element field at `x`.
    pub fn interpolation(&self, x: [f64; 2]) -> Result<[(usize, f64); 4]> {
        if !(0.0..=1.0).contains(&x[0]) || !(0.0..=1.0).contains(&x[1]) {
            return Err(Error::Config(format!("point {x:?} lies outside the unit square")));
        }
        let n = self.cells;
        let locate = |v: f64| {
            let s = v * n as f64;
            let c = (s.floor() as usize).min(n - 1);
            (c, s - c as f64)
        };
        let (ex, fx) = locate(x[0]);
        let (ey, fy) = locate(x[1]);
        let e = ey * n + ex;
        let nodes = self.element_nodes(e);
        Ok([
            (nodes[0], (1.0 - fx) * (1.0 - fy)),
            (nodes[1], fx * (1.0 - fy)),
            (nodes[2], fx * fy),
            (nodes[3], (1.0 - fx) * fy),
        ])
    }
}

/// Bilinear element mass matrix over a square of side `h`.
pub fn element_mass(h: f64) -> [[f64; 4]; 4] {
    let c = h * h / 36.0;
    let pattern = [
        [4.0, 2.0, 1.0, 2.0],
        [2.0, 4.0, 2.0, 1.0],
        [1.0, 2.0, 4.0, 2.0],
        [2.0, 1.0, 2.0, 4.0],
    ];
    pattern.map(|row| row.map(|v| c * v))
}

/// Bilinear element stiffness for unit coefficient; independent of `h` in 2D.
pub fn element_stiffness() -> [[f64; 4]; 4] {
    let c = 1.0 / 6.0;
    let pattern = [
        [4.0, -1.0, -2.0, -1.0],
        [-1.0, 4.0, -1.0, -2.0],
        [-2.0, -1.0, 4.0, -1.0],
        [-1.0, -2.0, -1.0, 4.0],
    ];
    pattern.map(|row| row.map(|v| c * v))
}
