//! The Dirichlet Laplacian `A = −Δ` as a sparse symmetric matrix, and a
//! banded Cholesky factorization for the shifted systems `(αI + βA)x = b`.

use crate::geometry::Grid;
use crate::{Error, Result};

/// Compressed-row storage of the 3- or 5-point stencil of `−Δ`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteOperator {
    n: usize,
    bandwidth: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    values: Vec<f64>,
}

pub fn assemble_laplacian(grid: &Grid) -> DiscreteOperator {
    let d = grid.dimension();
    let nodes = grid.nodes_per_axis();
    let (nx, ny) = (nodes[0], if d == 2 { nodes[1] } else { 1 });
    let inv_h2: Vec<f64> = grid.spacing().iter().map(|h| 1.0 / (h * h)).collect();
    let n = nx * ny;

    let mut row_ptr = Vec::with_capacity(n + 1);
    let mut cols = Vec::with_capacity(5 * n);
    let mut values = Vec::with_capacity(5 * n);
    row_ptr.push(0);
    for j in 0..ny {
        for i in 0..nx {
            let row = i + nx * j;
            let diag: f64 = 2.0 * inv_h2.iter().sum::<f64>();
            // Columns in increasing order; neighbours across ∂D are folded as zero.
            if d == 2 && j > 0 {
                cols.push(row - nx);
                values.push(-inv_h2[1]);
            }
            if i > 0 {
                cols.push(row - 1);
                values.push(-inv_h2[0]);
            }
            cols.push(row);
            values.push(diag);
            if i + 1 < nx {
                cols.push(row + 1);
                values.push(-inv_h2[0]);
            }
            if d == 2 && j + 1 < ny {
                cols.push(row + nx);
                values.push(-inv_h2[1]);
            }
            row_ptr.push(cols.len());
        }
    }
    let bandwidth = if d == 2 && ny > 1 { nx } else { usize::from(nx > 1) };
    DiscreteOperator { n, bandwidth, row_ptr, cols, values }
}

impl DiscreteOperator {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bandwidth
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[range.clone()].iter().copied().zip(self.values[range].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.row(i).find(|&(c, _)| c == j).map_or(0.0, |(_, v)| v)
    }

    /// `y = A x`.
    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate().take(self.n) {
            *yi = self.row(i).map(|(j, a)| a * x[j]).sum();
        }
    }

    pub fn apply_new(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.apply(x, &mut y);
        y
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.n).all(|i| self.row(i).all(|(j, v)| self.get(j, i) == v))
    }

    /// Structural M-matrix test: positive diagonal, non-positive off-diagonal,
    /// weakly diagonally dominant with strict dominance in some row.
    pub fn check_m_matrix(&self) -> Result<()> {
        let mut strict = false;
        for i in 0..self.n {
            let mut diag = 0.0;
            let mut off = 0.0;
            for (j, v) in self.row(i) {
                if i == j {
                    diag = v;
                } else if v > 0.0 {
                    return Err(Error::Model(format!("positive off-diagonal at ({i},{j})")));
                } else {
                    off -= v;
                }
            }
            if diag <= 0.0 {
                return Err(Error::Model(format!("non-positive diagonal in row {i}")));
            }
            if diag < off {
                return Err(Error::Model(format!("row {i} is not diagonally dominant")));
            }
            strict |= diag > off;
        }
        if !strict {
            return Err(Error::Model("no strictly dominant row".into()));
        }
        Ok(())
    }

    /// Cholesky factor of `alpha·I + beta·A`.
    pub fn factor_shifted(&self, alpha: f64, beta: f64) -> Result<BandedCholesky> {
        let bw = self.bandwidth;
        let mut band = BandedCholesky { n: self.n, bw, data: vec![0.0; self.n * (bw + 1)] };
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                if j <= i {
                    *band.at_mut(i, j) += beta * v;
                }
            }
            *band.at_mut(i, i) += alpha;
        }
        band.factor()?;
        Ok(band)
    }

    #[cfg(test)]
    pub(crate) fn to_dense(&self) -> Vec<Vec<f64>> {
        (0..self.n).map(|i| (0..self.n).map(|j| self.get(i, j)).collect()).collect()
    }
}

/// Lower-triangular band storage; entry `(i, j)` with `i − bw ≤ j ≤ i`
/// lives at `data[i·(bw+1) + j + bw − i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BandedCholesky {
    n: usize,
    bw: usize,
    data: Vec<f64>,
}

impl BandedCholesky {
    fn idx(&self, i: usize, j: usize) -> usize {
        i * (self.bw + 1) + j + self.bw - i
    }

    fn at(&self, i: usize, j: usize) -> f64 {
        self.data[self.idx(i, j)]
    }

    fn at_mut(&mut self, i: usize, j: usize) -> &mut f64 {
        let k = self.idx(i, j);
        &mut self.data[k]
    }

    fn factor(&mut self) -> Result<()> {
        for i in 0..self.n {
            let lo = i.saturating_sub(self.bw);
            for j in lo..=i {
                let klo = lo.max(j.saturating_sub(self.bw));
                let mut sum = self.at(i, j);
                for k in klo..j {
                    sum -= self.at(i, k) * self.at(j, k);
                }
                if i == j {
                    if !(sum > 0.0) {
                        return Err(Error::LinearSolve(format!(
                            "matrix not positive definite at pivot {i}"
                        )));
                    }
                    *self.at_mut(i, i) = sum.sqrt();
                } else {
                    *self.at_mut(i, j) = sum / self.at(j, j);
                }
            }
        }
        Ok(())
    }

    /// Solves in place: `x ← (L Lᵀ)⁻¹ x`.
    #[allow(clippy::needless_range_loop)]
    pub fn solve_in_place(&self, x: &mut [f64]) {
        for i in 0..self.n {
            let lo = i.saturating_sub(self.bw);
            let mut s = x[i];
            for k in lo..i {
                s -= self.at(i, k) * x[k];
            }
            x[i] = s / self.at(i, i);
        }
        for i in (0..self.n).rev() {
            let hi = (i + self.bw).min(self.n - 1);
            let mut s = x[i];
            for k in i + 1..=hi {
                s -= self.at(k, i) * x[k];
            }
            x[i] = s / self.at(i, i);
        }
    }
}
