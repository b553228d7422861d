//! Principal Dirichlet eigenpair by inverse power iteration.

use std::io::Write;

use crate::geometry::{quadrature, write_fields_csv, Grid};
use crate::operator::DiscreteOperator;
use crate::{Error, Result};

pub const DEFAULT_TOLERANCE: f64 = 1e-10;
const MAX_ITERATIONS: usize = 2000;

/// `(λ₁, φ₁)` with `φ₁ > 0` and `∫_D φ₁ dx = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenPair {
    pub value: f64,
    pub vector: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
}

impl EigenPair {
    /// `min φ₁` over the given nodes.
    pub fn min_over(&self, nodes: &[usize]) -> f64 {
        nodes.iter().map(|&i| self.vector[i]).fold(f64::INFINITY, f64::min)
    }

    pub fn write_csv<W: Write>(&self, out: W, grid: &Grid) -> std::io::Result<()> {
        let lambda = vec![self.value; self.vector.len()];
        write_fields_csv(out, grid, &[("phi1", &self.vector), ("lambda1", &lambda)])
    }
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Inverse iteration on `A`; converges to the smallest eigenvalue because
/// `A` is symmetric positive definite. Stops once
/// `‖Aφ − λφ‖₂ ≤ tol · max(1, λ) · ‖φ‖₂`.
pub fn principal_eigenpair(op: &DiscreteOperator, grid: &Grid, tol: f64) -> Result<EigenPair> {
    let n = op.dim();
    grid.check_shape(&vec![0.0; n])?;
    let chol = op.factor_shifted(0.0, 1.0)?;

    // A⁻¹ is entrywise positive for an irreducible M-matrix, so a positive
    // start vector stays positive.
    let mut x = vec![1.0 / (n as f64).sqrt(); n];
    let mut ax = vec![0.0; n];
    let mut residual = f64::INFINITY;
    for it in 1..=MAX_ITERATIONS {
        chol.solve_in_place(&mut x);
        let nx = norm(&x);
        x.iter_mut().for_each(|v| *v /= nx);
        op.apply(&x, &mut ax);
        let lambda: f64 = x.iter().zip(&ax).map(|(a, b)| a * b).sum();
        residual = ax.iter().zip(&x).map(|(a, v)| (a - lambda * v).powi(2)).sum::<f64>().sqrt();
        if residual <= tol * lambda.max(1.0) {
            let mass = quadrature(&x, grid)?;
            let vector: Vec<f64> = x.iter().map(|v| v / mass).collect();
            if let Some(i) = vector.iter().position(|&v| !(v > 0.0)) {
                return Err(Error::Model(format!("principal eigenvector not positive at node {i}")));
            }
            return Ok(EigenPair { value: lambda, vector, residual, iterations: it });
        }
    }
    Err(Error::EigenSolve { iterations: MAX_ITERATIONS, residual })
}
