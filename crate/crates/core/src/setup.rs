//! Assembled, immutable inputs shared by every path of a run.

use serde::{Deserialize, Serialize};

use crate::geometry::{build_grid, Grid};
use crate::noise::{build_kl_noise, CovarianceKernel, NoiseModel};
use crate::operator::{assemble_laplacian, DiscreteOperator};
use crate::problem::ProblemSpec;
use crate::spectral::{principal_eigenpair, EigenPair};
use crate::{Error, Result};

/// Noise as written in a configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NoiseSpec {
    Off,
    Kl { kernel: CovarianceKernel, eps_tail: f64 },
    Coordinate { coefficients: Vec<f64> },
}

impl NoiseSpec {
    pub const REGISTRY: [&'static str; 3] = ["off", "kl", "coordinate"];
}

#[derive(Debug, Clone)]
pub struct Setup {
    pub spec: ProblemSpec,
    pub grid: Grid,
    pub op: DiscreteOperator,
    pub eigen: EigenPair,
    pub noise: NoiseModel,
}

impl Setup {
    pub fn new(spec: ProblemSpec, noise: &NoiseSpec, eigen_tol: f64) -> Result<Self> {
        spec.validate()?;
        let grid = build_grid(&spec.domain)?;
        let op = assemble_laplacian(&grid);
        op.check_m_matrix()?;
        let eigen = principal_eigenpair(&op, &grid, eigen_tol)?;
        let noise = match noise {
            NoiseSpec::Off => NoiseModel::Off,
            NoiseSpec::Kl { kernel, eps_tail } => build_kl_noise(kernel, &grid, *eps_tail)?,
            NoiseSpec::Coordinate { coefficients } => {
                if coefficients.iter().any(|c| !c.is_finite()) {
                    return Err(Error::Config("coordinate noise coefficients must be finite".into()));
                }
                NoiseModel::Coordinate { coefficients: coefficients.clone() }
            }
        };
        Ok(Self { spec, grid, op, eigen, noise })
    }

    pub fn initial(&self) -> Result<Vec<f64>> {
        self.spec.initial.sample(&self.grid, &self.eigen)
    }

    /// `û(0) = ∫ ξ φ₁ dx`.
    pub fn psi0(&self) -> Result<f64> {
        Ok(self.grid.inner(&self.initial()?, &self.eigen.vector))
    }
}
