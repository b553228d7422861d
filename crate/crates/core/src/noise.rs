//! Q-Wiener increments from a truncated Karhunen–Loève expansion, and
//! spatially constant coordinate noise driven by finitely many Brownian motions.

use std::io::Write;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::geometry::Grid;
use crate::{Error, Result};

/// Covariance function `q(x, y)` of the driving process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case", deny_unknown_fields)]
pub enum CovarianceKernel {
    /// `a · exp(−|x − y|² / (2ℓ²))`
    Gaussian { amplitude: f64, length: f64 },
    /// `q ≡ a`, a rank-one operator.
    Constant { amplitude: f64 },
}

impl CovarianceKernel {
    pub const REGISTRY: [&'static str; 2] = ["gaussian", "constant"];

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Gaussian { amplitude, length } => {
                if !(*amplitude >= 0.0 && amplitude.is_finite()) {
                    return Err(Error::Config(format!("kernel amplitude must be >= 0, got {amplitude}")));
                }
                if !(*length > 0.0 && length.is_finite()) {
                    return Err(Error::Config(format!("kernel length must be > 0, got {length}")));
                }
                Ok(())
            }
            Self::Constant { amplitude } if !(*amplitude >= 0.0 && amplitude.is_finite()) => {
                Err(Error::Config(format!("kernel amplitude must be >= 0, got {amplitude}")))
            }
            Self::Constant { .. } => Ok(()),
        }
    }

    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        match self {
            Self::Gaussian { amplitude, length } => {
                let r2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
                amplitude * (-r2 / (2.0 * length * length)).exp()
            }
            Self::Constant { amplitude } => *amplitude,
        }
    }
}

/// Truncated spectral representation `W = Σ_j √γ_j χ_j β_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct KlNoise {
    /// Retained eigenvalues, descending.
    pub gammas: Vec<f64>,
    /// Retained modes, orthonormal in the discrete `L²(D)` inner product.
    pub modes: Vec<Vec<f64>>,
    /// Full discrete spectrum after clipping, descending.
    pub spectrum: Vec<f64>,
    pub trace: f64,
    pub captured: f64,
    /// Total magnitude of negative eigenvalues set to zero.
    pub clipped_mass: f64,
}

impl KlNoise {
    pub fn truncation(&self) -> usize {
        self.gammas.len()
    }

    pub fn write_spectrum_csv<W: Write>(&self, out: W) -> std::io::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["j", "gamma"])?;
        for (j, g) in self.spectrum.iter().enumerate() {
            w.write_record([(j + 1).to_string(), g.to_string()])?;
        }
        w.flush()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum NoiseModel {
    Off,
    Kl(KlNoise),
    /// `ΔW(x) ≡ √dt Σ_j c_j Z_j` at every node, so that `σ(u)ΔW` realizes
    /// `Σ_j σ_j(u) Δβ_j` with `σ_j = c_j σ`.
    Coordinate { coefficients: Vec<f64> },
}

/// Eigendecomposition of `W^{1/2} C W^{1/2}` with `C_ij = q(x_i, x_j)`.
pub fn build_kl_noise(kernel: &CovarianceKernel, grid: &Grid, eps_tail: f64) -> Result<NoiseModel> {
    kernel.validate()?;
    if !(eps_tail > 0.0 && eps_tail < 1.0) {
        return Err(Error::Config(format!("eps_tail must lie in (0, 1), got {eps_tail}")));
    }
    let n = grid.len();
    if n == 0 {
        return Err(Error::Config("cannot assemble a kernel matrix on an empty grid".into()));
    }
    let sw: Vec<f64> = grid.weights().iter().map(|w| w.sqrt()).collect();
    let s = DMatrix::from_fn(n, n, |i, j| sw[i] * kernel.eval(grid.coord(i), grid.coord(j)) * sw[j]);
    let trace = s.trace();
    let eig = SymmetricEigen::new(s);
    if eig.eigenvalues.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("kernel matrix spectrum".into()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let clipped_mass: f64 = eig.eigenvalues.iter().filter(|v| **v < 0.0).map(|v| -v).sum();
    let spectrum: Vec<f64> = order.iter().map(|&k| eig.eigenvalues[k].max(0.0)).collect();

    let target = (1.0 - eps_tail) * trace;
    let mut captured = 0.0;
    let mut gammas = Vec::new();
    let mut modes = Vec::new();
    if trace > 0.0 {
        for (&k, &g) in order.iter().zip(&spectrum) {
            if captured >= target || g == 0.0 {
                break;
            }
            captured += g;
            gammas.push(g);
            let v = eig.eigenvectors.column(k);
            modes.push((0..n).map(|i| v[i] / sw[i]).collect());
        }
    }
    Ok(NoiseModel::Kl(KlNoise { gammas, modes, spectrum, trace, captured, clipped_mass }))
}

/// Per-path generator: ChaCha8 keyed by the master seed, one stream per path.
pub fn path_rng(master_seed: u64, path_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(path_index);
    rng
}

impl NoiseModel {
    pub fn is_off(&self) -> bool {
        match self {
            Self::Off => true,
            Self::Kl(kl) => kl.gammas.is_empty(),
            Self::Coordinate { coefficients } => coefficients.iter().all(|c| *c == 0.0),
        }
    }

    /// Writes `ΔW` over a step of length `dt` into `out`. `Off` draws nothing.
    pub fn sample_increment<R: Rng + ?Sized>(&self, dt: f64, rng: &mut R, out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        match self {
            Self::Off => {}
            Self::Kl(kl) => {
                for (g, mode) in kl.gammas.iter().zip(&kl.modes) {
                    let z: f64 = rng.sample(StandardNormal);
                    let a = (g * dt).sqrt() * z;
                    out.iter_mut().zip(mode).for_each(|(o, m)| *o += a * m);
                }
            }
            Self::Coordinate { coefficients } => {
                let mut s = 0.0;
                for c in coefficients {
                    let z: f64 = rng.sample(StandardNormal);
                    s += c * z;
                }
                let v = dt.sqrt() * s;
                out.iter_mut().for_each(|o| *o = v);
            }
        }
    }

    /// Smallest eigenvalue of the discretized covariance operator: a lower
    /// bound for `∫∫ q(x,y) w(x) w(y) / ∫ w²` over all `w`. Zero when the
    /// truncation drops modes.
    pub fn estimate_q1(&self, grid: &Grid) -> Result<f64> {
        match self {
            Self::Kl(kl) if kl.truncation() < grid.len() => Ok(0.0),
            Self::Kl(kl) => Ok(kl.spectrum.last().copied().unwrap_or(0.0)),
            _ => Err(Error::NotApplicable(
                "q1 is defined only for Karhunen-Loeve noise".into(),
            )),
        }
    }

    /// `Σ_j c_j²`, the constant `C` in `Σ σ_j(s)² ≤ C(1 + s²)` for a linear `σ`.
    pub fn coordinate_growth_constant(&self) -> Option<f64> {
        match self {
            Self::Coordinate { coefficients } => Some(coefficients.iter().map(|c| c * c).sum()),
            _ => None,
        }
    }
}
