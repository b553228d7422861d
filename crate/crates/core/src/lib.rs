//! Simulation and verification toolkit for the non-local stochastic parabolic
//! problem
//!
//! ```text
//!     du = [Δu + λ f(u) / (∫_D f(u) dx)^q] dt + σ(u) dW,   u = 0 on ∂D,   u(0) = ξ,
//! ```
//!
//! on intervals and axis-aligned rectangles.
//!
//! The crate is split along the pipeline:
//!
//! * [`geometry`], [`operator`], [`spectral`]: mesh, quadrature, Dirichlet
//!   Laplacian and its principal eigenpair `(λ₁, φ₁)` with `∫ φ₁ = 1`.
//! * [`problem`]: nonlinearities, diffusion coefficients and the non-local drift.
//! * [`noise`]: Karhunen–Loève synthesis of Q-Wiener increments and coordinate noise.
//! * [`integrator`]: semi-implicit time stepping of one sample path with blow-up detection.
//! * [`ensemble`]: deterministic Monte Carlo over many paths and moment estimation.
//! * [`bounds`]: blow-up thresholds and blow-up time upper bounds.
//! * [`verify`]: falsification checks (maximum principle, Hopf sign, comparison,
//!   boundary ratio, moment identities).

// Negated comparisons are used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod ensemble;
pub mod error;
pub mod geometry;
pub mod integrator;
pub mod noise;
pub mod operator;
pub mod problem;
pub mod setup;
pub mod spectral;
pub mod verify;

pub use error::{Error, Result};
pub use setup::Setup;
