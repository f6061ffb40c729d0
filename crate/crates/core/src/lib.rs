//! Numerical toolkit for the Schrödinger boundary-data problem on 1-D grids.
//!
//! Given two boundary densities and a positive two-time kernel, the bridge
//! module finds the factor pair `(u0, vT)` whose product measure has the
//! prescribed marginals, propagates it into the interpolating density
//! `rho = u v` with forward/backward drifts, and exposes the transition
//! densities of the resulting diffusion. Supporting modules generate
//! Feynman-Kac kernels from potentials, simulate the diffusions, and check
//! the Fokker-Planck, Kolmogorov and forced Burgers equations by residuals.
//!
//! All numerics are generic over [`Real`] (`f32` or `f64`); the aliases at the
//! crate root fix `f64`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bridge;
pub mod burgers;
pub mod dynamics;
pub mod error;
pub mod gallery;
pub mod kernel;
pub mod numgrid;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Grid = numgrid::Grid1D<f64>;
pub type TimeLattice = numgrid::TimeGrid<f64>;
pub type Field = numgrid::ScalarField<f64>;
pub type Series = numgrid::FieldSeries<f64>;
pub type KernelF64 = kernel::Kernel<f64>;
pub type KernelMatrixF64 = kernel::KernelMatrix<f64>;
pub type PotentialF64 = kernel::Potential<f64>;
pub type BoundaryDataF64 = bridge::BoundaryData<f64>;
pub type BridgeFactorsF64 = bridge::BridgeFactors<f64>;
pub type BridgeSolutionF64 = bridge::BridgeSolution<f64>;
pub type SdeConfigF64 = dynamics::SdeConfig<f64>;
pub type PathEnsembleF64 = dynamics::PathEnsemble<f64>;
