//! Numerical machinery for complex geometrical optics (CGO) solutions of the
//! two-dimensional Schrodinger equation `(Δ + q) u = 0`: solid Cauchy
//! transforms, Neumann-series CGO amplitudes, oscillatory integral operators,
//! stationary-phase evaluation, a finite-difference Dirichlet-to-Neumann
//! solver and pointwise potential recovery from boundary data.
//!
//! Everything is generic over the scalar type through [`Real`]; the `f64`
//! aliases below are what most callers want.

pub mod cauchy;
pub mod cgo;
pub mod error;
pub mod fit;
pub mod forward;
pub mod grid;
pub mod linalg;
pub mod osc;
pub mod recon;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::Real;

pub type C64 = num_complex::Complex<f64>;
pub type Grid = grid::Grid2D<f64>;
pub type Field = grid::ComplexField<f64>;
pub type Potential = grid::PotentialSpec<f64>;
pub type Kernel = cauchy::CauchyKernelTable<f64>;
pub type Solution = cgo::CgoSolution<f64>;
pub type DtN = forward::DtNMap<f64>;
pub type Boundary = forward::BoundaryFunction<f64>;
pub type TOperator = osc::OscillatoryOperator<f64>;
