//! Finite difference discretization of the stochastic Cahn-Hilliard equation
//! on `[0, pi]` with Neumann boundary conditions, and numerical computation
//! of the one-point large deviations rate function of the discrete model.

pub mod error;
pub mod green;
pub mod grid;
pub mod integrator;
pub mod io;
pub mod model;
pub mod numerics;
pub mod optimizer;
pub mod props;
pub mod quadrature;
pub mod rare_events;
pub mod sde;
pub mod skeleton;
pub mod spectral;

pub use error::{Error, Result};
pub use grid::{GridFunction, SpatialGrid};
pub use model::{CoefficientSpec, Coefficients};
pub use spectral::SpectralBasis;
