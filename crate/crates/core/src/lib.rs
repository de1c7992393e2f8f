//! Numerical toolkit for half-line Sturm–Liouville operators with periodically
//! modulated coefficients: transfer matrices, spectral classification, Turán
//! determinants, Christoffel–Darboux densities and eigenvalue counting.

pub mod asymptotics;
pub mod density;
pub mod error;
pub mod mat2;
pub mod ode;
pub mod params;
pub mod quad;
pub mod spectral;
pub mod transfer;

pub use error::{Error, Result};
pub use mat2::{Mat2, Vec2};
pub use params::{make_family, BoundaryVector, EtaFrame, Family, ModulationKind, SLParams};
