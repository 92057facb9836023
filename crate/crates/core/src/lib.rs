//! Radial cubic focusing NLS with a potential: solitons, linearization,
//! modulation, time evolution and the center-stable manifold near Q.

pub mod calibration;
pub mod checks;
pub mod error;
pub mod evolve;
pub mod functionals;
pub mod grid;
pub mod linalg;
pub mod linearization;
pub mod manifold;
pub mod modulation;
pub mod potential;
pub mod solitons;

pub use error::{Error, Result};
pub use grid::{RadialField, RadialGrid};
pub use num_complex::Complex64;
