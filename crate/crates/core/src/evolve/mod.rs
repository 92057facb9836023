//! Time evolution of i u_t = Lap u - V^omega u + |u|^2 u in the rescaled frame.
//!
//! The integrator is the conservative Crank-Nicolson scheme of Delfour, Fortin
//! and Payre: the nonlinearity is averaged as (|u+|^2 + |u|^2)(u+ + u)/4, which
//! makes discrete mass and energy exact invariants. The implicit step is solved
//! by fixed-point iteration against a cached tridiagonal factorisation.

mod stepper;
pub mod virial;
mod classify;

pub use classify::*;
pub use stepper::*;
