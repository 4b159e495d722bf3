//! Explicit determinantal theta-function equations for curves inside their
//! Jacobians.
//!
//! * [`ppav`]: arithmetic on complex tori `C^g / (Z^g + tau Z^g)`.
//! * [`theta`]: Riemann theta functions and the second-order basis.
//! * [`curves`]: hyperelliptic period matrices and the Abel-Jacobi map.
//! * [`trisecant`]: the minor systems, Kummer collinearity and the
//!   Jacobian scan.
//! * [`cli`]: the batch front end behind the `trisecant` binary.

pub mod cli;
pub mod curves;
pub mod error;
pub mod ppav;
pub mod theta;
pub mod trisecant;

pub use error::{Error, Result};
pub use num_complex::Complex64;
