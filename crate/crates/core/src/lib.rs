//! Asynchronous finite-difference heat solver modelled as an i.i.d. jump linear system.
//!
//! [`grid`] holds the discretization, [`modes`] the augmented switched system,
//! [`sim`] the seeded Monte Carlo simulator, [`analysis`] the certificates and
//! bounds, and [`cli`] the command-line front end.

pub mod analysis;
pub mod cli;
pub mod error;
pub mod grid;
pub mod linalg;
pub mod modes;
pub mod sim;

pub use error::{Error, Result};
