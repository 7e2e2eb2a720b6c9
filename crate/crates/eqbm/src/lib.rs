//! Dense simulation and minimax training of evolved quantum Boltzmann
//! machines for Born-rule generative modeling.

pub mod error;
pub mod exec;
pub mod linalg;
pub mod channels;
pub mod critic;
pub mod model;
pub mod objective;
pub mod optimizers;
pub mod quadrature;
pub mod random;
pub mod rng;

pub use error::{Error, Result};
