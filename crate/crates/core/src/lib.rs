//! Maximum likelihood, explicit bias correction, mean and median bias
//! reduction for generalized linear models, all driven by adjusted
//! iteratively reweighted least squares.

pub mod error;
pub mod families;
pub mod datasets;
pub mod engine;
pub mod inference;
pub mod linalg;
pub mod multinomial;
pub mod separation;
pub mod sim;

pub use error::{GlmError, Result};
pub use families::{Family, Link};
pub use nalgebra::{DMatrix, DVector};
