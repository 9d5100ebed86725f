#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod contour;
pub mod error;
pub mod fredholm;
pub mod kernel;
pub mod lambert;
pub mod saddle;
pub mod sim;
pub mod stats;
pub mod verify;

pub use error::{Error, Result};
pub use saddle::{DeviationParam, InitialCondition, SaddleDiagnostics};
