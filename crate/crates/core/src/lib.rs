pub mod analysis;
pub mod coefficients;
pub mod discrete;
pub mod error;
pub mod experiment;
pub mod field;
pub mod geometry;
pub mod green;
pub mod operator;
pub mod semilinear;
pub mod sparse;

pub use error::{Error, Result};
pub use field::GridFunction;
