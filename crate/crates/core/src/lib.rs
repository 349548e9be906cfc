//! Multi-scale patch forecasting trained with the smooth quadratic loss.

pub mod data;
pub mod error;
pub mod experiment;
pub mod losses;
pub mod model;
pub mod patching;
pub mod theory;
pub mod training;
pub mod types;

pub use error::{Error, Result};
