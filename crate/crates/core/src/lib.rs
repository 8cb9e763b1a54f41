//! Numerical laboratory for the harmonic map heat flow coupled with a
//! time-dependent domain metric.

pub mod error;
pub mod exhaustion;
pub mod geometry;
pub mod grid;
pub mod hmflow;
pub mod heatkernel;
pub mod io;
pub mod linheat;
pub mod maps;
pub mod metric;
pub mod picard;
pub mod report;
pub mod scenario;
pub mod stepping;
pub mod target;
pub mod tensor;

pub use error::{Error, Result};
