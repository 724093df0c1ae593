pub mod baseline_zf;
pub mod checks;
pub mod conic;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod metrics;
pub mod model;
pub mod optimizer;
pub mod surrogate;

pub use error::{Error, Result};
