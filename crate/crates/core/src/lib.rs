pub mod accountant;
pub mod bench;
pub mod dgp;
pub mod error;
pub mod inference;
pub mod matrix;
pub mod metrics;
pub mod nn;
pub mod report;
pub mod rng;
pub mod synth;
pub mod tabular;

pub use error::{Error, Result};
