pub mod algorithms;
pub mod dataset;
pub mod ea;
pub mod env;
pub mod error;
pub mod problem;
pub mod qnet;
pub mod rng;
pub mod ssm;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
