pub mod analysis;
pub mod cli;
pub mod data;
pub mod envs;
pub mod eval;
pub mod error;
pub mod gradcheck;
pub mod harness;
pub mod math;
pub mod nn;
pub mod policy;
pub mod reward;
pub mod rng;

pub use error::{Error, Result};
