pub mod algebra;
pub mod classical;
pub mod cli;
pub mod error;
pub mod mps;
pub mod numerics;
pub mod partitions;
pub mod states;
pub mod tps;

pub use error::{Error, Result};
