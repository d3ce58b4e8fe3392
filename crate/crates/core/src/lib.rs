pub mod error;
pub mod harness;
pub mod kinetic;
pub mod nn;
pub mod persist;
pub mod stage1;
pub mod stage2;

pub use error::{Error, Result};
