pub mod agent;
pub mod buffers;
pub mod envs;
pub mod error;
pub mod harness;
pub mod nn;
pub mod par;
pub mod ssil;

pub use error::{Error, Result};
