//! Fully-connected networks with analytic gradients, Adam, and target-network averaging.

mod adam;
pub mod checkpoint;
mod mlp;
mod soft_update;

pub use adam::{adam_step, adam_update_slice, AdamState};
pub use mlp::{ForwardCache, Gradients, Mlp, OutputSquash};
pub use soft_update::soft_update;
