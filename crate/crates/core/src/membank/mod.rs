//! Object memory: per-buffer FIFO history with a lifecycle state machine,
//! and the rollout model that predicts each buffer forward in time.

mod bank;
mod rollout;

pub use bank::{BufferState, MemoryBank};
pub use rollout::{causal_block_mask, RolloutConfig, RolloutModel};
