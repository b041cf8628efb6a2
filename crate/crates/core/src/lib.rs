pub mod cli;
pub mod diffcore;
pub mod emloss;
pub mod error;
pub mod geometry;
pub mod indexmerge;
pub mod membank;
pub mod motmetrics;
pub mod slotworld;
pub mod tracker;
pub mod trainer;

pub use error::{Error, Result};
