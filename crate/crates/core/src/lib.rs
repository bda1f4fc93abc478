//! Chunk allocation, replication and adaptive scheduling for uploads split
//! across heterogeneous parallel paths, modeled as a Fork-Join queue.

pub mod adaptive;
pub mod analysis;
pub mod bounds;
pub mod config;
pub mod distributions;
pub mod error;
pub mod experiments;
pub mod inference;
pub mod intermittent;
pub mod order_stats;
pub mod sim;
pub mod special;

pub use error::{FjupError, Result};
