pub mod error;
pub mod gan;
pub mod graph;
pub mod hierarchy;
pub mod partition;
pub mod pipeline;
pub mod reconstruct;
pub mod report;
pub mod sampling;
pub mod stages;

pub use error::{Error, Result};
