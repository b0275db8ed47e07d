//! Multi-granularity attention model for group recommendation.
//!
//! Group preferences are read at three granularities: subsets of like-minded
//! members, the whole group, and the graph of groups that share members. The
//! three views are fused with self-attention and scored against an item.

pub mod autodiff;
pub mod cli;
pub mod cluster;
pub mod config;
pub mod data;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod graph;
pub mod model;
pub mod rng;
pub mod tensor;
pub mod train;

pub use error::{MgamError, Result};
