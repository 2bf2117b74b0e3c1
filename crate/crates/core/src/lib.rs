//! Pre-operative critic laboratory.
//!
//! A deterministic screen-graph simulator stands in for GUI devices; a
//! linear-softmax token policy plays the critic. The crate covers the whole
//! lifecycle: world generation, data collection with negative sampling,
//! filtering and reasoning bootstrapping, supervised cold-start plus
//! suggestion-aware GRPO training, and static and dynamic evaluation.

pub mod agent;
pub mod critic;
pub mod data;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod generate;
pub mod rng;
pub mod trainer;
pub mod world;

pub use error::{Error, Result};
