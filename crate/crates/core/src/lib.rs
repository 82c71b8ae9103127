//! Desk-scale workbench for online, task-free, class-incremental continual
//! learning on blurry-boundary streams.
//!
//! The crate provides the full experiment stack: deterministic numerics, a
//! small MLP classifier with exact gradients, stream/split construction,
//! episodic-memory policies (reservoir and sample-wise importance), learning
//! rate schedulers (constant, exponential-with-reset, adaptive t-test), the
//! online training loops, and any-time evaluation metrics.

pub mod error;
pub mod memory;
pub mod metrics;
pub mod model;
pub mod numerics;
pub mod scheduler;
pub mod stream;
pub mod trainer;

pub use error::{CoreError, Result};
