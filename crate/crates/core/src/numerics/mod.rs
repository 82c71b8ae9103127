//! Deterministic RNG and the statistical functions behind the adaptive
//! learning-rate test.

mod rng;
pub mod special;
mod ttest;

pub use rng::RngState;
pub use ttest::{student_t_sf, t_test_one_sided, LossHistory, VARIANCE_FLOOR};
