//! Prioritized experience replay toolkit.
//!
//! * [`losses`]: L1, MSE, Huber, PAL and the PER-equivalent power loss.
//! * [`sumtree`]: O(log N) proportional sampling.
//! * [`replay`]: ring buffer with Uniform, PER and LAP priorities.
//! * [`equivalence`]: exact and Monte Carlo checks that prioritized sampling
//!   and re-weighted uniform losses share expected gradients, plus the
//!   gradient-variance comparisons.
//! * [`toyrl`]: tabular Q-learning on a chain MDP.
//! * [`bench`]: sum-tree versus linear-scan sampling throughput.

pub mod bench;
pub mod cli;
pub mod equivalence;
pub mod error;
pub mod losses;
mod numeric;
pub mod replay;
pub mod rng;
pub mod sumtree;
pub mod toyrl;

pub use error::{Error, Result};
pub use losses::{DatasetStats, LossKind, LossSpec};
pub use replay::{ReplayBuffer, SampleBatch, SchemeConfig, SchemeKind, Transition};
pub use sumtree::SumTree;
