//! Network-free core-user classifier and its evaluation protocol.
//!
//! The model has three branches over a user's features:
//!
//! - text: the averaged comment embedding treated as a one-channel sequence,
//!   32 width-2 convolutions, ReLU, global max-pool, then a dense layer to 64
//! - similarity: dense 25 -> 32 with dropout
//! - metadata: dense 26 -> 16 with dropout
//!
//! Branch outputs are concatenated (112 wide) and passed through a dense
//! layer to 16 units and a two-way softmax.

pub mod eval;
pub mod model;
pub mod train;
pub mod wbc;


pub use eval::{ablations, auc, evaluate, evaluate_with, EvalMode, EvalReport, FoldData, KMetrics};
pub use model::{bce, Branches, Masks, Network, NurseConfig, NurseModel, Sample, Standardizer};
pub use train::train;
pub use wbc::{wbc_baseline, weighted_betweenness};
