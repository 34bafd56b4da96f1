//! Detection of core blackmarket users in collusive commenting data.
//!
//! The crate is organised as a pipeline:
//!
//! * [`data`] ingests comment, video and user logs into a [`data::Dataset`].
//! * [`ccn`] builds the weighted collusive commenting network from co-comments.
//! * [`kcore`] computes weighted and unweighted coreness by peeling.
//! * [`korse`] sweeps coreness thresholds and selects the core that maximises
//!   the weighted internal core collusive index.
//! * [`analysis`] studies the core/periphery interplay (breakage curves,
//!   Louvain communities, weighted cut-sets, case-study statistics).
//! * [`embedding`], [`features`] and [`nurse`] build per-user features and the
//!   three-branch fusion classifier that predicts core users without the graph.
//! * [`synth`] generates planted datasets for end-to-end validation.

pub mod analysis;
pub mod ccn;
pub mod data;
pub mod embedding;
pub mod error;
pub mod features;
pub mod kcore;
pub mod korse;
pub mod nurse;
pub mod seed;
pub mod synth;

pub use error::{Error, Result};
