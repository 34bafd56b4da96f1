//! Structural analysis of a partitioned network: breakage under removal,
//! periphery communities and their ties to the core, and user case studies.

pub mod case_study;
pub mod interplay;
pub mod louvain;
pub mod removal;

pub use case_study::{case_study_report, CaseStudyReport};
pub use interplay::{
    categorize_videos, category_counts, interplay_correlations, interplay_csv, interplay_table, pearson, periphery_lcc,
    InterplayRow, VideoCategory,
};
pub use louvain::{louvain, modularity, CommunitySet};
pub use removal::{removal_curve, removal_order, OrderKey, RemovalCurve, RemovalPoint};
