//! The dictionary-attack layer: match predicate, coverage fitness, MSC,
//! threshold calibration and coverage search.

mod kmeans;
mod metric;
mod problem;
mod search;
mod threshold;

pub use kmeans::{kmeans, KMeans};
pub use metric::{centroid_coverage, is_match, msc, EmbeddingGallery, Metric};
pub use problem::{coverage_fitness, AttackTarget, CombinedProblem, Encoder, VerificationProblem};
pub use search::{
    clustered_coverage_search, greedy_coverage, CoverageReport, ExhaustiveSearch, MasterSample,
    MasterSearch, KMEANS_ROUNDS,
};
pub use threshold::{
    combined_far_frr, combined_threshold_grid, far_frr, threshold_at_eer, threshold_at_far,
    CombinedThresholds, EerThreshold, FarThreshold, PairScores,
};
