//! Exact descriptor retrieval and place-recognition metrics.

mod metrics;
mod report;
mod retrieval;

pub use metrics::{
    average_precision, default_thresholds, l2_distributions, pr_curve, recall_at_k, Histogram,
    L2Distributions, PrPoint, DEFAULT_KS, DEFAULT_THRESHOLD_COUNT,
};
pub use report::{
    evaluate, read_matches_csv, write_l2_hist_csv, write_matches_csv, write_pr_csv, write_report,
    EvalOptions, EvalReport,
};
pub use retrieval::{topk, Match, MatchResult};
