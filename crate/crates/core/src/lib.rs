//! Cluster refinement by sample ranking.
//!
//! Samples inside each cluster of an existing clustering are scored by the
//! statistics of their within-cluster k-nearest-neighbour distances, ranked
//! into confidence groups by majority voting across several choices of `k`,
//! and then used as weighted pseudo-labels for self-training a classifier.
//!
//! Module map:
//! - [`dataset`]: the embedding set, its validation and stable sample ids.
//! - [`config`]: ranking configuration and the `k` sweep.
//! - [`scoring`]: pairwise distances and the per-sample noise score.
//! - [`ranking`]: sorted lists and the majority-voting grouping.
//! - [`weighting`]: the epoch-dependent group weight schedule.
//! - [`trainer`]: softmax classifier and the weighted self-training loop.
//! - [`metrics`]: ACC / NMI / ARI and ranking success rate.
//! - [`datagen`]: seeded Gaussian-mixture benchmark sets.
//! - [`io`]: binary/CSV embedding files, JSON reports, checkpoints.
//! - [`cli`]: command-line front end.

pub mod cli;
pub mod config;
pub mod datagen;
pub mod dataset;
pub mod error;
pub mod io;
pub mod metrics;
pub mod ranking;
pub mod scoring;
pub mod trainer;
pub mod weighting;

pub use config::{resolve_k_sweep, Distance, RankingConfig};
pub use dataset::{validate, EmbeddingSet, Violation};
pub use error::{Error, Result};
pub use ranking::{rank_all, sort_by_score, vote_groups, RankedGroups, SortedLists};
pub use scoring::{noise_score, pairwise_distances, score_table, DistanceMatrix, NoiseScoreTable};
pub use datagen::{generate, BenchmarkSpec};
pub use metrics::{ari, evaluate, hungarian_accuracy, nmi, ranking_success_rate, EvaluationReport};
pub use trainer::{forward, lct_loss, pseudo_labels, train, train_from, ClassifierModel, TrainConfig, TrainMode, TrainState};
pub use weighting::{make_weighted_labels, weight, weight_deficit, GroupIndex, WeightSchedule, WeightedPseudoLabel};

