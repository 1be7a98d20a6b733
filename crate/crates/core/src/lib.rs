//! Federated k-means with dynamically weighted aggregation.
//!
//! The crate contains centralized Lloyd k-means ([`kmeans`]), the weighted
//! federated protocol ([`federation`]), the one-shot k-FED baseline
//! ([`kfed`]), dataset generation and client partitioning ([`data`]),
//! evaluation metrics ([`metrics`]) and a seeded experiment harness
//! ([`experiment`]).

pub mod data;
pub mod error;
pub mod experiment;
pub mod federation;
pub mod kfed;
pub mod kmeans;
pub mod matrix;
pub mod metrics;
pub mod seed;

pub use data::{ClientDataset, LabeledDataset, Partition};
pub use error::{Error, Result};
pub use federation::{
    aggregate, compute_lambda, local_update, request_score, run_wf_kmeans, select_clients, ConvergedBy,
    FederationConfig, LambdaMatrix, RunResult, ScoreMode, WeightFn, WeightMode, WeightVector,
};
pub use kfed::{kfed_baseline, kfed_init, KFedParams};
pub use kmeans::{assign, init_centroids, kmeans, lloyd_step, Assignment, ClusterCounts, InitStrategy, KMeansParams};
pub use matrix::{CentroidSet, DataMatrix};
