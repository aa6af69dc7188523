//! Cluster-based graph collaborative filtering.
//!
//! Users and items are softly assigned to clusters by a small network on top
//! of their ID and first-layer embeddings (Gumbel-Softmax). First-order
//! propagation runs on the full user–item graph; higher-order propagation
//! runs separately on each cluster-specific graph, where every node's message
//! is weighted by its cluster probability. Training uses BPR with L2
//! regularization and Adam, with hand-derived reverse-mode gradients.
//!
//! With one cluster the model reduces exactly to LightGCN.

pub mod cluster;
pub mod dataset;
pub mod dense;
pub mod error;
pub mod evaluation;
pub mod export;
pub mod graph;
pub mod propagation;
pub mod reference;
pub mod seed;
pub mod sparse;
pub mod synthetic;
pub mod training;

pub use cluster::{ClusterAssignment, ClusterNetParams, ClusterTrace, NoiseMode};
pub use dataset::{BprTriplet, InputFormat, InteractionDataset, NegativeSampler, Split, SplitConfig};
pub use dense::DenseMatrix;
pub use error::{Error, ErrorKind, Result};
pub use evaluation::EvalResult;
pub use graph::BipartiteGraph;
pub use propagation::{ForwardTrace, PropagationConfig};
pub use sparse::CsrMatrix;
pub use training::{
    AdamState, Checkpoint, Gradients, L2Penalty, LogRecord, ModelParams, TrainConfig, TrainOutcome,
};
