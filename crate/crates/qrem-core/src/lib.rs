//! Desk-scale quantum readout-error mitigation.
//!
//! Real quantum hardware misreads qubits: the observed outcome distribution
//! p̂ deviates from the ideal distribution p through a noise map 𝒩. This
//! crate simulates that setting end to end and implements two mitigators
//! that recover p̃ ≈ p from p̂:
//!
//! - [`channel`] — ideal product-state distributions, synthetic linear /
//!   non-linear / drifting readout channels, finite-shot sampling;
//! - [`dataset`] — (observed, ideal) pair generation, JSONL persistence,
//!   ingestion of externally produced counts;
//! - [`nn`] — a fully connected ReLU/softmax network trained with Adam on
//!   cross-entropy to approximate 𝒩⁻¹;
//! - [`li`] — the linear-inversion baseline: response-matrix tomography plus
//!   simplex-constrained least squares;
//! - [`metrics`] — MSE, KL divergence, infidelity, and the improvement
//!   ratio comparing the two mitigators.
//!
//! # Bit order
//!
//! Qubit 0 is the most significant bit of a basis-state index, everywhere:
//! vectors and matrices over n qubits are Kronecker products with qubit 0 as
//! the first (slowest-varying) factor. Counts files using the opposite
//! endianness can be ingested with [`dataset::BitOrder::Reversed`].
//!
//! # Reproducibility
//!
//! Every randomized stage derives its RNG seed from a master seed through
//! [`seeds::derive_seed`]; identical seeds reproduce datasets, trained
//! weights, and reports bit for bit.

pub mod channel;
pub mod dataset;
pub mod error;
pub mod li;
pub mod linalg;
pub mod metrics;
pub mod nn;
pub mod seeds;

pub use channel::{
    ideal_distribution, AngleVector, ChannelConfig, NoiseChannel, ProbabilityDistribution,
    ShotSampler, Shots,
};
pub use dataset::{Dataset, DatasetRecord, SplitTag};
pub use error::{Error, Result};
pub use li::{calibrate, mitigate_li, project_simplex, LiSolver, ResponseMatrix};
pub use metrics::{improvement_ratio, infidelity, kld, mse, MetricKind};
pub use nn::{
    backward_gradients, cross_entropy_loss, cross_validate, fold_sizes, mitigate_nn, train,
    MlpModel, TrainingConfig,
};
