//! Neuron pruning for feed-forward networks by diverse subset selection.
//!
//! A hidden layer's neurons are described by their activation vectors over the
//! training set. An RBF similarity kernel over those vectors defines a
//! determinantal point process (DPP); sampling it keeps a diverse subset of
//! neurons, and the outgoing weights of the removed neurons are fused into the
//! kept ones by least squares so the next layer sees nearly the same input.
//!
//! Module map:
//!
//! - [`numerics`]: dense matrices, symmetric eigendecomposition, least squares, seeded RNG.
//! - [`dataio`]: IDX, amat, and CIFAR-10 loaders plus synthetic data.
//! - [`mlp`]: sigmoid/softmax networks, training, serialization, activations.
//! - [`dpp`]: kernel construction, size calibration, exact samplers, enumeration.
//! - [`prune`]: selection strategies, fusion, and network surgery.
//! - [`harness`]: configs, experiment sweeps, CSV/SVG output, and the CLI.

pub mod dataio;
pub mod dpp;
mod error;
pub mod harness;
pub mod mlp;
pub mod numerics;
pub mod prune;

pub use error::{Error, Result};
pub use numerics::{Matrix, Rng};
