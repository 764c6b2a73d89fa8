//! Curvature analysis of small fully-connected classifiers.
//!
//! This crate trains dense ReLU/sigmoid classifiers, assembles the exact
//! Hessian of the training loss, and relates its top eigenvectors to the
//! decision boundary the network has learned:
//!
//! - [`alignment`]: cosine alignment of per-sample reinforcing gradients with
//!   Hessian eigenvectors, input-space grid fields, and the random-direction
//!   threshold.
//! - [`analysis`]: the eigenvector-counting generalization measure, classical
//!   flatness measures, and boundary-margin estimation.
//! - [`curvature`]: Hessian-vector products, dense Hessian assembly, gradient
//!   covariance, spectrum outliers and the second-order Taylor check.
//!
//! The crate is `no_std` (with `alloc`) when built without the default `std`
//! feature. All floating point math goes through `libm`, so results are
//! bit-identical with and without `std`. The `parallel` feature spreads
//! Hessian columns and per-sample work over a rayon pool; outputs are written
//! by index and do not depend on scheduling.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod alignment;
pub mod analysis;
pub mod curvature;
pub mod dataset;
mod error;
pub mod linalg;
pub mod loss;
pub(crate) mod math;
pub mod network;
mod par;
pub mod training;

pub use error::{Error, Result};

pub use dataset::LabeledDataset;
pub use linalg::{SpectralDecomposition, SymmetricMatrix};
pub use loss::{LossConfig, LossKind, Reduction};
pub use network::{Activation, NetworkSpec, ParamVector};
