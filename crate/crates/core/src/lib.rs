//! Desk-scale classical simulation of quantum machine-learning algorithms.
//!
//! The crate covers unary-basis circuits, the noise models of quantum
//! estimation routines, noisy clustering (δ-k-means, q-means, spectral),
//! pyramidal orthogonal layers, quantum convolution layers and the
//! theoretical cost formulas used to compare them with classical baselines.

// `!(x > 0.0)` is the NaN-rejecting form used for parameter checks.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod clustering;
pub mod costmodel;
pub mod dataset;
pub mod error;
pub mod estimators;
pub mod lin_basis;
pub mod pyramid;
pub mod qconv;
pub mod report;
pub mod rng;
pub mod sampling;
pub mod spectral;
pub mod tomography;

pub use clustering::{ClusterModel, DataParams, KMeansConfig, QMeansConfig};
pub use dataset::Dataset;
pub use error::{Error, Result};
pub use estimators::{IpeConfig, IpeMode, PhaseModel};
pub use lin_basis::{RbsGate, UnaryState};
pub use pyramid::{OrthoNet, PyramidLayer};
pub use qconv::{ConvLayerConfig, Tensor3, Tensor4};
pub use report::{RunReport, SCHEMA_VERSION};
pub use spectral::SpectralConfig;
