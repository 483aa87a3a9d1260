//! One-class anomaly detection for component-based distributed applications.
//!
//! Two complementary detectors share one kernel and solver layer:
//!
//! * [`behavioral`] classifies sliding windows over per-component telemetry
//!   with a one-class SVM and a validation-calibrated threshold.
//! * [`structural`] embeds application graph snapshots into a bag of
//!   degree-1 neighborhood substructures and scores them with a one-class
//!   SVM or a support vector data description.
//!
//! With a sum-decomposable kernel the structural prediction can be traced
//! back onto individual nodes and edges ([`localization`]).
//!
//! Kernels and one-class methods are strategies registered by name in
//! [`kernels::KernelRegistry`] and [`oneclass::MethodRegistry`], so a model
//! file or a command line flag selects them at runtime.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod behavioral;
pub mod datagen;
pub mod error;
pub mod eval;
pub mod features;
pub mod kernels;
pub mod localization;
pub mod oneclass;
pub mod structural;

pub use error::{Error, Result};
pub use features::FeatureVector;
pub use kernels::{Kernel, KernelSpec};
pub use oneclass::{OneClassMethod, OneClassModel, TrainConfig};
