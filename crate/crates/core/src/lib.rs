//! Multilevel Karhunen-Loeve anomaly features for binary classification.
//!
//! The nominal class `A` defines a truncated eigenspace (the KL expansion of
//! its covariance). A hierarchical orthonormal basis of the orthogonal
//! complement of that eigenspace turns every signal into multilevel detail
//! coefficients, which are then classified with a soft-margin linear SVM.
//!
//! Module map:
//! - [`data`]: CSV ingestion, standardization, nominal split
//! - [`spectral`]: eigenmodel by the method of snapshots
//! - [`multilevel`]: block tree, complement basis and feature map
//! - [`svm`]: linear SVM trainer and predictor
//! - [`eval`]: leave-one-out protocols, metrics and reports
//! - [`synth`]: KL-bootstrap synthetic data and the coefficient-energy bound

pub mod data;
pub mod error;
pub mod eval;
pub mod linalg;
pub mod multilevel;
pub mod spectral;
pub mod svm;
pub mod synth;

pub use data::{ClassLabel, LabelTokens, LabeledDataset, SignalMatrix, StandardizationStats};
pub use error::{Error, Result};
pub use eval::{ExperimentConfig, LoocvVariant, Metrics, Preprocessing, Report};
pub use multilevel::{BlockTree, FeatureMode, FeatureVector, MultilevelBasis};
pub use spectral::{EigenModel, Truncation};
pub use svm::{SvmModel, SvmParams, TrainingSet};
pub use synth::{AnomalyProfile, GroundTruth, SynthSpec};
