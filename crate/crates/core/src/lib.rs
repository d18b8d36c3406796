//! Background-invariance testing engine: keyword ontology mining, semantic
//! background search, point clouds over semantic distance, RBF variance
//! matrices, and invariance assessors trained on human labels.

pub mod assessor;
pub mod corpus;
pub mod error;
pub mod io;
pub mod mining;
pub mod ontology;
pub mod pipeline;
pub mod resample;
pub mod rng;
pub mod scalar;
pub mod search;
pub mod signals;
pub mod synth;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type PointCloudF64 = signals::PointCloud<f64>;
pub type PointCloudF32 = signals::PointCloud<f32>;
pub type MeasurementSetF64 = signals::MeasurementSet<f64>;
pub type MeasurementSetF32 = signals::MeasurementSet<f32>;
pub type RbfConfigF64 = resample::RbfConfig<f64>;
pub type RbfConfigF32 = resample::RbfConfig<f32>;
pub type VarianceMatrixF64 = resample::VarianceMatrix<f64>;
pub type VarianceMatrixF32 = resample::VarianceMatrix<f32>;
/// Exact support fraction, as mined.
pub type SupportRatio = num_rational::Ratio<u64>;
