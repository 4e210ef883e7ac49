pub mod catalog;
pub mod certify;
pub mod conic;
pub mod doc;
pub mod error;
pub mod hull;
pub mod measure;
pub mod protocols;
pub mod qops;
pub mod scalar;
pub mod shrink;
pub mod strategies;

use openblas_src as _;

pub use error::{Error, Result};

pub type DensityOperator = qops::DensityOperator<f64>;
pub type HermitianOperator = qops::HermitianOperator<f64>;
pub type ComplexMatrix = qops::ComplexMatrix<f64>;
pub type BlochVector = measure::BlochVector<f64>;
pub type Povm = measure::Povm<f64>;
pub type MeasurementSet = measure::MeasurementSet<f64>;
pub type ShrinkResult = shrink::ShrinkResult<f64>;
pub type FacetDescription = shrink::FacetDescription<f64>;
pub type Polytope = hull::Polytope<f64>;
