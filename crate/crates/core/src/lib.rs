//! Estimating wrist-worn heart rate from smartphone accelerometer, GPS and
//! time of day, so that gaps in a wearable's heart-rate stream can be filled.
//!
//! The pipeline runs `ingest` (CSV parsing, 1 Hz alignment, gap detection),
//! `features` (motion, location and clock features), `models` (ridge,
//! epsilon-SVR, random forest and a moving-average baseline) and `evaluate`
//! (cross-validated personalized and generalized comparisons). `synthgen`
//! produces synthetic participants for testing.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix it to `f64`, which the evaluation harness and CLI use.

pub mod error;
pub mod evaluate;
pub mod features;
pub mod ingest;
pub mod linalg;
pub mod models;
pub mod scalar;
pub mod synthgen;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Matrix = linalg::Matrix<f64>;
pub type Standardizer = linalg::Standardizer<f64>;
pub type Ridge = models::ridge::RidgeRegressor<f64>;
pub type Svr = models::svr::SvrRegressor<f64>;
pub type SvrParams = models::svr::SvrParams<f64>;
pub type Forest = models::forest::RandomForest<f64>;
pub type Model = models::TrainedModel<f64>;
pub type ModelFile = models::ModelFile<f64>;
pub type ZScoreParams = features::ZScoreParams<f64>;
