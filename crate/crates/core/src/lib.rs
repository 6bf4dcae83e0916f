//! Out-of-sample R² for prediction models: MSE and MST estimators, the
//! pooling R², delta-method and bootstrap standard errors, intervals and
//! difference tests, plus a Monte-Carlo harness and a command-line front end.

pub mod cli;
pub mod data;
pub mod error;
pub mod inference;
pub mod loss;
pub mod predictors;
pub mod resampling;
pub mod sim;
pub mod stats;

pub use data::{CiMethod, Dataset, MseMethod, RhoMethod, RunConfig, SeMethod};
pub use error::{Error, Result};
pub use inference::{analyze, R2Report};
pub use loss::LossEstimate;
pub use predictors::{PredictorKind, PredictorSpec};
