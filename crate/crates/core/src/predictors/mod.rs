//! Regression procedures behind a uniform train/predict contract.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::data::{Dataset, Transform};
use crate::error::{Error, Result};

pub mod enet;
mod ols;

pub use enet::{lambda_grid, CoordinateDescent, LambdaTuning};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictorKind {
    Ols,
    ElasticNet,
    /// Intercept-only null model predicting the training mean.
    MeanOnly,
}

impl FromStr for PredictorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ols" => Ok(PredictorKind::Ols),
            "enet" | "elastic_net" | "elasticnet" => Ok(PredictorKind::ElasticNet),
            "mean" | "mean_only" => Ok(PredictorKind::MeanOnly),
            other => Err(Error::Config(format!("unknown model {other:?}"))),
        }
    }
}

impl fmt::Display for PredictorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PredictorKind::Ols => "ols",
            PredictorKind::ElasticNet => "enet",
            PredictorKind::MeanOnly => "mean",
        })
    }
}

/// A trainable regression procedure.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictorSpec {
    pub kind: PredictorKind,
    /// Elastic-net mixing: 1 is the lasso, 0 is ridge.
    pub en_mixing: f64,
    pub en_inner_folds: usize,
    pub en_lambda_count: usize,
    pub en_lambda_ratio: f64,
}

impl Default for PredictorSpec {
    fn default() -> Self {
        PredictorSpec {
            kind: PredictorKind::Ols,
            en_mixing: 0.5,
            en_inner_folds: 10,
            en_lambda_count: 100,
            en_lambda_ratio: 1e-3,
        }
    }
}

impl PredictorSpec {
    pub fn ols() -> Self {
        PredictorSpec::default()
    }

    pub fn elastic_net() -> Self {
        PredictorSpec {
            kind: PredictorKind::ElasticNet,
            ..PredictorSpec::default()
        }
    }

    pub fn mean_only() -> Self {
        PredictorSpec {
            kind: PredictorKind::MeanOnly,
            ..PredictorSpec::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.kind != PredictorKind::ElasticNet {
            return Ok(());
        }
        if !(0.0..=1.0).contains(&self.en_mixing) {
            return Err(Error::Config(format!(
                "elastic-net mixing must lie in [0, 1], got {}",
                self.en_mixing
            )));
        }
        if self.en_inner_folds < 2 {
            return Err(Error::Config("elastic-net inner folds must be at least 2".into()));
        }
        if self.en_lambda_count < 1 {
            return Err(Error::Config("lambda path needs at least one value".into()));
        }
        if !(self.en_lambda_ratio > 0.0 && self.en_lambda_ratio <= 1.0) {
            return Err(Error::Config(format!(
                "lambda ratio must lie in (0, 1], got {}",
                self.en_lambda_ratio
            )));
        }
        Ok(())
    }

    /// Smallest training set this procedure accepts.
    pub fn min_train_size(&self) -> usize {
        match self.kind {
            PredictorKind::ElasticNet => self.en_inner_folds.max(2),
            _ => 2,
        }
    }
}

/// A fitted affine predictor. Coefficients live in the transformed predictor
/// space recorded by `transform`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FittedModel {
    pub kind: PredictorKind,
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    pub transform: Transform,
    /// Penalty selected by inner CV (elastic net only).
    pub lambda: Option<f64>,
    pub n_train: usize,
    /// Numerical rank of the centered design (OLS only).
    pub rank: Option<usize>,
    /// Set when the training outcome had zero variance and the fit fell back
    /// to the training mean.
    pub degenerate: bool,
    raw_intercept: f64,
    raw_coefficients: Vec<f64>,
}

impl FittedModel {
    pub(crate) fn new(
        kind: PredictorKind,
        coefficients: Vec<f64>,
        intercept: f64,
        transform: Transform,
        n_train: usize,
    ) -> Self {
        let mut raw_intercept = intercept;
        let mut raw_coefficients = Vec::with_capacity(coefficients.len());
        for (j, c) in coefficients.iter().enumerate() {
            if transform.zero_variance[j] {
                raw_coefficients.push(0.0);
                continue;
            }
            let slope = c / transform.scales[j];
            raw_intercept -= slope * transform.means[j];
            raw_coefficients.push(slope);
        }
        FittedModel {
            kind,
            coefficients,
            intercept,
            transform,
            lambda: None,
            n_train,
            rank: None,
            degenerate: false,
            raw_intercept,
            raw_coefficients,
        }
    }

    pub(crate) fn mean_only(y: &[f64], p: usize) -> Self {
        let ybar = y.iter().sum::<f64>() / y.len() as f64;
        FittedModel::new(
            PredictorKind::MeanOnly,
            vec![0.0; p],
            ybar,
            Transform::identity(p),
            y.len(),
        )
    }

    pub fn p(&self) -> usize {
        self.coefficients.len()
    }

    /// Intercept and slopes on the original predictor scale.
    pub fn raw_coefficients(&self) -> (f64, &[f64]) {
        (self.raw_intercept, &self.raw_coefficients)
    }

    /// Number of estimated mean parameters: the intercept plus the
    /// nonzero slopes.
    pub fn degrees_of_freedom(&self) -> usize {
        1 + match self.rank {
            Some(r) => r,
            None => self.coefficients.iter().filter(|c| **c != 0.0).count(),
        }
    }

    pub fn predict(&self, x_new: &DMatrix<f64>) -> Result<Vec<f64>> {
        if x_new.ncols() != self.p() {
            return Err(Error::Dimension(format!(
                "model trained on {} predictors, got {}",
                self.p(),
                x_new.ncols()
            )));
        }
        Ok((0..x_new.nrows()).map(|i| self.predict_row(x_new, i)).collect())
    }

    /// Prediction for row `i` of `x`, which must have the training width.
    #[inline]
    pub(crate) fn predict_row(&self, x: &DMatrix<f64>, i: usize) -> f64 {
        let mut acc = self.raw_intercept;
        for (j, b) in self.raw_coefficients.iter().enumerate() {
            if *b != 0.0 {
                acc += b * x[(i, j)];
            }
        }
        acc
    }
}

/// Fits `spec` on `d`. `seed` drives the inner CV fold assignment of the
/// elastic net and is ignored by the other procedures.
pub fn train(spec: &PredictorSpec, d: &Dataset, seed: u64) -> Result<FittedModel> {
    fit_xy(spec, d.x(), d.y(), seed)
}

pub fn predict(model: &FittedModel, x_new: &DMatrix<f64>) -> Result<Vec<f64>> {
    model.predict(x_new)
}

/// Inner-CV penalty selection for an elastic-net spec.
pub fn tune_lambda(spec: &PredictorSpec, d: &Dataset, seed: u64) -> Result<LambdaTuning> {
    if spec.kind != PredictorKind::ElasticNet {
        return Err(Error::Config("lambda tuning applies to elastic net only".into()));
    }
    spec.validate()?;
    enet::tune(spec, d.x(), d.y(), seed)
}

pub(crate) fn fit_xy(
    spec: &PredictorSpec,
    x: &DMatrix<f64>,
    y: &[f64],
    seed: u64,
) -> Result<FittedModel> {
    let n = y.len();
    if n < spec.min_train_size() {
        return Err(Error::Training(format!(
            "{} training samples, {} needs at least {}",
            n,
            spec.kind,
            spec.min_train_size()
        )));
    }
    if x.nrows() != n {
        return Err(Error::Dimension(format!(
            "{} outcomes for {} predictor rows",
            n,
            x.nrows()
        )));
    }
    if y.iter().chain(x.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Training("non-finite training data".into()));
    }
    match spec.kind {
        PredictorKind::MeanOnly => Ok(FittedModel::mean_only(y, x.ncols())),
        PredictorKind::Ols => ols::fit(x, y),
        PredictorKind::ElasticNet => enet::fit(spec, x, y, seed),
    }
}
