//! Python bindings for the out-of-sample R² estimators.

use nalgebra::DMatrix;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use oosr2_core as core;
use core::inference::{self, Comparison, ConfidenceInterval};
use core::loss::{self, LossEstimate};
use core::{predictors, Error, PredictorSpec, RunConfig};

fn py_err(e: Error) -> PyErr {
    match e.exit_code() {
        2 => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn parse<T: std::str::FromStr<Err = Error>>(s: &str) -> PyResult<T> {
    s.parse().map_err(py_err)
}

/// Outcome vector with a row-major predictor matrix.
#[pyclass(name = "Dataset", module = "oosr2")]
pub struct PyDataset {
    inner: core::Dataset,
}

#[pymethods]
impl PyDataset {
    #[new]
    #[pyo3(signature = (y, x, feature_names = None))]
    fn new(y: Vec<f64>, x: Vec<Vec<f64>>, feature_names: Option<Vec<String>>) -> PyResult<Self> {
        let p = x.first().map_or(0, |r| r.len());
        if x.iter().any(|r| r.len() != p) {
            return Err(PyValueError::new_err("ragged predictor rows"));
        }
        let m = DMatrix::from_fn(x.len(), p, |i, j| x[i][j]);
        let inner = core::Dataset::new(y, m, feature_names).map_err(py_err)?;
        Ok(PyDataset { inner })
    }

    /// Reads a CSV file; `outcome` is a column name or a 0-based index.
    #[staticmethod]
    #[pyo3(signature = (path, outcome, delimiter = ","))]
    fn from_csv(path: &str, outcome: &str, delimiter: &str) -> PyResult<Self> {
        let &[delim] = delimiter.as_bytes() else {
            return Err(PyValueError::new_err("delimiter must be a single byte"));
        };
        let col: core::data::OutcomeColumn = outcome.parse().unwrap_or_else(|e| match e {});
        let inner = core::data::load_csv(path, &col, delim).map_err(py_err)?;
        Ok(PyDataset { inner })
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn p(&self) -> usize {
        self.inner.p()
    }

    #[getter]
    fn y(&self) -> Vec<f64> {
        self.inner.y().to_vec()
    }

    #[getter]
    fn feature_names(&self) -> Option<Vec<String>> {
        self.inner.feature_names().map(|v| v.to_vec())
    }

    fn __len__(&self) -> usize {
        self.inner.n()
    }

    fn __repr__(&self) -> String {
        format!("Dataset(n={}, p={})", self.inner.n(), self.inner.p())
    }
}

/// Regression procedure: "ols", "elastic_net" or "mean".
#[pyclass(name = "Predictor", module = "oosr2", skip_from_py_object)]
#[derive(Clone)]
pub struct PyPredictor {
    inner: PredictorSpec,
}

#[pymethods]
impl PyPredictor {
    #[new]
    #[pyo3(signature = (kind = "ols", mixing = 0.5, inner_folds = 10, lambda_count = 100, lambda_ratio = 1e-3))]
    fn new(kind: &str, mixing: f64, inner_folds: usize, lambda_count: usize, lambda_ratio: f64) -> PyResult<Self> {
        let inner = PredictorSpec {
            kind: parse(kind)?,
            en_mixing: mixing,
            en_inner_folds: inner_folds,
            en_lambda_count: lambda_count,
            en_lambda_ratio: lambda_ratio,
        };
        inner.validate().map_err(py_err)?;
        Ok(PyPredictor { inner })
    }

    /// Fits on the whole dataset and predicts the given rows.
    #[pyo3(signature = (train, x_new, seed = 1))]
    fn fit_predict(&self, train: &PyDataset, x_new: Vec<Vec<f64>>, seed: u64) -> PyResult<Vec<f64>> {
        let p = train.inner.p();
        if x_new.iter().any(|r| r.len() != p) {
            return Err(PyValueError::new_err(format!("rows must have {p} predictors")));
        }
        let m = DMatrix::from_fn(x_new.len(), p, |i, j| x_new[i][j]);
        let model = predictors::train(&self.inner, &train.inner, seed).map_err(py_err)?;
        model.predict(&m).map_err(py_err)
    }

    #[getter]
    fn kind(&self) -> String {
        format!("{:?}", self.inner.kind)
    }

    fn __repr__(&self) -> String {
        format!("Predictor({:?})", self.inner.kind)
    }
}

/// Estimation settings; strings name the resampling and inference methods.
#[pyclass(name = "RunConfig", module = "oosr2", skip_from_py_object)]
#[derive(Clone)]
pub struct PyRunConfig {
    inner: RunConfig,
}

#[pymethods]
impl PyRunConfig {
    #[new]
    #[pyo3(signature = (
        seed = 1, mse_method = "cv", folds = 10, repeats = 100, n_boot_mse = 100,
        rho_method = "jackknife", n_boot_rho = 50, se_method = "delta", ci_method = "normal",
        alpha = 0.05, nested_cv = true,
    ))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        seed: u64,
        mse_method: &str,
        folds: usize,
        repeats: usize,
        n_boot_mse: usize,
        rho_method: &str,
        n_boot_rho: usize,
        se_method: &str,
        ci_method: &str,
        alpha: f64,
        nested_cv: bool,
    ) -> PyResult<Self> {
        let inner = RunConfig {
            seed,
            mse_method: parse(mse_method)?,
            cv_folds: folds,
            cv_repeats: repeats,
            n_boot_mse,
            rho_method: parse(rho_method)?,
            n_boot_rho,
            se_method: parse(se_method)?,
            ci_method: parse(ci_method)?,
            alpha,
            nested_cv,
        };
        inner.validate().map_err(py_err)?;
        Ok(PyRunConfig { inner })
    }

    fn __repr__(&self) -> String {
        serde_json::to_string(&self.inner).unwrap_or_default()
    }
}

#[pyclass(name = "LossEstimate", module = "oosr2", frozen)]
pub struct PyLossEstimate {
    #[pyo3(get)]
    point: f64,
    #[pyo3(get)]
    variance: f64,
    #[pyo3(get)]
    raw_point: f64,
}

impl From<&LossEstimate> for PyLossEstimate {
    fn from(e: &LossEstimate) -> Self {
        PyLossEstimate {
            point: e.point,
            variance: e.variance,
            raw_point: e.raw_point,
        }
    }
}

#[pymethods]
impl PyLossEstimate {
    fn __repr__(&self) -> String {
        format!("LossEstimate(point={}, variance={})", self.point, self.variance)
    }
}

/// Result of `analyze`.
#[pyclass(name = "Report", module = "oosr2", frozen)]
pub struct PyReport {
    inner: inference::R2Report,
}

#[pymethods]
impl PyReport {
    #[getter]
    fn r2(&self) -> f64 {
        self.inner.r2
    }

    #[getter]
    fn se(&self) -> f64 {
        self.inner.se
    }

    #[getter]
    fn ci(&self) -> (f64, f64) {
        let ConfidenceInterval { lower, upper, .. } = self.inner.ci;
        (lower, upper)
    }

    #[getter]
    fn z(&self) -> Option<f64> {
        self.inner.z
    }

    #[getter]
    fn p_value(&self) -> f64 {
        self.inner.p_one_sided
    }

    #[getter]
    fn rho_hat(&self) -> f64 {
        self.inner.rho_hat
    }

    #[getter]
    fn mse(&self) -> PyLossEstimate {
        (&self.inner.mse).into()
    }

    #[getter]
    fn mst(&self) -> PyLossEstimate {
        (&self.inner.mst).into()
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string_pretty(&self.inner).map_err(|e| PyRuntimeError::new_err(e.to_string()))
    }

    fn __repr__(&self) -> String {
        let (lo, hi) = self.ci();
        format!("Report(r2={:.4}, se={:.4}, ci=({lo:.4}, {hi:.4}))", self.inner.r2, self.inner.se)
    }
}

fn comparison_tuple(c: Comparison) -> (f64, f64, f64) {
    (c.difference, c.z, c.p_two_sided)
}

/// Pooling R² with standard error, interval and one-sided test of R² ≤ 0.
#[pyfunction]
#[pyo3(signature = (dataset, predictor = None, config = None))]
fn analyze(
    py: Python<'_>,
    dataset: &PyDataset,
    predictor: Option<&PyPredictor>,
    config: Option<&PyRunConfig>,
) -> PyResult<PyReport> {
    let spec = predictor.map(|p| p.inner.clone()).unwrap_or_default();
    let cfg = config.map(|c| c.inner.clone()).unwrap_or_default();
    let d = dataset.inner.clone();
    let inner = py.detach(move || core::analyze(&d, &spec, &cfg)).map_err(py_err)?;
    Ok(PyReport { inner })
}

#[pyfunction]
fn estimate_mst(y: Vec<f64>) -> PyResult<PyLossEstimate> {
    loss::estimate_mst(&y).map(|e| (&e).into()).map_err(py_err)
}

/// Repeated K-fold CV estimate of the prediction MSE.
#[pyfunction]
#[pyo3(signature = (dataset, predictor = None, folds = 10, repeats = 100, seed = 1, nested = true))]
fn estimate_mse_cv(
    py: Python<'_>,
    dataset: &PyDataset,
    predictor: Option<&PyPredictor>,
    folds: usize,
    repeats: usize,
    seed: u64,
    nested: bool,
) -> PyResult<PyLossEstimate> {
    let spec = predictor.map(|p| p.inner.clone()).unwrap_or_default();
    let d = dataset.inner.clone();
    py.detach(move || loss::estimate_mse_cv(&d, &spec, folds, repeats, seed, nested))
        .map(|e| (&e).into())
        .map_err(py_err)
}

/// Returns (z, p) for the one-sided test of R² ≤ 0.
#[pyfunction]
fn z_test(r2: f64, se: f64) -> PyResult<(f64, f64)> {
    inference::z_test_r2_leq_zero(r2, se)
        .map(|t| (t.z, t.p))
        .map_err(py_err)
}

#[pyfunction]
fn se_delta(mse: f64, var_mse: f64, mst: f64, var_mst: f64, rho: f64) -> PyResult<f64> {
    inference::se_delta_parts(mse, var_mse, mst, var_mst, rho).map_err(py_err)
}

/// (difference, z, two-sided p) for R² values from independent datasets.
#[pyfunction]
fn compare_independent(r2_a: f64, se_a: f64, r2_b: f64, se_b: f64) -> PyResult<(f64, f64, f64)> {
    inference::compare_independent(r2_a, se_a, r2_b, se_b)
        .map(comparison_tuple)
        .map_err(py_err)
}

/// Compares two outcomes measured on the rows of `dataset`.
#[pyfunction]
#[pyo3(signature = (dataset, y_b, predictor = None, config = None))]
fn compare_within(
    py: Python<'_>,
    dataset: &PyDataset,
    y_b: Vec<f64>,
    predictor: Option<&PyPredictor>,
    config: Option<&PyRunConfig>,
) -> PyResult<(f64, f64, f64)> {
    let spec = predictor.map(|p| p.inner.clone()).unwrap_or_default();
    let cfg = config.map(|c| c.inner.clone()).unwrap_or_default();
    let d = dataset.inner.clone();
    py.detach(move || inference::compare_r2_within(&d, &y_b, &spec, &cfg))
        .map(|w| comparison_tuple(w.comparison))
        .map_err(py_err)
}

#[pymodule]
fn oosr2(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDataset>()?;
    m.add_class::<PyPredictor>()?;
    m.add_class::<PyRunConfig>()?;
    m.add_class::<PyLossEstimate>()?;
    m.add_class::<PyReport>()?;
    m.add_function(wrap_pyfunction!(analyze, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_mst, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_mse_cv, m)?)?;
    m.add_function(wrap_pyfunction!(z_test, m)?)?;
    m.add_function(wrap_pyfunction!(se_delta, m)?)?;
    m.add_function(wrap_pyfunction!(compare_independent, m)?)?;
    m.add_function(wrap_pyfunction!(compare_within, m)?)?;
    Ok(())
}
