//! R² estimates and their inference: standard errors, intervals, z-tests
//! and difference tests.

mod compare;
mod interval;
mod replicates;
mod report;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::loss::{run_cv, CvRun, LossEstimate};
use crate::predictors::PredictorSpec;
use crate::stats::{norm_sf, sample_sd, sample_variance};

pub use compare::{
    compare_correlated, compare_independent, compare_r2_across, compare_r2_within, Comparison,
    WithinComparison,
};
pub use interval::{
    bca_constants, bca_interval, bca_interval_with, confidence_interval, normal_interval,
    percentile_interval, ConfidenceInterval, MIN_INTERVAL_REPLICATES,
};
pub use replicates::{estimate_rho, fit_generator, replicate_table, ReplicateTable, RhoEstimate};
pub use report::{analyze, InferenceMethod, R2Estimator, R2Report, SCHEMA_VERSION};

pub(crate) use replicates::ReplicateCache;
pub(crate) use report::{analysis_seed, infer};

/// Pooling estimator `1 − MSE/MST`.
pub fn r2_pooling(mse: &LossEstimate, mst: &LossEstimate) -> Result<f64> {
    r2_from_points(mse.point, mst.point)
}

pub(crate) fn r2_from_points(mse: f64, mst: f64) -> Result<f64> {
    if !(mst > 0.0) {
        return Err(Error::Numerical(format!("R² undefined for MST = {mst}")));
    }
    Ok(1.0 - mse / mst)
}

/// Which MST the averaging estimator divides each fold's MSE by.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MstSource {
    /// The MST formula applied to the training folds.
    Train,
    /// The sample variance of the left-out fold.
    Test,
}

/// Averaging estimator: an R² per (repeat, fold), averaged.
pub fn r2_averaging(
    d: &Dataset,
    spec: &PredictorSpec,
    k: usize,
    repeats: usize,
    seed: u64,
    source: MstSource,
) -> Result<f64> {
    spec.validate()?;
    let run = run_cv(d, spec, k, repeats, seed, false)?;
    averaging_from_run(d, &run, source)
}

pub(crate) fn averaging_from_run(d: &Dataset, run: &CvRun, source: MstSource) -> Result<f64> {
    let y = d.y();
    let mut total = 0.0;
    let mut count = 0usize;
    for (plan, errs) in run.plans.iter().zip(&run.errors) {
        for (f, members) in plan.folds().iter().enumerate() {
            let mse = members.iter().map(|&i| errs[i]).sum::<f64>() / members.len() as f64;
            let mst = match source {
                MstSource::Train => {
                    let rows = plan.complement(&[f]);
                    let yt: Vec<f64> = rows.iter().map(|&i| y[i]).collect();
                    crate::loss::mst_point(&yt)?
                }
                MstSource::Test => {
                    if members.len() < 2 {
                        return Err(Error::Config(
                            "test-fold MST needs every fold to hold at least 2 samples".into(),
                        ));
                    }
                    let yt: Vec<f64> = members.iter().map(|&i| y[i]).collect();
                    let v = sample_variance(&yt);
                    if !(v > 0.0) {
                        return Err(Error::ZeroVariance);
                    }
                    v
                }
            };
            total += 1.0 - mse / mst;
            count += 1;
        }
    }
    Ok(total / count as f64)
}

/// Delta-method standard error of `1 − MSE/MST`.
pub fn se_delta(mse: &LossEstimate, mst: &LossEstimate, rho: f64) -> Result<f64> {
    se_delta_parts(mse.point, mse.variance, mst.point, mst.variance, rho)
}

/// [`se_delta`] on bare numbers. The gradient `(−1/MST, MSE/MST²)` is taken
/// at the estimates; slightly negative quadratic forms (rounding) give 0.
pub fn se_delta_parts(mse: f64, var_mse: f64, mst: f64, var_mst: f64, rho: f64) -> Result<f64> {
    if !(mst > 0.0) {
        return Err(Error::Numerical(format!("R² undefined for MST = {mst}")));
    }
    if !(var_mse >= 0.0 && var_mst >= 0.0) {
        return Err(Error::Numerical("loss variances must be nonnegative".into()));
    }
    if !(-1.0..=1.0).contains(&rho) {
        return Err(Error::Numerical(format!("correlation {rho} outside [−1, 1]")));
    }
    let g1 = -1.0 / mst;
    let g2 = mse / (mst * mst);
    let cov = rho * (var_mse * var_mst).sqrt();
    let q = g1 * g1 * var_mse + g2 * g2 * var_mst + 2.0 * g1 * g2 * cov;
    if q < -1e-12 {
        return Err(Error::Numerical(format!("negative delta-method variance {q}")));
    }
    Ok(q.max(0.0).sqrt())
}

/// Sample standard deviation of the replicate R² values. Non-finite
/// replicates (MST of zero) are skipped.
pub fn se_bootstrap(table: &ReplicateTable) -> Result<f64> {
    se_from_replicates(&table.r2())
}

pub(crate) fn se_from_replicates(r2: &[f64]) -> Result<f64> {
    let finite: Vec<f64> = r2.iter().copied().filter(|v| v.is_finite()).collect();
    if finite.len() < 2 {
        return Err(Error::Numerical("fewer than 2 usable bootstrap replicates".into()));
    }
    Ok(sample_sd(&finite))
}

/// One-sided test of H₀: R² ≤ 0.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZTest {
    pub z: f64,
    pub p: f64,
}

pub fn z_test_r2_leq_zero(r2: f64, se: f64) -> Result<ZTest> {
    if !(se > 0.0) {
        return Err(Error::Numerical(format!("z-test needs a positive standard error, got {se}")));
    }
    let z = r2 / se;
    Ok(ZTest { z, p: norm_sf(z) })
}

pub(crate) fn two_sided_p(z: f64) -> f64 {
    (2.0 * norm_sf(z.abs())).min(1.0)
}
