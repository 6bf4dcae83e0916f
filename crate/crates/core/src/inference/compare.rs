use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::replicates::{bootstrap_rows, replicate_mse};
use super::report::{analyze, R2Report};
use super::two_sided_p;
use crate::data::{Dataset, RunConfig};
use crate::error::{Error, Result};
use crate::loss::mst_point;
use crate::predictors::PredictorSpec;
use crate::resampling::{derive_seed, tag};
use crate::stats::pearson;

/// Two-sided z-test of equal R².
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub difference: f64,
    pub z: f64,
    pub p_two_sided: f64,
}

/// Difference test for R² values from independent datasets; the variance
/// of the difference is the sum of the two variances.
pub fn compare_r2_across(a: &R2Report, b: &R2Report) -> Result<Comparison> {
    compare_independent(a.r2, a.se, b.r2, b.se)
}

/// [`compare_r2_across`] on bare estimates and standard errors.
pub fn compare_independent(r2_a: f64, se_a: f64, r2_b: f64, se_b: f64) -> Result<Comparison> {
    if !(se_a >= 0.0 && se_b >= 0.0) {
        return Err(Error::Numerical("standard errors must be nonnegative".into()));
    }
    let var = se_a * se_a + se_b * se_b;
    if !(var > 0.0) {
        return Err(Error::DegenerateComparison("both standard errors are 0".into()));
    }
    let difference = r2_a - r2_b;
    let z = difference / var.sqrt();
    Ok(Comparison {
        difference,
        z,
        p_two_sided: two_sided_p(z),
    })
}

/// Difference test for two outcomes measured on the same rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WithinComparison {
    pub report_a: R2Report,
    pub report_b: R2Report,
    pub comparison: Comparison,
    /// Correlation of the two R² estimators across joint row resamples.
    pub corr_hat: f64,
    pub corr_degenerate: bool,
    pub replicates: usize,
}

/// Combines two correlated estimates. A zero difference gives z = 0 and
/// p = 1 whatever the variance.
pub fn compare_correlated(r2_a: f64, se_a: f64, r2_b: f64, se_b: f64, corr: f64) -> Result<Comparison> {
    let difference = r2_a - r2_b;
    if difference == 0.0 {
        return Ok(Comparison {
            difference,
            z: 0.0,
            p_two_sided: 1.0,
        });
    }
    let (va, vb) = (se_a * se_a, se_b * se_b);
    let var = va + vb - 2.0 * corr * (va * vb).sqrt();
    if !(var > 0.0) {
        return Err(Error::DegenerateComparison(format!(
            "variance of the difference is {var}"
        )));
    }
    let z = difference / var.sqrt();
    Ok(Comparison {
        difference,
        z,
        p_two_sided: two_sided_p(z),
    })
}

/// Compares the R² of outcome `d_a.y()` with that of `y_b`, both predicted
/// from `d_a.x()`. Each outcome is analysed with `cfg`; the correlation of
/// the two estimators comes from `cfg.n_boot_rho` joint row bootstraps.
pub fn compare_r2_within(
    d_a: &Dataset,
    y_b: &[f64],
    spec: &PredictorSpec,
    cfg: &RunConfig,
) -> Result<WithinComparison> {
    let n = d_a.n();
    if y_b.len() != n {
        return Err(Error::Dimension(format!(
            "outcomes have {n} and {} rows",
            y_b.len()
        )));
    }
    let d_b = d_a.with_outcome(y_b.to_vec())?;
    let report_a = analyze(d_a, spec, cfg)?;
    let report_b = analyze(&d_b, spec, cfg)?;

    let pairs: Vec<Option<(f64, f64)>> = (0..cfg.n_boot_rho)
        .into_par_iter()
        .map(|b| -> Result<Option<(f64, f64)>> {
            let rows = bootstrap_rows(n, cfg.seed, b);
            let seed = derive_seed(cfg.seed, tag::REPLICATE, &[JOINT, b as u64]);
            let mut out = [0.0; 2];
            for (slot, d) in out.iter_mut().zip([d_a, &d_b]) {
                let rep = d.subset(&rows);
                let mst = match mst_point(rep.y()) {
                    Ok(v) => v,
                    Err(Error::ZeroVariance) => return Ok(None),
                    Err(e) => return Err(e),
                };
                *slot = 1.0 - replicate_mse(&rep, spec, cfg, seed)? / mst;
            }
            Ok(Some((out[0], out[1])))
        })
        .collect::<Result<_>>()?;
    let pairs: Vec<(f64, f64)> = pairs.into_iter().flatten().collect();
    let ra: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let rb: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let (corr_hat, corr_degenerate) = match pearson(&ra, &rb) {
        Some(c) => (c, false),
        None => (0.0, true),
    };
    let comparison = compare_correlated(report_a.r2, report_a.se, report_b.r2, report_b.se, corr_hat)?;
    Ok(WithinComparison {
        report_a,
        report_b,
        comparison,
        corr_hat,
        corr_degenerate,
        replicates: pairs.len(),
    })
}

const JOINT: u64 = 4;
