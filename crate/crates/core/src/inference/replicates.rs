//! Outer resampling replicates of (MSE, MST): nonparametric bootstrap,
//! parametric bootstrap and jackknife. The table feeds the correlation ρ,
//! bootstrap standard errors and percentile/BCa intervals.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, MseMethod, RhoMethod, RunConfig};
use crate::error::{Error, Result};
use crate::loss::{estimate_mse_boot632, mst_point, run_cv};
use crate::predictors::{train, PredictorSpec};
use crate::resampling::{
    derive_seed, draw_bootstrap, jackknife_sweep, parametric_redraw, tag, GaussianGenerator,
};
use crate::stats::pearson;

/// Replicate estimates in replicate-index order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicateTable {
    pub method: RhoMethod,
    pub mse: Vec<f64>,
    pub mst: Vec<f64>,
    /// Replicates skipped because their outcome had zero variance.
    pub dropped: usize,
}

/// Estimated correlation between the MSE and MST estimators.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RhoEstimate {
    pub rho: f64,
    /// One of the replicate columns had zero variance; ρ was set to 0.
    pub degenerate: bool,
}

impl ReplicateTable {
    pub fn from_pairs(method: RhoMethod, pairs: &[(f64, f64)]) -> Self {
        ReplicateTable {
            method,
            mse: pairs.iter().map(|p| p.0).collect(),
            mst: pairs.iter().map(|p| p.1).collect(),
            dropped: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.mse.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mse.is_empty()
    }

    /// Replicate R² values, 1 − MSEᵇ/MSTᵇ.
    pub fn r2(&self) -> Vec<f64> {
        self.mse.iter().zip(&self.mst).map(|(e, t)| 1.0 - e / t).collect()
    }

    /// Pearson correlation of the two columns; 0 with a degenerate flag when
    /// either column is constant.
    pub fn correlation(&self) -> RhoEstimate {
        match pearson(&self.mse, &self.mst) {
            Some(rho) => RhoEstimate { rho, degenerate: false },
            None => RhoEstimate { rho: 0.0, degenerate: true },
        }
    }
}

fn method_code(m: RhoMethod) -> u64 {
    match m {
        RhoMethod::NonparamBoot => 1,
        RhoMethod::ParamBoot => 2,
        RhoMethod::Jackknife => 3,
    }
}

/// MSE of a replicate dataset, estimated the same way as on the observed
/// data but with simple (non-nested) CV.
pub(crate) fn replicate_mse(d: &Dataset, spec: &PredictorSpec, cfg: &RunConfig, seed: u64) -> Result<f64> {
    match cfg.mse_method {
        MseMethod::Cv => Ok(run_cv(d, spec, cfg.cv_folds, cfg.cv_repeats, seed, false)?.pooled_point()),
        MseMethod::Boot632 => Ok(estimate_mse_boot632(d, spec, cfg.n_boot_mse, seed)?.point),
    }
}

/// Gaussian linear generator refit on the full data with `spec`.
pub fn fit_generator(d: &Dataset, spec: &PredictorSpec, seed: u64) -> Result<GaussianGenerator> {
    let model = train(spec, d, derive_seed(seed, tag::PARAMETRIC, &[u64::MAX]))?;
    let mean = model.predict(d.x())?;
    let rss: f64 = d.y().iter().zip(&mean).map(|(y, m)| (y - m) * (y - m)).sum();
    let df = model.degrees_of_freedom();
    if df >= d.n() {
        return Err(Error::Numerical(format!(
            "no residual degrees of freedom for the parametric generator ({df} parameters, {} rows)",
            d.n()
        )));
    }
    Ok(GaussianGenerator {
        mean,
        sigma2: rss / (d.n() - df) as f64,
    })
}

/// Row indices of the nonparametric replicate `b`.
pub(crate) fn bootstrap_rows(n: usize, seed: u64, b: usize) -> Vec<usize> {
    draw_bootstrap(n, derive_seed(seed, tag::REPLICATE, &[method_code(RhoMethod::NonparamBoot)]), b as u64)
        .included()
}

/// Builds the replicate table for `method`: `cfg.n_boot_rho` bootstrap
/// replicates, or all n jackknife deletions.
pub fn replicate_table(
    d: &Dataset,
    spec: &PredictorSpec,
    cfg: &RunConfig,
    method: RhoMethod,
) -> Result<ReplicateTable> {
    let n = d.n();
    let code = method_code(method);
    let generator = match method {
        RhoMethod::ParamBoot => Some(fit_generator(d, spec, cfg.seed)?),
        _ => None,
    };
    let count = match method {
        RhoMethod::Jackknife => n,
        _ => cfg.n_boot_rho,
    };
    let deletions: Vec<_> = jackknife_sweep(n).collect();
    let rows: Vec<Option<(f64, f64)>> = (0..count)
        .into_par_iter()
        .map(|b| -> Result<Option<(f64, f64)>> {
            let rep = match method {
                RhoMethod::NonparamBoot => d.subset(&bootstrap_rows(n, cfg.seed, b)),
                RhoMethod::ParamBoot => parametric_redraw(
                    d,
                    generator.as_ref().expect("generator"),
                    derive_seed(cfg.seed, tag::REPLICATE, &[code]),
                    b as u64,
                )?,
                RhoMethod::Jackknife => d.subset(&deletions[b].kept(n)),
            };
            let mst = match mst_point(rep.y()) {
                Ok(v) => v,
                Err(Error::ZeroVariance) => return Ok(None),
                Err(e) => return Err(e),
            };
            let seed = derive_seed(cfg.seed, tag::REPLICATE, &[code, b as u64]);
            let mse = replicate_mse(&rep, spec, cfg, seed)
                .map_err(|e| Error::Training(format!("{method} replicate {b}: {e}")))?;
            Ok(Some((mse, mst)))
        })
        .collect::<Result<_>>()?;
    let dropped = rows.iter().filter(|r| r.is_none()).count();
    let pairs: Vec<(f64, f64)> = rows.into_iter().flatten().collect();
    if pairs.len() < 2 {
        return Err(Error::Numerical(format!(
            "only {} usable {method} replicates",
            pairs.len()
        )));
    }
    let mut table = ReplicateTable::from_pairs(method, &pairs);
    table.dropped = dropped;
    Ok(table)
}

/// Correlation between the MSE and MST estimators from `cfg.rho_method`
/// replicates, together with the replicate table.
pub fn estimate_rho(d: &Dataset, spec: &PredictorSpec, cfg: &RunConfig) -> Result<(RhoEstimate, ReplicateTable)> {
    let table = replicate_table(d, spec, cfg, cfg.rho_method)?;
    Ok((table.correlation(), table))
}

/// Lazily built replicate tables, one per resampling method.
pub(crate) struct ReplicateCache<'a> {
    d: &'a Dataset,
    spec: &'a PredictorSpec,
    cfg: &'a RunConfig,
    tables: HashMap<RhoMethod, ReplicateTable>,
}

impl<'a> ReplicateCache<'a> {
    pub fn new(d: &'a Dataset, spec: &'a PredictorSpec, cfg: &'a RunConfig) -> Self {
        ReplicateCache {
            d,
            spec,
            cfg,
            tables: HashMap::new(),
        }
    }

    pub fn get(&mut self, method: RhoMethod) -> Result<&ReplicateTable> {
        if !self.tables.contains_key(&method) {
            let t = replicate_table(self.d, self.spec, self.cfg, method)?;
            self.tables.insert(method, t);
        }
        Ok(&self.tables[&method])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn collinear_replicates() {
        let t = ReplicateTable::from_pairs(RhoMethod::Jackknife, &[(1.0, 1.0), (2.0, 2.0), (3.0, 3.0)]);
        assert!((t.correlation().rho - 1.0).abs() < 1e-15);
        let t = ReplicateTable::from_pairs(RhoMethod::Jackknife, &[(1.0, 2.0), (2.0, 1.0)]);
        assert!((t.correlation().rho + 1.0).abs() < 1e-15);
    }

    #[test]
    fn constant_column_is_degenerate() {
        let t = ReplicateTable::from_pairs(RhoMethod::NonparamBoot, &[(1.0, 2.0), (1.0, 3.0), (1.0, 4.0)]);
        let r = t.correlation();
        assert_eq!(r.rho, 0.0);
        assert!(r.degenerate);
    }

    #[test]
    fn replicate_r2() {
        let t = ReplicateTable::from_pairs(RhoMethod::NonparamBoot, &[(1.0, 2.0), (3.0, 3.0)]);
        assert_eq!(t.r2(), vec![0.5, 0.0]);
    }
}
