use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::interval::{confidence_interval, ConfidenceInterval};
use super::replicates::{ReplicateCache, RhoEstimate};
use super::{r2_pooling, se_delta, se_from_replicates, z_test_r2_leq_zero};
use crate::data::{CiMethod, Dataset, MseMethod, RhoMethod, RunConfig, SeMethod};
use crate::error::{Error, Result};
use crate::loss::{estimate_mse_boot632, estimate_mst, run_cv, LossEstimate};
use crate::predictors::PredictorSpec;
use crate::resampling::{derive_seed, tag};

/// Version of the serialized [`R2Report`] layout.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum R2Estimator {
    Pooling,
    AveragingTrainMst,
    AveragingTestMst,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct R2Report {
    pub schema_version: u32,
    pub n: usize,
    pub p: usize,
    pub model: PredictorSpec,
    pub estimator: R2Estimator,
    pub r2: f64,
    pub se: f64,
    pub se_method: SeMethod,
    pub rho_method: RhoMethod,
    pub rho_hat: f64,
    pub rho_degenerate: bool,
    pub mse: LossEstimate,
    pub mst: LossEstimate,
    pub ci: ConfidenceInterval,
    /// `None` when the standard error is 0.
    pub z: Option<f64>,
    pub p_one_sided: f64,
    pub config: RunConfig,
}

/// Which standard error and interval to attach to an R² estimate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InferenceMethod {
    pub se: SeMethod,
    pub rho: RhoMethod,
    pub ci: CiMethod,
}

impl InferenceMethod {
    pub fn from_config(cfg: &RunConfig) -> Self {
        InferenceMethod {
            se: cfg.se_method,
            rho: cfg.rho_method,
            ci: cfg.ci_method,
        }
    }

    /// Replicates used for bootstrap SEs and intervals: the ρ replicates
    /// when they are bootstrap draws, nonparametric draws otherwise.
    fn bootstrap_source(&self) -> RhoMethod {
        match self.rho {
            RhoMethod::Jackknife => RhoMethod::NonparamBoot,
            m => m,
        }
    }
}

/// Written `se/rho/ci`, e.g. `delta/jackknife/normal`.
impl fmt::Display for InferenceMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}/{}", self.se, self.rho, self.ci)
    }
}

impl FromStr for InferenceMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.trim().split('/').collect();
        if parts.len() != 3 {
            return Err(Error::Config(format!("method {s:?} is not of the form se/rho/ci")));
        }
        Ok(InferenceMethod {
            se: parts[0].parse()?,
            rho: parts[1].parse()?,
            ci: parts[2].parse()?,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub(crate) struct InferenceResult {
    pub se: f64,
    pub rho: RhoEstimate,
    pub ci: ConfidenceInterval,
    pub z: Option<f64>,
    pub p: f64,
}

pub(crate) fn infer(
    cache: &mut ReplicateCache<'_>,
    r2: f64,
    mse: &LossEstimate,
    mst: &LossEstimate,
    method: InferenceMethod,
    alpha: f64,
) -> Result<InferenceResult> {
    let (se, rho) = match method.se {
        SeMethod::Delta => {
            let rho = cache.get(method.rho)?.correlation();
            (se_delta(mse, mst, rho.rho)?, rho)
        }
        SeMethod::Bootstrap => {
            let table = cache.get(method.bootstrap_source())?;
            (se_from_replicates(&table.r2())?, table.correlation())
        }
    };
    let boot = match method.ci {
        CiMethod::Normal => None,
        _ => Some(cache.get(method.bootstrap_source())?.r2()),
    };
    let jack = match method.ci {
        CiMethod::Bca => Some(cache.get(RhoMethod::Jackknife)?.r2()),
        _ => None,
    };
    let ci = confidence_interval(r2, se, alpha, method.ci, boot.as_deref(), jack.as_deref())?;
    let (z, p) = if se > 0.0 {
        let t = z_test_r2_leq_zero(r2, se)?;
        (Some(t.z), t.p)
    } else if r2 > 0.0 {
        (None, 0.0)
    } else {
        (None, 1.0)
    };
    Ok(InferenceResult { se, rho, ci, z, p })
}

/// Seed of the observed-data MSE estimate.
pub(crate) fn analysis_seed(seed: u64) -> u64 {
    derive_seed(seed, tag::ANALYSIS, &[])
}

/// MSE estimate on the observed data as configured.
pub(crate) fn observed_mse(d: &Dataset, spec: &PredictorSpec, cfg: &RunConfig) -> Result<LossEstimate> {
    let seed = analysis_seed(cfg.seed);
    match cfg.mse_method {
        MseMethod::Cv => Ok(run_cv(d, spec, cfg.cv_folds, cfg.cv_repeats, seed, cfg.nested_cv)?.into_estimate()),
        MseMethod::Boot632 => estimate_mse_boot632(d, spec, cfg.n_boot_mse, seed),
    }
}

/// Full pipeline on one dataset: MST and MSE estimates, pooling R²,
/// standard error, interval and one-sided test of R² ≤ 0.
pub fn analyze(d: &Dataset, spec: &PredictorSpec, cfg: &RunConfig) -> Result<R2Report> {
    cfg.validate_for(d.n())?;
    spec.validate()?;
    let mst = estimate_mst(d.y())?;
    let mut mse = observed_mse(d, spec, cfg)?;
    let r2 = r2_pooling(&mse, &mst)?;
    let mut cache = ReplicateCache::new(d, spec, cfg);
    let method = InferenceMethod::from_config(cfg);
    let inf = infer(&mut cache, r2, &mse, &mst, method, cfg.alpha)?;
    mse.per_sample_errors = None;
    mse.fold_errors = None;
    Ok(R2Report {
        schema_version: SCHEMA_VERSION,
        n: d.n(),
        p: d.p(),
        model: spec.clone(),
        estimator: R2Estimator::Pooling,
        r2,
        se: inf.se,
        se_method: cfg.se_method,
        rho_method: cfg.rho_method,
        rho_hat: inf.rho.rho,
        rho_degenerate: inf.rho.degenerate,
        mse,
        mst,
        ci: inf.ci,
        z: inf.z,
        p_one_sided: inf.p,
        config: cfg.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::resampling::stream;
    use nalgebra::DMatrix;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn data(n: usize, beta: f64, seed: u64) -> Dataset {
        let mut rng = stream(seed, 98, &[]);
        let x: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let y: Vec<f64> = x
            .iter()
            .map(|v| beta * v + rng.sample::<f64, _>(StandardNormal))
            .collect();
        Dataset::new(y, DMatrix::from_vec(n, 1, x), None).unwrap()
    }

    fn small_cfg() -> RunConfig {
        RunConfig {
            cv_folds: 5,
            cv_repeats: 4,
            n_boot_rho: 25,
            ..RunConfig::default()
        }
    }

    #[test]
    fn report_invariants() {
        let d = data(40, 1.0, 1);
        let r = analyze(&d, &PredictorSpec::ols(), &small_cfg()).unwrap();
        assert_eq!(r.r2, 1.0 - r.mse.point / r.mst.point);
        assert!(r.ci.lower <= r.ci.upper && r.ci.upper <= 1.0);
        assert!(r.se > 0.0);
        assert!((0.0..=1.0).contains(&r.p_one_sided));
        assert!(r.r2 > 0.2);
        assert!(r.mse.fold_errors.is_none());
    }

    #[test]
    fn every_interval_kind_runs() {
        let d = data(30, 1.0, 2);
        for (se, ci, rho) in [
            (SeMethod::Bootstrap, CiMethod::Percentile, RhoMethod::Jackknife),
            (SeMethod::Delta, CiMethod::Bca, RhoMethod::NonparamBoot),
            (SeMethod::Delta, CiMethod::Normal, RhoMethod::ParamBoot),
        ] {
            let cfg = RunConfig {
                se_method: se,
                ci_method: ci,
                rho_method: rho,
                ..small_cfg()
            };
            let r = analyze(&d, &PredictorSpec::ols(), &cfg).unwrap();
            assert_eq!(r.ci.method, ci);
            assert!(r.ci.lower < r.r2 + 1.0 && r.ci.upper <= 1.0);
        }
    }

    #[test]
    fn boot632_pipeline() {
        let d = data(30, 1.0, 3);
        let cfg = RunConfig {
            mse_method: MseMethod::Boot632,
            n_boot_mse: 20,
            n_boot_rho: 10,
            rho_method: RhoMethod::NonparamBoot,
            ..small_cfg()
        };
        let r = analyze(&d, &PredictorSpec::ols(), &cfg).unwrap();
        assert!(r.se > 0.0 && r.r2 < 1.0);
    }

    #[test]
    fn method_strings_round_trip() {
        let m: InferenceMethod = "delta/npboot/bca".parse().unwrap();
        assert_eq!(m.rho, RhoMethod::NonparamBoot);
        assert_eq!(m.to_string().parse::<InferenceMethod>().unwrap(), m);
        assert!("delta/npboot".parse::<InferenceMethod>().is_err());
    }

    #[test]
    fn deterministic() {
        let d = data(30, 0.5, 4);
        let a = analyze(&d, &PredictorSpec::ols(), &small_cfg()).unwrap();
        let b = analyze(&d, &PredictorSpec::ols(), &small_cfg()).unwrap();
        assert_eq!(a, b);
    }
}
