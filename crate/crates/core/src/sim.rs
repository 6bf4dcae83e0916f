//! Monte-Carlo harness: simulate Gaussian linear data, run the estimation
//! stack on each instance and compare against oracle approximations of the
//! true R², its standard error and ρ.

use std::collections::BTreeMap;
use std::io::Write;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, MseMethod, RunConfig};
use crate::error::{Error, Result};
use crate::inference::{
    analysis_seed, averaging_from_run, infer, r2_pooling, InferenceMethod, MstSource,
    ReplicateCache,
};
use crate::loss::{estimate_mse_boot632, estimate_mst, run_cv};
use crate::predictors::{fit_xy, PredictorKind, PredictorSpec};
use crate::resampling::{derive_seed, stream, tag};
use crate::stats::{mean, norm_quantile, pearson, sample_sd};

/// Gaussian linear scenario `y = Xβ + ε` with iid standard-normal X, the
/// first `beta_nonzero` coefficients equal to `beta_value` and the rest 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub name: String,
    pub n: usize,
    pub p: usize,
    pub beta_value: f64,
    pub beta_nonzero: usize,
    pub sigma2: f64,
    pub n_mc: usize,
    /// Test points per oracle repetition; 0 evaluates the exact expected
    /// test error of each fitted model instead of sampling a test set.
    pub oracle_test_size: usize,
    pub oracle_reps: usize,
    pub predictor: PredictorSpec,
    /// Estimation settings; `run.seed` is the scenario seed.
    pub run: RunConfig,
    pub methods: Vec<InferenceMethod>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            name: "scenario".into(),
            n: 100,
            p: 1,
            beta_value: 1.0,
            beta_nonzero: 1,
            sigma2: 1.0,
            n_mc: 200,
            oracle_test_size: 10_000,
            oracle_reps: 1000,
            predictor: PredictorSpec::ols(),
            run: RunConfig {
                cv_repeats: 25,
                ..RunConfig::default()
            },
            methods: vec![InferenceMethod::from_config(&RunConfig::default())],
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if self.beta_nonzero > self.p {
            return Err(Error::Config(format!(
                "{} nonzero coefficients for {} predictors",
                self.beta_nonzero, self.p
            )));
        }
        if self.n_mc < 1 {
            return Err(Error::Config("at least one Monte-Carlo instance is required".into()));
        }
        if self.n < 3 {
            return Err(Error::TooSmall(self.n));
        }
        if !(self.sigma2 >= 0.0 && self.sigma2.is_finite()) {
            return Err(Error::Config(format!("sigma2 must be nonnegative, got {}", self.sigma2)));
        }
        if !self.beta_value.is_finite() {
            return Err(Error::Config("beta must be finite".into()));
        }
        self.predictor.validate()?;
        self.run.validate_for(self.n)
    }

    pub fn beta(&self) -> Vec<f64> {
        (0..self.p)
            .map(|j| if j < self.beta_nonzero { self.beta_value } else { 0.0 })
            .collect()
    }

    /// Marginal variance of the outcome, σ² + ‖β‖² (X has identity
    /// covariance).
    pub fn outcome_variance(&self) -> f64 {
        self.sigma2 + self.beta_nonzero as f64 * self.beta_value * self.beta_value
    }

    /// Var(Y)(n+1)/n.
    pub fn true_mst(&self) -> f64 {
        self.outcome_variance() * (self.n as f64 + 1.0) / self.n as f64
    }
}

/// Draws `n` rows from the scenario model with the given random stream.
fn draw_rows<R: Rng>(sc: &ScenarioConfig, n: usize, rng: &mut R) -> (DMatrix<f64>, Vec<f64>) {
    let beta = sc.beta();
    let sigma = sc.sigma2.sqrt();
    let mut x = DMatrix::zeros(n, sc.p);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let mut mu = 0.0;
        for j in 0..sc.p {
            let v: f64 = rng.sample(StandardNormal);
            x[(i, j)] = v;
            mu += beta[j] * v;
        }
        let e: f64 = rng.sample(StandardNormal);
        y.push(mu + sigma * e);
    }
    (x, y)
}

/// Dataset for Monte-Carlo instance `index`; deterministic in
/// (`sc.run.seed`, `index`).
pub fn generate_dataset(sc: &ScenarioConfig, index: usize) -> Dataset {
    let mut rng = stream(sc.run.seed, tag::SIM_DATA, &[index as u64]);
    let (x, y) = draw_rows(sc, sc.n, &mut rng);
    Dataset::from_parts_unchecked(y, x)
}

/// Monte-Carlo approximation of the true R².
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleR2 {
    pub true_r2: f64,
    /// Monte-Carlo standard error of `true_r2`.
    pub mc_se: f64,
    pub true_mse: f64,
    pub true_mst: f64,
}

/// Trains the predictor on `oracle_reps` fresh datasets of size n and
/// averages their test errors; the true MST is Var(Y)(n+1)/n.
pub fn oracle_true_r2(sc: &ScenarioConfig) -> Result<OracleR2> {
    sc.validate()?;
    if sc.oracle_reps < 1 {
        return Err(Error::Config("oracle needs at least one repetition".into()));
    }
    if !(sc.outcome_variance() > 0.0) {
        return Err(Error::Config("the oracle R² is undefined for a constant outcome".into()));
    }
    let beta = sc.beta();
    let mses: Vec<f64> = (0..sc.oracle_reps)
        .into_par_iter()
        .map(|r| -> Result<f64> {
            let mut rng = stream(sc.run.seed, tag::ORACLE, &[r as u64, 0]);
            let (x, y) = draw_rows(sc, sc.n, &mut rng);
            let model = fit_xy(&sc.predictor, &x, &y, derive_seed(sc.run.seed, tag::ORACLE, &[r as u64, 2]))?;
            if sc.oracle_test_size == 0 {
                // E[(y − b0 − xᵀb)²] for x ~ N(0, I): σ² + b0² + ‖b − β‖²
                let (b0, b) = model.raw_coefficients();
                let dist: f64 = b.iter().zip(&beta).map(|(u, v)| (u - v) * (u - v)).sum();
                return Ok(sc.sigma2 + b0 * b0 + dist);
            }
            let mut rng = stream(sc.run.seed, tag::ORACLE, &[r as u64, 1]);
            let (xt, yt) = draw_rows(sc, sc.oracle_test_size, &mut rng);
            let pred = model.predict(&xt)?;
            Ok(yt.iter().zip(&pred).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / yt.len() as f64)
        })
        .collect::<Result<_>>()?;
    let true_mse = mean(&mses);
    let true_mst = sc.true_mst();
    let mc_se = if mses.len() > 1 {
        sample_sd(&mses) / (mses.len() as f64).sqrt() / true_mst
    } else {
        0.0
    };
    Ok(OracleR2 {
        true_r2: 1.0 - true_mse / true_mst,
        mc_se,
        true_mse,
        true_mst,
    })
}

/// Inference outcome of one method on one instance.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodOutcome {
    pub se: f64,
    pub rho_hat: f64,
    pub lower: f64,
    pub upper: f64,
    pub p_one_sided: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceResult {
    pub index: usize,
    pub r2: f64,
    pub mse: f64,
    pub mse_variance: f64,
    /// MSE before the nested-CV training-size correction.
    pub mse_raw: f64,
    pub mst: f64,
    pub r2_averaging_train: Option<f64>,
    pub r2_averaging_test: Option<f64>,
    /// One entry per configured method, in order.
    pub methods: Vec<MethodOutcome>,
}

/// Runs the configured estimation pipeline on instance `index`.
pub fn run_instance(sc: &ScenarioConfig, index: usize) -> Result<InstanceResult> {
    let d = generate_dataset(sc, index);
    let cfg = RunConfig {
        seed: derive_seed(sc.run.seed, tag::SIM_DATA, &[index as u64, 1]),
        ..sc.run.clone()
    };
    let spec = &sc.predictor;
    let mst = estimate_mst(d.y())?;
    let seed = analysis_seed(cfg.seed);
    let (mse, avg_train, avg_test) = match cfg.mse_method {
        MseMethod::Cv => {
            let run = run_cv(&d, spec, cfg.cv_folds, cfg.cv_repeats, seed, cfg.nested_cv)?;
            let train = averaging_from_run(&d, &run, MstSource::Train).ok();
            let test = averaging_from_run(&d, &run, MstSource::Test).ok();
            (run.into_estimate(), train, test)
        }
        MseMethod::Boot632 => (estimate_mse_boot632(&d, spec, cfg.n_boot_mse, seed)?, None, None),
    };
    let r2 = r2_pooling(&mse, &mst)?;
    let mut cache = ReplicateCache::new(&d, spec, &cfg);
    let methods = sc
        .methods
        .iter()
        .map(|m| {
            let inf = infer(&mut cache, r2, &mse, &mst, *m, cfg.alpha)?;
            Ok(MethodOutcome {
                se: inf.se,
                rho_hat: inf.rho.rho,
                lower: inf.ci.lower,
                upper: inf.ci.upper,
                p_one_sided: inf.p,
            })
        })
        .collect::<Result<_>>()?;
    Ok(InstanceResult {
        index,
        r2,
        mse: mse.point,
        mse_variance: mse.variance,
        mse_raw: mse.raw_point,
        mst: mst.point,
        r2_averaging_train: avg_train,
        r2_averaging_test: avg_test,
        methods,
    })
}

/// Standard deviation of R̂² and correlation of (MSÊ, MST̂) across
/// instances, used as the true SE and true ρ.
pub fn oracle_true_se_and_rho(results: &[InstanceResult]) -> (f64, f64) {
    let r2: Vec<f64> = results.iter().map(|r| r.r2).collect();
    let mse: Vec<f64> = results.iter().map(|r| r.mse).collect();
    let mst: Vec<f64> = results.iter().map(|r| r.mst).collect();
    let se = if r2.len() > 1 { sample_sd(&r2) } else { 0.0 };
    (se, pearson(&mse, &mst).unwrap_or(0.0))
}

/// Diagnostics for one (scenario, method) pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub scenario: String,
    pub method: String,
    pub n: usize,
    pub p: usize,
    pub instances: usize,
    pub failures: usize,
    pub mean_r2: f64,
    /// Signed: mean R̂² minus the oracle true R².
    pub bias_r2: f64,
    pub true_r2_oracle: f64,
    pub true_r2_mc_se: f64,
    pub true_se_oracle: f64,
    pub rho_true_oracle: f64,
    pub mean_rho_hat: f64,
    pub se_ratio_geomean: f64,
    pub log10_se_ratio_geomean: f64,
    /// Mean squared difference between estimated and true Var(R̂²).
    pub se_mse_of_se: f64,
    pub coverage: f64,
    pub ci_width_mean: f64,
    /// Rejection rate of H₀: R² ≤ 0 at level α; reported when the true R²
    /// is at most 0.
    pub type1_error: Option<f64>,
    pub mean_r2_averaging_train: Option<f64>,
    pub mean_r2_averaging_test: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub config: ScenarioConfig,
    pub oracle: OracleR2,
    pub true_se: f64,
    pub rho_true: f64,
    pub instances: Vec<InstanceResult>,
    pub failures: usize,
    pub diagnostics: Vec<DiagnosticsReport>,
}

fn optional_mean(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Option<Vec<f64>> = values.collect();
    v.filter(|v| !v.is_empty()).map(|v| mean(&v))
}

/// Runs all instances of a scenario and aggregates the diagnostics. The
/// oracle is computed unless given. Failed instances are excluded and
/// counted; more than 5% failures is an error.
pub fn run_scenario(sc: &ScenarioConfig, oracle: Option<OracleR2>) -> Result<ScenarioReport> {
    sc.validate()?;
    let oracle = match oracle {
        Some(o) => o,
        None => oracle_true_r2(sc)?,
    };
    let outcomes: Vec<Result<InstanceResult>> = (0..sc.n_mc).into_par_iter().map(|s| run_instance(sc, s)).collect();
    let mut instances = Vec::with_capacity(sc.n_mc);
    let mut failures = 0;
    let mut first_error = None;
    for o in outcomes {
        match o {
            Ok(r) => instances.push(r),
            Err(e) => {
                failures += 1;
                first_error.get_or_insert(e);
            }
        }
    }
    if failures * 20 > sc.n_mc || instances.is_empty() {
        return Err(Error::Numerical(format!(
            "scenario {}: {failures} of {} instances failed (first: {})",
            sc.name,
            sc.n_mc,
            first_error.map(|e| e.to_string()).unwrap_or_default()
        )));
    }
    let (true_se, rho_true) = oracle_true_se_and_rho(&instances);
    let s = instances.len() as f64;
    let mean_r2 = instances.iter().map(|r| r.r2).sum::<f64>() / s;
    let avg_train = optional_mean(instances.iter().map(|r| r.r2_averaging_train));
    let avg_test = optional_mean(instances.iter().map(|r| r.r2_averaging_test));
    let true_var = true_se * true_se;
    let diagnostics = sc
        .methods
        .iter()
        .enumerate()
        .map(|(m, method)| {
            let out: Vec<&MethodOutcome> = instances.iter().map(|r| &r.methods[m]).collect();
            let log_ratio = out.iter().map(|o| (o.se / true_se).ln()).sum::<f64>() / s;
            let covered = instances
                .iter()
                .zip(&out)
                .filter(|(_, o)| o.lower <= oracle.true_r2 && oracle.true_r2 <= o.upper)
                .count();
            let rejected = out.iter().filter(|o| o.p_one_sided < sc.run.alpha).count();
            DiagnosticsReport {
                scenario: sc.name.clone(),
                method: method.to_string(),
                n: sc.n,
                p: sc.p,
                instances: instances.len(),
                failures,
                mean_r2,
                bias_r2: mean_r2 - oracle.true_r2,
                true_r2_oracle: oracle.true_r2,
                true_r2_mc_se: oracle.mc_se,
                true_se_oracle: true_se,
                rho_true_oracle: rho_true,
                mean_rho_hat: out.iter().map(|o| o.rho_hat).sum::<f64>() / s,
                se_ratio_geomean: log_ratio.exp(),
                log10_se_ratio_geomean: log_ratio / std::f64::consts::LN_10,
                se_mse_of_se: out.iter().map(|o| (o.se * o.se - true_var).powi(2)).sum::<f64>() / s,
                coverage: covered as f64 / s,
                ci_width_mean: out.iter().map(|o| o.upper - o.lower).sum::<f64>() / s,
                type1_error: (oracle.true_r2 <= 0.0).then(|| rejected as f64 / s),
                mean_r2_averaging_train: avg_train,
                mean_r2_averaging_test: avg_test,
            }
        })
        .collect();
    Ok(ScenarioReport {
        config: sc.clone(),
        oracle,
        true_se,
        rho_true,
        instances,
        failures,
        diagnostics,
    })
}

/// Writes one CSV row per diagnostics report.
pub fn write_diagnostics_csv<W: Write>(reports: &[DiagnosticsReport], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in reports {
        w.serialize(r)
            .map_err(|e| Error::Input(format!("writing diagnostics: {e}")))?;
    }
    w.flush()?;
    Ok(())
}

/// Scenario configurations and the seeds each one used.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub scenarios: Vec<ScenarioConfig>,
    pub oracles: Vec<OracleR2>,
}

/// Parses a scenario file: `key = value` lines, `#` comments and
/// `[name]` section headers. Keys before the first section set defaults
/// for every scenario.
pub fn parse_scenarios(text: &str) -> Result<Vec<ScenarioConfig>> {
    let mut defaults: Vec<(usize, String, String)> = Vec::new();
    let mut sections: Vec<(usize, String, Vec<(usize, String, String)>)> = Vec::new();
    let mut seen = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .ok_or_else(|| line_error(line_no, "section", "malformed section header"))?;
            if seen.insert(name.to_string(), line_no).is_some() {
                return Err(line_error(line_no, name, "duplicate scenario name"));
            }
            sections.push((line_no, name.to_string(), Vec::new()));
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| line_error(line_no, line, "expected key = value"))?;
        let entry = (line_no, k.trim().to_ascii_lowercase(), v.trim().to_string());
        match sections.last_mut() {
            Some((_, _, entries)) => entries.push(entry),
            None => defaults.push(entry),
        }
    }
    if sections.is_empty() {
        sections.push((1, "scenario".into(), Vec::new()));
    }
    sections
        .into_iter()
        .map(|(line_no, name, entries)| {
            let mut sc = ScenarioConfig {
                name: name.clone(),
                ..ScenarioConfig::default()
            };
            for (l, k, v) in defaults.iter().chain(&entries) {
                apply_key(&mut sc, k, v).map_err(|e| line_error(*l, k, &e.to_string()))?;
            }
            sc.validate().map_err(|e| line_error(line_no, &name, &e.to_string()))?;
            Ok(sc)
        })
        .collect()
}

fn line_error(line: usize, column: &str, message: &str) -> Error {
    Error::Ingest {
        row: line,
        column: column.to_string(),
        message: message.to_string(),
    }
}

fn parse_value<T: std::str::FromStr>(v: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    v.parse::<T>()
        .map_err(|e| Error::Config(format!("invalid value {v:?}: {e}")))
}

fn apply_key(sc: &mut ScenarioConfig, key: &str, v: &str) -> Result<()> {
    match key {
        "n" => sc.n = parse_value(v)?,
        "p" => sc.p = parse_value(v)?,
        "beta" => sc.beta_value = parse_value(v)?,
        "nonzero" => sc.beta_nonzero = parse_value(v)?,
        "sigma2" => sc.sigma2 = parse_value(v)?,
        "instances" => sc.n_mc = parse_value(v)?,
        "oracle_reps" => sc.oracle_reps = parse_value(v)?,
        "oracle_test_size" => sc.oracle_test_size = parse_value(v)?,
        "model" => sc.predictor.kind = v.parse::<PredictorKind>()?,
        "en_mixing" => sc.predictor.en_mixing = parse_value(v)?,
        "en_folds" => sc.predictor.en_inner_folds = parse_value(v)?,
        "seed" => sc.run.seed = parse_value(v)?,
        "mse_method" => sc.run.mse_method = v.parse()?,
        "folds" => sc.run.cv_folds = parse_value(v)?,
        "repeats" => sc.run.cv_repeats = parse_value(v)?,
        "boot" => sc.run.n_boot_mse = parse_value(v)?,
        "boot_rho" => sc.run.n_boot_rho = parse_value(v)?,
        "nested" => sc.run.nested_cv = parse_value(v)?,
        "alpha" => sc.run.alpha = parse_value(v)?,
        "methods" => {
            sc.methods = v
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(str::parse)
                .collect::<Result<_>>()?
        }
        other => return Err(Error::Config(format!("unknown key {other:?}"))),
    }
    Ok(())
}

/// Half-width multiplier of a normal interval at level `alpha`.
pub fn normal_multiplier(alpha: f64) -> f64 {
    norm_quantile(1.0 - alpha / 2.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(n: usize, beta: f64) -> ScenarioConfig {
        ScenarioConfig {
            n,
            beta_value: beta,
            n_mc: 4,
            oracle_reps: 20,
            oracle_test_size: 500,
            run: RunConfig {
                cv_folds: 5,
                cv_repeats: 2,
                n_boot_rho: 10,
                ..RunConfig::default()
            },
            ..ScenarioConfig::default()
        }
    }

    #[test]
    fn deterministic_instances() {
        let sc = small(20, 1.0);
        assert_eq!(generate_dataset(&sc, 3), generate_dataset(&sc, 3));
        assert_ne!(generate_dataset(&sc, 3).y(), generate_dataset(&sc, 4).y());
    }

    #[test]
    fn noiseless_outcome_equals_predictor() {
        let sc = ScenarioConfig {
            sigma2: 0.0,
            ..small(10, 1.0)
        };
        let d = generate_dataset(&sc, 0);
        for i in 0..10 {
            assert_eq!(d.y()[i], d.x()[(i, 0)]);
        }
    }

    #[test]
    fn null_outcome_uncorrelated() {
        let sc = ScenarioConfig {
            beta_value: 0.0,
            ..small(100, 0.0)
        };
        let cors: Vec<f64> = (0..1000)
            .map(|s| {
                let d = generate_dataset(&sc, s);
                let x: Vec<f64> = d.x().column(0).iter().copied().collect();
                pearson(d.y(), &x).unwrap()
            })
            .collect();
        assert!(mean(&cors).abs() < 3.0 * 0.1 / (1000f64).sqrt());
        assert!((sample_sd(&cors) - 0.1).abs() < 0.01);
    }

    #[test]
    fn mean_only_oracle_near_zero() {
        let sc = ScenarioConfig {
            predictor: PredictorSpec::mean_only(),
            oracle_reps: 400,
            oracle_test_size: 2000,
            ..small(20, 1.0)
        };
        // the intercept-only model ignores X; give it a pure-noise outcome
        let sc = ScenarioConfig { beta_value: 0.0, ..sc };
        let o = oracle_true_r2(&sc).unwrap();
        assert!(o.true_r2.abs() <= 3.0 * o.mc_se, "{o:?}");
    }

    #[test]
    fn exact_oracle_matches_sampled_oracle() {
        let mut sc = small(30, 1.0);
        sc.oracle_reps = 300;
        let exact = oracle_true_r2(&ScenarioConfig { oracle_test_size: 0, ..sc.clone() }).unwrap();
        sc.oracle_test_size = 5000;
        let sampled = oracle_true_r2(&sc).unwrap();
        assert!((exact.true_r2 - sampled.true_r2).abs() < 0.01, "{exact:?} {sampled:?}");
    }

    #[test]
    fn oracle_extremes() {
        let null = oracle_true_r2(&ScenarioConfig { beta_value: 0.0, ..small(30, 0.0) }).unwrap();
        assert!(null.true_r2 < 0.0);
        let sharp = oracle_true_r2(&ScenarioConfig { sigma2: 1e-8, ..small(30, 1.0) }).unwrap();
        assert!(sharp.true_r2 > 0.999);
        assert!(oracle_true_r2(&ScenarioConfig { sigma2: 0.0, ..small(30, 0.0) }).is_err());
    }

    #[test]
    fn constant_estimates_have_zero_true_se() {
        let r = InstanceResult {
            index: 0,
            r2: 0.3,
            mse: 1.0,
            mse_variance: 0.1,
            mse_raw: 1.0,
            mst: 2.0,
            r2_averaging_train: None,
            r2_averaging_test: None,
            methods: vec![],
        };
        let (se, _) = oracle_true_se_and_rho(&[r.clone(), r.clone(), r]);
        assert_eq!(se, 0.0);
    }

    #[test]
    fn scenario_runs_and_reproduces() {
        let sc = small(30, 1.0);
        let a = run_scenario(&sc, None).unwrap();
        let b = run_scenario(&sc, None).unwrap();
        assert_eq!(a, b);
        let d = &a.diagnostics[0];
        assert_eq!(d.instances, 4);
        assert!((0.0..=1.0).contains(&d.coverage));
        assert!(d.se_ratio_geomean > 0.0);
        assert!(d.type1_error.is_none());
        let mut buf = Vec::new();
        write_diagnostics_csv(&a.diagnostics, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 2);
    }

    #[test]
    fn scenario_file_parsing() {
        let text = "seed = 5\nrepeats = 3\n\n[null]\nbeta = 0 # no signal\nn = 30\n[strong]\nbeta = 2\nmethods = delta/npboot/normal, bootstrap/npboot/percentile\n";
        let s = parse_scenarios(text).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].name, "null");
        assert_eq!(s[0].beta_value, 0.0);
        assert_eq!(s[0].run.seed, 5);
        assert_eq!(s[1].run.cv_repeats, 3);
        assert_eq!(s[1].methods.len(), 2);
    }

    #[test]
    fn scenario_file_errors_carry_line() {
        for (text, line) in [
            ("[a]\nn = 10\nbogus = 1\n", 3),
            ("[a]\nn = ten\n", 2),
            ("[a]\njust words\n", 2),
            ("[a]\n[a]\n", 2),
            ("[a]\nnonzero = 3\n", 1),
        ] {
            match parse_scenarios(text) {
                Err(Error::Ingest { row, .. }) => assert_eq!(row, line, "{text}"),
                other => panic!("{text}: {other:?}"),
            }
        }
    }
}
