//! Estimators of the two out-of-sample squared-error losses an R² compares:
//! the null model's MST (closed form) and the prediction model's MSE
//! (repeated K-fold CV, optionally nested, or the .632 bootstrap).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::predictors::{fit_xy, FittedModel, PredictorSpec};
use crate::resampling::{derive_seed, draw_bootstrap, make_folds, tag, BootstrapDraw, FoldPlan};
use crate::stats::{mean, sample_variance};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LossMethod {
    Mst,
    Cv {
        folds: usize,
        repeats: usize,
        nested: bool,
    },
    Boot632 {
        draws: usize,
        draws_used: usize,
    },
}

/// Point estimate of a squared-error loss together with the estimated
/// variance of that estimator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossEstimate {
    pub point: f64,
    pub variance: f64,
    /// The estimate before any training-size correction; equals `point`
    /// unless nested CV applied one.
    pub raw_point: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub per_sample_errors: Option<Vec<f64>>,
    /// Mean error per (repeat, fold).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fold_errors: Option<Vec<Vec<f64>>>,
    pub method: LossMethod,
}

/// Out-of-sample MST of the null model: `(n+1)/(n(n−1))·Σ(yᵢ−ȳ)²`, with
/// variance `2/(n−1)·MST²`.
pub fn estimate_mst(y: &[f64]) -> Result<LossEstimate> {
    let n = y.len();
    if n < 3 {
        return Err(Error::TooSmall(n));
    }
    let point = mst_point(y)?;
    Ok(LossEstimate {
        point,
        variance: 2.0 / (n - 1) as f64 * point * point,
        raw_point: point,
        per_sample_errors: None,
        fold_errors: None,
        method: LossMethod::Mst,
    })
}

/// MST point estimate for any n ≥ 2.
pub(crate) fn mst_point(y: &[f64]) -> Result<f64> {
    let n = y.len() as f64;
    if y.len() < 2 {
        return Err(Error::TooSmall(y.len()));
    }
    let ybar = mean(y);
    let ss: f64 = y.iter().map(|v| (v - ybar) * (v - ybar)).sum();
    if !(ss > 1e-24 * n * (1.0 + ybar * ybar)) {
        return Err(Error::ZeroVariance);
    }
    Ok((n + 1.0) / (n * (n - 1.0)) * ss)
}

fn fit_rows(spec: &PredictorSpec, d: &Dataset, rows: &[usize], seed: u64) -> Result<FittedModel> {
    let x = d.x().select_rows(rows.iter());
    let y: Vec<f64> = rows.iter().map(|&i| d.y()[i]).collect();
    fit_xy(spec, &x, &y, seed)
}

/// Per-(repeat, fold) quantities of Bates et al.'s nested CV.
#[derive(Clone, Debug, Default)]
pub(crate) struct NestedTerms {
    /// (mean inner error − mean outer error)² per outer fold.
    a: Vec<f64>,
    /// Sample variance of the outer errors over the fold size.
    b: Vec<f64>,
    inner_sum: f64,
    inner_count: usize,
}

/// Raw output of repeated K-fold CV.
#[derive(Clone, Debug)]
pub(crate) struct CvRun {
    pub plans: Vec<FoldPlan>,
    /// Squared error of each sample under each repeat, `[repeat][sample]`.
    pub errors: Vec<Vec<f64>>,
    nested: Option<NestedTerms>,
}

struct RepeatResult {
    plan: FoldPlan,
    errors: Vec<f64>,
    nested: Option<NestedTerms>,
}

fn run_repeat(
    d: &Dataset,
    spec: &PredictorSpec,
    k: usize,
    seed: u64,
    r: usize,
    nested: bool,
) -> Result<RepeatResult> {
    let n = d.n();
    let plan = make_folds(n, k, seed, r as u64)?;
    let folds = plan.folds();
    let mut errors = vec![0.0; n];
    let mut terms = nested.then(NestedTerms::default);
    for (f, members) in folds.iter().enumerate() {
        if members.is_empty() {
            return Err(Error::Training(format!("repeat {r}, fold {f} is empty")));
        }
        let train = plan.complement(&[f]);
        let train_seed = derive_seed(seed, tag::TRAIN, &[r as u64, f as u64, u64::MAX]);
        let model = fit_rows(spec, d, &train, train_seed)
            .map_err(|e| Error::Training(format!("repeat {r}, fold {f}: {e}")))?;
        for &i in members {
            let e = d.y()[i] - model.predict_row(d.x(), i);
            errors[i] = e * e;
        }
        if let Some(t) = terms.as_mut() {
            let mut inner_sum = 0.0;
            let mut inner_count = 0;
            for (g, inner_members) in folds.iter().enumerate() {
                if g == f {
                    continue;
                }
                let inner_train = plan.complement(&[f, g]);
                let inner_seed = derive_seed(seed, tag::TRAIN, &[r as u64, f as u64, g as u64]);
                let inner = fit_rows(spec, d, &inner_train, inner_seed).map_err(|e| {
                    Error::Training(format!("repeat {r}, fold {f}, inner fold {g}: {e}"))
                })?;
                for &i in inner_members {
                    let e = d.y()[i] - inner.predict_row(d.x(), i);
                    inner_sum += e * e;
                    inner_count += 1;
                }
            }
            let outer: Vec<f64> = members.iter().map(|&i| errors[i]).collect();
            let outer_mean = mean(&outer);
            let diff = inner_sum / inner_count as f64 - outer_mean;
            t.a.push(diff * diff);
            t.b.push(if outer.len() > 1 {
                sample_variance(&outer) / outer.len() as f64
            } else {
                0.0
            });
            t.inner_sum += inner_sum;
            t.inner_count += inner_count;
        }
    }
    Ok(RepeatResult {
        plan,
        errors,
        nested: terms,
    })
}

pub(crate) fn run_cv(
    d: &Dataset,
    spec: &PredictorSpec,
    k: usize,
    repeats: usize,
    seed: u64,
    nested: bool,
) -> Result<CvRun> {
    if k < 2 || k > d.n() {
        return Err(Error::Config(format!("{k} folds requested for {} samples", d.n())));
    }
    if repeats < 1 {
        return Err(Error::Config("at least one CV repeat is required".into()));
    }
    if nested && k < 3 {
        return Err(Error::Config("nested CV needs at least 3 folds".into()));
    }
    let results: Vec<RepeatResult> = (0..repeats)
        .into_par_iter()
        .map(|r| run_repeat(d, spec, k, seed, r, nested))
        .collect::<Result<_>>()?;
    let mut plans = Vec::with_capacity(repeats);
    let mut errors = Vec::with_capacity(repeats);
    let mut terms = nested.then(NestedTerms::default);
    for rr in results {
        plans.push(rr.plan);
        errors.push(rr.errors);
        if let (Some(acc), Some(t)) = (terms.as_mut(), rr.nested) {
            acc.a.extend(t.a);
            acc.b.extend(t.b);
            acc.inner_sum += t.inner_sum;
            acc.inner_count += t.inner_count;
        }
    }
    Ok(CvRun {
        plans,
        errors,
        nested: terms,
    })
}

impl CvRun {
    fn k(&self) -> usize {
        self.plans[0].k()
    }

    /// Pooled over samples within a repeat, then averaged over repeats.
    pub fn pooled_point(&self) -> f64 {
        let per_repeat: Vec<f64> = self.errors.iter().map(|e| mean(e)).collect();
        mean(&per_repeat)
    }

    pub fn per_sample_errors(&self) -> Vec<f64> {
        let n = self.errors[0].len();
        let r = self.errors.len() as f64;
        (0..n)
            .map(|i| self.errors.iter().map(|e| e[i]).sum::<f64>() / r)
            .collect()
    }

    pub fn fold_errors(&self) -> Vec<Vec<f64>> {
        self.plans
            .iter()
            .zip(&self.errors)
            .map(|(plan, errs)| {
                plan.folds()
                    .iter()
                    .map(|m| m.iter().map(|&i| errs[i]).sum::<f64>() / m.len() as f64)
                    .collect()
            })
            .collect()
    }

    pub fn into_estimate(self) -> LossEstimate {
        let k = self.k();
        let repeats = self.errors.len();
        let raw = self.pooled_point();
        let per_sample = self.per_sample_errors();
        let n = per_sample.len() as f64;
        let naive_var = sample_variance(&per_sample) / n;
        let (point, variance, nested) = match &self.nested {
            None => (raw, naive_var, false),
            Some(t) => {
                let kf = k as f64;
                let mse_hat = mean(&t.a) - mean(&t.b);
                let naive_se = naive_var.sqrt();
                let se = ((kf - 1.0) / kf * mse_hat)
                    .max(0.0)
                    .sqrt()
                    .clamp(naive_se, kf.sqrt() * naive_se);
                let err_ncv = t.inner_sum / t.inner_count as f64;
                // extrapolate from training sizes n(K−2)/K and n(K−1)/K to n
                let corrected = raw - (kf - 2.0) / kf * (err_ncv - raw);
                (corrected.max(0.0), se * se, true)
            }
        };
        LossEstimate {
            point,
            variance,
            raw_point: raw,
            fold_errors: Some(self.fold_errors()),
            per_sample_errors: Some(per_sample),
            method: LossMethod::Cv {
                folds: k,
                repeats,
                nested,
            },
        }
    }
}

/// Repeated K-fold CV estimate of the out-of-sample MSE.
///
/// Without `nested`, the variance is the naive `Var(errors)/n`. With
/// `nested`, the variance comes from nested CV with K−1 inner folds and the
/// point carries the correction for training on n(K−1)/K samples;
/// `raw_point` keeps the uncorrected estimate.
pub fn estimate_mse_cv(
    d: &Dataset,
    spec: &PredictorSpec,
    k: usize,
    repeats: usize,
    seed: u64,
    nested: bool,
) -> Result<LossEstimate> {
    spec.validate()?;
    Ok(run_cv(d, spec, k, repeats, seed, nested)?.into_estimate())
}

const E_INV: f64 = 0.367_879_441_171_442_33;

struct DrawResult {
    draw: BootstrapDraw,
    /// (sample, squared error) for each out-of-bag sample.
    oob: Vec<(usize, f64)>,
}

fn boot632_draw(d: &Dataset, spec: &PredictorSpec, seed: u64, b: u64) -> Result<DrawResult> {
    let draw = draw_bootstrap(d.n(), derive_seed(seed, tag::BOOT632, &[]), b);
    let rows = draw.included();
    let model = fit_rows(spec, d, &rows, derive_seed(seed, tag::TRAIN, &[b]))
        .map_err(|e| Error::Training(format!("bootstrap draw {b}: {e}")))?;
    let oob = draw
        .excluded()
        .into_iter()
        .map(|i| {
            let e = d.y()[i] - model.predict_row(d.x(), i);
            (i, e * e)
        })
        .collect();
    Ok(DrawResult { draw, oob })
}

/// Plain .632 bootstrap estimate of the MSE: exp(−1) times the in-sample
/// error plus (1 − exp(−1)) times the per-sample out-of-bag error. The
/// variance is the squared influence-function standard error.
///
/// Extra draws are added (up to 10·B in total) until every sample has been
/// out-of-bag at least once.
pub fn estimate_mse_boot632(d: &Dataset, spec: &PredictorSpec, draws: usize, seed: u64) -> Result<LossEstimate> {
    spec.validate()?;
    if draws < 1 {
        return Err(Error::Config("at least one bootstrap draw is required".into()));
    }
    let n = d.n();
    let full = fit_rows(spec, d, &(0..n).collect::<Vec<_>>(), derive_seed(seed, tag::TRAIN, &[u64::MAX]))?;
    let in_sample: Vec<f64> = (0..n)
        .map(|i| {
            let e = d.y()[i] - full.predict_row(d.x(), i);
            e * e
        })
        .collect();

    let mut results: Vec<DrawResult> = (0..draws as u64)
        .into_par_iter()
        .map(|b| boot632_draw(d, spec, seed, b))
        .collect::<Result<_>>()?;
    let mut oob_count = vec![0usize; n];
    for r in &results {
        for &(i, _) in &r.oob {
            oob_count[i] += 1;
        }
    }
    let cap = 10 * draws;
    while oob_count.contains(&0) {
        if results.len() >= cap {
            return Err(Error::Numerical(format!(
                "some samples were never out-of-bag in {cap} bootstrap draws; increase the draw count"
            )));
        }
        let r = boot632_draw(d, spec, seed, results.len() as u64)?;
        for &(i, _) in &r.oob {
            oob_count[i] += 1;
        }
        results.push(r);
    }
    let used = results.len();

    let mut oob_sum = vec![0.0; n];
    for r in &results {
        for &(i, e) in &r.oob {
            oob_sum[i] += e;
        }
    }
    let oob_err: Vec<f64> = (0..n).map(|i| oob_sum[i] / oob_count[i] as f64).collect();
    let err1 = mean(&oob_err);
    let err_in = mean(&in_sample);
    let per_sample: Vec<f64> = (0..n)
        .map(|i| E_INV * in_sample[i] + (1.0 - E_INV) * oob_err[i])
        .collect();
    let point = mean(&per_sample);

    // influence-function standard error
    let nf = n as f64;
    let bf = used as f64;
    let e_n = (1.0 - 1.0 / nf).powf(-nf);
    let q: Vec<f64> = results
        .iter()
        .map(|r| r.oob.iter().map(|&(_, e)| e).sum::<f64>() / nf)
        .collect();
    let mut variance = 0.0;
    for i in 0..n {
        let counts: Vec<f64> = results.iter().map(|r| r.draw.counts()[i] as f64).collect();
        let n_bar = mean(&counts);
        let cov: f64 = counts.iter().zip(&q).map(|(c, qb)| (c - n_bar) * qb).sum::<f64>() / bf;
        let d_oob = (2.0 + 1.0 / (nf - 1.0)) * (oob_err[i] - err1) / nf + e_n * cov;
        let d_in = (in_sample[i] - err_in) / nf;
        let d632 = E_INV * d_in + (1.0 - E_INV) * d_oob;
        variance += d632 * d632;
    }

    Ok(LossEstimate {
        point,
        variance,
        raw_point: point,
        per_sample_errors: Some(per_sample),
        fold_errors: None,
        method: LossMethod::Boot632 { draws, draws_used: used },
    })
}
