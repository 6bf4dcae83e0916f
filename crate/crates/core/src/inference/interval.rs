use serde::{Deserialize, Serialize};

use crate::data::CiMethod;
use crate::error::{Error, Result};
use crate::stats::{mean, norm_cdf, norm_quantile, quantile_sorted, sorted_copy};

/// Fewest bootstrap replicates accepted for percentile and BCa intervals.
pub const MIN_INTERVAL_REPLICATES: usize = 20;

/// Two-sided interval with the upper bound truncated at 1. The lower bound
/// is never truncated.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceInterval {
    pub lower: f64,
    pub upper: f64,
    pub method: CiMethod,
    pub alpha: f64,
}

impl ConfidenceInterval {
    pub fn contains(&self, v: f64) -> bool {
        self.lower <= v && v <= self.upper
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("alpha must lie in (0, 1), got {alpha}")))
    }
}

/// `r2 ± z₁₋α/₂·se`, upper bound clipped at 1.
pub fn normal_interval(r2: f64, se: f64, alpha: f64) -> Result<ConfidenceInterval> {
    check_alpha(alpha)?;
    if !(se >= 0.0) {
        return Err(Error::Numerical(format!("standard error must be nonnegative, got {se}")));
    }
    let half = norm_quantile(1.0 - alpha / 2.0) * se;
    Ok(ConfidenceInterval {
        lower: r2 - half,
        upper: (r2 + half).min(1.0),
        method: CiMethod::Normal,
        alpha,
    })
}

fn finite_sorted(replicates: &[f64]) -> Result<Vec<f64>> {
    let finite: Vec<f64> = replicates.iter().copied().filter(|v| v.is_finite()).collect();
    if finite.len() < 2 {
        return Err(Error::Numerical("fewer than 2 finite replicates".into()));
    }
    Ok(sorted_copy(&finite))
}

/// Empirical α/2 and 1−α/2 quantiles of the replicate R² values.
pub fn percentile_interval(replicates: &[f64], alpha: f64) -> Result<ConfidenceInterval> {
    check_alpha(alpha)?;
    let sorted = finite_sorted(replicates)?;
    Ok(ConfidenceInterval {
        lower: quantile_sorted(&sorted, alpha / 2.0),
        upper: quantile_sorted(&sorted, 1.0 - alpha / 2.0).min(1.0),
        method: CiMethod::Percentile,
        alpha,
    })
}

/// Bias correction z₀ and acceleration a of the BCa interval. z₀ comes from
/// the share of bootstrap replicates below the estimate (ties count half);
/// a from the skewness of the jackknife replicates.
pub fn bca_constants(r2: f64, boot: &[f64], jackknife: &[f64]) -> Result<(f64, f64)> {
    let sorted = finite_sorted(boot)?;
    let b = sorted.len() as f64;
    let below = sorted.iter().filter(|v| **v < r2).count() as f64;
    let ties = sorted.iter().filter(|v| **v == r2).count() as f64;
    let share = ((below + 0.5 * ties) / b).clamp(0.5 / b, 1.0 - 0.5 / b);
    let z0 = norm_quantile(share);

    let jack: Vec<f64> = jackknife.iter().copied().filter(|v| v.is_finite()).collect();
    if jack.len() < 2 {
        return Err(Error::Numerical("BCa needs at least 2 jackknife replicates".into()));
    }
    let jbar = mean(&jack);
    let (mut num, mut den) = (0.0, 0.0);
    for v in &jack {
        let d = jbar - v;
        num += d * d * d;
        den += d * d;
    }
    let a = if den > 0.0 { num / (6.0 * den.powf(1.5)) } else { 0.0 };
    Ok((z0, a))
}

/// BCa interval for given constants. With z₀ = 0 and a = 0 it is exactly
/// the percentile interval.
pub fn bca_interval_with(boot: &[f64], z0: f64, a: f64, alpha: f64) -> Result<ConfidenceInterval> {
    check_alpha(alpha)?;
    let sorted = finite_sorted(boot)?;
    let adjust = |q: f64| {
        if z0 == 0.0 && a == 0.0 {
            return q;
        }
        let zq = norm_quantile(q);
        let s = z0 + zq;
        norm_cdf(z0 + s / (1.0 - a * s))
    };
    Ok(ConfidenceInterval {
        lower: quantile_sorted(&sorted, adjust(alpha / 2.0)),
        upper: quantile_sorted(&sorted, adjust(1.0 - alpha / 2.0)).min(1.0),
        method: CiMethod::Bca,
        alpha,
    })
}

pub fn bca_interval(r2: f64, boot: &[f64], jackknife: &[f64], alpha: f64) -> Result<ConfidenceInterval> {
    let (z0, a) = bca_constants(r2, boot, jackknife)?;
    bca_interval_with(boot, z0, a, alpha)
}

/// Interval of the requested kind. Percentile and BCa need at least
/// [`MIN_INTERVAL_REPLICATES`] bootstrap replicates; BCa also needs the
/// jackknife replicates.
pub fn confidence_interval(
    r2: f64,
    se: f64,
    alpha: f64,
    method: CiMethod,
    boot: Option<&[f64]>,
    jackknife: Option<&[f64]>,
) -> Result<ConfidenceInterval> {
    let boot_checked = || -> Result<&[f64]> {
        let b = boot.ok_or_else(|| Error::Config(format!("{method} interval needs bootstrap replicates")))?;
        if b.len() < MIN_INTERVAL_REPLICATES {
            return Err(Error::Config(format!(
                "{method} interval needs at least {MIN_INTERVAL_REPLICATES} replicates, got {}",
                b.len()
            )));
        }
        Ok(b)
    };
    match method {
        CiMethod::Normal => normal_interval(r2, se, alpha),
        CiMethod::Percentile => percentile_interval(boot_checked()?, alpha),
        CiMethod::Bca => {
            let b = boot_checked()?;
            let j = jackknife.ok_or_else(|| Error::Config("BCa interval needs jackknife replicates".into()))?;
            bca_interval(r2, b, j, alpha)
        }
    }
}
