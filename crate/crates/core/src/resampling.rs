//! Deterministic fold assignments, bootstrap draws, jackknife deletions and
//! parametric redraws.
//!
//! Every generator is a pure function of a base seed plus structural indices.
//! Streams are derived by mixing `(seed, purpose tag, indices...)` so results
//! never depend on the order in which tasks execute.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::data::Dataset;
use crate::error::{Error, Result};

/// Purpose tags separating the random streams of different consumers.
pub mod tag {
    pub const FOLDS: u64 = 0x01;
    pub const BOOTSTRAP: u64 = 0x02;
    pub const PARAMETRIC: u64 = 0x03;
    pub const INNER_CV: u64 = 0x04;
    pub const TRAIN: u64 = 0x05;
    pub const REPLICATE: u64 = 0x06;
    pub const BOOT632: u64 = 0x07;
    pub const SIM_DATA: u64 = 0x08;
    pub const ORACLE: u64 = 0x09;
    pub const ANALYSIS: u64 = 0x0a;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes a base seed, a purpose tag and structural indices into a child seed.
pub fn derive_seed(seed: u64, purpose: u64, indices: &[u64]) -> u64 {
    let mut h = splitmix64(seed ^ 0x6a09_e667_f3bc_c908);
    h = splitmix64(h ^ purpose.wrapping_mul(0xff51_afd7_ed55_8ccd));
    for &i in indices {
        h = splitmix64(h ^ i);
    }
    h
}

pub fn stream(seed: u64, purpose: u64, indices: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, purpose, indices))
}

/// Assignment of `n` samples to `k` folds (0-based labels).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FoldPlan {
    assignments: Vec<usize>,
    k: usize,
    repeat_index: u64,
}

impl FoldPlan {
    pub fn assignments(&self) -> &[usize] {
        &self.assignments
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n(&self) -> usize {
        self.assignments.len()
    }

    pub fn repeat_index(&self) -> u64 {
        self.repeat_index
    }

    /// Sample indices in each fold, ascending.
    pub fn folds(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.k];
        for (i, &f) in self.assignments.iter().enumerate() {
            out[f].push(i);
        }
        out
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut out = vec![0; self.k];
        for &f in &self.assignments {
            out[f] += 1;
        }
        out
    }

    /// Indices outside the listed folds.
    pub fn complement(&self, excluded: &[usize]) -> Vec<usize> {
        (0..self.n())
            .filter(|&i| !excluded.contains(&self.assignments[i]))
            .collect()
    }
}

/// Random balanced K-fold split. Sizes differ by at most one; when K does not
/// divide n the larger folds are the lowest-numbered ones.
pub fn make_folds(n: usize, k: usize, seed: u64, repeat_index: u64) -> Result<FoldPlan> {
    if k < 2 {
        return Err(Error::Config(format!("fold count must be at least 2, got {k}")));
    }
    if k > n {
        return Err(Error::Config(format!("{k} folds requested for {n} samples")));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    let mut rng = stream(seed, tag::FOLDS, &[repeat_index, n as u64, k as u64]);
    perm.shuffle(&mut rng);
    let base = n / k;
    let extra = n % k;
    let mut assignments = vec![0; n];
    let mut pos = 0;
    for fold in 0..k {
        let size = base + usize::from(fold < extra);
        for &i in &perm[pos..pos + size] {
            assignments[i] = fold;
        }
        pos += size;
    }
    Ok(FoldPlan {
        assignments,
        k,
        repeat_index,
    })
}

/// One nonparametric bootstrap resample, stored as inclusion counts.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BootstrapDraw {
    counts: Vec<u32>,
}

impl BootstrapDraw {
    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn n(&self) -> usize {
        self.counts.len()
    }

    pub fn is_excluded(&self, i: usize) -> bool {
        self.counts[i] == 0
    }

    pub fn excluded_mask(&self) -> Vec<bool> {
        self.counts.iter().map(|&c| c == 0).collect()
    }

    /// The resampled multiset as row indices, ascending with repeats.
    pub fn included(&self) -> Vec<usize> {
        let mut rows = Vec::with_capacity(self.n());
        for (i, &c) in self.counts.iter().enumerate() {
            rows.extend(std::iter::repeat_n(i, c as usize));
        }
        rows
    }

    pub fn excluded(&self) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.counts[i] == 0).collect()
    }
}

pub fn draw_bootstrap(n: usize, seed: u64, draw_index: u64) -> BootstrapDraw {
    let mut rng = stream(seed, tag::BOOTSTRAP, &[draw_index, n as u64]);
    let mut counts = vec![0u32; n];
    for _ in 0..n {
        counts[rng.random_range(0..n)] += 1;
    }
    BootstrapDraw { counts }
}

/// Leave-one-out deletion of a single sample.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct JackknifeDeletion {
    pub left_out_index: usize,
}

impl JackknifeDeletion {
    pub fn kept(&self, n: usize) -> Vec<usize> {
        (0..n).filter(|&i| i != self.left_out_index).collect()
    }
}

/// The full sweep of `n` deletions, each index exactly once.
pub fn jackknife_sweep(n: usize) -> impl Iterator<Item = JackknifeDeletion> {
    (0..n).map(|left_out_index| JackknifeDeletion { left_out_index })
}

/// Gaussian model used for parametric redraws: a conditional mean per row
/// and a common residual variance.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianGenerator {
    pub mean: Vec<f64>,
    pub sigma2: f64,
}

/// Same predictors, outcome redrawn as Y*ᵢ ~ N(meanᵢ, σ̂²).
pub fn parametric_redraw(
    d: &Dataset,
    generator: &GaussianGenerator,
    seed: u64,
    draw_index: u64,
) -> Result<Dataset> {
    if !(generator.sigma2 > 0.0) || !generator.sigma2.is_finite() {
        return Err(Error::Numerical(format!(
            "parametric generator needs a positive residual variance, got {}",
            generator.sigma2
        )));
    }
    if generator.mean.len() != d.n() {
        return Err(Error::Dimension(format!(
            "generator mean has {} entries for {} rows",
            generator.mean.len(),
            d.n()
        )));
    }
    let sd = generator.sigma2.sqrt();
    let mut rng = stream(seed, tag::PARAMETRIC, &[draw_index]);
    let y = generator
        .mean
        .iter()
        .map(|m| {
            let z: f64 = rng.sample(StandardNormal);
            m + sd * z
        })
        .collect();
    Ok(Dataset::from_parts_unchecked(y, d.x().clone()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn leave_one_out_layout() {
        let plan = make_folds(10, 10, 7, 0).unwrap();
        assert!(plan.sizes().iter().all(|&s| s == 1));
    }

    #[test]
    fn unequal_folds_favour_low_labels() {
        let plan = make_folds(10, 3, 7, 0).unwrap();
        assert_eq!(plan.sizes(), vec![4, 3, 3]);
    }

    #[test]
    fn folds_are_deterministic() {
        assert_eq!(make_folds(37, 5, 11, 3).unwrap(), make_folds(37, 5, 11, 3).unwrap());
        assert_ne!(make_folds(37, 5, 11, 3).unwrap(), make_folds(37, 5, 11, 4).unwrap());
    }

    #[test]
    fn too_many_folds() {
        assert!(make_folds(4, 5, 1, 0).is_err());
        assert!(make_folds(4, 1, 1, 0).is_err());
    }

    #[test]
    fn fold_membership_is_exchangeable() {
        let (n, k, seeds) = (12, 4, 10_000u64);
        let mut hits = vec![0usize; n];
        for s in 0..seeds {
            let plan = make_folds(n, k, s, 0).unwrap();
            for (i, &f) in plan.assignments().iter().enumerate() {
                if f == 0 {
                    hits[i] += 1;
                }
            }
        }
        for h in hits {
            let freq = h as f64 / seeds as f64;
            assert!((freq - 1.0 / k as f64).abs() < 0.02, "freq {freq}");
        }
    }

    #[test]
    fn bootstrap_inclusion_frequency() {
        let n = 50;
        let draws = 10_000;
        let mut included = 0usize;
        for b in 0..draws {
            let d = draw_bootstrap(n, 3, b);
            included += d.counts().iter().filter(|&&c| c > 0).count();
        }
        let freq = included as f64 / (n * draws as usize) as f64;
        let expected = 1.0 - (1.0 - 1.0 / n as f64).powi(n as i32);
        assert!((freq - expected).abs() < 0.01, "{freq} vs {expected}");
    }

    #[test]
    fn bootstrap_draws_differ() {
        let first = draw_bootstrap(20, 5, 0);
        assert!((1..100).any(|b| draw_bootstrap(20, 5, b) != first));
    }

    #[test]
    fn jackknife_covers_each_index_once() {
        let left: Vec<usize> = jackknife_sweep(6).map(|d| d.left_out_index).collect();
        assert_eq!(left, vec![0, 1, 2, 3, 4, 5]);
        assert_eq!(JackknifeDeletion { left_out_index: 2 }.kept(4), vec![0, 1, 3]);
    }

    fn toy() -> Dataset {
        Dataset::from_rows(
            vec![1.0, 2.0, 3.0, 4.0],
            &[vec![0.5], vec![1.5], vec![-2.0], vec![0.0]],
        )
        .unwrap()
    }

    #[test]
    fn parametric_redraw_rejects_zero_variance() {
        let g = GaussianGenerator {
            mean: vec![0.0; 4],
            sigma2: 0.0,
        };
        assert!(parametric_redraw(&toy(), &g, 1, 0).is_err());
    }

    #[test]
    fn parametric_redraw_vanishing_noise() {
        let d = toy();
        let g = GaussianGenerator {
            mean: vec![1.0, -2.0, 0.5, 3.0],
            sigma2: 1e-12,
        };
        let r = parametric_redraw(&d, &g, 1, 0).unwrap();
        for (a, b) in r.y().iter().zip(&g.mean) {
            assert!((a - b).abs() < 1e-5);
        }
        assert_eq!(r.x(), d.x());
    }

    #[test]
    fn parametric_redraw_mean_clt() {
        let d = toy();
        let g = GaussianGenerator {
            mean: vec![1.0, -2.0, 0.5, 3.0],
            sigma2: 2.0,
        };
        let reps = 10_000;
        let mut sum = vec![0.0; 4];
        for b in 0..reps {
            let r = parametric_redraw(&d, &g, 9, b).unwrap();
            for (s, v) in sum.iter_mut().zip(r.y()) {
                *s += v;
            }
        }
        for (s, m) in sum.iter().zip(&g.mean) {
            let avg = s / reps as f64;
            assert!((avg - m).abs() < 3.0 * g.sigma2.sqrt() / 100.0);
        }
    }

    proptest! {
        #[test]
        fn folds_balanced_and_complete(n in 2usize..200, k in 2usize..20, seed: u64, rep in 0u64..50) {
            prop_assume!(k <= n);
            let plan = make_folds(n, k, seed, rep).unwrap();
            let sizes = plan.sizes();
            prop_assert_eq!(sizes.iter().sum::<usize>(), n);
            let max = *sizes.iter().max().unwrap();
            let min = *sizes.iter().min().unwrap();
            prop_assert!(max - min <= 1);
            prop_assert!(sizes.windows(2).all(|w| w[0] >= w[1]));
        }

        #[test]
        fn bootstrap_counts_sum_to_n(n in 1usize..300, seed: u64, b: u64) {
            let d = draw_bootstrap(n, seed, b);
            prop_assert_eq!(d.counts().iter().map(|&c| c as usize).sum::<usize>(), n);
            let mask = d.excluded_mask();
            for i in 0..n {
                prop_assert_eq!(mask[i], d.counts()[i] == 0);
            }
            prop_assert_eq!(d.included().len(), n);
        }
    }
}
