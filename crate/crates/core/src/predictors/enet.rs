//! Elastic net by cyclic coordinate descent.
//!
//! The objective on a centered design is
//! `(2n)⁻¹‖y − Xβ‖² + λ[α‖β‖₁ + (1−α)/2‖β‖²]`. Predictors are standardized to
//! unit sample standard deviation before fitting, the intercept is never
//! penalized, and λ is chosen by inner K-fold CV over a log-spaced path with
//! warm starts.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{FittedModel, PredictorKind, PredictorSpec};
use crate::data::Transform;
use crate::error::{Error, Result};
use crate::resampling::{derive_seed, make_folds, tag};

/// Convergence threshold on the largest coefficient change in one sweep.
pub const DEFAULT_TOL: f64 = 1e-7;
const MAX_SWEEPS: usize = 100_000;
/// Floor on the mixing parameter used when computing λ_max, so that pure
/// ridge still gets a finite path.
const MIN_MIXING_FOR_LAMBDA_MAX: f64 = 1e-3;

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let i = 4 * c;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for i in 4 * chunks..a.len() {
        s += a[i] * b[i];
    }
    s
}

#[inline]
fn soft_threshold(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

/// Solves `H x = b` in place, with `H` given by its lower triangle in
/// column-major order and overwritten by its Cholesky factor. False when
/// `H` is not numerically positive definite.
fn cholesky_solve(h: &mut [f64], m: usize, b: &mut [f64]) -> bool {
    for k in 0..m {
        let (done, rest) = h.split_at_mut((k + 1) * m);
        let colk = &mut done[k * m..];
        let d = colk[k];
        if !(d > 0.0) {
            return false;
        }
        let d = d.sqrt();
        colk[k] = d;
        for v in &mut colk[k + 1..] {
            *v /= d;
        }
        let colk = &done[k * m..];
        for j in k + 1..m {
            let f = colk[j];
            if f != 0.0 {
                let colj = &mut rest[(j - k - 1) * m..(j - k) * m];
                for (t, s) in colj[j..].iter_mut().zip(&colk[j..]) {
                    *t -= f * s;
                }
            }
        }
    }
    for k in 0..m {
        let col = &h[k * m..(k + 1) * m];
        b[k] /= col[k];
        let z = b[k];
        for (t, s) in b[k + 1..].iter_mut().zip(&col[k + 1..]) {
            *t -= z * s;
        }
    }
    for k in (0..m).rev() {
        let col = &h[k * m..(k + 1) * m];
        let s: f64 = col[k + 1..].iter().zip(&b[k + 1..]).map(|(l, x)| l * x).sum();
        b[k] = (b[k] - s) / col[k];
    }
    b.iter().all(|v| v.is_finite())
}

/// Coordinate-descent solver over a fixed column-major design. The design is
/// used as given: no centering, scaling or intercept.
///
/// Works in covariance form: gradients `n⁻¹Xᵀ(y − Xβ)` are kept up to date
/// from cached Gram columns of the variables that have ever been nonzero.
pub struct CoordinateDescent<'a> {
    x: &'a [f64],
    n: usize,
    p: usize,
    col_msq: Vec<f64>,
    alpha: f64,
    tol: f64,
}

const NO_SLOT: usize = usize::MAX;
/// Inner sweeps before the first attempt at solving the active set
/// directly; later attempts follow at doubling intervals.
const DIRECT_EVERY: usize = 8;

/// Warm-start state carried along a λ path.
#[derive(Clone, Debug)]
pub struct CdState {
    pub beta: Vec<f64>,
    y: Vec<f64>,
    xty: Vec<f64>,
    /// n⁻¹Xᵀ(y − Xβ), refreshed before every full sweep.
    grad: Vec<f64>,
    active: Vec<usize>,
    /// Position of each variable in `active`.
    slot: Vec<usize>,
    /// n⁻¹Xᵀx_j for every active j.
    gram: Vec<Vec<f64>>,
    /// The same columns restricted to the active rows, and the matching
    /// gradient entries, for the inner sweeps.
    packed: Vec<Vec<f64>>,
    agrad: Vec<f64>,
    /// The previous solve needed a direct step.
    stiff: bool,
}

impl CdState {
    pub fn residual(&self, cd: &CoordinateDescent<'_>) -> Vec<f64> {
        let mut r = self.y.clone();
        for &j in &self.active {
            let b = self.beta[j];
            if b != 0.0 {
                for (ri, c) in r.iter_mut().zip(cd.col(j)) {
                    *ri -= b * c;
                }
            }
        }
        r
    }
}

impl<'a> CoordinateDescent<'a> {
    pub fn new(x: &'a [f64], n: usize, p: usize, alpha: f64) -> Self {
        assert_eq!(x.len(), n * p);
        let col_msq = (0..p)
            .map(|j| {
                let c = &x[j * n..(j + 1) * n];
                dot(c, c) / n as f64
            })
            .collect();
        CoordinateDescent {
            x,
            n,
            p,
            col_msq,
            alpha,
            tol: DEFAULT_TOL,
        }
    }

    pub fn with_tolerance(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    #[inline]
    fn col(&self, j: usize) -> &[f64] {
        &self.x[j * self.n..(j + 1) * self.n]
    }

    /// State at β = 0 for outcome `y`.
    pub fn start(&self, y: &[f64]) -> CdState {
        assert_eq!(y.len(), self.n);
        let xty: Vec<f64> = (0..self.p).map(|j| dot(self.col(j), y) / self.n as f64).collect();
        CdState {
            beta: vec![0.0; self.p],
            y: y.to_vec(),
            grad: xty.clone(),
            xty,
            active: Vec::new(),
            slot: vec![NO_SLOT; self.p],
            gram: Vec::new(),
            packed: Vec::new(),
            agrad: Vec::new(),
            stiff: false,
        }
    }

    pub fn objective(&self, lambda: f64, state: &CdState) -> f64 {
        let r = state.residual(self);
        let loss = dot(&r, &r) / (2.0 * self.n as f64);
        let l1: f64 = state.beta.iter().map(|b| b.abs()).sum();
        let l2: f64 = state.beta.iter().map(|b| b * b).sum();
        loss + lambda * (self.alpha * l1 + 0.5 * (1.0 - self.alpha) * l2)
    }

    fn activate(&self, j: usize, state: &mut CdState) {
        if state.slot[j] != NO_SLOT {
            return;
        }
        let cj = self.col(j);
        let g = (0..self.p).map(|k| dot(self.col(k), cj) / self.n as f64).collect();
        let s = state.active.len();
        state.slot[j] = s;
        state.gram.push(g);
        state.active.push(j);
        for u in 0..s {
            let v = state.gram[u][j];
            state.packed[u].push(v);
        }
        let own = state.active.iter().map(|&k| state.gram[s][k]).collect();
        state.packed.push(own);
    }

    fn load_active_grad(state: &mut CdState) {
        state.agrad.clear();
        state.agrad.extend(state.active.iter().map(|&j| state.grad[j]));
    }

    /// One sweep over the active set using the packed Gram block.
    fn inner_sweep(&self, l1: f64, l2: f64, state: &mut CdState) -> f64 {
        let mut max_change: f64 = 0.0;
        for t in 0..state.active.len() {
            let j = state.active[t];
            let msq = self.col_msq[j];
            if msq == 0.0 {
                continue;
            }
            let old = state.beta[j];
            let new = soft_threshold(state.agrad[t] + msq * old, l1) / (msq + l2);
            let delta = new - old;
            if delta != 0.0 {
                state.beta[j] = new;
                for (g, c) in state.agrad.iter_mut().zip(&state.packed[t]) {
                    *g -= delta * c;
                }
                max_change = max_change.max(delta.abs());
            }
        }
        max_change
    }

    /// Coordinate step on `j`, updating every gradient.
    #[inline]
    fn update(&self, j: usize, l1: f64, l2: f64, state: &mut CdState) -> f64 {
        let msq = self.col_msq[j];
        if msq == 0.0 {
            return 0.0;
        }
        let old = state.beta[j];
        let z = state.grad[j] + msq * old;
        let new = soft_threshold(z, l1) / (msq + l2);
        let delta = new - old;
        if delta == 0.0 {
            return 0.0;
        }
        self.activate(j, state);
        state.beta[j] = new;
        for (gk, c) in state.grad.iter_mut().zip(&state.gram[state.slot[j]]) {
            *gk -= delta * c;
        }
        delta.abs()
    }

    /// Recomputes every gradient from the current coefficients.
    fn refresh(&self, state: &mut CdState) {
        state.grad.copy_from_slice(&state.xty);
        for &j in &state.active {
            let b = state.beta[j];
            if b != 0.0 {
                for (gk, c) in state.grad.iter_mut().zip(&state.gram[state.slot[j]]) {
                    *gk -= b * c;
                }
            }
        }
    }

    /// Solves the stationarity equations on the current nonzero set with
    /// its signs held fixed. Expects `agrad` to be loaded. The result is kept only when every sign is
    /// preserved, which makes it the minimizer over that orthant.
    fn direct_step(&self, l1: f64, l2: f64, state: &mut CdState) -> bool {
        let idx: Vec<usize> = state.active.iter().copied().filter(|&j| state.beta[j] != 0.0).collect();
        let m = idx.len();
        if m == 0 {
            return false;
        }
        let mut h = vec![0.0; m * m];
        for (c, &k) in idx.iter().enumerate() {
            let g = &state.gram[state.slot[k]];
            for (a, &j) in idx.iter().enumerate().skip(c) {
                h[c * m + a] = g[j];
            }
            h[c * m + c] += l2;
        }
        let mut sol: Vec<f64> = idx.iter().map(|&j| state.xty[j] - l1 * state.beta[j].signum()).collect();
        if !cholesky_solve(&mut h, m, &mut sol) {
            return false;
        }
        if idx
            .iter()
            .zip(&sol)
            .any(|(&j, v)| !v.is_finite() || v.signum() != state.beta[j].signum() || *v == 0.0)
        {
            return false;
        }
        for (&j, v) in idx.iter().zip(&sol) {
            state.beta[j] = *v;
        }
        // active gradients from the packed block; the rest are refreshed
        // before the next full sweep
        let b: Vec<f64> = state.active.iter().map(|&j| state.beta[j]).collect();
        for (t, &j) in state.active.iter().enumerate() {
            state.agrad[t] = state.xty[j] - dot(&state.packed[t], &b);
        }
        true
    }

    /// Minimizes the objective at `lambda` starting from `state`. Returns the
    /// number of sweeps. When `trace` is given, the objective after every
    /// sweep is appended to it.
    pub fn solve(
        &self,
        lambda: f64,
        state: &mut CdState,
        mut trace: Option<&mut Vec<f64>>,
    ) -> Result<usize> {
        let l1 = lambda * self.alpha;
        let l2 = lambda * (1.0 - self.alpha);
        let mut sweeps = 0;
        let mut direct = false;
        loop {
            // iterate the active set to convergence
            let mut inner = 0;
            Self::load_active_grad(state);
            while !state.active.is_empty() {
                let attempt = if inner == 0 {
                    state.stiff
                } else {
                    inner % DIRECT_EVERY == 0 && (inner / DIRECT_EVERY).is_power_of_two()
                };
                if attempt && self.direct_step(l1, l2, state) {
                    direct = true;
                }
                let max_change = self.inner_sweep(l1, l2, state);
                sweeps += 1;
                inner += 1;
                if let Some(t) = trace.as_deref_mut() {
                    t.push(self.objective(lambda, state));
                }
                if max_change < self.tol {
                    break;
                }
                if sweeps > MAX_SWEEPS {
                    return Err(Error::Numerical("coordinate descent did not converge".into()));
                }
            }
            // full sweep doubles as the optimality check
            self.refresh(state);
            let mut max_change: f64 = 0.0;
            for j in 0..self.p {
                max_change = max_change.max(self.update(j, l1, l2, state));
            }
            sweeps += 1;
            if let Some(t) = trace.as_deref_mut() {
                t.push(self.objective(lambda, state));
            }
            if max_change < self.tol {
                state.stiff = direct;
                return Ok(sweeps);
            }
            if sweeps > MAX_SWEEPS {
                return Err(Error::Numerical("coordinate descent did not converge".into()));
            }
        }
    }
}

/// Solves one elastic-net problem on a design used as-is (no intercept, no
/// standardization), starting from zero.
pub fn solve_fixed_design(
    x: &DMatrix<f64>,
    y: &[f64],
    lambda: f64,
    alpha: f64,
) -> Result<Vec<f64>> {
    let (n, p) = x.shape();
    if y.len() != n {
        return Err(Error::Dimension(format!("{} outcomes for {} rows", y.len(), n)));
    }
    let cd = CoordinateDescent::new(x.as_slice(), n, p, alpha);
    let mut state = cd.start(y);
    cd.solve(lambda, &mut state, None)?;
    Ok(state.beta)
}

/// Log-uniform grid from `lambda_max` down to `lambda_max · ratio`.
pub fn lambda_grid(lambda_max: f64, count: usize, ratio: f64) -> Vec<f64> {
    if count == 1 {
        return vec![lambda_max];
    }
    let step = ratio.ln() / (count - 1) as f64;
    (0..count)
        .map(|i| {
            if i == count - 1 {
                lambda_max * ratio
            } else {
                lambda_max * (step * i as f64).exp()
            }
        })
        .collect()
}

pub(crate) struct Standardized {
    x: Vec<f64>,
    y: Vec<f64>,
    n: usize,
    p: usize,
    ybar: f64,
    transform: Transform,
}

fn standardize(x: &DMatrix<f64>, y: &[f64]) -> Standardized {
    let (n, p) = x.shape();
    let transform = Transform::fit(x, true);
    let xs = transform.apply(x).expect("same width");
    let ybar = y.iter().sum::<f64>() / n as f64;
    Standardized {
        x: xs.as_slice().to_vec(),
        y: y.iter().map(|v| v - ybar).collect(),
        n,
        p,
        ybar,
        transform,
    }
}

impl Standardized {
    /// Smallest penalty at which every coefficient is zero.
    fn lambda_max(&self, alpha: f64) -> f64 {
        let n = self.n;
        let mut best: f64 = 0.0;
        for j in 0..self.p {
            let g = dot(&self.x[j * n..(j + 1) * n], &self.y).abs() / n as f64;
            best = best.max(g);
        }
        best / alpha.max(MIN_MIXING_FOR_LAMBDA_MAX)
    }
}

/// Outcome of inner-CV penalty selection.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LambdaTuning {
    pub grid: Vec<f64>,
    /// Pooled inner-CV mean squared error at each grid value.
    pub cv_mse: Vec<f64>,
    pub selected_index: usize,
    pub selected: f64,
    /// The outcome had zero variance: λ_max = 0 and the fit is the mean.
    pub degenerate: bool,
}

pub(super) fn tune(spec: &PredictorSpec, x: &DMatrix<f64>, y: &[f64], seed: u64) -> Result<LambdaTuning> {
    let full = standardize(x, y);
    tune_with(spec, x, y, &full, seed)
}

fn tune_with(
    spec: &PredictorSpec,
    x: &DMatrix<f64>,
    y: &[f64],
    full: &Standardized,
    seed: u64,
) -> Result<LambdaTuning> {
    let alpha = spec.en_mixing;
    let lmax = full.lambda_max(alpha);
    if !(lmax > 0.0) || !lmax.is_finite() {
        return Ok(LambdaTuning {
            grid: vec![0.0],
            cv_mse: vec![f64::NAN],
            selected_index: 0,
            selected: 0.0,
            degenerate: true,
        });
    }
    let grid = lambda_grid(lmax, spec.en_lambda_count, spec.en_lambda_ratio);
    let n = y.len();
    let p = x.ncols();
    let plan = make_folds(n, spec.en_inner_folds, derive_seed(seed, tag::INNER_CV, &[]), 0)?;
    let mut sse = vec![0.0; grid.len()];
    for fold in 0..plan.k() {
        let test: Vec<usize> = (0..n).filter(|&i| plan.assignments()[i] == fold).collect();
        let train: Vec<usize> = (0..n).filter(|&i| plan.assignments()[i] != fold).collect();
        let xt = x.select_rows(train.iter());
        let yt: Vec<f64> = train.iter().map(|&i| y[i]).collect();
        let s = standardize(&xt, &yt);
        let x_test = s.transform.apply(&x.select_rows(test.iter()))?;
        let cd = CoordinateDescent::new(&s.x, s.n, p, alpha);
        let mut state = cd.start(&s.y);
        for (l, &lambda) in grid.iter().enumerate() {
            cd.solve(lambda, &mut state, None)?;
            for (r, &i) in test.iter().enumerate() {
                let mut pred = s.ybar;
                for &j in &state.active {
                    pred += x_test[(r, j)] * state.beta[j];
                }
                let e = y[i] - pred;
                sse[l] += e * e;
            }
        }
    }
    let cv_mse: Vec<f64> = sse.iter().map(|s| s / n as f64).collect();
    let mut selected_index = 0;
    for (i, v) in cv_mse.iter().enumerate() {
        if *v < cv_mse[selected_index] {
            selected_index = i;
        }
    }
    Ok(LambdaTuning {
        selected: grid[selected_index],
        grid,
        cv_mse,
        selected_index,
        degenerate: false,
    })
}

pub(super) fn fit(spec: &PredictorSpec, x: &DMatrix<f64>, y: &[f64], seed: u64) -> Result<FittedModel> {
    let full = standardize(x, y);
    let tuning = tune_with(spec, x, y, &full, seed)?;
    let p = x.ncols();
    if tuning.degenerate {
        let mut m = FittedModel::new(PredictorKind::ElasticNet, vec![0.0; p], full.ybar, full.transform, full.n);
        m.lambda = Some(0.0);
        m.degenerate = true;
        return Ok(m);
    }
    let cd = CoordinateDescent::new(&full.x, full.n, p, spec.en_mixing);
    let mut state = cd.start(&full.y);
    for &lambda in &tuning.grid[..=tuning.selected_index] {
        cd.solve(lambda, &mut state, None)?;
    }
    let mut m = FittedModel::new(PredictorKind::ElasticNet, state.beta, full.ybar, full.transform, full.n);
    m.lambda = Some(tuning.selected);
    Ok(m)
}
