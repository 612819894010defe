//! L1-penalized least squares by cyclic coordinate descent, tuned by
//! repeated k-fold cross-validation.
//!
//! The objective is the unnormalized one,
//! `Σ (y_i − β0 − x_iᵀβ)² + λ Σ |β_j|`, with the intercept unpenalized.
//! Every λ reported anywhere in the crate is in these units.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ReconError, Result};
use crate::rng::substream;

/// Active-set sweeps between sign-fixed jumps.
const JUMP_EVERY: usize = 10;
const JUMP_ROUNDS: usize = 8;

/// Stopping rule for coordinate descent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LassoOptions {
    /// Stop when no coefficient moves more than this in a full sweep.
    pub tol: f64,
    pub max_sweeps: usize,
}

impl Default for LassoOptions {
    fn default() -> Self {
        Self {
            tol: 1e-7,
            max_sweeps: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LassoFit {
    pub intercept: f64,
    /// Dense coefficient vector; zeros are exact.
    pub coefficients: Vec<f64>,
    pub lambda: f64,
    pub objective: f64,
    pub sweeps: usize,
}

impl LassoFit {
    /// Indices of nonzero coefficients.
    pub fn support(&self) -> Vec<usize> {
        self.coefficients
            .iter()
            .enumerate()
            .filter(|(_, b)| **b != 0.0)
            .map(|(j, _)| j)
            .collect()
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.intercept
            + self
                .coefficients
                .iter()
                .zip(row)
                .filter(|(b, _)| **b != 0.0)
                .map(|(b, x)| b * x)
                .sum::<f64>()
    }

    pub fn predict(&self, x: &DMatrix<f64>) -> Vec<f64> {
        let mut out = vec![self.intercept; x.nrows()];
        for (j, b) in self.coefficients.iter().enumerate() {
            if *b != 0.0 {
                for (o, v) in out.iter_mut().zip(x.column(j).iter()) {
                    *o += b * v;
                }
            }
        }
        out
    }
}

pub fn soft_threshold(z: f64, gamma: f64) -> f64 {
    if z > gamma {
        z - gamma
    } else if z < -gamma {
        z + gamma
    } else {
        0.0
    }
}

/// Centered copy of the problem; the intercept is recovered from the means.
struct Problem {
    n: usize,
    cols: Vec<Vec<f64>>,
    norms2: Vec<f64>,
    x_mean: Vec<f64>,
    y: Vec<f64>,
    y_mean: f64,
}

impl Problem {
    fn new(x: &DMatrix<f64>, y: &[f64]) -> Result<Self> {
        let (n, p) = x.shape();
        if n != y.len() {
            return Err(ReconError::Shape(format!("{n} rows but {} responses", y.len())));
        }
        if n == 0 {
            return Err(ReconError::Shape("lasso on zero rows".into()));
        }
        Ok(Self::from_rows(x, y, &(0..n).collect::<Vec<_>>(), p))
    }

    fn from_rows(x: &DMatrix<f64>, y: &[f64], rows: &[usize], p: usize) -> Self {
        let n = rows.len();
        let y_mean = rows.iter().map(|&i| y[i]).sum::<f64>() / n as f64;
        let mut cols = Vec::with_capacity(p);
        let mut norms2 = Vec::with_capacity(p);
        let mut x_mean = Vec::with_capacity(p);
        for j in 0..p {
            let src = x.column(j);
            let m = rows.iter().map(|&i| src[i]).sum::<f64>() / n as f64;
            let c: Vec<f64> = rows.iter().map(|&i| src[i] - m).collect();
            norms2.push(c.iter().map(|v| v * v).sum());
            x_mean.push(m);
            cols.push(c);
        }
        Self {
            n,
            cols,
            norms2,
            x_mean,
            y: rows.iter().map(|&i| y[i] - y_mean).collect(),
            y_mean,
        }
    }

    fn lambda_max(&self) -> f64 {
        self.cols
            .iter()
            .map(|c| 2.0 * dot(c, &self.y).abs())
            .fold(0.0, f64::max)
    }

    fn objective(&self, beta: &[f64], resid: &[f64], lambda: f64) -> f64 {
        resid.iter().map(|r| r * r).sum::<f64>() + lambda * beta.iter().map(|b| b.abs()).sum::<f64>()
    }

    /// One coordinate pass over `coords`; returns the largest coefficient move.
    fn sweep(&self, coords: &[usize], beta: &mut [f64], resid: &mut [f64], lambda: f64) -> f64 {
        let mut max_change = 0.0_f64;
        for &j in coords {
            let nj = self.norms2[j];
            if nj <= 0.0 {
                continue;
            }
            let old = beta[j];
            let col = &self.cols[j];
            let rho = dot(col, resid) + nj * old;
            let new = soft_threshold(rho, lambda / 2.0) / nj;
            if new != old {
                let delta = new - old;
                for (r, x) in resid.iter_mut().zip(col) {
                    *r -= delta * x;
                }
                beta[j] = new;
                max_change = max_change.max(delta.abs());
            }
        }
        max_change
    }

    /// Feature-sign steps: moves toward the minimizer of the objective with
    /// the active signs held fixed, dropping any coefficient that would change
    /// sign on the way and re-solving, for at most `JUMP_ROUNDS` rounds.
    /// When the active Gram matrix is singular and the gradient has a
    /// component in its null space, the step follows that component instead,
    /// which lowers the objective linearly until a coefficient reaches zero.
    /// Returns false when nothing moved.
    fn sign_fixed_jump(&self, active: &[usize], beta: &mut [f64], resid: &mut [f64], lambda: f64) -> bool {
        let k0 = active.len();
        let full = DMatrix::from_fn(k0, k0, |a, b| {
            if a == b {
                self.norms2[active[a]]
            } else {
                dot(&self.cols[active[a]], &self.cols[active[b]])
            }
        });
        let mut set: Vec<usize> = (0..k0).collect();
        let mut moved = false;
        for _ in 0..k0.min(JUMP_ROUNDS) {
            let k = set.len();
            if k == 0 {
                break;
            }
            let gram = DMatrix::from_fn(k, k, |a, b| full[(set[a], set[b])]);
            let rhs = DVector::from_fn(k, |a, _| {
                let j = active[set[a]];
                dot(&self.cols[j], resid) - 0.5 * lambda * beta[j].signum()
            });
            let Some((step, bounded)) = self.gram_step(gram, &rhs) else {
                break;
            };
            let mut t = if bounded { 1.0_f64 } else { f64::INFINITY };
            let mut hit = None;
            for (a, &i) in set.iter().enumerate() {
                let j = active[i];
                if (beta[j] + t.min(1e300) * step[a]) * beta[j] <= 0.0 {
                    let ta = -beta[j] / step[a];
                    if ta < t {
                        t = ta;
                        hit = Some(a);
                    }
                }
            }
            if !(t > 0.0) || !t.is_finite() {
                break;
            }
            for (a, &i) in set.iter().enumerate() {
                let j = active[i];
                let delta = if Some(a) == hit { -beta[j] } else { t * step[a] };
                if delta != 0.0 {
                    for (r, x) in resid.iter_mut().zip(&self.cols[j]) {
                        *r -= delta * x;
                    }
                    beta[j] = if Some(a) == hit { 0.0 } else { beta[j] + delta };
                }
            }
            moved = true;
            match hit {
                Some(a) => {
                    set.remove(a);
                }
                None => break,
            }
        }
        moved
    }

    /// Descent direction for the sign-fixed quadratic with Gram `G` and
    /// gradient `rhs`. A well-conditioned `G` gives the Newton step `G⁻¹·rhs`
    /// (bounded: the minimum lies at step length 1). Otherwise, if `rhs` has a
    /// component in the null space of `G` that component is returned
    /// (unbounded), else the pseudo-inverse step (bounded).
    fn gram_step(&self, gram: DMatrix<f64>, rhs: &DVector<f64>) -> Option<(DVector<f64>, bool)> {
        let k = gram.nrows();
        let maxd = gram.diagonal().max();
        if k + 1 < self.n {
            if let Some(chol) = gram.clone().cholesky() {
                let mind = chol.l().diagonal().iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
                if mind * mind > 1e-10 * maxd {
                    let d = chol.solve(rhs);
                    return d.iter().all(|v| v.is_finite()).then_some((d, true));
                }
            }
        }
        let eig = gram.symmetric_eigen();
        let cut = 1e-10 * eig.eigenvalues.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let proj = eig.eigenvectors.transpose() * rhs;
        let null = DVector::from_fn(k, |a, _| if eig.eigenvalues[a] > cut { 0.0 } else { proj[a] });
        if null.norm() > 1e-9 * rhs.norm().max(f64::MIN_POSITIVE) {
            let d = &eig.eigenvectors * null;
            return d.iter().all(|v| v.is_finite()).then_some((d, false));
        }
        let scaled = DVector::from_fn(k, |a, _| {
            let e = eig.eigenvalues[a];
            if e > cut {
                proj[a] / e
            } else {
                0.0
            }
        });
        let d = &eig.eigenvectors * scaled;
        d.iter().all(|v| v.is_finite()).then_some((d, true))
    }

    /// Coordinate descent from the warm start `beta`, updated in place.
    fn solve(&self, beta: &mut [f64], lambda: f64, opts: &LassoOptions) -> Result<LassoFit> {
        let p = self.cols.len();
        let mut resid = self.y.clone();
        for (j, b) in beta.iter().enumerate() {
            if *b != 0.0 {
                for (r, x) in resid.iter_mut().zip(&self.cols[j]) {
                    *r -= b * x;
                }
            }
        }
        let all: Vec<usize> = (0..p).collect();
        let mut sweeps = 0;
        let mut last_obj = self.objective(beta, &resid, lambda);
        let mut check_obj = |beta: &[f64], resid: &[f64]| {
            let obj = self.objective(beta, resid, lambda);
            debug_assert!(
                obj <= last_obj + 1e-9 * last_obj.abs().max(1.0),
                "lasso objective increased: {last_obj} -> {obj}"
            );
            last_obj = obj;
        };
        loop {
            let change = self.sweep(&all, beta, &mut resid, lambda);
            sweeps += 1;
            check_obj(beta, &resid);
            if change < opts.tol {
                break;
            }
            // Iterate on the active set until it settles, then re-check all.
            let mut inner = 0;
            loop {
                if sweeps >= opts.max_sweeps {
                    return Err(ReconError::NonConvergence { sweeps });
                }
                let active: Vec<usize> = (0..p).filter(|&j| beta[j] != 0.0).collect();
                inner += 1;
                if inner % JUMP_EVERY == 0 && self.sign_fixed_jump(&active, beta, &mut resid, lambda) {
                    check_obj(beta, &resid);
                }
                let change = self.sweep(&active, beta, &mut resid, lambda);
                sweeps += 1;
                check_obj(beta, &resid);
                if change < opts.tol {
                    break;
                }
            }
            if sweeps >= opts.max_sweeps {
                return Err(ReconError::NonConvergence { sweeps });
            }
        }
        let intercept = self.y_mean
            - beta
                .iter()
                .zip(&self.x_mean)
                .map(|(b, m)| b * m)
                .sum::<f64>();
        Ok(LassoFit {
            intercept,
            coefficients: beta.to_vec(),
            lambda,
            objective: self.objective(beta, &resid, lambda),
            sweeps,
        })
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Smallest λ at which every penalized coefficient is zero:
/// `2·max_j |x_jᵀ(y − ȳ)|` with centered columns.
pub fn lambda_max(x: &DMatrix<f64>, y: &[f64]) -> Result<f64> {
    if x.ncols() == 0 {
        return Err(ReconError::Shape("lambda_max of an empty design".into()));
    }
    Ok(Problem::new(x, y)?.lambda_max())
}

pub fn lasso_fit(x: &DMatrix<f64>, y: &[f64], lambda: f64) -> Result<LassoFit> {
    lasso_fit_with(x, y, lambda, &LassoOptions::default())
}

pub fn lasso_fit_with(x: &DMatrix<f64>, y: &[f64], lambda: f64, opts: &LassoOptions) -> Result<LassoFit> {
    if !(lambda >= 0.0) {
        return Err(ReconError::InvalidArgument(format!("lambda {lambda} must be >= 0")));
    }
    let problem = Problem::new(x, y)?;
    let mut beta = vec![0.0; x.ncols()];
    problem.solve(&mut beta, lambda, opts)
}

/// Fits along `lambdas` (any order; warm starts follow the given order).
pub fn lasso_path(x: &DMatrix<f64>, y: &[f64], lambdas: &[f64]) -> Result<Vec<LassoFit>> {
    let problem = Problem::new(x, y)?;
    let mut beta = vec![0.0; x.ncols()];
    lambdas
        .iter()
        .map(|&l| problem.solve(&mut beta, l, &LassoOptions::default()))
        .collect()
}

/// Largest violation of the optimality conditions, in units of `2·x_jᵀr`:
/// `|2x_jᵀr| ≤ λ` where `β_j = 0`, `2x_jᵀr = λ·sign(β_j)` otherwise.
pub fn kkt_violation(x: &DMatrix<f64>, y: &[f64], fit: &LassoFit) -> f64 {
    let pred = fit.predict(x);
    let r: Vec<f64> = y.iter().zip(&pred).map(|(a, b)| a - b).collect();
    let mut worst = 0.0_f64;
    for (j, b) in fit.coefficients.iter().enumerate() {
        let g = 2.0 * x.column(j).iter().zip(&r).map(|(a, b)| a * b).sum::<f64>();
        let v = if *b == 0.0 {
            (g.abs() - fit.lambda).max(0.0)
        } else {
            (g - fit.lambda * b.signum()).abs()
        };
        worst = worst.max(v);
    }
    worst
}

/// Repeated k-fold cross-validation settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CvConfig {
    pub reps: usize,
    pub folds: usize,
    pub grid_size: usize,
    /// Smallest grid λ as a fraction of `lambda_max`.
    pub min_ratio: f64,
}

impl Default for CvConfig {
    fn default() -> Self {
        Self {
            reps: 10,
            folds: 5,
            grid_size: 100,
            min_ratio: 1e-4,
        }
    }
}

/// Cross-validation curve and the selected λ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LassoCv {
    pub lambda_hat: f64,
    /// Descending grid.
    pub lambdas: Vec<f64>,
    /// Mean held-out RMSE over reps × folds, per grid point.
    pub mean_rmse: Vec<f64>,
    /// Standard deviation of the per-fold RMSEs, per grid point.
    pub sd_rmse: Vec<f64>,
}

impl LassoCv {
    pub fn best_index(&self) -> usize {
        self.lambdas
            .iter()
            .position(|&l| l == self.lambda_hat)
            .unwrap_or(0)
    }
}

/// Geometric grid from `lambda_max` down to `lambda_max · min_ratio`.
pub fn lambda_grid(lmax: f64, cfg: &CvConfig) -> Vec<f64> {
    if cfg.grid_size == 1 {
        return vec![lmax];
    }
    let step = cfg.min_ratio.ln() / (cfg.grid_size - 1) as f64;
    (0..cfg.grid_size)
        .map(|i| lmax * (step * i as f64).exp())
        .collect()
}

/// Tunes λ by `reps` repetitions of `folds`-fold cross-validation.
///
/// Each repetition draws a fresh seeded permutation; fold `f` holds out the
/// permuted positions `i ≡ f (mod folds)`. The minimum mean RMSE wins, ties
/// going to the larger λ.
pub fn lasso_cv(x: &DMatrix<f64>, y: &[f64], cfg: &CvConfig, seed: u64) -> Result<LassoCv> {
    let n = x.nrows();
    if n != y.len() {
        return Err(ReconError::Shape(format!("{n} rows but {} responses", y.len())));
    }
    if cfg.folds < 2 || cfg.reps == 0 || cfg.grid_size == 0 {
        return Err(ReconError::InvalidArgument(format!("bad CV settings {cfg:?}")));
    }
    if n < cfg.folds || n - n.div_ceil(cfg.folds) < 2 {
        return Err(ReconError::InvalidArgument(format!(
            "{n} rows cannot form {} folds with at least 2 training rows",
            cfg.folds
        )));
    }
    let lmax = lambda_max(x, y)?;
    let lambdas = if lmax > 0.0 { lambda_grid(lmax, cfg) } else { vec![0.0] };

    let tasks: Vec<(usize, usize)> = (0..cfg.reps)
        .flat_map(|r| (0..cfg.folds).map(move |f| (r, f)))
        .collect();
    let perms: Vec<Vec<usize>> = (0..cfg.reps)
        .map(|r| {
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(&mut substream(seed, &[r as u64]));
            perm
        })
        .collect();

    let per_fold: Vec<Vec<f64>> = tasks
        .par_iter()
        .map(|&(r, f)| {
            let perm = &perms[r];
            let (mut train, mut test) = (Vec::new(), Vec::new());
            for (pos, &i) in perm.iter().enumerate() {
                if pos % cfg.folds == f {
                    test.push(i);
                } else {
                    train.push(i);
                }
            }
            train.sort_unstable();
            test.sort_unstable();
            let problem = Problem::from_rows(x, y, &train, x.ncols());
            debug_assert_eq!(problem.n, train.len());
            let mut beta = vec![0.0; x.ncols()];
            let mut scores = Vec::with_capacity(lambdas.len());
            for &l in &lambdas {
                let fit = problem.solve(&mut beta, l, &LassoOptions::default())?;
                let mse = test
                    .iter()
                    .map(|&i| {
                        let row: Vec<f64> = x.row(i).iter().copied().collect();
                        (fit.predict_row(&row) - y[i]).powi(2)
                    })
                    .sum::<f64>()
                    / test.len() as f64;
                scores.push(mse.sqrt());
            }
            Ok(scores)
        })
        .collect::<Result<_>>()?;

    let m = per_fold.len() as f64;
    let mean_rmse: Vec<f64> = (0..lambdas.len())
        .map(|k| per_fold.iter().map(|s| s[k]).sum::<f64>() / m)
        .collect();
    let sd_rmse: Vec<f64> = (0..lambdas.len())
        .map(|k| {
            let mu = mean_rmse[k];
            (per_fold.iter().map(|s| (s[k] - mu).powi(2)).sum::<f64>() / (m - 1.0).max(1.0)).sqrt()
        })
        .collect();
    let mut best = 0;
    for k in 1..lambdas.len() {
        if mean_rmse[k] < mean_rmse[best] {
            best = k;
        }
    }
    Ok(LassoCv {
        lambda_hat: lambdas[best],
        lambdas,
        mean_rmse,
        sd_rmse,
    })
}

/// Cross-validates λ and refits on all rows at the selected value.
pub fn lasso_cv_fit(x: &DMatrix<f64>, y: &[f64], cfg: &CvConfig, seed: u64) -> Result<(LassoFit, LassoCv)> {
    let cv = lasso_cv(x, y, cfg, seed)?;
    // Refit along the grid down to λ̂ so the warm start matches the CV path.
    let upto = cv.best_index() + 1;
    let fits = lasso_path(x, y, &cv.lambdas[..upto])?;
    let fit = fits.into_iter().last().expect("non-empty grid prefix");
    Ok((fit, cv))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn design(n: usize, p: usize, seed: u64) -> DMatrix<f64> {
        use rand_distr::{Distribution, StandardNormal};
        let mut rng = substream(seed, &[]);
        DMatrix::from_fn(n, p, |_, _| StandardNormal.sample(&mut rng))
    }

    #[test]
    fn soft_threshold_cases() {
        assert_eq!(soft_threshold(3.0, 1.0), 2.0);
        assert_eq!(soft_threshold(-3.0, 1.0), -2.0);
        assert_eq!(soft_threshold(0.5, 1.0), 0.0);
    }

    #[test]
    fn lambda_max_orthogonal_and_single_column() {
        let x = DMatrix::from_column_slice(4, 1, &[1.0, -1.0, 1.0, -1.0]);
        let y = [2.0, 2.0, 3.0, 3.0];
        assert_eq!(lambda_max(&x, &y).unwrap(), 0.0);

        let y = [1.0, 4.0, 2.0, 5.0];
        let ybar = 3.0;
        let xc: Vec<f64> = y.iter().map(|v| v - ybar).collect();
        let x = DMatrix::from_column_slice(4, 1, &xc);
        let norm2: f64 = xc.iter().map(|v| v * v).sum();
        assert!((lambda_max(&x, &y).unwrap() - 2.0 * norm2).abs() < 1e-12);
        assert!(lambda_max(&DMatrix::zeros(4, 0), &y).is_err());
    }

    #[test]
    fn above_lambda_max_is_intercept_only() {
        let x = design(30, 6, 3);
        let y: Vec<f64> = (0..30).map(|i| x[(i, 0)] - 0.5 * x[(i, 2)] + 0.1 * i as f64).collect();
        let lmax = lambda_max(&x, &y).unwrap();
        let fit = lasso_fit(&x, &y, lmax * 1.0001).unwrap();
        assert!(fit.coefficients.iter().all(|b| *b == 0.0));
        assert!((fit.intercept - y.iter().sum::<f64>() / 30.0).abs() < 1e-12);
        let fit = lasso_fit(&x, &y, lmax * 0.99).unwrap();
        assert_eq!(fit.support().len(), 1);
    }

    #[test]
    fn zero_lambda_matches_ols() {
        let x = design(40, 5, 9);
        let y: Vec<f64> = (0..40).map(|i| 1.0 + x[(i, 1)] * 2.0 - x[(i, 4)] + (i as f64 * 0.37).sin()).collect();
        let fit = lasso_fit(&x, &y, 0.0).unwrap();
        let ols = crate::numerics::ols_fit(&x, &y, true).unwrap();
        assert!((fit.intercept - ols.intercept).abs() < 1e-6);
        for (a, b) in fit.coefficients.iter().zip(&ols.coefficients) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn duplicate_columns_share_single_solution() {
        let base = design(25, 3, 4);
        let mut x = DMatrix::zeros(25, 4);
        x.columns_mut(0, 3).copy_from(&base);
        x.set_column(3, &base.column(1));
        let y: Vec<f64> = (0..25).map(|i| 2.0 * base[(i, 1)] + base[(i, 0)] * 0.3 + (i % 3) as f64 * 0.1).collect();
        let lam = 0.2 * lambda_max(&x, &y).unwrap();
        let dup = lasso_fit(&x, &y, lam).unwrap();
        let single = lasso_fit(&base, &y, lam).unwrap();
        // Cyclic descent loads the whole effect on the first copy.
        assert_eq!(dup.coefficients[3], 0.0);
        assert!((dup.coefficients[1] + dup.coefficients[3] - single.coefficients[1]).abs() < 1e-6);
    }

    #[test]
    fn cv_rejects_too_few_rows() {
        let x = design(4, 2, 1);
        let y = [1.0, 2.0, 3.0, 4.0];
        let cfg = CvConfig { folds: 5, ..Default::default() };
        assert!(lasso_cv(&x, &y, &cfg, 0).is_err());
        let cfg = CvConfig { folds: 4, reps: 1, grid_size: 5, ..Default::default() };
        assert!(lasso_cv(&x, &y, &cfg, 0).is_ok());
    }

    #[test]
    fn grid_endpoints() {
        let g = lambda_grid(10.0, &CvConfig::default());
        assert_eq!(g.len(), 100);
        assert!((g[0] - 10.0).abs() < 1e-12);
        assert!((g[99] - 1e-3).abs() < 1e-12);
        assert!(g.windows(2).all(|w| w[1] < w[0]));
    }
}
