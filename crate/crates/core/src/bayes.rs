//! Bayesian AR(2) + principal-component model. Temperature in year `t` is
//! regressed on the leading proxy PCs and on the two *following* years,
//! which turns the fitted model into a one-step-behind backcaster. Gibbs
//! sampling, pathwise backcasts, credible bands, event probabilities and the
//! first/last-block validation live here.

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rand_distr::{Distribution, Gamma, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{AnalysisWindow, ProxyMatrix, TimeSeries};
use crate::error::{ReconError, Result};
use crate::harness::{pseudo_block_rmses_for, BlockScheme, Scoring};
use crate::modelzoo::{ModelSpec, ZooOptions};
use crate::nullmodels::PseudoProxyClass;
use crate::numerics::{mean, principal_components, quantile, rmse, LoessOperator};
use crate::rng::{substream, Rng};

/// Lowest value a σ² draw may take. Only reached when the residual sum of
/// squares is exactly zero, where the inverse-gamma conditional degenerates.
pub const SIGMA2_FLOOR: f64 = 1e-150;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BayesConfig {
    pub n_pcs: usize,
    pub prior_beta_var: f64,
    pub sigma_upper: f64,
    pub iters: usize,
    pub burnin: usize,
    pub thin: usize,
    pub chains: usize,
    pub seed: u64,
}

impl Default for BayesConfig {
    fn default() -> Self {
        Self {
            n_pcs: 10,
            prior_beta_var: 1000.0,
            sigma_upper: 100.0,
            iters: 5000,
            burnin: 1000,
            thin: 2,
            chains: 4,
            seed: 0,
        }
    }
}

impl BayesConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(ReconError::InvalidArgument(m.into()));
        if !(self.prior_beta_var > 0.0) {
            return bad("prior_beta_var must be positive");
        }
        if !(self.sigma_upper > 0.0) {
            return bad("sigma_upper must be positive");
        }
        if self.iters <= self.burnin {
            return bad("iters must exceed burnin");
        }
        if self.thin == 0 || self.chains == 0 || self.n_pcs == 0 {
            return bad("thin, chains and n_pcs must be at least 1");
        }
        Ok(())
    }

    /// Retained draws per chain.
    pub fn kept_per_chain(&self) -> usize {
        (self.iters - self.burnin).div_ceil(self.thin)
    }
}

/// Which neighbouring years enter as autoregressive terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    /// `y_{t+1}, y_{t+2}`: runs backward in time from two anchor years.
    Backward,
    /// `y_{t−1}, y_{t−2}`: the time-mirrored model, runs forward.
    Forward,
}

impl Direction {
    fn lag(self, t: i32, k: i32) -> i32 {
        match self {
            Direction::Backward => t + k,
            Direction::Forward => t - k,
        }
    }
}

/// Principal-component scores indexed by year.
#[derive(Debug, Clone, PartialEq)]
pub struct PcTable {
    pub start_year: i32,
    /// years × components
    pub scores: DMatrix<f64>,
}

impl PcTable {
    /// First `k` components of the complete proxy matrix over its full span.
    pub fn from_proxies(proxies: &ProxyMatrix, k: usize) -> Result<Self> {
        let basis = principal_components(&proxies.dense_all()?, k)?;
        Ok(Self {
            start_year: proxies.start_year(),
            scores: basis.scores,
        })
    }

    pub fn span(&self) -> AnalysisWindow {
        AnalysisWindow {
            first_year: self.start_year,
            last_year: self.start_year + self.scores.nrows() as i32 - 1,
        }
    }

    pub fn k(&self) -> usize {
        self.scores.ncols()
    }

    fn row(&self, year: i32) -> Result<usize> {
        let span = self.span();
        if !span.contains(year) {
            return Err(ReconError::WindowOutOfRange {
                first: year,
                last: year,
                span_first: span.first_year,
                span_last: span.last_year,
            });
        }
        Ok((year - self.start_year) as usize)
    }
}

/// Regression design `[1, PC_1..PC_k, lag_1, lag_2]` over a training window.
#[derive(Debug, Clone, PartialEq)]
pub struct BayesDesign {
    pub years: Vec<i32>,
    pub x: DMatrix<f64>,
    pub y: Vec<f64>,
    pub direction: Direction,
    pub n_pcs: usize,
}

impl BayesDesign {
    /// Rows are the years of `train` whose response, two lags and PC scores
    /// all exist. Lags may reach outside `train` but never skip a year.
    pub fn new(pcs: &PcTable, y: &TimeSeries, train: &AnalysisWindow, n_pcs: usize, direction: Direction) -> Result<Self> {
        if n_pcs == 0 || n_pcs > pcs.k() {
            return Err(ReconError::InvalidArgument(format!(
                "need 1..={} PCs, asked for {n_pcs}",
                pcs.k()
            )));
        }
        let mut years = Vec::new();
        let mut rows = Vec::new();
        let mut resp = Vec::new();
        for t in train.years() {
            let (Some(v), Some(l1), Some(l2)) = (y.get(t), y.get(direction.lag(t, 1)), y.get(direction.lag(t, 2))) else {
                continue;
            };
            let r = pcs.row(t)?;
            let mut row = Vec::with_capacity(n_pcs + 3);
            row.push(1.0);
            row.extend((0..n_pcs).map(|j| pcs.scores[(r, j)]));
            row.push(l1);
            row.push(l2);
            years.push(t);
            rows.push(row);
            resp.push(v);
        }
        let p = n_pcs + 3;
        if years.len() <= p {
            return Err(ReconError::Shape(format!(
                "{} usable training years for {p} coefficients",
                years.len()
            )));
        }
        let x = DMatrix::from_fn(rows.len(), p, |i, j| rows[i][j]);
        Ok(Self {
            years,
            x,
            y: resp,
            direction,
            n_pcs,
        })
    }

    pub fn n_coef(&self) -> usize {
        self.x.ncols()
    }
}

/// Mean and covariance of `β | σ², y` under the `N(0, v·I)` prior.
pub fn beta_conditional(x: &DMatrix<f64>, y: &[f64], sigma2: f64, prior_var: f64) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let g = Gram::new(x, y);
    let (chol, mean) = g.factor(sigma2, prior_var)?;
    Ok((mean, chol.inverse()))
}

/// Cross products reused by every `β` draw.
struct Gram {
    xtx: DMatrix<f64>,
    xty: DVector<f64>,
}

impl Gram {
    fn new(x: &DMatrix<f64>, y: &[f64]) -> Self {
        let xt = x.transpose();
        Self {
            xtx: &xt * x,
            xty: xt * DVector::from_column_slice(y),
        }
    }

    fn factor(&self, sigma2: f64, prior_var: f64) -> Result<(nalgebra::Cholesky<f64, nalgebra::Dyn>, DVector<f64>)> {
        let p = self.xtx.ncols();
        let precision = &self.xtx / sigma2 + DMatrix::<f64>::identity(p, p) / prior_var;
        let chol = precision
            .cholesky()
            .ok_or_else(|| ReconError::Numerical("coefficient precision not positive definite".into()))?;
        let mean = chol.solve(&(&self.xty / sigma2));
        if mean.iter().any(|v| !v.is_finite()) {
            return Err(ReconError::Numerical("non-finite coefficient conditional".into()));
        }
        Ok((chol, mean))
    }

    fn draw(&self, sigma2: f64, prior_var: f64, rng: &mut Rng) -> Result<DVector<f64>> {
        let (chol, mean) = self.factor(sigma2, prior_var)?;
        let p = self.xtx.ncols();
        let z = DVector::from_iterator(p, (0..p).map(|_| StandardNormal.sample(rng)));
        // If Q = L Lᵀ then L⁻ᵀ z has covariance Q⁻¹.
        let dev = chol
            .l()
            .transpose()
            .solve_upper_triangular(&z)
            .ok_or_else(|| ReconError::Numerical("triangular solve failed".into()))?;
        Ok(mean + dev)
    }
}

/// Draws `β | σ²` from its Gaussian conditional.
pub fn draw_beta(x: &DMatrix<f64>, y: &[f64], sigma2: f64, prior_var: f64, rng: &mut Rng) -> Result<DVector<f64>> {
    Gram::new(x, y).draw(sigma2, prior_var, rng)
}

/// Draws `σ² | β` from inverse-gamma((n − 1)/2, SSE/2) restricted to
/// `σ < sigma_upper` by rejection.
pub fn draw_sigma2(x: &DMatrix<f64>, y: &[f64], beta: &DVector<f64>, sigma_upper: f64, rng: &mut Rng) -> Result<f64> {
    let n = y.len();
    let fitted = x * beta;
    let sse: f64 = y.iter().zip(fitted.iter()).map(|(a, f)| (a - f).powi(2)).sum();
    let shape = (n as f64 - 1.0) / 2.0;
    let gamma = Gamma::new(shape, 1.0).map_err(|e| ReconError::Numerical(e.to_string()))?;
    let cap = sigma_upper * sigma_upper;
    for _ in 0..10_000 {
        let g: f64 = gamma.sample(rng);
        let s2 = (sse / 2.0 / g).max(SIGMA2_FLOOR);
        if s2 < cap {
            return Ok(s2);
        }
    }
    Err(ReconError::Numerical("σ draws keep exceeding the prior bound".into()))
}

/// Convergence summaries per parameter (coefficients, then σ).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub ess: Vec<f64>,
    pub rhat: Vec<f64>,
    /// Any split-chain scale reduction above 1.1.
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorDraws {
    /// draws × coefficients, chains stacked in order.
    pub beta: DMatrix<f64>,
    pub sigma: Vec<f64>,
    pub chains: usize,
    pub direction: Direction,
    pub n_pcs: usize,
    pub diagnostics: Diagnostics,
}

impl PosteriorDraws {
    pub fn len(&self) -> usize {
        self.sigma.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sigma.is_empty()
    }

    /// Posterior-mean coefficients, accumulated as offsets from the first
    /// draw so that identical draws average to themselves exactly.
    pub fn beta_mean(&self) -> Vec<f64> {
        self.beta
            .column_iter()
            .map(|c| {
                let first = c[0];
                first + c.iter().map(|v| v - first).sum::<f64>() / c.len() as f64
            })
            .collect()
    }

    pub fn beta_row(&self, d: usize) -> Vec<f64> {
        self.beta.row(d).iter().copied().collect()
    }
}

/// Gibbs sampler alternating `β | σ` and `σ | β`. Chain `c` draws from
/// `substream(cfg.seed, [c])` and starts from a σ² spread around the
/// least-squares residual variance.
pub fn gibbs_sample(design: &BayesDesign, cfg: &BayesConfig) -> Result<PosteriorDraws> {
    cfg.validate()?;
    let x = &design.x;
    let y = &design.y;
    let (n, p) = x.shape();
    let ols = crate::numerics::ols_fit(x, y, false)?;
    let s2_ols = (ols.sse / (n - p) as f64).max(SIGMA2_FLOOR);
    let cap = cfg.sigma_upper * cfg.sigma_upper;
    let kept = cfg.kept_per_chain();

    let chains: Vec<(Vec<DVector<f64>>, Vec<f64>)> = (0..cfg.chains)
        .into_par_iter()
        .map(|c| {
            let mut rng = substream(cfg.seed, &[c as u64]);
            let mut s2 = (s2_ols * [1.0, 0.25, 4.0, 0.5][c % 4]).min(cap * 0.99);
            let mut betas = Vec::with_capacity(kept);
            let mut sigmas = Vec::with_capacity(kept);
            let gram = Gram::new(x, y);
            for it in 0..cfg.iters {
                let beta = gram.draw(s2, cfg.prior_beta_var, &mut rng)?;
                s2 = draw_sigma2(x, y, &beta, cfg.sigma_upper, &mut rng)?;
                if it >= cfg.burnin && (it - cfg.burnin) % cfg.thin == 0 {
                    betas.push(beta);
                    sigmas.push(s2.sqrt());
                }
            }
            Ok((betas, sigmas))
        })
        .collect::<Result<_>>()?;

    let total = kept * cfg.chains;
    let mut beta = DMatrix::zeros(total, p);
    let mut sigma = Vec::with_capacity(total);
    for (c, (bs, ss)) in chains.iter().enumerate() {
        for (i, b) in bs.iter().enumerate() {
            beta.row_mut(c * kept + i).copy_from(&b.transpose());
        }
        sigma.extend_from_slice(ss);
    }
    let mut ess = Vec::with_capacity(p + 1);
    let mut rhat = Vec::with_capacity(p + 1);
    for j in 0..=p {
        let per_chain: Vec<Vec<f64>> = (0..cfg.chains)
            .map(|c| {
                (0..kept)
                    .map(|i| if j < p { beta[(c * kept + i, j)] } else { sigma[c * kept + i] })
                    .collect()
            })
            .collect();
        ess.push(per_chain.iter().map(|ch| effective_sample_size(ch)).sum());
        rhat.push(split_rhat(&per_chain));
    }
    let flagged = rhat.iter().any(|r| *r > 1.1);
    if flagged {
        log::warn!("Gibbs chains show split R-hat above 1.1");
    }
    Ok(PosteriorDraws {
        beta,
        sigma,
        chains: cfg.chains,
        direction: design.direction,
        n_pcs: design.n_pcs,
        diagnostics: Diagnostics { ess, rhat, flagged },
    })
}

/// Effective sample size of one chain, summing autocorrelations over
/// Geyer's initial positive sequence of lag pairs.
pub fn effective_sample_size(x: &[f64]) -> f64 {
    let n = x.len();
    if n < 4 {
        return n as f64;
    }
    let m = mean(x);
    let c0: f64 = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n as f64;
    if !(c0 > 0.0) {
        return n as f64;
    }
    let rho = |k: usize| -> f64 { (0..n - k).map(|i| (x[i] - m) * (x[i + k] - m)).sum::<f64>() / n as f64 / c0 };
    let mut sum = 0.0;
    let mut k = 0;
    while k + 1 < n {
        let pair = if k == 0 { 1.0 + rho(1) } else { rho(k) + rho(k + 1) };
        if pair <= 0.0 {
            break;
        }
        sum += pair;
        k += 2;
    }
    let tau = (2.0 * sum - 1.0).max(1.0 / n as f64);
    n as f64 / tau
}

/// Split-chain potential scale reduction.
pub fn split_rhat(chains: &[Vec<f64>]) -> f64 {
    let half = chains.iter().map(|c| c.len() / 2).min().unwrap_or(0);
    if half < 2 {
        return f64::NAN;
    }
    let pieces: Vec<&[f64]> = chains
        .iter()
        .flat_map(|c| [&c[..half], &c[c.len() - half..]])
        .collect();
    let l = half as f64;
    let means: Vec<f64> = pieces.iter().map(|p| mean(p)).collect();
    let w = pieces
        .iter()
        .zip(&means)
        .map(|(p, m)| p.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (l - 1.0))
        .sum::<f64>()
        / pieces.len() as f64;
    let grand = mean(&means);
    let b = l * means.iter().map(|m| (m - grand).powi(2)).sum::<f64>() / (pieces.len() as f64 - 1.0);
    if !(w > 0.0) {
        return if b > 0.0 { f64::INFINITY } else { 1.0 };
    }
    (((l - 1.0) / l * w + b / l) / w).sqrt()
}

/// The two observed values that start a recursion: `near` is adjacent to
/// the first predicted year, `far` one year beyond it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Anchors {
    pub near: f64,
    pub far: f64,
}

impl Anchors {
    /// Observed anchors for recursing over `window` in `direction`.
    pub fn from_series(y: &TimeSeries, window: &AnalysisWindow, direction: Direction) -> Result<Self> {
        let start = match direction {
            Direction::Backward => window.last_year,
            Direction::Forward => window.first_year,
        };
        let near = direction.lag(start, 1);
        let far = direction.lag(start, 2);
        match (y.get(near), y.get(far)) {
            (Some(near), Some(far)) => Ok(Self { near, far }),
            _ => Err(ReconError::MissingValues {
                count: 1,
                column: "anchor".into(),
                year: near,
            }),
        }
    }
}

/// Runs the recursion over `window` in the model's direction, returning
/// values in calendar order. `noise(step)` is added at each step.
fn recurse(
    beta: &[f64],
    pcs: &PcTable,
    n_pcs: usize,
    anchors: Anchors,
    window: &AnalysisWindow,
    direction: Direction,
    mut noise: impl FnMut() -> f64,
) -> Result<Vec<f64>> {
    let n = window.len();
    let first_row = pcs.row(window.first_year)?;
    pcs.row(window.last_year)?;
    let mut out = vec![0.0; n];
    let (mut near, mut far) = (anchors.near, anchors.far);
    let (b_near, b_far) = (beta[n_pcs + 1], beta[n_pcs + 2]);
    for step in 0..n {
        let i = match direction {
            Direction::Backward => n - 1 - step,
            Direction::Forward => step,
        };
        let r = first_row + i;
        let mut v = beta[0];
        for j in 0..n_pcs {
            v += beta[j + 1] * pcs.scores[(r, j)];
        }
        v += b_near * near + b_far * far + noise();
        out[i] = v;
        far = near;
        near = v;
    }
    Ok(out)
}

/// Plug-in backcast with the posterior-mean coefficients.
pub fn backcast_mean(draws: &PosteriorDraws, pcs: &PcTable, anchors: Anchors, window: &AnalysisWindow) -> Result<TimeSeries> {
    let beta = draws.beta_mean();
    let v = recurse(&beta, pcs, draws.n_pcs, anchors, window, draws.direction, || 0.0)?;
    TimeSeries::from_values(window.first_year, v)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PathMode {
    /// Posterior-mean β; Gaussian noise with σ from each draw.
    ResidualOnly,
    /// Each draw's β; no noise.
    ParameterOnly,
    /// Each draw's β and σ, with noise.
    Full,
}

impl std::str::FromStr for PathMode {
    type Err = ReconError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "residual_only" => Ok(PathMode::ResidualOnly),
            "parameter_only" => Ok(PathMode::ParameterOnly),
            "full" => Ok(PathMode::Full),
            _ => Err(ReconError::InvalidArgument(format!("unknown path mode {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathEnsemble {
    pub mode: PathMode,
    pub start_year: i32,
    /// paths × years
    pub paths: DMatrix<f64>,
}

impl PathEnsemble {
    pub fn n_paths(&self) -> usize {
        self.paths.nrows()
    }

    pub fn window(&self) -> AnalysisWindow {
        AnalysisWindow {
            first_year: self.start_year,
            last_year: self.start_year + self.paths.ncols() as i32 - 1,
        }
    }

    /// Across-path variance for each year.
    pub fn variance_by_year(&self) -> Vec<f64> {
        let n = self.paths.nrows() as f64;
        self.paths
            .column_iter()
            .map(|c| {
                let m = c.mean();
                c.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0).max(1.0)
            })
            .collect()
    }
}

/// One recursion per retained posterior draw; draw `d` uses
/// `substream(seed, [d])` for its noise.
pub fn backcast_paths(
    draws: &PosteriorDraws,
    pcs: &PcTable,
    anchors: Anchors,
    window: &AnalysisWindow,
    mode: PathMode,
    seed: u64,
) -> Result<PathEnsemble> {
    let mean_beta = draws.beta_mean();
    let rows: Vec<Vec<f64>> = (0..draws.len())
        .into_par_iter()
        .map(|d| {
            let mut rng = substream(seed, &[d as u64]);
            let sigma = draws.sigma[d];
            let (beta, sd) = match mode {
                PathMode::ResidualOnly => (mean_beta.clone(), sigma),
                PathMode::ParameterOnly => (draws.beta_row(d), 0.0),
                PathMode::Full => (draws.beta_row(d), sigma),
            };
            recurse(&beta, pcs, draws.n_pcs, anchors, window, draws.direction, || {
                if sd > 0.0 {
                    sd * rng.sample::<f64, _>(StandardNormal)
                } else {
                    0.0
                }
            })
        })
        .collect::<Result<_>>()?;
    let paths = DMatrix::from_fn(rows.len(), window.len(), |i, j| rows[i][j]);
    Ok(PathEnsemble {
        mode,
        start_year: window.first_year,
        paths,
    })
}

/// Per-year central credible band `(lo, hi)` from the path quantiles.
pub fn credible_bands(e: &PathEnsemble, level: f64) -> Result<Vec<(f64, f64)>> {
    if e.n_paths() < 100 {
        return Err(ReconError::InvalidArgument(format!(
            "credible bands need at least 100 paths, got {}",
            e.n_paths()
        )));
    }
    if !(0.0..=1.0).contains(&level) {
        return Err(ReconError::InvalidArgument(format!("level {level} not in [0, 1]")));
    }
    let tail = (1.0 - level) / 2.0;
    Ok(e.paths
        .column_iter()
        .map(|c| {
            let v: Vec<f64> = c.iter().copied().collect();
            (quantile(&v, tail), quantile(&v, 1.0 - tail))
        })
        .collect())
}

/// Observed-record statistics compared against the backcast paths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventConfig {
    pub record_year: i32,
    pub decade: AnalysisWindow,
    /// Length of the trailing block of the observed record.
    pub trailing_years: usize,
    pub runup_lags: Vec<usize>,
    pub loess_span: f64,
}

impl Default for EventConfig {
    fn default() -> Self {
        Self {
            record_year: 1998,
            decade: AnalysisWindow {
                first_year: 1997,
                last_year: 2006,
            },
            trailing_years: 30,
            runup_lags: vec![10, 30, 60],
            loess_span: 0.33,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventTable {
    /// Share of paths whose warmest pre-instrumental year is below the
    /// observed record year.
    pub p_warmest_year: f64,
    /// Same for the observed decade mean against every rolling decade.
    pub p_warmest_decade: f64,
    /// Same for the trailing block mean against rolling blocks of that length.
    pub p_warmest_trailing: f64,
    /// Per lag k: share of paths containing a run-up at least as large as
    /// the observed one over the last k years.
    pub p_larger_runup: Vec<(usize, f64)>,
    pub observed_year: f64,
    pub observed_decade: f64,
    pub observed_trailing: f64,
    pub observed_runup: Vec<(usize, f64)>,
    /// Path years compared (those before the observed record).
    pub compared: AnalysisWindow,
}

fn max_rolling_mean(v: &[f64], w: usize) -> f64 {
    if w == 0 || w > v.len() {
        return f64::NAN;
    }
    let mut sum: f64 = v[..w].iter().sum();
    let mut best = sum;
    for i in w..v.len() {
        sum += v[i] - v[i - w];
        best = best.max(sum);
    }
    best / w as f64
}

/// Posterior probabilities of level and run-up events.
///
/// Level statistics of the observed record are compared with the maxima of
/// the matching rolling statistics of each path over the years before the
/// record begins. Run-ups are differences `s_t − s_{t−k}` of a loess smooth:
/// of the observed record at its final year, and of each whole path at every
/// pre-record year `t` with `t − k` inside the path.
pub fn event_probabilities(e: &PathEnsemble, observed: &TimeSeries, cfg: &EventConfig) -> Result<EventTable> {
    let pw = e.window();
    let obs = observed.dense()?;
    let os = observed.span();
    if !(os.first_year > pw.first_year && os.first_year <= pw.last_year + 1) {
        return Err(ReconError::InvalidArgument(format!(
            "observed record {os} does not follow on from the paths {pw}"
        )));
    }
    let compared = AnalysisWindow::new(pw.first_year, os.first_year - 1)?;
    let nc = compared.len();
    let observed_year = observed.get(cfg.record_year).ok_or_else(|| {
        ReconError::InvalidArgument(format!("record year {} not observed", cfg.record_year))
    })?;
    let observed_decade = mean(&observed.complete_values(&cfg.decade)?);
    if cfg.trailing_years == 0 || cfg.trailing_years > obs.len() {
        return Err(ReconError::InvalidArgument("trailing block longer than the record".into()));
    }
    let observed_trailing = mean(&obs[obs.len() - cfg.trailing_years..]);
    let dl = cfg.decade.len();
    if dl > nc || cfg.trailing_years > nc {
        return Err(ReconError::InvalidArgument("comparison span shorter than the rolling blocks".into()));
    }

    let obs_smooth = LoessOperator::equispaced(obs.len(), cfg.loess_span)?.apply(&obs);
    let mut observed_runup = Vec::new();
    for &k in &cfg.runup_lags {
        if k == 0 || k >= obs.len() || k >= nc {
            return Err(ReconError::InvalidArgument(format!("run-up lag {k} too long")));
        }
        let last = obs_smooth.len() - 1;
        observed_runup.push((k, obs_smooth[last] - obs_smooth[last - k]));
    }
    let path_loess = LoessOperator::equispaced(pw.len(), cfg.loess_span)?;

    let per_path: Vec<(bool, bool, bool, Vec<bool>)> = (0..e.n_paths())
        .into_par_iter()
        .map(|i| {
            let path: Vec<f64> = e.paths.row(i).iter().copied().collect();
            let pre = &path[..nc];
            let max_year = pre.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let year = observed_year > max_year;
            let decade = observed_decade > max_rolling_mean(pre, dl);
            let trailing = observed_trailing > max_rolling_mean(pre, cfg.trailing_years);
            let s = path_loess.apply(&path);
            let runups = observed_runup
                .iter()
                .map(|&(k, obs_d)| (k..nc).map(|t| s[t] - s[t - k]).fold(f64::NEG_INFINITY, f64::max) >= obs_d)
                .collect();
            (year, decade, trailing, runups)
        })
        .collect();
    let n = per_path.len() as f64;
    let frac = |f: &dyn Fn(&(bool, bool, bool, Vec<bool>)) -> bool| per_path.iter().filter(|p| f(p)).count() as f64 / n;
    Ok(EventTable {
        p_warmest_year: frac(&|p| p.0),
        p_warmest_decade: frac(&|p| p.1),
        p_warmest_trailing: frac(&|p| p.2),
        p_larger_runup: observed_runup
            .iter()
            .enumerate()
            .map(|(j, &(k, _))| (k, frac(&|p| p.3[j])))
            .collect(),
        observed_year,
        observed_decade,
        observed_trailing,
        observed_runup,
        compared,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ValidationBlock {
    /// Fit on the later years, backcast the first 30.
    First30,
    /// Fit the mirrored model on the earlier years, forecast the last 30.
    Last30,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NullComparison {
    pub label: String,
    /// Share of pseudo-proxy refits with a strictly lower block RMSE.
    pub pvalue: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HoldoutValidation {
    pub block: ValidationBlock,
    pub holdout: AnalysisWindow,
    pub rmse: f64,
    pub prediction: TimeSeries,
    pub nulls: Vec<NullComparison>,
}

/// First- or last-block validation over `instrumental`. The model is fit on
/// the 30-year complement and predicts the block by recursion from the two
/// observed years next to it. Each null class refits PC regression on the
/// leading `cfg.n_pcs` components of pseudo-proxy matrices with the real
/// proxies' width and scores the same block.
#[allow(clippy::too_many_arguments)]
pub fn holdout_validate(
    cfg: &BayesConfig,
    pcs: &PcTable,
    y: &TimeSeries,
    instrumental: &AnalysisWindow,
    n_proxies: usize,
    block: ValidationBlock,
    nulls: &[PseudoProxyClass],
    null_reps: usize,
    seed: u64,
) -> Result<HoldoutValidation> {
    let n = instrumental.len();
    if n < 60 {
        return Err(ReconError::InvalidArgument("validation needs at least 60 instrumental years".into()));
    }
    let (holdout, train, direction, block_index) = match block {
        ValidationBlock::First30 => (
            AnalysisWindow::new(instrumental.first_year, instrumental.first_year + 29)?,
            AnalysisWindow::new(instrumental.first_year + 30, instrumental.last_year)?,
            Direction::Backward,
            0,
        ),
        ValidationBlock::Last30 => (
            AnalysisWindow::new(instrumental.last_year - 29, instrumental.last_year)?,
            AnalysisWindow::new(instrumental.first_year, instrumental.last_year - 30)?,
            Direction::Forward,
            n - 30,
        ),
    };
    let design = BayesDesign::new(pcs, y, &train, cfg.n_pcs, direction)?;
    let draws = gibbs_sample(&design, &BayesConfig { seed, ..*cfg })?;
    let anchors = Anchors::from_series(y, &holdout, direction)?;
    let prediction = backcast_mean(&draws, pcs, anchors, &holdout)?;
    let actual = y.complete_values(&holdout)?;
    let model_rmse = rmse(&prediction.dense()?, &actual)?;

    let y_inst = y.window(instrumental)?;
    let scheme = BlockScheme::new(30, Scoring::FullBlock, n)?;
    let spec = ModelSpec::PcRegression { k: cfg.n_pcs };
    let nulls = nulls
        .iter()
        .enumerate()
        .map(|(i, class)| {
            let r = pseudo_block_rmses_for(
                spec,
                class,
                &y_inst,
                n_proxies,
                &scheme,
                block_index,
                null_reps,
                crate::rng::derive_seed(seed, &[1, i as u64]),
                &ZooOptions::default(),
            )?;
            Ok(NullComparison {
                label: class.label(),
                pvalue: crate::harness::pvalue_from_nulls(model_rmse, &r),
            })
        })
        .collect::<Result<_>>()?;
    Ok(HoldoutValidation {
        block,
        holdout,
        rmse: model_rmse,
        prediction,
        nulls,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(n: usize, k: usize) -> PcTable {
        PcTable {
            start_year: 0,
            scores: DMatrix::from_fn(n, k, |i, j| (((i + 1) * (j + 2) * 7919) % 101) as f64 / 50.0 - 1.0),
        }
    }

    fn draws_at(beta: Vec<f64>, sigma: f64, n_pcs: usize, copies: usize) -> PosteriorDraws {
        let p = beta.len();
        PosteriorDraws {
            beta: DMatrix::from_fn(copies, p, |_, j| beta[j]),
            sigma: vec![sigma; copies],
            chains: 1,
            direction: Direction::Backward,
            n_pcs,
            diagnostics: Diagnostics {
                ess: vec![],
                rhat: vec![],
                flagged: false,
            },
        }
    }

    #[test]
    fn constant_and_propagation_cases() {
        let pcs = table(20, 2);
        let w = AnalysisWindow::new(0, 17).unwrap();
        let a = Anchors { near: 0.7, far: -0.2 };
        let flat = backcast_mean(&draws_at(vec![0.3, 0.0, 0.0, 0.0, 0.0], 0.0, 2, 1), &pcs, a, &w).unwrap();
        assert!(flat.dense().unwrap().iter().all(|&v| v == 0.3));
        let prop = backcast_mean(&draws_at(vec![0.0, 0.0, 0.0, 1.0, 0.0], 0.0, 2, 1), &pcs, a, &w).unwrap();
        assert!(prop.dense().unwrap().iter().all(|&v| v == 0.7));
    }

    #[test]
    fn recursion_oracle() {
        let pcs = table(30, 3);
        let beta = vec![0.1, 0.5, -0.2, 0.3, 0.6, -0.25];
        let w = AnalysisWindow::new(5, 27).unwrap();
        let a = Anchors { near: 1.0, far: 0.5 };
        let got = backcast_mean(&draws_at(beta.clone(), 0.0, 3, 1), &pcs, a, &w).unwrap();
        // Direct loop over a year-indexed map.
        let mut vals = std::collections::HashMap::new();
        vals.insert(28, 1.0);
        vals.insert(29, 0.5);
        for t in (5..=27).rev() {
            let r = t as usize;
            let v = beta[0]
                + (0..3).map(|j| beta[j + 1] * pcs.scores[(r, j)]).sum::<f64>()
                + beta[4] * vals[&(t + 1)]
                + beta[5] * vals[&(t + 2)];
            vals.insert(t, v);
        }
        for t in 5..=27 {
            assert!((got.get(t).unwrap() - vals[&t]).abs() < 1e-12);
        }
    }

    #[test]
    fn point_mass_paths_match_mean() {
        let pcs = table(40, 2);
        let d = draws_at(vec![0.2, 0.3, -0.1, 0.5, 0.2], 0.0, 2, 120);
        let w = AnalysisWindow::new(0, 37).unwrap();
        let a = Anchors { near: 0.4, far: 0.1 };
        let m = backcast_mean(&d, &pcs, a, &w).unwrap().dense().unwrap();
        for mode in [PathMode::ParameterOnly, PathMode::Full, PathMode::ResidualOnly] {
            let e = backcast_paths(&d, &pcs, a, &w, mode, 3).unwrap();
            assert_eq!(e.n_paths(), 120);
            for i in 0..e.n_paths() {
                for (j, v) in m.iter().enumerate() {
                    assert_eq!(e.paths[(i, j)], *v);
                }
            }
            let bands = credible_bands(&e, 0.95).unwrap();
            assert!(bands.iter().all(|(lo, hi)| lo == hi));
        }
    }

    #[test]
    fn bands_need_paths_and_level_one_is_envelope() {
        let e = PathEnsemble {
            mode: PathMode::Full,
            start_year: 0,
            paths: DMatrix::from_fn(100, 3, |i, j| (i * (j + 1)) as f64),
        };
        let b = credible_bands(&e, 1.0).unwrap();
        assert_eq!(b[2], (0.0, 297.0));
        let small = PathEnsemble {
            paths: DMatrix::zeros(99, 3),
            ..e
        };
        assert!(credible_bands(&small, 0.95).is_err());
    }

    #[test]
    fn conditional_matches_ridge_closed_form() {
        let x = DMatrix::from_fn(25, 4, |i, j| ((i * 3 + j * 5) % 7) as f64 - 3.0 + if j == 0 { 10.0 } else { 0.0 });
        let y: Vec<f64> = (0..25).map(|i| (i as f64 * 0.37).sin()).collect();
        let (s2, v) = (0.3, 1000.0);
        let (m, cov) = beta_conditional(&x, &y, s2, v).unwrap();
        // Ridge form: (XᵀX + (σ²/v) I)⁻¹ Xᵀy and σ² (XᵀX + (σ²/v) I)⁻¹.
        let a = x.transpose() * &x + DMatrix::identity(4, 4) * (s2 / v);
        let ainv = a.try_inverse().unwrap();
        let m2 = &ainv * x.transpose() * DVector::from_column_slice(&y);
        let c2 = ainv * s2;
        assert!((m - m2).amax() < 1e-8);
        assert!((cov - c2).amax() < 1e-8);
    }

    #[test]
    fn event_levels_all_below() {
        let e = PathEnsemble {
            mode: PathMode::Full,
            start_year: 0,
            paths: DMatrix::from_fn(5, 200, |i, j| -5.0 - i as f64 - 0.001 * j as f64),
        };
        let obs = TimeSeries::from_values(150, (0..80).map(|i| i as f64 * 0.01).collect()).unwrap();
        let cfg = EventConfig {
            record_year: 200,
            decade: AnalysisWindow::new(220, 229).unwrap(),
            trailing_years: 30,
            runup_lags: vec![10],
            loess_span: 0.33,
        };
        let t = event_probabilities(&e, &obs, &cfg).unwrap();
        assert_eq!((t.p_warmest_year, t.p_warmest_decade, t.p_warmest_trailing), (1.0, 1.0, 1.0));
        assert_eq!(t.p_larger_runup, vec![(10, 0.0)]);
        assert_eq!(t.compared, AnalysisWindow::new(0, 149).unwrap());
    }

    #[test]
    fn diagnostics_on_iid_draws() {
        let mut rng = substream(4, &[]);
        let chains: Vec<Vec<f64>> = (0..4)
            .map(|_| (0..2000).map(|_| rng.sample::<f64, _>(StandardNormal)).collect())
            .collect();
        let r = split_rhat(&chains);
        assert!((r - 1.0).abs() < 0.01, "{r}");
        let ess = effective_sample_size(&chains[0]);
        assert!(ess > 1500.0 && ess < 2600.0, "{ess}");
    }
}
