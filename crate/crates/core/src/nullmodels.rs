//! Temperature-only baselines and signal-free benchmarks: exact-likelihood
//! ARMA fitting and forecasting, pseudo-proxy generators, and the random
//! walk spurious-correlation experiment.

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{standardize, ProxyMatrix, TimeSeries};
use crate::error::{ReconError, Result};
use crate::numerics::{mean, ols_fit, pearson};
use crate::optim::Bfgs;
use crate::rng::{substream, Rng};

/// AR(1) path `x_t = φ x_{t−1} + ε_t` with unit innovations. With
/// `stationary`, `x_1 ~ N(0, 1/(1 − φ²))`; otherwise `x_0 = 0`.
pub(crate) fn ar1_path(rng: &mut Rng, phi: f64, n: usize, stationary: bool) -> Vec<f64> {
    let mut out = Vec::with_capacity(n);
    let mut prev = 0.0;
    for t in 0..n {
        let e: f64 = StandardNormal.sample(rng);
        let x = if t == 0 && stationary {
            e / (1.0 - phi * phi).sqrt()
        } else {
            phi * prev + e
        };
        out.push(x);
        prev = x;
    }
    out
}

/// Lag-1 sample autocorrelation of the demeaned series, clamped to ±0.999.
pub fn fit_ar1(s: &TimeSeries) -> Result<f64> {
    let x = s.dense()?;
    ar1_coefficient(&x)
}

pub fn ar1_coefficient(x: &[f64]) -> Result<f64> {
    if x.len() < 3 {
        return Err(ReconError::Shape("AR(1) fit needs at least 3 values".into()));
    }
    let m = mean(x);
    let denom: f64 = x.iter().map(|v| (v - m).powi(2)).sum();
    if !(denom > 0.0) {
        return Err(ReconError::ZeroVariance);
    }
    let num: f64 = x.windows(2).map(|w| (w[0] - m) * (w[1] - m)).sum();
    Ok((num / denom).clamp(-0.999, 0.999))
}

/// Family of signal-free pseudo-proxies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PseudoProxyClass {
    WhiteNoise,
    Ar1 { phi: f64 },
    /// One AR(1) coefficient per generated series.
    EmpiricalAr1 { phis: Vec<f64> },
    BrownianMotion,
}

impl PseudoProxyClass {
    pub fn validate(&self) -> Result<()> {
        match self {
            PseudoProxyClass::Ar1 { phi } if !(0.0..1.0).contains(phi) => Err(ReconError::InvalidArgument(
                format!("AR1 pseudo-proxy phi {phi} not in [0, 1)"),
            )),
            PseudoProxyClass::EmpiricalAr1 { phis } => match phis.iter().find(|p| !(p.abs() < 1.0)) {
                Some(p) => Err(ReconError::InvalidArgument(format!(
                    "empirical AR1 coefficient {p} not in (-1, 1)"
                ))),
                None => Ok(()),
            },
            _ => Ok(()),
        }
    }

    pub fn label(&self) -> String {
        match self {
            PseudoProxyClass::WhiteNoise => "white".into(),
            PseudoProxyClass::Ar1 { phi } => format!("ar1_{phi}"),
            PseudoProxyClass::EmpiricalAr1 { .. } => "empirical".into(),
            PseudoProxyClass::BrownianMotion => "brownian".into(),
        }
    }

    fn series(&self, j: usize, n: usize, rng: &mut Rng) -> Vec<f64> {
        match self {
            PseudoProxyClass::WhiteNoise => ar1_path(rng, 0.0, n, true),
            PseudoProxyClass::Ar1 { phi } => ar1_path(rng, *phi, n, true),
            PseudoProxyClass::EmpiricalAr1 { phis } => ar1_path(rng, phis[j], n, true),
            PseudoProxyClass::BrownianMotion => ar1_path(rng, 1.0, n, false),
        }
    }
}

/// Anything that can stand in for a proxy matrix in a null experiment.
/// Generators receive only shapes and seeds, never temperature data.
pub trait PseudoSource: Sync {
    fn generate(&self, start_year: i32, n_years: usize, n_series: usize, seed: u64) -> Result<ProxyMatrix>;
}

impl PseudoSource for PseudoProxyClass {
    fn generate(&self, start_year: i32, n_years: usize, n_series: usize, seed: u64) -> Result<ProxyMatrix> {
        gen_pseudo(self, start_year, n_years, n_series, seed)
    }
}

/// Raw (unstandardized) pseudo-proxy columns; column `j` draws from
/// `substream(seed, [j])`.
pub fn gen_pseudo_raw(class: &PseudoProxyClass, n_years: usize, n_series: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    class.validate()?;
    if n_years < 2 {
        return Err(ReconError::InvalidArgument("pseudo-proxies need at least 2 years".into()));
    }
    if let PseudoProxyClass::EmpiricalAr1 { phis } = class {
        if phis.len() != n_series {
            return Err(ReconError::Shape(format!(
                "{} empirical AR1 coefficients for {n_series} series",
                phis.len()
            )));
        }
    }
    Ok((0..n_series)
        .map(|j| class.series(j, n_years, &mut substream(seed, &[j as u64])))
        .collect())
}

/// Pseudo-proxy matrix, each column standardized over the full span.
pub fn gen_pseudo(
    class: &PseudoProxyClass,
    start_year: i32,
    n_years: usize,
    n_series: usize,
    seed: u64,
) -> Result<ProxyMatrix> {
    let raw = gen_pseudo_raw(class, n_years, n_series, seed)?;
    let names = (0..n_series).map(|j| format!("pseudo_{:04}", j + 1)).collect();
    let m = ProxyMatrix::new(start_year, names, raw.into_iter().map(|c| c.into_iter().map(Some).collect()).collect())?;
    standardize(&m, &m.span())
}

/// Gaussian ARMA(p, q) with mean, fitted by exact maximum likelihood.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmaModel {
    pub p: usize,
    pub q: usize,
    pub ar: Vec<f64>,
    pub ma: Vec<f64>,
    pub mean: f64,
    pub sigma2: f64,
    pub loglik: f64,
    pub aic: f64,
}

pub const MAX_ORDER: usize = 5;

/// Maps unconstrained values to partial autocorrelations in (−1, 1) and on
/// to the coefficients of a stable polynomial `1 − Σ φ_j z^j`.
fn pacf_to_coefficients(raw: &[f64]) -> Vec<f64> {
    let mut phi: Vec<f64> = Vec::with_capacity(raw.len());
    for (k, r) in raw.iter().map(|u| u.tanh()).enumerate() {
        let prev = phi.clone();
        for j in 0..k {
            phi[j] = prev[j] - r * prev[k - 1 - j];
        }
        phi.push(r);
    }
    phi
}

/// Inverse of [`pacf_to_coefficients`]; `None` if the polynomial is not stable.
fn coefficients_to_pacf(phi: &[f64]) -> Option<Vec<f64>> {
    let mut cur = phi.to_vec();
    let mut raw = vec![0.0; phi.len()];
    for k in (0..phi.len()).rev() {
        let r = cur[k];
        if !(r.abs() < 1.0) {
            return None;
        }
        raw[k] = r.atanh();
        let prev: Vec<f64> = (0..k).map(|j| (cur[j] + r * cur[k - 1 - j]) / (1.0 - r * r)).collect();
        cur = prev;
    }
    Some(raw)
}

/// Harvey state-space form: state dimension `max(p, q + 1)`.
struct StateSpace {
    r: usize,
    t: DMatrix<f64>,
    rvec: DVector<f64>,
}

impl StateSpace {
    fn new(ar: &[f64], ma: &[f64]) -> Self {
        let r = ar.len().max(ma.len() + 1);
        let mut t = DMatrix::zeros(r, r);
        for (i, a) in ar.iter().enumerate() {
            t[(i, 0)] = *a;
        }
        for i in 0..r - 1 {
            t[(i, i + 1)] = 1.0;
        }
        let mut rvec = DVector::zeros(r);
        rvec[0] = 1.0;
        for (i, m) in ma.iter().enumerate() {
            rvec[i + 1] = *m;
        }
        Self { r, t, rvec }
    }

    /// Stationary state covariance (unit innovation variance): P = TPTᵀ + RRᵀ.
    /// Solved over the r(r+1)/2 distinct entries using the companion form.
    fn initial_covariance(&self) -> Option<DMatrix<f64>> {
        let r = self.r;
        let phi: Vec<f64> = (0..r).map(|i| self.t[(i, 0)]).collect();
        let m = r * (r + 1) / 2;
        let idx = |i: usize, j: usize| {
            let (i, j) = if i <= j { (i, j) } else { (j, i) };
            i * r - i * (i + 1) / 2 + j
        };
        let mut a = DMatrix::<f64>::zeros(m, m);
        let mut b = DVector::<f64>::zeros(m);
        for i in 0..r {
            for j in i..r {
                let row = idx(i, j);
                a[(row, row)] += 1.0;
                a[(row, idx(0, 0))] -= phi[i] * phi[j];
                if j + 1 < r {
                    a[(row, idx(0, j + 1))] -= phi[i];
                }
                if i + 1 < r {
                    a[(row, idx(i + 1, 0))] -= phi[j];
                }
                if i + 1 < r && j + 1 < r {
                    a[(row, idx(i + 1, j + 1))] -= 1.0;
                }
                b[row] = self.rvec[i] * self.rvec[j];
            }
        }
        let u = a.lu().solve(&b)?;
        let p = DMatrix::from_fn(r, r, |i, j| u[idx(i, j)]);
        if p.iter().all(|v| v.is_finite()) && p[(0, 0)] > 0.0 {
            Some(p)
        } else {
            None
        }
    }
}

struct FilterOutput {
    sum_log_f: f64,
    sum_v2_f: f64,
    n: usize,
    /// Predicted state for the period after the last observation.
    next_state: DVector<f64>,
}

/// Kalman filter with unit innovation variance on demeaned data. Uses the
/// companion structure of `T` so each step costs O(r²) before the
/// covariance reaches its steady state and O(r) after.
fn kalman(ss: &StateSpace, y: &[f64]) -> Option<FilterOutput> {
    let r = ss.r;
    let p0 = ss.initial_covariance()?;
    let phi: Vec<f64> = (0..r).map(|i| ss.t[(i, 0)]).collect();
    let rv: Vec<f64> = ss.rvec.iter().copied().collect();
    let mut p: Vec<f64> = (0..r * r).map(|k| p0[(k / r, k % r)]).collect();
    let mut m = vec![0.0; r * r];
    let mut a = vec![0.0; r];
    let mut k = vec![0.0; r];
    let (mut sum_log_f, mut sum_v2_f) = (0.0, 0.0);
    let mut steady = false;
    for &obs in y {
        let v = obs - a[0];
        let f = p[0];
        if !(f > 0.0) {
            return None;
        }
        sum_log_f += f.ln();
        sum_v2_f += v * v / f;
        if !steady {
            // m = T P
            for i in 0..r {
                for j in 0..r {
                    let next = if i + 1 < r { p[(i + 1) * r + j] } else { 0.0 };
                    m[i * r + j] = phi[i] * p[j] + next;
                }
            }
            for i in 0..r {
                k[i] = m[i * r] / f;
            }
            // P = m Tᵀ + R Rᵀ − m e₁ e₁ᵀ mᵀ / f
            let mut dev = 0.0_f64;
            for i in 0..r {
                for j in 0..r {
                    let next = if j + 1 < r { m[i * r + j + 1] } else { 0.0 };
                    let val = m[i * r] * phi[j] + next + rv[i] * rv[j] - m[i * r] * m[j * r] / f;
                    dev = dev.max((val - rv[i] * rv[j]).abs());
                    p[i * r + j] = val;
                }
            }
            if dev < 1e-11 {
                for i in 0..r {
                    for j in 0..r {
                        p[i * r + j] = rv[i] * rv[j];
                    }
                }
                steady = true;
            }
        } else {
            // With P = R Rᵀ, f = 1 and K = T R.
            for i in 0..r {
                k[i] = phi[i] * rv[0] + if i + 1 < r { rv[i + 1] } else { 0.0 };
            }
        }
        let a0 = a[0];
        for i in 0..r {
            let next = if i + 1 < r { a[i + 1] } else { 0.0 };
            a[i] = phi[i] * a0 + next + k[i] * v;
        }
    }
    Some(FilterOutput {
        sum_log_f,
        sum_v2_f,
        n: y.len(),
        next_state: DVector::from_vec(a),
    })
}

impl FilterOutput {
    fn sigma2(&self) -> f64 {
        self.sum_v2_f / self.n as f64
    }

    /// Gaussian log-likelihood with σ² concentrated out.
    fn concentrated_loglik(&self) -> f64 {
        let n = self.n as f64;
        let s2 = self.sigma2();
        -0.5 * n * ((2.0 * std::f64::consts::PI).ln() + s2.ln() + 1.0) - 0.5 * self.sum_log_f
    }
}

/// Exact Gaussian log-likelihood of `y` under the given parameters.
pub fn arma_loglik(y: &[f64], ar: &[f64], ma: &[f64], mean: f64, sigma2: f64) -> Option<f64> {
    let ss = StateSpace::new(ar, ma);
    let centered: Vec<f64> = y.iter().map(|v| v - mean).collect();
    let out = kalman(&ss, &centered)?;
    let n = y.len() as f64;
    Some(
        -0.5 * n * (2.0 * std::f64::consts::PI).ln()
            - 0.5 * n * sigma2.ln()
            - 0.5 * out.sum_log_f
            - 0.5 * out.sum_v2_f / sigma2,
    )
}

/// Largest inverse-root modulus of `1 − Σ c_j z^j` (≥ 1 means unstable).
fn max_inverse_root(c: &[f64]) -> f64 {
    let k = c.len();
    if k == 0 {
        return 0.0;
    }
    let mut comp = DMatrix::zeros(k, k);
    for j in 0..k {
        comp[(0, j)] = c[j];
    }
    for i in 1..k {
        comp[(i, i - 1)] = 1.0;
    }
    comp.complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

/// Hannan–Rissanen style starting values: long AR residuals, then OLS on
/// lagged values and lagged residuals.
fn regression_start(y: &[f64], p: usize, q: usize) -> Option<(Vec<f64>, Vec<f64>)> {
    let n = y.len();
    let long = (p + q + 2).max((n as f64).ln().ceil() as usize * 2).min(n / 4);
    if long == 0 || n < long + p.max(q) + p + q + 10 {
        return None;
    }
    let lagged = |order: usize| -> DMatrix<f64> {
        DMatrix::from_fn(n - order, order, |i, j| y[order + i - j - 1])
    };
    let resid: Vec<f64> = if q > 0 {
        let fit = ols_fit(&lagged(long), &y[long..], false).ok()?;
        let mut e = vec![0.0; n];
        e[long..].copy_from_slice(&fit.residuals);
        e
    } else {
        vec![0.0; n]
    };
    let start = long.max(p).max(q) + if q > 0 { q } else { 0 };
    if n <= start + p + q + 2 {
        return None;
    }
    let design = DMatrix::from_fn(n - start, p + q, |i, j| {
        let t = start + i;
        if j < p {
            y[t - j - 1]
        } else {
            resid[t - (j - p) - 1]
        }
    });
    let fit = ols_fit(&design, &y[start..], false).ok()?;
    Some((fit.coefficients[..p].to_vec(), fit.coefficients[p..].to_vec()))
}

fn shrink_to_pacf(c: &[f64]) -> Vec<f64> {
    let mut scale: f64 = 1.0;
    loop {
        let scaled: Vec<f64> = c.iter().enumerate().map(|(j, v)| v * scale.powi(j as i32 + 1)).collect();
        if let Some(raw) = coefficients_to_pacf(&scaled) {
            if raw.iter().all(|r| r.is_finite() && r.abs() < 5.0) {
                return raw;
            }
        }
        scale *= 0.9;
        if scale < 1e-3 {
            return vec![0.0; c.len()];
        }
    }
}

/// Exact maximum likelihood ARMA(p, q) fit.
///
/// AR and MA polynomials are parameterized by partial autocorrelations so
/// every candidate is stationary and invertible; σ² is concentrated out and
/// the mean is optimized jointly. Three deterministic starts: zeros, a
/// regression-based estimate, and a fixed moderate-dependence point.
pub fn fit_arma(s: &TimeSeries, p: usize, q: usize) -> Result<ArmaModel> {
    fit_arma_values(&s.dense()?, p, q)
}

pub fn fit_arma_values(y: &[f64], p: usize, q: usize) -> Result<ArmaModel> {
    let n = y.len();
    let fail = |msg: &str| ReconError::ArmaFit { p, q, msg: msg.into() };
    if p > MAX_ORDER || q > MAX_ORDER {
        return Err(fail("orders above 5 are not supported"));
    }
    if n <= p + q + 2 {
        return Err(fail("series too short"));
    }
    let ybar = mean(y);
    let sd = (y.iter().map(|v| (v - ybar).powi(2)).sum::<f64>() / n as f64).sqrt();
    if !(sd > 0.0) {
        return Err(ReconError::ZeroVariance);
    }
    if p == 0 && q == 0 {
        let sigma2 = sd * sd;
        let nf = n as f64;
        let loglik = -0.5 * nf * ((2.0 * std::f64::consts::PI).ln() + sigma2.ln() + 1.0);
        return Ok(ArmaModel {
            p,
            q,
            ar: vec![],
            ma: vec![],
            mean: ybar,
            sigma2,
            loglik,
            aic: -2.0 * loglik + 4.0,
        });
    }

    let unpack = |x: &[f64]| -> (Vec<f64>, Vec<f64>, f64) {
        let ar = pacf_to_coefficients(&x[..p]);
        let ma: Vec<f64> = pacf_to_coefficients(&x[p..p + q]).iter().map(|v| -v).collect();
        (ar, ma, ybar + sd * x[p + q])
    };
    let objective = |x: &[f64]| -> f64 {
        let (ar, ma, mu) = unpack(x);
        let ss = StateSpace::new(&ar, &ma);
        let centered: Vec<f64> = y.iter().map(|v| (v - mu) / sd).collect();
        match kalman(&ss, &centered) {
            Some(out) if out.sigma2() > 0.0 => -out.concentrated_loglik(),
            _ => f64::INFINITY,
        }
    };

    let mut starts = vec![vec![0.0; p + q + 1]];
    if let Some((ar0, ma0)) = regression_start(y, p, q) {
        let mut x = shrink_to_pacf(&ar0);
        x.extend(shrink_to_pacf(&ma0.iter().map(|v| -v).collect::<Vec<_>>()));
        x.push(0.0);
        starts.push(x);
    }
    let mut alt: Vec<f64> = (0..p).map(|_| 0.5).collect();
    alt.extend((0..q).map(|_| -0.3));
    alt.push(0.0);
    starts.push(alt);

    let bfgs = Bfgs {
        ftol: 1e-9,
        ..Bfgs::default()
    };
    let best = starts
        .iter()
        .map(|x0| bfgs.minimize(objective, x0))
        .filter(|m| m.f.is_finite())
        .min_by(|a, b| a.f.total_cmp(&b.f))
        .ok_or_else(|| fail("likelihood not finite from any start"))?;

    let (ar, ma, mu) = unpack(&best.x);
    if max_inverse_root(&ar) > 1.0 - 1e-6 {
        return Err(fail("AR polynomial on the stationarity boundary"));
    }
    let ma_poly: Vec<f64> = ma.iter().map(|v| -v).collect();
    if max_inverse_root(&ma_poly) > 1.0 - 1e-6 {
        return Err(fail("MA polynomial on the invertibility boundary"));
    }
    let ss = StateSpace::new(&ar, &ma);
    let centered: Vec<f64> = y.iter().map(|v| v - mu).collect();
    let out = kalman(&ss, &centered).ok_or_else(|| fail("filter failed at optimum"))?;
    let sigma2 = out.sigma2();
    let loglik = out.concentrated_loglik();
    Ok(ArmaModel {
        p,
        q,
        ar,
        ma,
        mean: mu,
        sigma2,
        loglik,
        aic: -2.0 * loglik + 2.0 * (p + q + 2) as f64,
    })
}

/// Minimum-AIC model over `0..=p_max × 0..=q_max`. Failed fits are skipped.
pub fn arma_select(s: &TimeSeries, p_max: usize, q_max: usize) -> Result<ArmaModel> {
    arma_select_values(&s.dense()?, p_max, q_max)
}

pub fn arma_select_values(y: &[f64], p_max: usize, q_max: usize) -> Result<ArmaModel> {
    if p_max > MAX_ORDER || q_max > MAX_ORDER {
        return Err(ReconError::InvalidArgument("ARMA orders are limited to 5".into()));
    }
    let orders: Vec<(usize, usize)> = (0..=p_max)
        .flat_map(|p| (0..=q_max).map(move |q| (p, q)))
        .collect();
    let fits: Vec<Result<ArmaModel>> = orders
        .par_iter()
        .map(|&(p, q)| fit_arma_values(y, p, q))
        .collect();
    let mut best: Option<ArmaModel> = None;
    let mut last_err = None;
    for fit in fits {
        match fit {
            Ok(m) => {
                if best.as_ref().is_none_or(|b| m.aic < b.aic) {
                    best = Some(m);
                }
            }
            Err(e) => {
                log::debug!("skipping failed ARMA fit: {e}");
                last_err = Some(e);
            }
        }
    }
    best.ok_or_else(|| last_err.unwrap_or_else(|| ReconError::Numerical("no ARMA fits".into())))
}

/// Mean forecasts `h` steps past the end of `history`.
pub fn arma_forecast(m: &ArmaModel, history: &TimeSeries, h: usize) -> Result<Vec<f64>> {
    arma_forecast_values(m, &history.dense()?, h)
}

pub fn arma_forecast_values(m: &ArmaModel, history: &[f64], h: usize) -> Result<Vec<f64>> {
    let ss = StateSpace::new(&m.ar, &m.ma);
    let centered: Vec<f64> = history.iter().map(|v| v - m.mean).collect();
    let out = kalman(&ss, &centered).ok_or_else(|| ReconError::ArmaFit {
        p: m.p,
        q: m.q,
        msg: "filter failed on forecast history".into(),
    })?;
    let mut a = out.next_state;
    let mut fc = Vec::with_capacity(h);
    for _ in 0..h {
        fc.push(m.mean + a[0]);
        a = &ss.t * a;
    }
    Ok(fc)
}

/// Mean "forecasts" for the `h` years preceding `history`, from the
/// time-reversed series (Gaussian ARMA is time-reversible). Ordered from
/// earliest to latest year.
pub fn arma_backcast_values(m: &ArmaModel, history: &[f64], h: usize) -> Result<Vec<f64>> {
    let rev: Vec<f64> = history.iter().rev().copied().collect();
    let mut fc = arma_forecast_values(m, &rev, h)?;
    fc.reverse();
    Ok(fc)
}

/// Which pair of independent series the spurious-correlation experiment draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PairKind {
    RandomWalk,
    WhiteNoise,
}

/// Pearson correlations of `reps` independent pairs of length-`n` series.
pub fn spurious_corr_experiment(n: usize, reps: usize, kind: PairKind, seed: u64) -> Result<Vec<f64>> {
    if n < 3 {
        return Err(ReconError::InvalidArgument("series length must be at least 3".into()));
    }
    let phi = match kind {
        PairKind::RandomWalk => 1.0,
        PairKind::WhiteNoise => 0.0,
    };
    let stationary = kind == PairKind::WhiteNoise;
    Ok((0..reps)
        .into_par_iter()
        .map(|r| {
            let mut rng = substream(seed, &[r as u64]);
            let a = ar1_path(&mut rng, phi, n, stationary);
            let b = ar1_path(&mut rng, phi, n, stationary);
            pearson(&a, &b)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pacf_round_trip() {
        let raw = [0.4, -1.2, 0.7];
        let phi = pacf_to_coefficients(&raw);
        let back = coefficients_to_pacf(&phi).unwrap();
        for (a, b) in raw.iter().zip(&back) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(max_inverse_root(&phi) < 1.0);
        assert!(coefficients_to_pacf(&[1.2]).is_none());
    }

    #[test]
    fn alternating_series_clamps() {
        let s = TimeSeries::from_values(0, (0..5000).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect()).unwrap();
        assert_eq!(fit_ar1(&s).unwrap(), -0.999);
        let flat = TimeSeries::from_values(0, vec![2.0; 10]).unwrap();
        assert_eq!(fit_ar1(&flat), Err(ReconError::ZeroVariance));
    }

    #[test]
    fn white_noise_equals_ar1_zero() {
        let a = gen_pseudo(&PseudoProxyClass::WhiteNoise, 1850, 40, 3, 5).unwrap();
        let b = gen_pseudo(&PseudoProxyClass::Ar1 { phi: 0.0 }, 1850, 40, 3, 5).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn pseudo_preconditions() {
        assert!(gen_pseudo(&PseudoProxyClass::WhiteNoise, 0, 1, 3, 5).is_err());
        let e = PseudoProxyClass::EmpiricalAr1 { phis: vec![0.1, 0.2] };
        assert!(gen_pseudo(&e, 0, 10, 3, 5).is_err());
        assert!(gen_pseudo(&PseudoProxyClass::Ar1 { phi: 1.0 }, 0, 10, 3, 5).is_err());
    }

    #[test]
    fn white_noise_model_closed_form() {
        let y: Vec<f64> = (0..40).map(|i| ((i * 37) % 11) as f64 * 0.1).collect();
        let m = fit_arma_values(&y, 0, 0).unwrap();
        let n = y.len() as f64;
        let mu = mean(&y);
        let s2 = y.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / n;
        assert!((m.mean - mu).abs() < 1e-12);
        assert!((m.sigma2 - s2).abs() < 1e-12);
        let ll: f64 = y
            .iter()
            .map(|v| -0.5 * (2.0 * std::f64::consts::PI * s2).ln() - (v - mu).powi(2) / (2.0 * s2))
            .sum();
        assert!((m.loglik - ll).abs() < 1e-8);
        assert!((arma_loglik(&y, &[], &[], mu, s2).unwrap() - ll).abs() < 1e-8);
        assert!((m.aic - (-2.0 * ll + 4.0)).abs() < 1e-8);
        let fc = arma_forecast_values(&m, &y, 5).unwrap();
        assert!(fc.iter().all(|v| (v - mu).abs() < 1e-12));
    }

    /// Dense multivariate normal density with autocovariances from a long
    /// ψ-weight expansion.
    fn toeplitz_loglik(y: &[f64], ar: &[f64], ma: &[f64], mu: f64, s2: f64) -> f64 {
        let m = 4000;
        let mut psi = vec![0.0; m];
        psi[0] = 1.0;
        for j in 1..m {
            let mut v = if j <= ma.len() { ma[j - 1] } else { 0.0 };
            for (i, a) in ar.iter().enumerate() {
                if j > i {
                    v += a * psi[j - i - 1];
                }
            }
            psi[j] = v;
        }
        let n = y.len();
        let gamma: Vec<f64> = (0..n).map(|h| s2 * (0..m - h).map(|j| psi[j] * psi[j + h]).sum::<f64>()).collect();
        let cov = DMatrix::from_fn(n, n, |i, j| gamma[i.abs_diff(j)]);
        let chol = cov.cholesky().unwrap();
        let e = DVector::from_iterator(n, y.iter().map(|v| v - mu));
        let z = chol.l().solve_lower_triangular(&e).unwrap();
        let logdet: f64 = chol.l().diagonal().iter().map(|d| 2.0 * d.ln()).sum();
        -0.5 * (n as f64 * (2.0 * std::f64::consts::PI).ln() + logdet + z.norm_squared())
    }

    #[test]
    fn kalman_matches_dense_likelihood() {
        let y: Vec<f64> = (0..30).map(|i| ((i * 7919) % 23) as f64 / 10.0 - 1.0).collect();
        for (ar, ma) in [
            (vec![0.6], vec![]),
            (vec![], vec![0.4, -0.2]),
            (vec![0.5, -0.3], vec![0.3]),
            (vec![0.2, 0.1, 0.3], vec![-0.5, 0.2]),
        ] {
            let kf = arma_loglik(&y, &ar, &ma, 0.1, 0.7).unwrap();
            let dense = toeplitz_loglik(&y, &ar, &ma, 0.1, 0.7);
            assert!((kf - dense).abs() < 1e-8, "{ar:?} {ma:?}: {kf} vs {dense}");
        }
    }

    #[test]
    fn ar1_forecast_closed_form() {
        let m = ArmaModel {
            p: 1,
            q: 0,
            ar: vec![0.5],
            ma: vec![],
            mean: 2.0,
            sigma2: 1.0,
            loglik: 0.0,
            aic: 0.0,
        };
        let hist = [1.7, 2.4, 1.9, 3.0];
        let fc = arma_forecast_values(&m, &hist, 6).unwrap();
        for (k, v) in fc.iter().enumerate() {
            assert!((v - (2.0 + 0.5_f64.powi(k as i32 + 1))).abs() < 1e-12);
        }
    }

    #[test]
    fn spurious_single_rep_in_range() {
        let c = spurious_corr_experiment(149, 1, PairKind::RandomWalk, 3).unwrap();
        assert_eq!(c.len(), 1);
        assert!(c[0].abs() <= 1.0);
        assert!(spurious_corr_experiment(2, 1, PairKind::RandomWalk, 3).is_err());
    }
}
