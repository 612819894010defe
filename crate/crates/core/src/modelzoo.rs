//! Reconstruction models behind one fit/predict/backcast interface:
//! intercept, ARMA baseline, principal-component regression, Lasso,
//! forward stepwise regression and the two-stage local-temperature models.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{AnalysisWindow, ProxyMatrix, TimeSeries};
use crate::error::{ReconError, Result};
use crate::harness::{enumerate_blocks, BlockScheme};
use crate::lasso::{lasso_cv_fit, CvConfig, LassoFit};
use crate::nullmodels::{arma_backcast_values, arma_forecast_values, arma_select_values, ArmaModel, PseudoSource};
use crate::numerics::{mean, ols_fit, principal_components, principal_components_upto, LinearFit, PCBasis};
use crate::rng::{derive_seed, substream};

/// Which covariates a stepwise or Lasso model draws from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Covariates {
    Proxies,
    ProxyPcs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelSpec {
    InterceptOnly,
    ArmaBaseline,
    PcRegression { k: usize },
    LassoOnProxies,
    LassoOnPcs { k_max: usize },
    StepwiseAic { source: Covariates },
    StepwiseBic { source: Covariates },
    TwoStageLassoLocal,
    TwoStagePc { g: usize, p: usize },
}

impl ModelSpec {
    pub fn validate(&self, n_proxies: usize) -> Result<()> {
        let bad = |msg: String| Err(ReconError::InvalidArgument(msg));
        match *self {
            ModelSpec::PcRegression { k } if k == 0 || k > n_proxies => {
                bad(format!("PC regression needs 1 <= k <= {n_proxies}, got {k}"))
            }
            ModelSpec::LassoOnPcs { k_max } if k_max == 0 => bad("k_max must be at least 1".into()),
            ModelSpec::TwoStagePc { g, p } if g == 0 || p == 0 || p > n_proxies => {
                bad(format!("two-stage PC model needs g, p >= 1 and p <= {n_proxies}"))
            }
            _ => Ok(()),
        }
    }

    pub fn needs_local(&self) -> bool {
        matches!(self, ModelSpec::TwoStageLassoLocal | ModelSpec::TwoStagePc { .. })
    }
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let src = |s: &Covariates| match s {
            Covariates::Proxies => "proxies",
            Covariates::ProxyPcs => "pcs",
        };
        match self {
            ModelSpec::InterceptOnly => write!(f, "intercept"),
            ModelSpec::ArmaBaseline => write!(f, "arma"),
            ModelSpec::PcRegression { k } => write!(f, "pc{k}"),
            ModelSpec::LassoOnProxies => write!(f, "lasso_proxies"),
            ModelSpec::LassoOnPcs { k_max } => write!(f, "lasso_pcs{k_max}"),
            ModelSpec::StepwiseAic { source } => write!(f, "stepaic_{}", src(source)),
            ModelSpec::StepwiseBic { source } => write!(f, "stepbic_{}", src(source)),
            ModelSpec::TwoStageLassoLocal => write!(f, "twostage_lasso"),
            ModelSpec::TwoStagePc { g, p } => write!(f, "twostage_pc_g{g}_p{p}"),
        }
    }
}

impl FromStr for ModelSpec {
    type Err = ReconError;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || ReconError::InvalidArgument(format!("unknown model {s:?}"));
        let num = |t: &str| t.parse::<usize>().map_err(|_| bad());
        Ok(match s {
            "intercept" => ModelSpec::InterceptOnly,
            "arma" => ModelSpec::ArmaBaseline,
            "lasso_proxies" => ModelSpec::LassoOnProxies,
            "stepaic_proxies" => ModelSpec::StepwiseAic { source: Covariates::Proxies },
            "stepaic_pcs" => ModelSpec::StepwiseAic { source: Covariates::ProxyPcs },
            "stepbic_proxies" => ModelSpec::StepwiseBic { source: Covariates::Proxies },
            "stepbic_pcs" => ModelSpec::StepwiseBic { source: Covariates::ProxyPcs },
            "twostage_lasso" => ModelSpec::TwoStageLassoLocal,
            _ => {
                if let Some(k) = s.strip_prefix("lasso_pcs") {
                    ModelSpec::LassoOnPcs { k_max: num(k)? }
                } else if let Some(rest) = s.strip_prefix("twostage_pc_g") {
                    let (g, p) = rest.split_once("_p").ok_or_else(bad)?;
                    ModelSpec::TwoStagePc { g: num(g)?, p: num(p)? }
                } else if let Some(k) = s.strip_prefix("pc") {
                    ModelSpec::PcRegression { k: num(k)? }
                } else {
                    return Err(bad());
                }
            }
        })
    }
}

/// The 27 reconstruction models compared in the backcast ensemble.
pub fn ensemble_specs(n_proxies: usize) -> Vec<ModelSpec> {
    let mut specs = vec![ModelSpec::InterceptOnly];
    specs.extend([1, 5, 10, 20].map(|k| ModelSpec::PcRegression { k }));
    specs.extend([
        ModelSpec::LassoOnProxies,
        ModelSpec::LassoOnPcs { k_max: n_proxies },
        ModelSpec::StepwiseAic { source: Covariates::Proxies },
        ModelSpec::StepwiseAic { source: Covariates::ProxyPcs },
        ModelSpec::StepwiseBic { source: Covariates::Proxies },
        ModelSpec::StepwiseBic { source: Covariates::ProxyPcs },
    ]);
    for g in [1, 5, 10, 20] {
        for p in [1, 5, 10, 20] {
            specs.push(ModelSpec::TwoStagePc { g, p });
        }
    }
    specs
}

/// Tuning settings shared by the fits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZooOptions {
    pub cv: CvConfig,
    pub arma_p_max: usize,
    pub arma_q_max: usize,
}

impl Default for ZooOptions {
    fn default() -> Self {
        Self {
            cv: CvConfig::default(),
            arma_p_max: 5,
            arma_q_max: 5,
        }
    }
}

/// Response, proxies and optional local temperatures, with the proxy
/// principal components computed once over the full proxy span.
#[derive(Debug, Clone)]
pub struct ZooData {
    y: TimeSeries,
    y_vals: Vec<f64>,
    proxies: ProxyMatrix,
    proxy_dense: DMatrix<f64>,
    pcs: PCBasis,
    /// Rows aligned with the response years.
    local: Option<DMatrix<f64>>,
}

impl ZooData {
    pub fn new(y: TimeSeries, proxies: ProxyMatrix, local: Option<&ProxyMatrix>) -> Result<Self> {
        let max = proxies.n_years().min(proxies.n_cols());
        Self::with_max_pcs(y, proxies, local, max)
    }

    /// As [`ZooData::new`], keeping at most `max_pcs` proxy components.
    pub fn with_max_pcs(y: TimeSeries, proxies: ProxyMatrix, local: Option<&ProxyMatrix>, max_pcs: usize) -> Result<Self> {
        let y_vals = y.dense()?;
        let window = y.span();
        if !proxies.span().contains_window(&window) {
            return Err(ReconError::WindowOutOfRange {
                first: window.first_year,
                last: window.last_year,
                span_first: proxies.start_year(),
                span_last: proxies.end_year(),
            });
        }
        let proxy_dense = proxies.dense_all()?;
        let pcs = principal_components_upto(&proxy_dense, max_pcs.max(1))?;
        let local = local.map(|z| z.dense(&window)).transpose()?;
        Ok(Self {
            y,
            y_vals,
            proxies,
            proxy_dense,
            pcs,
            local,
        })
    }

    pub fn y(&self) -> &TimeSeries {
        &self.y
    }

    pub fn proxies(&self) -> &ProxyMatrix {
        &self.proxies
    }

    pub fn proxy_pcs(&self) -> &PCBasis {
        &self.pcs
    }

    pub fn n_pcs(&self) -> usize {
        self.pcs.k()
    }

    pub fn has_local(&self) -> bool {
        self.local.is_some()
    }

    /// Response years.
    pub fn window(&self) -> AnalysisWindow {
        self.y.span()
    }

    fn y_index(&self, year: i32) -> Result<usize> {
        let w = self.window();
        if !w.contains(year) {
            return Err(ReconError::WindowOutOfRange {
                first: year,
                last: year,
                span_first: w.first_year,
                span_last: w.last_year,
            });
        }
        Ok((year - w.first_year) as usize)
    }

    fn proxy_index(&self, year: i32) -> Result<usize> {
        let span = self.proxies.span();
        if !span.contains(year) {
            return Err(ReconError::WindowOutOfRange {
                first: year,
                last: year,
                span_first: span.first_year,
                span_last: span.last_year,
            });
        }
        Ok((year - span.first_year) as usize)
    }

    fn response(&self, years: &[i32]) -> Result<Vec<f64>> {
        years.iter().map(|&t| Ok(self.y_vals[self.y_index(t)?])).collect()
    }

    /// Covariate rows for `years`; `k` caps the number of PC columns.
    fn design(&self, source: Covariates, k: usize, years: &[i32]) -> Result<DMatrix<f64>> {
        let rows: Vec<usize> = years.iter().map(|&t| self.proxy_index(t)).collect::<Result<_>>()?;
        let src = match source {
            Covariates::Proxies => &self.proxy_dense,
            Covariates::ProxyPcs => &self.pcs.scores,
        };
        let k = match source {
            Covariates::Proxies => src.ncols(),
            Covariates::ProxyPcs => {
                if k > src.ncols() {
                    return Err(ReconError::RankDeficient {
                        requested: k,
                        rank: src.ncols(),
                    });
                }
                k
            }
        };
        Ok(DMatrix::from_fn(rows.len(), k, |i, j| src[(rows[i], j)]))
    }

    fn local_rows(&self, years: &[i32]) -> Result<DMatrix<f64>> {
        let z = self
            .local
            .as_ref()
            .ok_or_else(|| ReconError::InvalidArgument("two-stage models need local temperatures".into()))?;
        let rows: Vec<usize> = years.iter().map(|&t| self.y_index(t)).collect::<Result<_>>()?;
        Ok(DMatrix::from_fn(rows.len(), z.ncols(), |i, j| z[(rows[i], j)]))
    }
}

/// The fitted year-to-temperature map.
#[derive(Debug, Clone, PartialEq)]
pub enum FittedMap {
    Constant(f64),
    Arma {
        model: ArmaModel,
        segment: AnalysisWindow,
        history: Vec<f64>,
    },
    Linear {
        source: Covariates,
        columns: Vec<usize>,
        fit: LinearFit,
    },
    Lasso {
        source: Covariates,
        k: usize,
        fit: LassoFit,
    },
    TwoStageLasso {
        stage1: LassoFit,
        /// Local series with nonzero stage-1 weight, each with its proxy model.
        stage2: Vec<(usize, LassoFit)>,
    },
    TwoStagePc {
        stage1: LinearFit,
        stage2: Vec<LinearFit>,
        p: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct FittedModel {
    pub spec: ModelSpec,
    pub train_years: Vec<i32>,
    pub map: FittedMap,
    /// Set when a two-stage model selected no local series and fell back
    /// to the training mean.
    pub fallback: bool,
    /// Stepwise criterion after each accepted step, starting from the
    /// intercept-only model; empty for other kinds.
    pub criterion_path: Vec<f64>,
}

/// Fits `spec` on the response years in `window`.
pub fn fit_window(spec: ModelSpec, data: &ZooData, window: &AnalysisWindow, seed: u64) -> Result<FittedModel> {
    let years: Vec<i32> = window.years().collect();
    fit(spec, data, &years, seed, &ZooOptions::default())
}

/// Fits `spec` on the given training years (any subset of the response
/// years, ascending). Tuning runs on these rows only.
pub fn fit(spec: ModelSpec, data: &ZooData, train_years: &[i32], seed: u64, opts: &ZooOptions) -> Result<FittedModel> {
    spec.validate(data.proxies.n_cols())?;
    if train_years.is_empty() {
        return Err(ReconError::InvalidArgument("no training years".into()));
    }
    if train_years.windows(2).any(|w| w[1] <= w[0]) {
        return Err(ReconError::InvalidArgument("training years must be strictly ascending".into()));
    }
    let y = data.response(train_years)?;
    let mut fallback = false;
    let mut criterion_path = Vec::new();
    let map = match spec {
        ModelSpec::InterceptOnly => FittedMap::Constant(mean(&y)),
        ModelSpec::ArmaBaseline => {
            let segment = longest_segment(train_years);
            let history = data.response(&segment.years().collect::<Vec<_>>())?;
            let model = arma_select_values(&history, opts.arma_p_max, opts.arma_q_max)?;
            FittedMap::Arma { model, segment, history }
        }
        ModelSpec::PcRegression { k } => {
            let x = data.design(Covariates::ProxyPcs, k, train_years)?;
            FittedMap::Linear {
                source: Covariates::ProxyPcs,
                columns: (0..k).collect(),
                fit: ols_fit(&x, &y, true)?,
            }
        }
        ModelSpec::LassoOnProxies | ModelSpec::LassoOnPcs { .. } => {
            let (source, k) = match spec {
                ModelSpec::LassoOnPcs { k_max } => (Covariates::ProxyPcs, k_max.min(data.n_pcs())),
                _ => (Covariates::Proxies, data.proxies.n_cols()),
            };
            let x = data.design(source, k, train_years)?;
            let (fit, _) = lasso_cv_fit(&x, &y, &opts.cv, seed)?;
            FittedMap::Lasso { source, k, fit }
        }
        ModelSpec::StepwiseAic { source } | ModelSpec::StepwiseBic { source } => {
            let k = match source {
                Covariates::Proxies => data.proxies.n_cols(),
                Covariates::ProxyPcs => data.n_pcs(),
            };
            let x = data.design(source, k, train_years)?;
            let penalty = match spec {
                ModelSpec::StepwiseAic { .. } => 2.0,
                _ => (y.len() as f64).ln(),
            };
            let (columns, path) = forward_stepwise(&x, &y, penalty);
            criterion_path = path;
            let xs = DMatrix::from_fn(x.nrows(), columns.len(), |i, j| x[(i, columns[j])]);
            FittedMap::Linear {
                source,
                columns,
                fit: ols_fit(&xs, &y, true)?,
            }
        }
        ModelSpec::TwoStageLassoLocal => {
            let z = data.local_rows(train_years)?;
            let (stage1, _) = lasso_cv_fit(&z, &y, &opts.cv, derive_seed(seed, &[1]))?;
            let selected = stage1.support();
            if selected.is_empty() {
                log::warn!("two-stage Lasso selected no local series; using the training mean");
                fallback = true;
                FittedMap::Constant(mean(&y))
            } else {
                let x = data.design(Covariates::Proxies, 0, train_years)?;
                let stage2 = selected
                    .par_iter()
                    .map(|&j| {
                        let zj: Vec<f64> = z.column(j).iter().copied().collect();
                        lasso_cv_fit(&x, &zj, &opts.cv, derive_seed(seed, &[2, j as u64])).map(|(f, _)| (j, f))
                    })
                    .collect::<Result<Vec<_>>>()?;
                FittedMap::TwoStageLasso { stage1, stage2 }
            }
        }
        ModelSpec::TwoStagePc { g, p } => {
            let z = data.local_rows(train_years)?;
            let local_pcs = principal_components(&z, g)?;
            let stage1 = ols_fit(&local_pcs.scores, &y, true)?;
            let x = data.design(Covariates::ProxyPcs, p, train_years)?;
            let stage2 = (0..g)
                .map(|c| {
                    let target: Vec<f64> = local_pcs.scores.column(c).iter().copied().collect();
                    ols_fit(&x, &target, true)
                })
                .collect::<Result<Vec<_>>>()?;
            FittedMap::TwoStagePc { stage1, stage2, p }
        }
    };
    Ok(FittedModel {
        spec,
        train_years: train_years.to_vec(),
        map,
        fallback,
        criterion_path,
    })
}

/// Longest run of consecutive years; ties go to the earlier run.
fn longest_segment(years: &[i32]) -> AnalysisWindow {
    let mut best = (years[0], years[0]);
    let mut start = years[0];
    for w in years.windows(2) {
        if w[1] != w[0] + 1 {
            start = w[1];
        }
        if w[1] - start > best.1 - best.0 {
            best = (start, w[1]);
        }
    }
    AnalysisWindow {
        first_year: best.0,
        last_year: best.1,
    }
}

/// Forward selection from the intercept-only model. Each step adds the
/// column with the largest drop in residual sum of squares and is kept only
/// if `n·ln(SSE/n) + penalty·(parameters)` strictly falls. Returns the
/// chosen columns in order and the criterion after each accepted step.
pub fn forward_stepwise(x: &DMatrix<f64>, y: &[f64], penalty: f64) -> (Vec<usize>, Vec<f64>) {
    let (n, p) = x.shape();
    let nf = n as f64;
    let ybar = mean(y);
    let mut resid: Vec<f64> = y.iter().map(|v| v - ybar).collect();
    let mut sse: f64 = resid.iter().map(|r| r * r).sum();
    let crit = |sse: f64, params: usize| nf * (sse / nf).ln() + penalty * params as f64;
    let mut path = vec![crit(sse, 1)];
    let mut chosen = Vec::new();
    if !(sse > 0.0) {
        return (chosen, path);
    }
    // Candidate columns kept orthogonal to the intercept and chosen columns.
    let mut cand: Vec<Vec<f64>> = (0..p)
        .map(|j| {
            let c = x.column(j);
            let m = c.mean();
            c.iter().map(|v| v - m).collect()
        })
        .collect();
    let orig: Vec<f64> = cand.iter().map(|c| c.iter().map(|v| v * v).sum()).collect();
    let mut used = vec![false; p];
    while chosen.len() + 1 < n.saturating_sub(2) {
        let mut best: Option<(usize, f64)> = None;
        for j in 0..p {
            if used[j] {
                continue;
            }
            let nn: f64 = cand[j].iter().map(|v| v * v).sum();
            if !(nn > 1e-10 * orig[j]) || nn <= 0.0 {
                continue;
            }
            let dot: f64 = cand[j].iter().zip(&resid).map(|(a, b)| a * b).sum();
            let gain = dot * dot / nn;
            if best.is_none_or(|(_, g)| gain > g) {
                best = Some((j, gain));
            }
        }
        let Some((j, gain)) = best else { break };
        let new_sse = sse - gain;
        if !(new_sse > 0.0) {
            break;
        }
        let c = crit(new_sse, chosen.len() + 2);
        if !(c < *path.last().unwrap()) {
            break;
        }
        let norm = cand[j].iter().map(|v| v * v).sum::<f64>().sqrt();
        let q: Vec<f64> = cand[j].iter().map(|v| v / norm).collect();
        let qr: f64 = q.iter().zip(&resid).map(|(a, b)| a * b).sum();
        for (r, qi) in resid.iter_mut().zip(&q) {
            *r -= qr * qi;
        }
        sse = resid.iter().map(|r| r * r).sum();
        used[j] = true;
        chosen.push(j);
        path.push(c);
        cand.par_iter_mut().enumerate().for_each(|(i, col)| {
            if !used[i] {
                let d: f64 = col.iter().zip(&q).map(|(a, b)| a * b).sum();
                for (v, qi) in col.iter_mut().zip(&q) {
                    *v -= d * qi;
                }
            }
        });
    }
    (chosen, path)
}

impl FittedModel {
    /// Predictions for `years`. Regression kinds need proxies at those
    /// years; the ARMA baseline forecasts forward past its training segment
    /// and backward (time-reversed) before it.
    pub fn predict(&self, data: &ZooData, years: &[i32]) -> Result<Vec<f64>> {
        match &self.map {
            FittedMap::Constant(c) => {
                for &t in years {
                    data.proxy_index(t).or_else(|_| data.y_index(t))?;
                }
                Ok(vec![*c; years.len()])
            }
            FittedMap::Arma { model, segment, history } => {
                let ahead = years.iter().map(|&t| t - segment.last_year).max().unwrap_or(0).max(0) as usize;
                let behind = years.iter().map(|&t| segment.first_year - t).max().unwrap_or(0).max(0) as usize;
                let fwd = if ahead > 0 { arma_forecast_values(model, history, ahead)? } else { vec![] };
                let bwd = if behind > 0 { arma_backcast_values(model, history, behind)? } else { vec![] };
                years
                    .iter()
                    .map(|&t| {
                        if t > segment.last_year {
                            Ok(fwd[(t - segment.last_year - 1) as usize])
                        } else if t < segment.first_year {
                            Ok(bwd[bwd.len() - (segment.first_year - t) as usize])
                        } else {
                            Err(ReconError::InvalidArgument(format!(
                                "ARMA baseline cannot predict {t} inside its training segment {segment}"
                            )))
                        }
                    })
                    .collect()
            }
            FittedMap::Linear { source, columns, fit } => {
                let k = columns.iter().max().map_or(0, |m| m + 1);
                let x = data.design(*source, k, years)?;
                let xs = DMatrix::from_fn(x.nrows(), columns.len(), |i, j| x[(i, columns[j])]);
                Ok(fit.predict(&xs))
            }
            FittedMap::Lasso { source, k, fit } => Ok(fit.predict(&data.design(*source, *k, years)?)),
            FittedMap::TwoStageLasso { stage1, stage2 } => {
                let x = data.design(Covariates::Proxies, 0, years)?;
                let mut out = vec![stage1.intercept; years.len()];
                for (j, f) in stage2 {
                    let zhat = f.predict(&x);
                    let b = stage1.coefficients[*j];
                    for (o, z) in out.iter_mut().zip(zhat) {
                        *o += b * z;
                    }
                }
                Ok(out)
            }
            FittedMap::TwoStagePc { stage1, stage2, p } => {
                let x = data.design(Covariates::ProxyPcs, *p, years)?;
                let zhat = DMatrix::from_fn(years.len(), stage2.len(), |_, _| 0.0);
                let zhat = stage2.iter().enumerate().fold(zhat, |mut acc, (c, f)| {
                    for (i, v) in f.predict(&x).into_iter().enumerate() {
                        acc[(i, c)] = v;
                    }
                    acc
                });
                Ok(stage1.predict(&zhat))
            }
        }
    }

    /// Pointwise application of the fitted map over `window`.
    pub fn backcast(&self, data: &ZooData, window: &AnalysisWindow) -> Result<TimeSeries> {
        let years: Vec<i32> = window.years().collect();
        TimeSeries::from_values(window.first_year, self.predict(data, &years)?)
    }

    /// Root-mean-square error on the training rows.
    pub fn in_sample_rmse(&self, data: &ZooData) -> Result<f64> {
        let pred = self.predict(data, &self.train_years)?;
        crate::numerics::rmse(&pred, &data.response(&self.train_years)?)
    }
}

/// Fits every spec on `window`, concurrently; seeds derive from the spec's
/// position in the list.
pub fn fit_ensemble(specs: &[ModelSpec], data: &ZooData, window: &AnalysisWindow, seed: u64, opts: &ZooOptions) -> Vec<Result<FittedModel>> {
    let years: Vec<i32> = window.years().collect();
    specs
        .par_iter()
        .enumerate()
        .map(|(i, s)| fit(*s, data, &years, derive_seed(seed, &[i as u64]), opts))
        .collect()
}

/// Outcome of the pseudo-proxy augmentation test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentationResult {
    /// Mean over usable blocks of the pseudo share of selected variables, in percent.
    pub percent_pseudo: f64,
    /// Per-block pseudo share (fraction), `None` where nothing was selected.
    pub per_block: Vec<Option<f64>>,
    pub excluded_blocks: usize,
}

/// For each holdout block, appends same-shape pseudo-proxies to the
/// training proxies, runs the cross-validated Lasso and records which share
/// of the selected variables are pseudo. The augmented columns are put in a
/// seeded random order so that selection ties carry no positional bias.
pub fn augmentation_test(
    data: &ZooData,
    source: &dyn PseudoSource,
    scheme: &BlockScheme,
    cv: &CvConfig,
    seed: u64,
) -> Result<AugmentationResult> {
    let window = data.window();
    let years: Vec<i32> = window.years().collect();
    let blocks = enumerate_blocks(years.len(), scheme.block_len)?;
    let m = data.proxies.n_cols();
    let x_all = data.design(Covariates::Proxies, 0, &years)?;
    let per_block: Vec<Option<f64>> = blocks
        .par_iter()
        .enumerate()
        .map(|(b, &(lo, hi))| {
            let rows: Vec<usize> = (0..years.len()).filter(|i| *i < lo || *i > hi).collect();
            let pseudo = source.generate(window.first_year, years.len(), m, derive_seed(seed, &[b as u64, 0]))?;
            let pd = pseudo.dense_all()?;
            let mut order: Vec<usize> = (0..2 * m).collect();
            order.shuffle(&mut substream(seed, &[b as u64, 1]));
            let x = DMatrix::from_fn(rows.len(), 2 * m, |i, j| {
                let c = order[j];
                if c < m {
                    x_all[(rows[i], c)]
                } else {
                    pd[(rows[i], c - m)]
                }
            });
            let y: Vec<f64> = rows.iter().map(|&i| data.y_vals[i]).collect();
            let (fit, _) = lasso_cv_fit(&x, &y, cv, derive_seed(seed, &[b as u64, 2]))?;
            let support = fit.support();
            if support.is_empty() {
                log::info!("block {b}: Lasso selected nothing; excluded from the augmentation average");
                return Ok(None);
            }
            let n_pseudo = support.iter().filter(|&&j| order[j] >= m).count();
            Ok(Some(n_pseudo as f64 / support.len() as f64))
        })
        .collect::<Result<_>>()?;
    let used: Vec<f64> = per_block.iter().flatten().copied().collect();
    if used.is_empty() {
        return Err(ReconError::Numerical("Lasso selected no variables on any block".into()));
    }
    Ok(AugmentationResult {
        percent_pseudo: 100.0 * mean(&used),
        excluded_blocks: per_block.len() - used.len(),
        per_block,
    })
}
