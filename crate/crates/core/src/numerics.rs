//! Deterministic numerical kernels shared by every model: least squares,
//! principal components, loess smoothing, RMSE and difference diagnostics.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{Binomial, ContinuousCDF, DiscreteCDF, Normal, StudentsT};

use crate::dataset::TimeSeries;
use crate::error::{ReconError, Result};

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Pearson correlation; NaN when either input has zero variance.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let (ma, mb) = (mean(a), mean(b));
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    sab / (saa * sbb).sqrt()
}

pub fn rmse(pred: &[f64], actual: &[f64]) -> Result<f64> {
    if pred.len() != actual.len() {
        return Err(ReconError::Shape(format!(
            "rmse of {} predictions against {} values",
            pred.len(),
            actual.len()
        )));
    }
    if pred.is_empty() {
        return Err(ReconError::Shape("rmse of empty vectors".into()));
    }
    let mse = pred
        .iter()
        .zip(actual)
        .map(|(p, a)| (p - a) * (p - a))
        .sum::<f64>()
        / pred.len() as f64;
    Ok(mse.sqrt())
}

/// Linear-interpolation sample quantile (R type 7) of unsorted data.
pub fn quantile(values: &[f64], p: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    quantile_sorted(&v, p)
}

pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn median(values: &[f64]) -> f64 {
    quantile(values, 0.5)
}

/// Principal component basis of a column-centered matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct PCBasis {
    /// Column means removed before rotation (≈ 0 for centered input).
    pub center: Vec<f64>,
    /// p × k, orthonormal columns.
    pub loadings: DMatrix<f64>,
    /// n × k, `(X − center) · loadings`.
    pub scores: DMatrix<f64>,
    /// Variance of each score column (n − 1 denominator), non-increasing.
    pub explained_variance: Vec<f64>,
}

impl PCBasis {
    pub fn k(&self) -> usize {
        self.loadings.ncols()
    }

    /// Scores of new rows expressed in this basis, first `k` components.
    pub fn project(&self, x: &DMatrix<f64>, k: usize) -> DMatrix<f64> {
        let mut centered = x.clone();
        for (j, mut col) in centered.column_iter_mut().enumerate() {
            col.add_scalar_mut(-self.center[j]);
        }
        centered * self.loadings.columns(0, k)
    }
}

/// Relative singular-value threshold below which a direction counts as null.
const RANK_TOL: f64 = 1e-10;

/// Number of singular values of `x` above the rank tolerance.
pub fn numerical_rank(x: &DMatrix<f64>) -> usize {
    let sv = x.clone().singular_values();
    let max = sv.iter().cloned().fold(0.0, f64::max);
    sv.iter().filter(|&&s| s > RANK_TOL * max.max(f64::MIN_POSITIVE)).count()
}

/// First `k` principal components of `x` via SVD.
///
/// Columns are centered internally and the means recorded; input that was
/// already centered gets `center ≈ 0` and `scores = x · loadings`. Each
/// loading column is signed so its largest-magnitude entry is positive.
pub fn principal_components(x: &DMatrix<f64>, k: usize) -> Result<PCBasis> {
    pca(x, k, true)
}

/// Up to `k_max` principal components, stopping early at the numerical rank
/// of the centered matrix.
pub fn principal_components_upto(x: &DMatrix<f64>, k_max: usize) -> Result<PCBasis> {
    pca(x, k_max.min(x.nrows()).min(x.ncols()), false)
}

fn pca(x: &DMatrix<f64>, k: usize, exact: bool) -> Result<PCBasis> {
    let (n, p) = x.shape();
    if k == 0 || k > n.min(p) {
        return Err(ReconError::InvalidArgument(format!(
            "cannot take {k} components of a {n}x{p} matrix"
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(ReconError::Numerical("non-finite entry in PCA input".into()));
    }
    let center: Vec<f64> = x.column_iter().map(|c| c.mean()).collect();
    let mut centered = x.clone();
    for (j, mut col) in centered.column_iter_mut().enumerate() {
        col.add_scalar_mut(-center[j]);
    }

    let svd = centered.clone().svd(false, true);
    let v_t = svd.v_t.ok_or_else(|| ReconError::Numerical("SVD failed".into()))?;
    let sv = svd.singular_values;
    let mut order: Vec<usize> = (0..sv.len()).collect();
    order.sort_by(|&a, &b| sv[b].total_cmp(&sv[a]).then(a.cmp(&b)));

    let smax = sv[order[0]];
    let rank = order
        .iter()
        .filter(|&&i| sv[i] > RANK_TOL * smax.max(f64::MIN_POSITIVE))
        .count();
    if rank < k && exact {
        return Err(ReconError::RankDeficient { requested: k, rank });
    }
    let k = k.min(rank);
    if k == 0 {
        return Err(ReconError::RankDeficient { requested: 1, rank });
    }

    let mut loadings = DMatrix::zeros(p, k);
    for (c, &i) in order.iter().take(k).enumerate() {
        let row = v_t.row(i);
        let pivot = row
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()).then(b.0.cmp(&a.0)))
            .map(|(j, _)| j)
            .unwrap();
        let sign = if row[pivot] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..p {
            loadings[(j, c)] = sign * row[j];
        }
    }
    let scores = &centered * &loadings;
    let denom = (n.max(2) - 1) as f64;
    let explained_variance = order.iter().take(k).map(|&i| sv[i] * sv[i] / denom).collect();
    Ok(PCBasis {
        center,
        loadings,
        scores,
        explained_variance,
    })
}

/// Least-squares fit of `y` on the columns of `x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub has_intercept: bool,
    /// Zero when fitted without an intercept.
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    pub fitted: Vec<f64>,
    pub residuals: Vec<f64>,
    pub sse: f64,
}

impl LinearFit {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.intercept
            + row
                .iter()
                .zip(&self.coefficients)
                .map(|(x, b)| x * b)
                .sum::<f64>()
    }

    pub fn predict(&self, x: &DMatrix<f64>) -> Vec<f64> {
        (0..x.nrows())
            .map(|i| {
                self.intercept
                    + (0..x.ncols())
                        .map(|j| x[(i, j)] * self.coefficients[j])
                        .sum::<f64>()
            })
            .collect()
    }

    /// Residuals as a series starting at `start_year`.
    pub fn residual_series(&self, start_year: i32) -> Result<TimeSeries> {
        TimeSeries::from_values(start_year, self.residuals.clone())
    }
}

/// Ordinary least squares via Householder QR. A numerically singular design
/// is an error; there is no pseudo-inverse fallback.
pub fn ols_fit(x: &DMatrix<f64>, y: &[f64], intercept: bool) -> Result<LinearFit> {
    let (n, p) = x.shape();
    if n != y.len() {
        return Err(ReconError::Shape(format!("{n} design rows but {} responses", y.len())));
    }
    let cols = p + usize::from(intercept);
    if n <= cols {
        return Err(ReconError::Shape(format!(
            "{n} rows cannot identify {cols} coefficients"
        )));
    }
    let design = if intercept {
        let mut d = DMatrix::from_element(n, cols, 1.0);
        d.columns_mut(1, p).copy_from(x);
        d
    } else {
        x.clone()
    };
    let beta = if cols == 0 {
        DVector::zeros(0)
    } else {
        let qr = design.clone().qr();
        let r = qr.r();
        let diag_max = r.diagonal().iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let col_scale = design
            .column_iter()
            .map(|c| c.norm())
            .fold(0.0_f64, f64::max);
        if r
            .diagonal()
            .iter()
            .any(|d| !(d.abs() > 1e-10 * diag_max.max(1e-300)) || !(d.abs() > 1e-13 * col_scale))
        {
            return Err(ReconError::SingularDesign);
        }
        let qty = qr.q().transpose() * DVector::from_column_slice(y);
        r.solve_upper_triangular(&qty)
            .ok_or(ReconError::SingularDesign)?
    };
    let fitted: Vec<f64> = if cols == 0 {
        vec![0.0; n]
    } else {
        (&design * &beta).iter().copied().collect()
    };
    let residuals: Vec<f64> = y.iter().zip(&fitted).map(|(a, f)| a - f).collect();
    let sse = residuals.iter().map(|r| r * r).sum();
    let (b0, coefficients) = if intercept {
        (beta[0], beta.iter().skip(1).copied().collect())
    } else {
        (0.0, beta.iter().copied().collect())
    };
    Ok(LinearFit {
        has_intercept: intercept,
        intercept: b0,
        coefficients,
        fitted,
        residuals,
        sse,
    })
}

/// Degree of the local polynomial used by [`loess_smooth`].
pub const LOESS_DEGREE: usize = 2;

/// Loess as a linear operator: fitted value `i` is `weights[i] · y[start[i]..]`.
///
/// Local quadratic fits with tricube weights over the `⌈span·n⌉` nearest
/// neighbours, no robustness iterations. Because the operator depends only
/// on the abscissae, one instance can smooth many series of equal length.
#[derive(Debug, Clone)]
pub struct LoessOperator {
    rows: Vec<(usize, Vec<f64>)>,
}

impl LoessOperator {
    /// Operator for `n` equally spaced points.
    pub fn equispaced(n: usize, span: f64) -> Result<Self> {
        let x: Vec<f64> = (0..n).map(|i| i as f64).collect();
        Self::new(&x, span)
    }

    /// Operator for sorted abscissae `x`.
    pub fn new(x: &[f64], span: f64) -> Result<Self> {
        if !(span > 0.0 && span <= 1.0) {
            return Err(ReconError::InvalidArgument(format!("loess span {span} not in (0, 1]")));
        }
        let n = x.len();
        let q = ((span * n as f64) - 1e-9).ceil().max(1.0) as usize;
        let q = q.min(n);
        if q < LOESS_DEGREE + 1 {
            return Err(ReconError::WindowTooSmall {
                points: q,
                degree: LOESS_DEGREE,
            });
        }
        let mut rows = Vec::with_capacity(n);
        for i in 0..n {
            rows.push(local_row(x, i, q)?);
        }
        Ok(Self { rows })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn apply(&self, y: &[f64]) -> Vec<f64> {
        assert_eq!(y.len(), self.rows.len(), "loess operator length mismatch");
        self.rows
            .iter()
            .map(|(start, w)| w.iter().zip(&y[*start..]).map(|(a, b)| a * b).sum())
            .collect()
    }
}

fn tricube(u: f64) -> f64 {
    if u >= 1.0 {
        0.0
    } else {
        let t = 1.0 - u * u * u;
        t * t * t
    }
}

/// Equivalent-kernel weights of the local quadratic fit at `x[i]`.
fn local_row(x: &[f64], i: usize, q: usize) -> Result<(usize, Vec<f64>)> {
    let n = x.len();
    let x0 = x[i];
    // Grow the contiguous neighbourhood [lo, hi) to q points, nearest first.
    let (mut lo, mut hi) = (i, i + 1);
    while hi - lo < q {
        let left = if lo > 0 { Some(x0 - x[lo - 1]) } else { None };
        let right = if hi < n { Some(x[hi] - x0) } else { None };
        match (left, right) {
            (Some(l), Some(r)) if l <= r => lo -= 1,
            (Some(_), Some(_)) | (None, Some(_)) => hi += 1,
            (Some(_), None) => lo -= 1,
            (None, None) => break,
        }
    }
    let mut h = (x0 - x[lo]).max(x[hi - 1] - x0);
    // Points at distance h get zero weight; if that leaves too few points for
    // the local quadratic, widen to the next distinct distance.
    let positive = |h: f64| (lo..hi).filter(|&j| (x[j] - x0).abs() < h).count();
    if positive(h) < LOESS_DEGREE + 1 {
        let next = [lo.checked_sub(1).map(|j| x0 - x[j]), x.get(hi).map(|v| v - x0)]
            .into_iter()
            .flatten()
            .fold(f64::INFINITY, f64::min);
        if next.is_finite() {
            h = next;
            while lo > 0 && x0 - x[lo - 1] < h {
                lo -= 1;
            }
            while hi < n && x[hi] - x0 < h {
                hi += 1;
            }
        } else {
            h *= 1.0 + 1e-9;
        }
    }
    if h <= 0.0 {
        return Err(ReconError::WindowTooSmall {
            points: hi - lo,
            degree: LOESS_DEGREE,
        });
    }
    // Weighted least squares in the scaled local coordinate u = (x − x0)/h;
    // the fitted value at x0 is e1ᵀ (BᵀWB)⁻¹ BᵀW y.
    let m = hi - lo;
    let mut b = DMatrix::zeros(m, LOESS_DEGREE + 1);
    let mut w = vec![0.0; m];
    for (r, j) in (lo..hi).enumerate() {
        let u = (x[j] - x0) / h;
        w[r] = tricube(u.abs());
        let sw = w[r].sqrt();
        let mut pow = 1.0;
        for d in 0..=LOESS_DEGREE {
            b[(r, d)] = sw * pow;
            pow *= u;
        }
    }
    let qr = b.clone().qr();
    let r = qr.r();
    if r.diagonal().iter().any(|d| d.abs() < 1e-12) {
        return Err(ReconError::WindowTooSmall {
            points: m,
            degree: LOESS_DEGREE,
        });
    }
    // Row e1ᵀ R⁻¹ Qᵀ, then undo the √w scaling on the response side.
    let mut e1 = DVector::zeros(LOESS_DEGREE + 1);
    e1[0] = 1.0;
    let z = r
        .transpose()
        .solve_lower_triangular(&e1)
        .ok_or_else(|| ReconError::Numerical("loess local solve".into()))?;
    let row = qr.q() * z;
    let weights = (0..m).map(|r| row[r] * w[r].sqrt()).collect();
    Ok((lo, weights))
}

/// Loess smooth (degree 2, tricube) of a complete series.
pub fn loess_smooth(s: &TimeSeries, span: f64) -> Result<TimeSeries> {
    let y = s.dense()?;
    let op = LoessOperator::equispaced(y.len(), span)?;
    TimeSeries::from_values(s.start_year(), op.apply(&y))
}

/// Agreement between the year-over-year changes of a prediction and the truth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiffDiagnostics {
    pub corr: f64,
    /// Two-sided t-test p-value; descriptive only under autocorrelation.
    pub corr_pvalue: f64,
    pub sign_agree: usize,
    /// Number of differences with a nonzero sign in both series.
    pub sign_n: usize,
    /// Exact two-sided binomial(n, 1/2) p-value.
    pub sign_pvalue: f64,
    /// Normal approximation with continuity correction.
    pub sign_pvalue_normal: f64,
}

pub fn diff_diagnostics(pred: &TimeSeries, actual: &TimeSeries) -> Result<DiffDiagnostics> {
    if pred.span() != actual.span() {
        return Err(ReconError::Shape(format!(
            "prediction span {} differs from actual span {}",
            pred.span(),
            actual.span()
        )));
    }
    if pred.len() < 3 {
        return Err(ReconError::Shape("difference diagnostics need at least 3 years".into()));
    }
    let diff = |v: Vec<f64>| -> Vec<f64> { v.windows(2).map(|w| w[1] - w[0]).collect() };
    let dp = diff(pred.dense()?);
    let da = diff(actual.dense()?);
    let corr = pearson(&dp, &da);
    if !corr.is_finite() {
        return Err(ReconError::ZeroVariance);
    }
    let df = (dp.len() - 2) as f64;
    let corr_pvalue = if corr.abs() >= 1.0 {
        0.0
    } else if df > 0.0 {
        let t = corr * (df / (1.0 - corr * corr)).sqrt();
        let dist = StudentsT::new(0.0, 1.0, df).map_err(|e| ReconError::Numerical(e.to_string()))?;
        (2.0 * dist.sf(t.abs())).min(1.0)
    } else {
        1.0
    };
    let (mut agree, mut total) = (0usize, 0usize);
    for (a, b) in dp.iter().zip(&da) {
        if *a == 0.0 || *b == 0.0 {
            continue;
        }
        total += 1;
        if a.signum() == b.signum() {
            agree += 1;
        }
    }
    let (sign_pvalue, sign_pvalue_normal) = sign_test(agree, total)?;
    Ok(DiffDiagnostics {
        corr,
        corr_pvalue,
        sign_agree: agree,
        sign_n: total,
        sign_pvalue,
        sign_pvalue_normal,
    })
}

/// Two-sided tests of `k` successes in `n` fair trials:
/// (exact binomial, continuity-corrected normal).
pub fn sign_test(k: usize, n: usize) -> Result<(f64, f64)> {
    if n == 0 {
        return Ok((1.0, 1.0));
    }
    let binom = Binomial::new(0.5, n as u64).map_err(|e| ReconError::Numerical(e.to_string()))?;
    let extreme = k.max(n - k) as u64;
    // P(X ≥ extreme) + P(X ≤ n − extreme), symmetric under p = 1/2.
    let upper = binom.sf(extreme - 1);
    let exact = if 2 * extreme == n as u64 { 1.0 } else { (2.0 * upper).min(1.0) };
    let nf = n as f64;
    let z = ((k as f64 - nf / 2.0).abs() - 0.5).max(0.0) / (nf / 4.0).sqrt();
    let normal = Normal::new(0.0, 1.0).map_err(|e| ReconError::Numerical(e.to_string()))?;
    let approx = (2.0 * normal.sf(z)).min(1.0);
    Ok((exact, approx))
}
