//! Contiguous-block holdout evaluation: every block is held out in turn,
//! the model is tuned and refit on the remaining years, and the block is
//! scored by RMSE. Also pseudo-proxy envelopes and outperformance p-values.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::TimeSeries;
use crate::error::{ReconError, Result};
use crate::modelzoo::{fit, ModelSpec, ZooData, ZooOptions};
use crate::nullmodels::PseudoSource;
use crate::numerics::{mean, quantile, rmse};
use crate::rng::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scoring {
    FullBlock,
    /// Only the middle 20 years of a 30-year block.
    Middle20,
}

impl std::str::FromStr for Scoring {
    type Err = ReconError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Scoring::FullBlock),
            "middle20" => Ok(Scoring::Middle20),
            _ => Err(ReconError::InvalidArgument(format!("unknown scoring {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockScheme {
    pub block_len: usize,
    pub scoring: Scoring,
    pub total_years: usize,
}

impl BlockScheme {
    pub fn new(block_len: usize, scoring: Scoring, total_years: usize) -> Result<Self> {
        if block_len == 0 || block_len > total_years {
            return Err(ReconError::InvalidArgument(format!(
                "block length {block_len} does not fit in {total_years} years"
            )));
        }
        if scoring == Scoring::Middle20 && block_len != 30 {
            return Err(ReconError::InvalidArgument(
                "middle-20 scoring needs 30-year blocks".into(),
            ));
        }
        Ok(Self {
            block_len,
            scoring,
            total_years,
        })
    }

    /// Default 30-year full-block scheme over `total_years`.
    pub fn standard(total_years: usize) -> Result<Self> {
        Self::new(30, Scoring::FullBlock, total_years)
    }

    /// Offsets within a block that are scored.
    pub fn scored_offsets(&self) -> std::ops::Range<usize> {
        match self.scoring {
            Scoring::FullBlock => 0..self.block_len,
            Scoring::Middle20 => 5..25,
        }
    }

    pub fn n_blocks(&self) -> usize {
        self.total_years - self.block_len + 1
    }
}

/// All contiguous windows of `block_len` positions, as inclusive
/// `(start, end)` index pairs in ascending order.
pub fn enumerate_blocks(total_years: usize, block_len: usize) -> Result<Vec<(usize, usize)>> {
    if block_len == 0 || block_len > total_years {
        return Err(ReconError::InvalidArgument(format!(
            "block length {block_len} does not fit in {total_years} years"
        )));
    }
    Ok((0..=total_years - block_len).map(|s| (s, s + block_len - 1)).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockOutcome {
    pub block_start_year: i32,
    pub rmse: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HoldoutResult {
    pub spec: ModelSpec,
    pub seed: u64,
    pub per_block: Vec<BlockOutcome>,
}

impl HoldoutResult {
    /// RMSEs of the blocks that fitted successfully.
    pub fn rmses(&self) -> Vec<f64> {
        self.per_block.iter().filter_map(|b| b.rmse).collect()
    }

    pub fn n_failed(&self) -> usize {
        self.per_block.iter().filter(|b| b.rmse.is_none()).count()
    }
}

/// Runs `f` on a pool of `workers` threads (0 = rayon default).
pub fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    if workers == 0 {
        return Ok(f());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| ReconError::InvalidArgument(format!("cannot build worker pool: {e}")))?;
    Ok(pool.install(f))
}

fn block_years(data: &ZooData, lo: usize, hi: usize) -> (Vec<i32>, Vec<i32>) {
    let first = data.window().first_year;
    let n = data.window().len();
    let train = (0..n).filter(|i| *i < lo || *i > hi).map(|i| first + i as i32).collect();
    let test = (lo..=hi).map(|i| first + i as i32).collect();
    (train, test)
}

/// Fits on the complement of block `lo..=hi` and returns the scored RMSE.
fn score_block(spec: ModelSpec, data: &ZooData, scheme: &BlockScheme, lo: usize, hi: usize, seed: u64, opts: &ZooOptions) -> Result<f64> {
    let (train, test) = block_years(data, lo, hi);
    let model = fit(spec, data, &train, seed, opts)?;
    let scored: Vec<i32> = scheme.scored_offsets().map(|o| test[o]).collect();
    let pred = model.predict(data, &scored)?;
    let actual: Vec<f64> = scored.iter().map(|&t| data.y().get(t).unwrap()).collect();
    rmse(&pred, &actual)
}

fn check_scheme(data: &ZooData, scheme: &BlockScheme) -> Result<()> {
    if scheme.total_years != data.window().len() {
        return Err(ReconError::Shape(format!(
            "scheme covers {} years but the response has {}",
            scheme.total_years,
            data.window().len()
        )));
    }
    Ok(())
}

/// Holds out each block in turn, refits `spec` (tuning included) on the
/// remaining years and scores the block. Block `b` uses
/// `derive_seed(seed, [b])`; a failing block is recorded and the run
/// continues.
pub fn run_block_cv(spec: ModelSpec, data: &ZooData, scheme: &BlockScheme, seed: u64, opts: &ZooOptions) -> Result<HoldoutResult> {
    check_scheme(data, scheme)?;
    let blocks = enumerate_blocks(scheme.total_years, scheme.block_len)?;
    let first = data.window().first_year;
    let per_block = blocks
        .par_iter()
        .enumerate()
        .map(|(b, &(lo, hi))| {
            let block_start_year = first + lo as i32;
            match score_block(spec, data, scheme, lo, hi, derive_seed(seed, &[b as u64]), opts) {
                Ok(r) => BlockOutcome {
                    block_start_year,
                    rmse: Some(r),
                    error: None,
                },
                Err(e) => {
                    log::warn!("{spec}: block starting {block_start_year} failed: {e}");
                    BlockOutcome {
                        block_start_year,
                        rmse: None,
                        error: Some(e.to_string()),
                    }
                }
            }
        })
        .collect();
    Ok(HoldoutResult { spec, seed, per_block })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub wins: usize,
    pub losses: usize,
    pub ties: usize,
    /// Blocks where either side failed.
    pub skipped: usize,
    pub fraction_a_wins: f64,
}

/// Block-by-block comparison; a win is a strictly lower RMSE.
pub fn compare(a: &HoldoutResult, b: &HoldoutResult) -> Result<Comparison> {
    if a.per_block.len() != b.per_block.len()
        || a.per_block
            .iter()
            .zip(&b.per_block)
            .any(|(x, y)| x.block_start_year != y.block_start_year)
    {
        return Err(ReconError::Shape("holdout results cover different blocks".into()));
    }
    let (mut wins, mut losses, mut ties, mut skipped) = (0, 0, 0, 0);
    for (x, y) in a.per_block.iter().zip(&b.per_block) {
        match (x.rmse, y.rmse) {
            (Some(p), Some(q)) if p < q => wins += 1,
            (Some(p), Some(q)) if p > q => losses += 1,
            (Some(_), Some(_)) => ties += 1,
            _ => skipped += 1,
        }
    }
    let scored = wins + losses + ties;
    Ok(Comparison {
        wins,
        losses,
        ties,
        skipped,
        fraction_a_wins: if scored == 0 { 0.0 } else { wins as f64 / scored as f64 },
    })
}

/// Holdout RMSEs of `spec` refit on `reps` pseudo-proxy draws for one block.
/// Each draw has the proxies' shape over the response years; replicate `r`
/// of block `b` uses `derive_seed(seed, [b, r])`.
#[allow(clippy::too_many_arguments)]
pub fn pseudo_block_rmses(
    spec: ModelSpec,
    source: &dyn PseudoSource,
    data: &ZooData,
    scheme: &BlockScheme,
    block: usize,
    reps: usize,
    seed: u64,
    opts: &ZooOptions,
) -> Result<Vec<f64>> {
    pseudo_block_rmses_for(spec, source, data.y(), data.proxies().n_cols(), scheme, block, reps, seed, opts)
}

/// As [`pseudo_block_rmses`] with the response and the number of pseudo
/// series given directly.
#[allow(clippy::too_many_arguments)]
pub fn pseudo_block_rmses_for(
    spec: ModelSpec,
    source: &dyn PseudoSource,
    y: &TimeSeries,
    n_series: usize,
    scheme: &BlockScheme,
    block: usize,
    reps: usize,
    seed: u64,
    opts: &ZooOptions,
) -> Result<Vec<f64>> {
    let window = y.span();
    if scheme.total_years != window.len() {
        return Err(ReconError::Shape(format!(
            "scheme covers {} years but the response has {}",
            scheme.total_years,
            window.len()
        )));
    }
    let blocks = enumerate_blocks(scheme.total_years, scheme.block_len)?;
    let &(lo, hi) = blocks
        .get(block)
        .ok_or_else(|| ReconError::InvalidArgument(format!("no block {block}")))?;
    (0..reps)
        .into_par_iter()
        .map(|r| {
            let s = derive_seed(seed, &[block as u64, r as u64]);
            let pseudo = source.generate(window.first_year, window.len(), n_series, s)?;
            let pd = ZooData::new(y.clone(), pseudo, None)?;
            score_block(spec, &pd, scheme, lo, hi, derive_seed(s, &[1]), opts)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeRow {
    pub block_start_year: i32,
    pub mean: f64,
    pub lo: f64,
    pub hi: f64,
}

/// Per block: mean and central `level` band of holdout RMSE over `reps`
/// pseudo-proxy refits.
#[allow(clippy::too_many_arguments)]
pub fn pseudo_envelope(
    spec: ModelSpec,
    source: &dyn PseudoSource,
    data: &ZooData,
    scheme: &BlockScheme,
    reps: usize,
    level: f64,
    seed: u64,
    opts: &ZooOptions,
) -> Result<Vec<EnvelopeRow>> {
    if reps == 0 || !(0.0..=1.0).contains(&level) {
        return Err(ReconError::InvalidArgument("envelope needs reps >= 1 and level in [0, 1]".into()));
    }
    let first = data.window().first_year;
    (0..scheme.n_blocks())
        .into_par_iter()
        .map(|b| {
            let r = pseudo_block_rmses(spec, source, data, scheme, b, reps, seed, opts)?;
            let tail = (1.0 - level) / 2.0;
            Ok(EnvelopeRow {
                block_start_year: first + b as i32,
                mean: mean(&r),
                lo: quantile(&r, tail),
                hi: quantile(&r, 1.0 - tail),
            })
        })
        .collect()
}

/// Share of pseudo-proxy refits whose holdout RMSE on `block` is strictly
/// below `model_rmse`.
#[allow(clippy::too_many_arguments)]
pub fn outperformance_pvalue(
    model_rmse: f64,
    spec_for_null: ModelSpec,
    source: &dyn PseudoSource,
    data: &ZooData,
    scheme: &BlockScheme,
    block: usize,
    reps: usize,
    seed: u64,
    opts: &ZooOptions,
) -> Result<f64> {
    if !(model_rmse.is_finite() && model_rmse >= 0.0) {
        return Err(ReconError::InvalidArgument(format!("model RMSE {model_rmse} must be finite and non-negative")));
    }
    if reps == 0 {
        return Err(ReconError::InvalidArgument("reps must be at least 1".into()));
    }
    let r = pseudo_block_rmses(spec_for_null, source, data, scheme, block, reps, seed, opts)?;
    Ok(pvalue_from_nulls(model_rmse, &r))
}

pub fn pvalue_from_nulls(model_rmse: f64, nulls: &[f64]) -> f64 {
    nulls.iter().filter(|&&v| v < model_rmse).count() as f64 / nulls.len() as f64
}
