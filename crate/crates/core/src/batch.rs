//! Deterministic parallel batches of realizations.
//!
//! Realization `i` depends only on `(master_seed, i)`, so the output does not
//! depend on the worker count. Work is cut into chunks; the cancel flag is
//! polled between chunks and a cancelled batch keeps the completed prefix.

use std::sync::atomic::{AtomicBool, Ordering};

use rayon::prelude::*;
use serde::Serialize;

use crate::chaos::{EulerPlan, GridSpec};
use crate::engine::{Engine, SampleOptions, SumSample};
use crate::error::{Result, RmfError};

/// Environment variable consulted when no worker count is given.
pub const WORKERS_ENV: &str = "RMFLAB_WORKERS";

pub const DEFAULT_CHUNK: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BatchConfig {
    pub n: usize,
    pub master_seed: u64,
    pub workers: usize,
    pub chunk: usize,
}

impl BatchConfig {
    pub fn new(n: usize, master_seed: u64, workers: usize) -> Self {
        Self {
            n,
            master_seed,
            workers,
            chunk: DEFAULT_CHUNK,
        }
    }
}

/// Worker count from an explicit value, then `RMFLAB_WORKERS`, then the available parallelism.
pub fn resolve_workers(explicit: Option<usize>) -> Result<usize> {
    let from_env = || {
        std::env::var(WORKERS_ENV).ok().map(|v| {
            v.trim()
                .parse::<usize>()
                .map_err(|_| RmfError::invalid(format!("{WORKERS_ENV}={v:?} is not a count")))
        })
    };
    let n = match explicit {
        Some(n) => n,
        None => match from_env() {
            Some(r) => r?,
            None => std::thread::available_parallelism().map_or(1, |n| n.get()),
        },
    };
    if n == 0 {
        return Err(RmfError::invalid("workers must be >= 1"));
    }
    Ok(n)
}

/// Rows of a batch; `cancelled` marks a partial prefix.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchOutcome<R> {
    pub rows: Vec<R>,
    pub requested: usize,
    pub cancelled: bool,
}

impl<R> BatchOutcome<R> {
    pub fn into_complete(self) -> Result<Vec<R>> {
        if self.cancelled {
            return Err(RmfError::Cancelled {
                completed: self.rows.len(),
                requested: self.requested,
            });
        }
        Ok(self.rows)
    }
}

/// Runs `job(i)` for `i in 0..n` on a dedicated pool and returns rows in index order.
pub fn run_indexed<R, F>(cfg: &BatchConfig, cancel: Option<&AtomicBool>, job: F) -> Result<BatchOutcome<R>>
where
    R: Send,
    F: Fn(u64) -> Result<R> + Sync,
{
    if cfg.workers == 0 || cfg.chunk == 0 {
        return Err(RmfError::invalid("workers and chunk must be >= 1"));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| RmfError::invalid(format!("thread pool: {e}")))?;
    let mut rows = Vec::with_capacity(cfg.n);
    let mut start = 0;
    let mut next_log = 0.1;
    while start < cfg.n {
        if cancel.is_some_and(|c| c.load(Ordering::Relaxed)) {
            log::warn!("batch cancelled after {start} of {} realizations", cfg.n);
            return Ok(BatchOutcome {
                rows,
                requested: cfg.n,
                cancelled: true,
            });
        }
        let end = (start + cfg.chunk).min(cfg.n);
        let part = pool.install(|| {
            (start..end)
                .into_par_iter()
                .map(|i| job(i as u64))
                .collect::<Result<Vec<R>>>()
        })?;
        rows.extend(part);
        start = end;
        let done = start as f64 / cfg.n as f64;
        if done >= next_log {
            log::info!("{start}/{} realizations", cfg.n);
            next_log = (done * 10.0).floor() / 10.0 + 0.1;
        }
    }
    Ok(BatchOutcome {
        rows,
        requested: cfg.n,
        cancelled: false,
    })
}

/// `SumSample`s, optionally paired with `V` from the same draw.
pub fn run_sums(
    engine: &Engine<'_>,
    opts: &SampleOptions,
    paired: Option<(&EulerPlan, GridSpec)>,
    cfg: &BatchConfig,
    cancel: Option<&AtomicBool>,
) -> Result<BatchOutcome<SumSample>> {
    if let Some((_, grid)) = paired {
        grid.points()?;
    }
    run_indexed(cfg, cancel, |i| {
        let draw = engine.draw(cfg.master_seed, i);
        let mut row = engine.sample(&draw, opts)?;
        if let Some((plan, grid)) = paired {
            let mut buf = Vec::new();
            row.v = Some(plan.variance::<f64>(&draw, grid, &mut buf)?);
        }
        Ok(row)
    })
}

/// One row of the variance CSV.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VarianceRow {
    pub index: u64,
    pub v: f64,
    pub tail_correction: f64,
    pub k_trunc_max: u32,
}

/// `V` for draws `0..n` of `tables`' primes.
pub fn run_variance(
    plan: &EulerPlan,
    tables: &crate::arith::SieveTables,
    grid: GridSpec,
    cfg: &BatchConfig,
    cancel: Option<&AtomicBool>,
) -> Result<BatchOutcome<VarianceRow>> {
    grid.points()?;
    let tail = crate::chaos::tail_correction(plan.sigma(), grid.s_max);
    let model = plan.model();
    run_indexed(cfg, cancel, |i| {
        let draw = crate::engine::CoefficientDraw::sample(model, tables, cfg.master_seed, i);
        let mut buf = Vec::new();
        Ok(VarianceRow {
            index: i,
            v: plan.variance::<f64>(&draw, grid, &mut buf)?,
            tail_correction: tail,
            k_trunc_max: plan.k_trunc_max(),
        })
    })
}
