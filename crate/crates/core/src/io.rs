//! CSV, JSON and JSONL artifacts.
//!
//! Floats are written with 17 significant digits so every value round-trips.

use std::io::{self, BufRead, Write};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::batch::VarianceRow;
use crate::chaos::ChaosGrid;
use crate::engine::SumSample;
use crate::error::{Result, RmfError};
use crate::oracle::IdentityReport;
use crate::special::RhoTable;
use crate::stats::Bin;

pub const SAMPLES_HEADER: &str =
    "index,re_S,im_S,re_S_eps,im_S_eps,U,T_eps,re_S_critical,im_S_critical,V";
pub const VARIANCE_HEADER: &str = "index,V,tail_correction,k_trunc_max";
pub const GRID_HEADER: &str = "s,density";
pub const RHO_HEADER: &str = "t,rho";
pub const CEPS_HEADER: &str = "theta,eps,C_eps";
pub const HISTOGRAM_HEADER: &str = "bin_left,bin_right,count,density";

/// `v` with 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

pub fn write_samples_csv<W: Write>(mut w: W, rows: &[SumSample]) -> io::Result<()> {
    writeln!(w, "{SAMPLES_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{}",
            r.index,
            fmt_f64(r.s.re),
            fmt_f64(r.s.im),
            opt(r.s_eps.map(|z| z.re)),
            opt(r.s_eps.map(|z| z.im)),
            opt(r.u),
            opt(r.t_eps),
            opt(r.s_critical.map(|z| z.re)),
            opt(r.s_critical.map(|z| z.im)),
            opt(r.v),
        )?;
    }
    w.flush()
}

fn field(cols: &[&str], i: usize, line: usize) -> Result<Option<f64>> {
    let raw = cols.get(i).ok_or_else(|| RmfError::Parse {
        line,
        msg: format!("missing column {i}"),
    })?;
    if raw.is_empty() {
        return Ok(None);
    }
    raw.parse::<f64>().map(Some).map_err(|e| RmfError::Parse {
        line,
        msg: format!("{raw:?}: {e}"),
    })
}

fn complex(re: Option<f64>, im: Option<f64>) -> Option<Complex64> {
    re.zip(im).map(|(a, b)| Complex64::new(a, b))
}

/// Parses a samples CSV written by [`write_samples_csv`].
pub fn read_samples_csv<R: BufRead>(r: R) -> Result<Vec<SumSample>> {
    let mut out = Vec::new();
    for (k, line) in r.lines().enumerate() {
        let line = line.map_err(|e| RmfError::Parse { line: k + 1, msg: e.to_string() })?;
        if k == 0 {
            if line.trim() != SAMPLES_HEADER {
                return Err(RmfError::Parse { line: 1, msg: "unexpected header".into() });
            }
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 10 {
            return Err(RmfError::Parse { line: k + 1, msg: format!("{} columns", cols.len()) });
        }
        let index = cols[0].parse::<u64>().map_err(|e| RmfError::Parse { line: k + 1, msg: e.to_string() })?;
        let g = |i| field(&cols, i, k + 1);
        out.push(SumSample {
            index,
            s: complex(g(1)?, g(2)?).ok_or_else(|| RmfError::Parse { line: k + 1, msg: "empty S".into() })?,
            s_eps: complex(g(3)?, g(4)?),
            u: g(5)?,
            t_eps: g(6)?,
            s_critical: complex(g(7)?, g(8)?),
            v: g(9)?,
        });
    }
    Ok(out)
}

pub fn write_variance_csv<W: Write>(mut w: W, rows: &[VarianceRow]) -> io::Result<()> {
    writeln!(w, "{VARIANCE_HEADER}")?;
    for r in rows {
        writeln!(w, "{},{},{},{}", r.index, fmt_f64(r.v), fmt_f64(r.tail_correction), r.k_trunc_max)?;
    }
    w.flush()
}

pub fn write_grid_csv<W: Write>(mut w: W, grid: &ChaosGrid<f64>) -> io::Result<()> {
    writeln!(w, "{GRID_HEADER}")?;
    for (i, d) in grid.density.iter().enumerate() {
        writeln!(w, "{},{}", fmt_f64(grid.s(i)), fmt_f64(*d))?;
    }
    w.flush()
}

pub fn write_rho_csv<W: Write>(mut w: W, table: &RhoTable<f64>) -> io::Result<()> {
    writeln!(w, "{RHO_HEADER}")?;
    for (t, r) in table.nodes() {
        writeln!(w, "{},{}", fmt_f64(t), fmt_f64(r))?;
    }
    w.flush()
}

pub fn write_ceps_csv<W: Write>(mut w: W, rows: &[(f64, f64, f64)]) -> io::Result<()> {
    writeln!(w, "{CEPS_HEADER}")?;
    for &(theta, eps, c) in rows {
        writeln!(w, "{},{},{}", fmt_f64(theta), fmt_f64(eps), fmt_f64(c))?;
    }
    w.flush()
}

pub fn write_histogram_csv<W: Write>(mut w: W, bins: &[Bin]) -> io::Result<()> {
    writeln!(w, "{HISTOGRAM_HEADER}")?;
    for b in bins {
        writeln!(w, "{},{},{},{}", fmt_f64(b.left), fmt_f64(b.right), b.count, fmt_f64(b.density))?;
    }
    w.flush()
}

pub fn write_reports_jsonl<W: Write>(mut w: W, reports: &[IdentityReport]) -> io::Result<()> {
    for r in reports {
        writeln!(w, "{}", r.to_json_line())?;
    }
    w.flush()
}

/// Run status recorded in the manifest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Complete,
    Cancelled,
}

/// Everything needed to replay a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub master_seed: u64,
    pub x: Option<u64>,
    #[serde(rename = "N")]
    pub n: Option<u64>,
    pub epsilon: Option<f64>,
    pub model: Option<String>,
    pub family: Option<String>,
    pub family_params: serde_json::Value,
    pub theta: Option<f64>,
    pub git_describe: String,
    pub wall_seconds: f64,
    pub status: RunStatus,
    pub completed: Option<u64>,
    /// The full validated configuration, echoed verbatim.
    pub config: serde_json::Value,
}

impl Manifest {
    pub fn to_pretty_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| RmfError::Parse {
            line: e.line(),
            msg: e.to_string(),
        })
    }
}
