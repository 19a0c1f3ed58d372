//! Wirsing mean-value predictions for `g = |f|^2`.

use super::gamma::gamma;
use crate::arith::SieveTables;
use crate::chaos::local_norm_factor;
use crate::error::{Result, RmfError};
use crate::multfn::MultiplicativeSpec;

/// Primes in the top half of the table feed the tail estimate of `C_g`.
const SHELL_FRACTION: f64 = 0.5;

fn check_limit(tables: &SieveTables, x: f64) -> Result<()> {
    if !(x >= 3.0) {
        return Err(RmfError::invalid(format!("x must be >= 3, got {x}")));
    }
    if x > tables.limit() as f64 {
        return Err(RmfError::OutOfRange {
            what: "x",
            value: x,
            lo: 3.0,
            hi: tables.limit() as f64,
        });
    }
    Ok(())
}

/// `sum_i g(p^i) / p^i`.
pub fn local_mean_factor(spec: &MultiplicativeSpec, p: u64) -> Result<f64> {
    local_norm_factor(spec, p, 0.5)
}

/// `sum_{n <= x} g(n)` by direct summation.
pub fn sieved_mean(spec: &MultiplicativeSpec, tables: &SieveTables, x: f64) -> Result<f64> {
    check_limit(tables, x)?;
    let spf = tables.spf();
    let n_max = x.floor() as usize;
    let mut g = vec![0.0f64; n_max + 1];
    g[1] = 1.0;
    let mut total = 1.0;
    for n in 2..=n_max {
        let p = spf[n] as usize;
        let mut pa = p;
        let mut a = 1u32;
        while n % (pa * p) == 0 {
            pa *= p;
            a += 1;
        }
        g[n] = if pa == n {
            spec.norm_sqr_at(p as u64, a)
        } else {
            g[pa] * g[n / pa]
        };
        total += g[n];
    }
    Ok(total)
}

/// `C_g` over the primes of `tables`, plus the tail `sum_{p > P} c / p^2`
/// with `c` the mean of `p^2 log(factor_p)` over the last shell.
pub fn c_g(spec: &MultiplicativeSpec, tables: &SieveTables) -> Result<f64> {
    let theta = spec.theta;
    let primes = tables.primes();
    let top = *primes.last().ok_or_else(|| RmfError::invalid("no primes in table"))? as f64;
    let shell_lo = top * SHELL_FRACTION;
    let mut log_sum = 0.0;
    let mut shell = (0.0, 0usize);
    for &p in primes {
        let pf = p as f64;
        let term = theta / pf + theta * (-1.0 / pf).ln_1p() - spec.norm_sqr_at(p as u64, 1) / pf
            + local_mean_factor(spec, p as u64)?.ln();
        log_sum += term;
        if pf > shell_lo {
            shell.0 += term * pf * pf;
            shell.1 += 1;
        }
    }
    let c = if shell.1 > 0 { shell.0 / shell.1 as f64 } else { 0.0 };
    // sum_{p > P} p^{-2} ~ 1 / (P log P)
    let tail = c / (top * top.ln());
    Ok((log_sum + tail).exp())
}

/// `int_2^x E(t) dt / (t log^2 t)` with `E(t) = sum_{p <= t} (g(p) - theta) log p / p`, exact on each gap.
pub fn e_integral(spec: &MultiplicativeSpec, tables: &SieveTables, x: f64) -> Result<f64> {
    check_limit(tables, x)?;
    let theta = spec.theta;
    let primes = tables.primes();
    let mut e = 0.0;
    let mut total = 0.0;
    for (k, &p) in primes.iter().enumerate() {
        let pf = p as f64;
        if pf > x {
            break;
        }
        e += (spec.norm_sqr_at(p as u64, 1) - theta) * pf.ln() / pf;
        let next = primes.get(k + 1).map_or(f64::INFINITY, |&q| q as f64).min(x);
        total += e * (1.0 / pf.ln() - 1.0 / next.ln());
    }
    Ok(total)
}

/// `L_g(log x) = C_g exp(int_2^x E(t) dt / (t log^2 t))`.
pub fn l_g(spec: &MultiplicativeSpec, tables: &SieveTables, x: f64) -> Result<f64> {
    Ok(c_g(spec, tables)? * e_integral(spec, tables, x)?.exp())
}

/// Predicted `sum_{n <= x} g(n)`.
///
/// Without the correction the Euler product runs over `p <= x`; with it the
/// product is replaced by `L_g(log x)`.
pub fn wirsing_prediction(
    spec: &MultiplicativeSpec,
    tables: &SieveTables,
    x: f64,
    with_l_correction: bool,
) -> Result<f64> {
    check_limit(tables, x)?;
    let theta = spec.theta;
    let lx = x.ln();
    let lead = x * lx.powf(theta - 1.0) / gamma(theta)?;
    let factor = if with_l_correction {
        l_g(spec, tables, x)?
    } else {
        let mut log_prod = 0.0;
        for &p in tables.primes() {
            if p as f64 > x {
                break;
            }
            let pf = p as f64;
            log_prod += local_mean_factor(spec, p as u64)?.ln() + theta * (-1.0 / pf).ln_1p();
        }
        log_prod.exp()
    };
    Ok(lead * factor)
}
