//! Smooth-number sums and prime cosine sums.

use super::rho::RhoTable;
use crate::arith::SieveTables;
use crate::error::{Result, RmfError};
use crate::multfn::MultiplicativeSpec;
use crate::scalar::Real;

/// Predicted `sum_{n <= x, P(n) <= y} g(n) / sum_{n <= x} g(n)`, that is `rho_tilde(u)`.
pub fn smooth_ratio_prediction<T: Real>(table: &RhoTable<T>, u: T) -> Result<T> {
    if !(u > T::zero()) {
        return Err(RmfError::invalid(format!("u must be positive, got {u}")));
    }
    table.rho_tilde(u)
}

/// `(observed, predicted)` smooth-sum ratio for `g = |f|^2`, `u = log x / log y`.
pub fn smooth_sum_check(
    spec: &MultiplicativeSpec,
    tables: &SieveTables,
    x: f64,
    y: f64,
    table: &RhoTable<f64>,
) -> Result<(f64, f64)> {
    if !(y >= 2.0) {
        return Err(RmfError::invalid(format!("y must be >= 2, got {y}")));
    }
    if !(x >= 2.0) || x > tables.limit() as f64 {
        return Err(RmfError::OutOfRange {
            what: "x",
            value: x,
            lo: 2.0,
            hi: tables.limit() as f64,
        });
    }
    if (spec.theta - table.theta()).abs() > 1e-12 {
        return Err(RmfError::invalid("rho table theta differs from the family theta"));
    }
    let u = x.ln() / y.ln();
    let predicted = smooth_ratio_prediction(table, u)?;
    let n_max = x.floor() as usize;
    let spf = tables.spf();
    let lpf = tables.lpf();
    let mut g = vec![0.0f64; n_max + 1];
    g[1] = 1.0;
    let (mut all, mut smooth) = (1.0, 1.0);
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
        all += g[n];
        if lpf[n] as f64 <= y {
            smooth += g[n];
        }
    }
    if all == 0.0 {
        return Err(RmfError::invalid("sum of g vanishes"));
    }
    Ok((smooth / all, predicted))
}

/// `sum_{p <= y} |f(p)|^2 p^{-1 - c/log y} cos(s log p)` and the model `theta log min(1/|s|, log y)`.
pub fn prime_cosine_sum(
    spec: &MultiplicativeSpec,
    tables: &SieveTables,
    y: f64,
    s: f64,
    c: f64,
) -> Result<(f64, f64)> {
    if !(y >= 3.0) {
        return Err(RmfError::invalid(format!("y must be >= 3, got {y}")));
    }
    if y > tables.limit() as f64 {
        return Err(RmfError::OutOfRange {
            what: "y",
            value: y,
            lo: 3.0,
            hi: tables.limit() as f64,
        });
    }
    if !(c >= 0.0) {
        return Err(RmfError::invalid(format!("c must be >= 0, got {c}")));
    }
    let ly = y.ln();
    let expo = -1.0 - c / ly;
    let mut value = 0.0;
    for &p in tables.primes() {
        let pf = p as f64;
        if pf > y {
            break;
        }
        let lp = pf.ln();
        value += spec.norm_sqr_at(p as u64, 1) * (expo * lp).exp() * (s * lp).cos();
    }
    let scale = if s == 0.0 { ly } else { (1.0 / s.abs()).min(ly) };
    Ok((value, spec.theta * scale.ln()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trivial_ratio_below_one() {
        let t = RhoTable::solve(0.49f64, 5.0, 1.0 / 512.0).unwrap();
        assert_eq!(smooth_ratio_prediction(&t, 0.5).unwrap(), 1.0);
        let tables = SieveTables::build(1000).unwrap();
        let spec = MultiplicativeSpec::theta_bigomega(0.49).unwrap();
        let (obs, pred) = smooth_sum_check(&spec, &tables, 1000.0, 1000.0, &t).unwrap();
        assert_eq!((obs, pred), (1.0, 1.0));
    }

    #[test]
    fn mertens_sum() {
        let tables = SieveTables::build(1_000_000).unwrap();
        let (v, model) = prime_cosine_sum(&MultiplicativeSpec::unit(), &tables, 1e6, 0.0, 0.0).unwrap();
        let mertens = 0.261_497_212_847_642_8;
        assert!((v - (1e6f64.ln().ln() + mertens)).abs() < 0.05);
        assert!((model - 1e6f64.ln().ln()).abs() < 1e-12);
    }
}
