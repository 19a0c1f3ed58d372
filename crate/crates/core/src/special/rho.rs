//! `rho_theta`: the solution of `t rho(t) = theta int_{t-1}^t rho(v) dv`
//! with `rho(t) = t^{theta - 1} / Gamma(theta)` on `(0, 1]`.
//!
//! On `[1, 2]` the integrating-factor solution has the convergent series
//! `rho(t) = t^{theta-1}/Gamma(theta) * (1 - theta sum_k Q^{theta+k}/(theta+k))`,
//! `Q = 1 - 1/t`. On `[2, 4]` the same integrating factor gives
//! `y = t^{1-theta} rho`, `y' = -theta t^{-theta} rho(t - 1)`, integrated
//! adaptively against the exact history since `rho` has `(t-n)^{theta+n-1}`
//! onsets at `n = 1, 2, 3`. Past `t = 4` the table takes classical RK4 steps
//! on `g = ln rho`, `g' = (theta - 1 - theta e^{g(t-1) - g(t)}) / t`, which keeps
//! relative accuracy while `rho` decays super-exponentially.

use super::gamma::gamma;
use super::quad::integrate;
use crate::error::{Result, RmfError};
use crate::scalar::Real;

/// Tables stop here; `rho_theta` beyond it is reported as an underflowed zero.
pub const RHO_T_CAP: f64 = 40.0;
pub const DEFAULT_STEP: f64 = 1.0 / 512.0;
const EXACT_UNTIL: usize = 4;
/// Lookups below this point integrate from the nearest node instead of interpolating.
const EXACT_QUERY_BELOW: f64 = 3.5;

#[derive(Debug, Clone, PartialEq)]
pub struct RhoTable<T> {
    theta: T,
    gamma_theta: T,
    t_max: T,
    h: T,
    per_unit: usize,
    /// `rho(1 + i h)`.
    nodes: Vec<T>,
}

/// Exact `rho_theta(t)` for `1 <= t <= 2`.
pub fn rho_on_one_two<T: Real>(theta: T, gamma_theta: T, t: T) -> T {
    let one = T::one();
    let q = one - one / t;
    let mut sum = T::zero();
    if q > T::zero() {
        let mut qk = one;
        for k in 0..200 {
            let term = qk / (theta + T::of_usize(k));
            sum += term;
            if term < T::epsilon() * sum {
                break;
            }
            qk *= q;
        }
        sum *= q.powf(theta);
    }
    t.powf(theta - one) / gamma_theta * (one - theta * sum)
}

impl<T: Real> RhoTable<T> {
    /// Solve on `[1, min(t_max, 40)]` with step `h` (`1/h` a whole number, `h <= 1/256`).
    pub fn solve(theta: T, t_max: T, h: T) -> Result<Self> {
        if !(theta > T::zero()) || !theta.is_finite() {
            return Err(RmfError::invalid(format!("theta must be positive, got {theta}")));
        }
        if !(t_max >= T::one()) {
            return Err(RmfError::invalid(format!("t_max must be >= 1, got {t_max}")));
        }
        if !(h > T::zero() && h <= T::of(1.0 / 256.0)) {
            return Err(RmfError::invalid(format!("step must lie in (0, 1/256], got {h}")));
        }
        let inv = (T::one() / h).round();
        if ((T::one() / h) - inv).abs() > T::of(1e-6) {
            return Err(RmfError::invalid("1/h must be a whole number"));
        }
        let per_unit = inv.to_usize().expect("step count");
        let h = T::one() / inv;
        let t_max = t_max.min(T::of(RHO_T_CAP));
        let n = ((t_max - T::one()) * inv).ceil().to_usize().expect("node count");
        let gamma_theta = gamma(theta)?;
        let mut table = Self {
            theta,
            gamma_theta,
            t_max,
            h,
            per_unit,
            nodes: Vec::with_capacity(n + 1),
        };
        for i in 0..=n.min(per_unit) {
            let r = rho_on_one_two(theta, gamma_theta, table.t_at(i));
            table.nodes.push(r);
        }
        let exact_end = n.min((EXACT_UNTIL - 1) * per_unit);
        for i in per_unit..exact_end {
            let b = table.t_at(i + 1);
            let rho = table.advance_exact(i, b)?;
            if !(rho > T::zero()) || !rho.is_finite() {
                return Err(RmfError::SolverInstability { t: b.as_f64() });
            }
            table.nodes.push(rho);
        }
        let third = h / T::of(3.0);
        for i in exact_end.max(per_unit)..n {
            let b = table.t_at(i + 1);
            let window = &table.nodes[i + 1 - per_unit..=i];
            let mut acc = window[0];
            for (k, &r) in window.iter().enumerate().skip(1) {
                acc += if k % 2 == 1 { T::of(4.0) * r } else { T::of(2.0) * r };
            }
            let next = theta * third * acc / (b - theta * third);
            if !(next >= T::zero()) || !next.is_finite() {
                return Err(RmfError::SolverInstability { t: b.as_f64() });
            }
            table.nodes.push(next);
        }
        Ok(table)
    }

    fn t_at(&self, i: usize) -> T {
        T::one() + T::of_usize(i) * self.h
    }

    /// `rho(t)` for `t` in `[t_i, t_{i+1}]`, `2 <= t_i < 4`, from node `i` and the exact history.
    fn advance_exact(&self, i: usize, t: T) -> Result<T> {
        let one = T::one();
        let theta = self.theta;
        let a = self.t_at(i);
        let y0 = a.powf(one - theta) * self.nodes[i];
        let tol = T::epsilon() * T::of(16.0) * y0.abs() * (t - a).max(self.h);
        let mut err = None;
        let integral = integrate(
            |s: T| match self.rho_exact(s - one) {
                Ok(r) => s.powf(-theta) * r,
                Err(e) => {
                    err.get_or_insert(e);
                    T::zero()
                }
            },
            a,
            t,
            tol,
        )?;
        if let Some(e) = err {
            return Err(e);
        }
        Ok((y0 - theta * integral) * t.powf(theta - one))
    }

    /// Exact evaluation on `(0, 4)` using the nodes already in the table.
    fn rho_exact(&self, t: T) -> Result<T> {
        let one = T::one();
        if t <= one {
            return Ok(t.powf(self.theta - one) / self.gamma_theta);
        }
        if t <= T::of(2.0) {
            return Ok(rho_on_one_two(self.theta, self.gamma_theta, t));
        }
        let i = ((t - one) / self.h).floor().to_usize().expect("index");
        if i >= self.nodes.len() {
            return Err(RmfError::SolverInstability { t: t.as_f64() });
        }
        if t == self.t_at(i) {
            return Ok(self.nodes[i]);
        }
        self.advance_exact(i, t)
    }

    /// Cubic through `ln rho` at nodes `lo..lo+4`, at fractional offset `x` from `lo`.
    fn log_lagrange(&self, lo: usize, x: T) -> T {
        let p = &self.nodes[lo..lo + 4];
        if p.iter().any(|&r| r <= T::zero()) {
            return T::zero();
        }
        let one = T::one();
        let two = T::of(2.0);
        let three = T::of(3.0);
        let six = T::of(6.0);
        let l0 = -(x - one) * (x - two) * (x - three) / six;
        let l1 = x * (x - two) * (x - three) / two;
        let l2 = -x * (x - one) * (x - three) / two;
        let l3 = x * (x - one) * (x - two) / six;
        (l0 * p[0].ln() + l1 * p[1].ln() + l2 * p[2].ln() + l3 * p[3].ln()).exp()
    }

    pub fn theta(&self) -> T {
        self.theta
    }

    pub fn t_max(&self) -> T {
        self.t_max
    }

    pub fn step(&self) -> T {
        self.h
    }

    pub fn gamma_theta(&self) -> T {
        self.gamma_theta
    }

    /// `(t, rho(t))` at every table node.
    pub fn nodes(&self) -> impl Iterator<Item = (T, T)> + '_ {
        self.nodes
            .iter()
            .enumerate()
            .map(move |(i, &r)| (self.t_at(i), r))
    }

    /// Whether `t` lies past the cap, where [`Self::rho`] returns zero.
    pub fn is_underflow(&self, t: T) -> bool {
        t > T::of(RHO_T_CAP)
    }

    pub fn rho(&self, t: T) -> Result<T> {
        let one = T::one();
        if !(t > T::zero()) {
            return Err(RmfError::invalid(format!("rho needs t > 0, got {t}")));
        }
        if t <= T::of(2.0) {
            return self.rho_exact(t);
        }
        if self.is_underflow(t) {
            return Ok(T::zero());
        }
        if t > self.t_max {
            return Err(RmfError::OutOfRange {
                what: "t",
                value: t.as_f64(),
                lo: 0.0,
                hi: self.t_max.as_f64(),
            });
        }
        let x = (t - one) / self.h;
        let j = x.floor().to_usize().expect("index");
        if j + 1 >= self.nodes.len() {
            return Ok(self.nodes[self.nodes.len() - 1]);
        }
        if t < T::of(EXACT_QUERY_BELOW) {
            return self.rho_exact(t);
        }
        let lo = j.saturating_sub(1).min(self.nodes.len() - 4);
        Ok(self.log_lagrange(lo, x - T::of_usize(lo)))
    }

    /// `Gamma(theta) rho(u) / u^{theta - 1}`; identically 1 on `(0, 1]`.
    pub fn rho_tilde(&self, u: T) -> Result<T> {
        if !(u > T::zero()) {
            return Err(RmfError::invalid(format!("rho_tilde needs u > 0, got {u}")));
        }
        if u <= T::one() {
            return Ok(T::one());
        }
        Ok(self.gamma_theta * self.rho(u)? * u.powf(T::one() - self.theta))
    }
}

/// `C_eps = theta int_eps^1 v^{-1} (1-v)^{theta-1} rho_tilde((1-v)/v) dv`.
///
/// With `w = (1-v)^theta` the weight is absorbed and the integrand
/// `rho_tilde(u(w)) / v(w)` is smooth between the points where `(1-v)/v` is an integer.
pub fn c_epsilon<T: Real>(table: &RhoTable<T>, eps: T) -> Result<T> {
    let one = T::one();
    if !(eps > T::zero() && eps <= one) {
        return Err(RmfError::invalid(format!("eps must lie in (0, 1], got {eps}")));
    }
    let need = ((one - eps) / eps).min(T::of(RHO_T_CAP));
    if need > table.t_max() {
        return Err(RmfError::OutOfRange {
            what: "rho table t_max",
            value: table.t_max().as_f64(),
            lo: need.as_f64(),
            hi: RHO_T_CAP,
        });
    }
    if eps == one {
        return Ok(T::zero());
    }
    let theta = table.theta();
    let inv_theta = one / theta;
    let upper = (one - eps).powf(theta);
    let cap = T::of(RHO_T_CAP);
    let w_cap = (cap / (cap + one)).powf(theta);
    let top = upper.min(w_cap);
    let mut cuts = vec![T::zero()];
    let mut k = 1;
    loop {
        let kf = T::of_usize(k);
        let w = (kf / (kf + one)).powf(theta);
        if w >= top {
            break;
        }
        cuts.push(w);
        k += 1;
    }
    cuts.push(top);
    let tol = T::of(1e-13).max(T::epsilon() * T::of(8.0));
    let mut err = None;
    let mut f = |w: T| {
        let a = w.powf(inv_theta);
        let v = one - a;
        match table.rho_tilde(a / v) {
            Ok(r) => r / v,
            Err(e) => {
                err.get_or_insert(e);
                T::zero()
            }
        }
    };
    let mut total = T::zero();
    for pair in cuts.windows(2) {
        total += integrate(&mut f, pair[0], pair[1], tol)?;
    }
    if let Some(e) = err {
        return Err(e);
    }
    Ok(total)
}

/// `1 - C_eps` as the tail `theta Gamma(theta) int_{(1-eps)/eps}^{40} rho(u) (1+u)^{-theta} du`.
///
/// Resolves deficits far below the spacing of doubles near 1; zero once
/// `(1 - eps)/eps` passes the table cap.
pub fn c_epsilon_deficit<T: Real>(table: &RhoTable<T>, eps: T) -> Result<T> {
    let one = T::one();
    if !(eps > T::zero() && eps <= one) {
        return Err(RmfError::invalid(format!("eps must lie in (0, 1], got {eps}")));
    }
    let theta = table.theta();
    let cap = T::of(RHO_T_CAP).min(table.t_max());
    let start = (one - eps) / eps;
    if start >= cap {
        return Ok(T::zero());
    }
    let mut err = None;
    let mut f = |u: T| match table.rho(u) {
        Ok(r) => r * (one + u).powf(-theta),
        Err(e) => {
            err.get_or_insert(e);
            T::zero()
        }
    };
    let mut cuts = vec![start];
    let mut k = start.floor() + one;
    while k < cap {
        cuts.push(k);
        k += one;
    }
    cuts.push(cap);
    let mut pieces = Vec::with_capacity(cuts.len());
    for pair in cuts.windows(2) {
        let head = f(pair[0]) * (pair[1] - pair[0]);
        pieces.push(integrate(&mut f, pair[0], pair[1], head * T::of(1e-12))?);
    }
    if let Some(e) = err {
        return Err(e);
    }
    let total = pieces.iter().rev().fold(T::zero(), |acc, &p| acc + p);
    Ok(theta * table.gamma_theta() * total)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dickman_two_and_three() {
        let t = RhoTable::solve(1.0f64, 10.0, DEFAULT_STEP).unwrap();
        assert!((t.rho(2.0).unwrap() - (1.0 - 2f64.ln())).abs() < 1e-12);
        // tabulated Dickman value
        assert!((t.rho(3.0).unwrap() - 0.048_608_388_291_131_9).abs() < 1e-9);
        assert!((t.rho(1.0).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn validation() {
        assert!(RhoTable::solve(0.0f64, 5.0, DEFAULT_STEP).is_err());
        assert!(RhoTable::solve(1.0f64, 0.5, DEFAULT_STEP).is_err());
        assert!(RhoTable::solve(1.0f64, 5.0, 0.01).is_err());
        let t = RhoTable::solve(0.5f64, 5.0, DEFAULT_STEP).unwrap();
        assert!(t.rho(6.0).is_err());
        assert!(t.rho(0.0).is_err());
        assert!(t.rho_tilde(6.0).is_err());
        let capped = RhoTable::solve(0.5f64, 100.0, 1.0 / 256.0).unwrap();
        assert_eq!(capped.t_max(), 40.0);
        assert_eq!(capped.rho(41.0).unwrap(), 0.0);
        assert!(capped.is_underflow(41.0));
    }

    #[test]
    fn rho_tilde_unit_interval_and_continuity() {
        let t = RhoTable::solve(0.49f64, 5.0, DEFAULT_STEP).unwrap();
        assert_eq!(t.rho_tilde(0.3).unwrap(), 1.0);
        assert_eq!(t.rho_tilde(1.0).unwrap(), 1.0);
        let gaps: Vec<f64> = [1e-4, 1e-8, 1e-12]
            .iter()
            .map(|d| 1.0 - t.rho_tilde(1.0 + d).unwrap())
            .collect();
        assert!(gaps[0] > gaps[1] && gaps[1] > gaps[2] && gaps[2] < 1e-5);
        assert!((t.rho(1.0).unwrap() - 1.0 / gamma(0.49f64).unwrap()).abs() < 1e-14);
        let d = RhoTable::solve(1.0f64, 5.0, DEFAULT_STEP).unwrap();
        assert!((d.rho_tilde(2.0).unwrap() - (1.0 - 2f64.ln())).abs() < 1e-12);
        assert!((d.rho_tilde(1.0 + 1e-12).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn c_one_is_zero() {
        let t = RhoTable::solve(0.3f64, 10.0, DEFAULT_STEP).unwrap();
        assert_eq!(c_epsilon(&t, 1.0).unwrap(), 0.0);
        assert!(c_epsilon(&t, 0.0).is_err());
        assert!(c_epsilon(&t, 0.05).is_err());
    }

    #[test]
    fn deficit_matches_direct_value() {
        for theta in [0.49f64, 1.0] {
            let t = RhoTable::solve(theta, 40.0, DEFAULT_STEP).unwrap();
            let direct = 1.0 - c_epsilon(&t, 0.2).unwrap();
            let tail = c_epsilon_deficit(&t, 0.2).unwrap();
            assert!((direct - tail).abs() < 1e-12, "{theta}: {direct} vs {tail}");
            assert!(c_epsilon_deficit(&t, 0.1).unwrap() > c_epsilon_deficit(&t, 0.05).unwrap());
            assert_eq!(c_epsilon_deficit(&t, 0.02).unwrap(), 0.0);
        }
    }

    #[test]
    fn single_precision_table() {
        let t = RhoTable::solve(1.0f32, 4.0, 1.0 / 256.0).unwrap();
        assert!((t.rho(2.0).unwrap() - (1.0 - 2f32.ln())).abs() < 1e-5);
    }
}
