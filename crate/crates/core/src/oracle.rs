//! Brute-force and closed-form checks of exact identities on small instances.

use std::collections::{BTreeMap, HashSet};

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::arith::{gcd, SieveTables};
use crate::chaos::k_trunc;
use crate::engine::{mix_seed, Model};
use crate::error::{Result, RmfError};
use crate::multfn::{MultiplicativeSpec, ValueTable};
use crate::special::wirsing::local_mean_factor;

/// Largest `x` accepted by the `E[U_x^2]` evaluators.
pub const UX_X_MAX: usize = 300;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Errs {
    pub abs: f64,
    pub rel: f64,
    pub tol: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub se: Option<f64>,
}

/// One checked identity; serialized as one JSONL line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityReport {
    pub name: String,
    pub params: Value,
    pub lhs: f64,
    pub rhs: f64,
    pub errs: Errs,
    pub pass: bool,
}

impl IdentityReport {
    /// Deterministic comparison: passes when the absolute or relative error is within `tol`.
    pub fn exact(name: &str, params: Value, lhs: f64, rhs: f64, tol: f64) -> Self {
        let abs = (lhs - rhs).abs();
        let rel = if rhs != 0.0 { abs / rhs.abs() } else { abs };
        Self {
            name: name.to_string(),
            params,
            lhs,
            rhs,
            errs: Errs { abs, rel, tol, se: None },
            pass: abs <= tol || rel <= tol,
        }
    }

    /// Monte Carlo comparison: passes when `|estimate - exact| <= 4 se`.
    pub fn monte_carlo(name: &str, params: Value, estimate: Complex64, exact: Complex64, se: f64) -> Self {
        let abs = (estimate - exact).norm();
        let rel = if exact.norm() != 0.0 { abs / exact.norm() } else { abs };
        let tol = 4.0 * se;
        Self {
            name: name.to_string(),
            params,
            lhs: estimate.re,
            rhs: exact.re,
            errs: Errs { abs, rel, tol, se: Some(se) },
            pass: abs <= tol,
        }
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }
}

/// Mean and standard error of complex observations.
pub(crate) fn mean_se(samples: &[Complex64]) -> (Complex64, f64) {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<Complex64>() / n;
    if samples.len() < 2 {
        return (mean, 0.0);
    }
    let var = samples.iter().map(|z| (z - mean).norm_sqr()).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

// ---------------------------------------------------------------------------
// squarefree parametrization

fn squarefree_divisors(primes: &[u64]) -> Vec<u64> {
    let mut out = vec![1u64];
    for &p in primes {
        let k = out.len();
        for i in 0..k {
            out.push(out[i] * p);
        }
    }
    out
}

/// `(a, b, c, d)` from `(g_1, ..., g_6)`.
pub fn param_forward(g: [u64; 6]) -> [u64; 4] {
    [g[0] * g[2] * g[3], g[0] * g[4] * g[5], g[1] * g[2] * g[4], g[1] * g[3] * g[5]]
}

/// `(g_1, ..., g_6)` from squarefree `(a, b, c, d)` by the gcd recipe.
pub fn param_inverse(q: [u64; 4]) -> [u64; 6] {
    let [a, b, c, d] = q;
    let g1 = gcd(a, b);
    let g2 = gcd(c, d);
    let (a1, b1, c1, d1) = (a / g1, b / g1, c / g2, d / g2);
    [g1, g2, gcd(a1, c1), gcd(a1, d1), gcd(b1, c1), gcd(b1, d1)]
}

fn valid_tuple(g: &[u64; 6], tables: &SieveTables) -> bool {
    for i in 0..6 {
        if !tables.is_squarefree(g[i] as usize) {
            return false;
        }
        for j in i + 1..6 {
            if (i, j) != (0, 1) && gcd(g[i], g[j]) != 1 {
                return false;
            }
        }
    }
    true
}

/// Checks one `m`; returns `(quadruples, tuples, ok)`.
fn bijection_at(m: u64, tables: &SieveTables) -> Result<(u64, u64, bool)> {
    let fac = tables.factorize(m as usize)?;
    let primes: Vec<u64> = fac.iter().map(|&(p, _)| p as u64).collect();
    let rad: u64 = primes.iter().product();
    let m2 = m * m;
    let divs = squarefree_divisors(&primes);

    let mut quads = HashSet::new();
    for &a in &divs {
        for &b in &divs {
            let ab = a * b;
            if m2 % ab != 0 {
                continue;
            }
            for &c in &divs {
                let abc = ab * c;
                if m2 % abc != 0 {
                    continue;
                }
                let d = m2 / abc;
                if rad % d == 0 {
                    quads.insert([a, b, c, d]);
                }
            }
        }
    }

    // tuples by assigning each prime: exponent 1 goes to one g_i, exponent 2 to g_1 and g_2
    let mut tuples = vec![[1u64; 6]];
    for &(p, e) in &fac {
        let p = p as u64;
        tuples = match e {
            1 => tuples
                .iter()
                .flat_map(|t| {
                    (0..6).map(move |i| {
                        let mut u = *t;
                        u[i] *= p;
                        u
                    })
                })
                .collect(),
            2 => tuples
                .into_iter()
                .map(|mut t| {
                    t[0] *= p;
                    t[1] *= p;
                    t
                })
                .collect(),
            _ => Vec::new(),
        };
    }

    let formula_quads: u64 = fac
        .iter()
        .map(|&(_, e)| match e {
            1 => 6,
            2 => 1,
            _ => 0,
        })
        .product();
    let mut ok = quads.len() as u64 == formula_quads && tuples.len() as u64 == formula_quads;
    let mut images = HashSet::new();
    for t in &tuples {
        let q = param_forward(*t);
        ok &= t.iter().product::<u64>() == m && valid_tuple(t, tables);
        ok &= quads.contains(&q) && param_inverse(q) == *t;
        images.insert(q);
    }
    ok &= images.len() == quads.len();
    for q in &quads {
        let g = param_inverse(*q);
        ok &= valid_tuple(&g, tables) && g.iter().product::<u64>() == m && param_forward(g) == *q;
    }
    Ok((quads.len() as u64, tuples.len() as u64, ok))
}

/// Exhaustive check of the squarefree 4-to-6 parametrization for every `m <= m_max`.
pub fn verify_param_bijection(m_max: u64) -> Result<IdentityReport> {
    if m_max < 1 {
        return Err(RmfError::invalid("m_max must be >= 1"));
    }
    let tables = SieveTables::build(m_max as usize)?;
    let rows = (1..=m_max)
        .into_par_iter()
        .map(|m| bijection_at(m, &tables))
        .collect::<Result<Vec<_>>>()?;
    let mismatches = rows.iter().filter(|r| !r.2).count() as f64;
    let quads: u64 = rows.iter().map(|r| r.0).sum();
    Ok(IdentityReport::exact(
        "param_bijection",
        json!({ "m_max": m_max, "quadruples": quads }),
        mismatches,
        0.0,
        0.0,
    ))
}

// ---------------------------------------------------------------------------
// E[U_x^2]

fn value_table(spec: &MultiplicativeSpec, x: usize) -> Result<Vec<Complex64>> {
    let tables = SieveTables::build(x.max(2))?;
    Ok(ValueTable::build(spec, &tables)?.values().to_vec())
}

fn check_ux_args(model: Model, spec: &MultiplicativeSpec, x: usize) -> Result<()> {
    if x > UX_X_MAX {
        return Err(RmfError::Refused(format!(
            "E[U_x^2] enumeration needs x <= {UX_X_MAX}, got {x}"
        )));
    }
    if x < 2 {
        return Err(RmfError::invalid("E[U_x^2] needs x >= 2"));
    }
    if model == Model::Rademacher && !spec.squarefree_only {
        return Err(RmfError::Refused(
            "the Rademacher model needs a squarefree-supported weight".into(),
        ));
    }
    Ok(())
}

/// `F_m(y) = sum_{h <= y, (h, m) = 1} |f(h)|^2 (1/h - 1/y)` from `values[h] = f(h)`.
pub fn f_m(values: &[Complex64], m: u64, y: f64) -> f64 {
    if y < 1.0 {
        return 0.0;
    }
    let top = (y.floor() as usize).min(values.len() - 1);
    let mut sum = 0.0;
    for (h, v) in values.iter().enumerate().take(top + 1).skip(1) {
        if m == 1 || gcd(h as u64, m) == 1 {
            sum += v.norm_sqr() * (1.0 / h as f64 - 1.0 / y);
        }
    }
    sum
}

/// `S_1(x, m, d) = F_m(x/d) / F_1(x)`.
pub fn s_1(values: &[Complex64], x: f64, m: u64, d: f64) -> f64 {
    f_m(values, m, x / d) / f_m(values, 1, x)
}

/// `D_m = prod_{p | m} (sum_i |f(p^i)|^2 / p^i)^{-1}`.
pub fn d_m(spec: &MultiplicativeSpec, m: u64) -> Result<f64> {
    let mut d = 1.0;
    let mut r = m;
    let mut p = 2;
    while p * p <= r {
        if r % p == 0 {
            d /= local_mean_factor(spec, p)?;
            while r % p == 0 {
                r /= p;
            }
        }
        p += 1;
    }
    if r > 1 {
        d /= local_mean_factor(spec, r)?;
    }
    Ok(d)
}

/// `E[U_x^2]` by enumerating every `(n_1, m_1, n_2, m_2)` allowed by orthogonality.
pub fn exact_ux_second_moment(model: Model, spec: &MultiplicativeSpec, x: usize) -> Result<f64> {
    check_ux_args(model, spec, x)?;
    let f = value_table(spec, x)?;
    let xf = x as f64;
    let w = |t: usize| 1.0 / t as f64 - 1.0 / xf;
    let f1 = f_m(&f, 1, xf);
    let s = match model {
        Model::Steinhaus => {
            let mut buckets: Vec<Vec<(usize, usize)>> = vec![Vec::new(); x * x + 1];
            for n in 1..=x {
                for m in 1..=x {
                    if f[n].norm_sqr() > 0.0 && f[m].norm_sqr() > 0.0 {
                        buckets[n * m].push((n, m));
                    }
                }
            }
            buckets
                .par_iter()
                .map(|b| {
                    let mut acc = 0.0;
                    for &(n1, m1) in b {
                        let a = f[n1] * f[m1];
                        for &(n2, m2) in b {
                            let z = a * (f[n2] * f[m2]).conj();
                            acc += z.re * w(n1.max(n2)) * w(m1.max(m2));
                        }
                    }
                    acc
                })
                .sum::<f64>()
        }
        Model::Rademacher => {
            let mut buckets: BTreeMap<u64, Complex64> = BTreeMap::new();
            for n1 in 1..=x {
                for n2 in 1..=x {
                    if f[n1].norm_sqr() == 0.0 || f[n2].norm_sqr() == 0.0 {
                        continue;
                    }
                    let g = gcd(n1 as u64, n2 as u64);
                    let kernel = (n1 as u64 / g) * (n2 as u64 / g);
                    *buckets.entry(kernel).or_default() += f[n1] * f[n2].conj() * w(n1.max(n2));
                }
            }
            buckets.values().map(|b| (b * b).re).sum()
        }
    };
    Ok(s / (f1 * f1))
}

/// Numbers `g < bound` whose prime factors all lie in `primes`.
fn smooth_over(primes: &[u64], bound: f64) -> Vec<u64> {
    let mut out = vec![1u64];
    for &p in primes {
        let k = out.len();
        for i in 0..k {
            let mut v = out[i] * p;
            while (v as f64) < bound {
                out.push(v);
                v *= p;
            }
        }
    }
    out.retain(|&g| (g as f64) < bound);
    out
}

fn prime_factors(mut n: u64) -> Vec<u64> {
    let mut out = Vec::new();
    let mut p = 2;
    while p * p <= n {
        if n % p == 0 {
            out.push(p);
            while n % p == 0 {
                n /= p;
            }
        }
        p += 1;
    }
    if n > 1 {
        out.push(n);
    }
    out
}

/// `E[U_x^2]` from the coprime-pair representation with `F_m` and `S_1` summed directly.
pub fn formula_ux_second_moment(model: Model, spec: &MultiplicativeSpec, x: usize) -> Result<f64> {
    check_ux_args(model, spec, x)?;
    let f = value_table(spec, x)?;
    let xf = x as f64;
    let total = match model {
        Model::Steinhaus => (1..x)
            .into_par_iter()
            .map(|n1| {
                let pf1 = prime_factors(n1 as u64);
                let mut acc = 0.0;
                for n2 in 1..x {
                    if gcd(n1 as u64, n2 as u64) != 1 {
                        continue;
                    }
                    let big = n1.max(n2) as f64;
                    let bound = xf / big;
                    let g1s = smooth_over(&pf1, bound);
                    let g2s = smooth_over(&prime_factors(n2 as u64), bound);
                    let m = (n1 * n2) as u64;
                    let mut inner = Complex64::new(0.0, 0.0);
                    for &g1 in &g1s {
                        for &g2 in &g2s {
                            let d = big * (g1 * g2) as f64;
                            if d >= xf {
                                continue;
                            }
                            let (g1u, g2u) = (g1 as usize, g2 as usize);
                            let coef = f[g1u].conj() * f[g1u * n1] * f[g2u] * f[g2u * n2].conj();
                            if coef.norm_sqr() == 0.0 {
                                continue;
                            }
                            inner += coef / (g1 * g2) as f64 * s_1(&f, xf, m, d);
                        }
                    }
                    acc += inner.norm_sqr() / (big * big);
                }
                acc
            })
            .sum::<f64>(),
        Model::Rademacher => {
            let g2: Vec<usize> = (1..x).filter(|&g| f[g].norm_sqr() > 0.0).collect();
            g2.par_iter()
                .map(|&g3| {
                    let mut acc = 0.0;
                    for &g4 in &g2 {
                        if g3 * g4 >= x || gcd(g3 as u64, g4 as u64) != 1 {
                            continue;
                        }
                        for &g5 in &g2 {
                            if g3 * g5 >= x || gcd(g5 as u64, (g3 * g4) as u64) != 1 {
                                continue;
                            }
                            for &g6 in &g2 {
                                if g5 * g6 >= x
                                    || g4 * g6 >= x
                                    || gcd(g6 as u64, (g3 * g4 * g5) as u64) != 1
                                {
                                    continue;
                                }
                                let m1 = (g3 * g4).max(g5 * g6) as f64;
                                let m2 = (g3 * g5).max(g4 * g6) as f64;
                                let big_g = (g3 * g4 * g5 * g6) as u64;
                                let num = f[g3].norm_sqr() * f[g4].norm_sqr() * f[g5].norm_sqr() * f[g6].norm_sqr();
                                acc += num / (m1 * m2) * s_1(&f, xf, big_g, m1) * s_1(&f, xf, big_g, m2);
                            }
                        }
                    }
                    acc
                })
                .sum::<f64>()
        }
    };
    Ok(total)
}

// ---------------------------------------------------------------------------
// limit constants

/// `sum_{j >= 0} conj f(p^j) f(p^{j+a}) / p^j`, truncated at relative `1e-12`; `absolute`
/// sums the moduli instead.
fn shifted_series(spec: &MultiplicativeSpec, p: u64, a: u32, absolute: bool) -> Result<Complex64> {
    let pf = p as f64;
    let mut sum = Complex64::new(0.0, 0.0);
    let mut scale = 1.0;
    let mut run = 0;
    for j in 0..4096u32 {
        let fj = if j == 0 { Complex64::new(1.0, 0.0) } else { spec.value_at(p, j) };
        let term = fj.conj() * spec.value_at(p, j + a) * scale;
        let term = if absolute { Complex64::new(term.norm(), 0.0) } else { term };
        if !term.re.is_finite() || !term.im.is_finite() {
            return Err(RmfError::DivergingNormalizer { p });
        }
        sum += term;
        run = if term.norm() <= 1e-12 * sum.norm() { run + 1 } else { 0 };
        if run == 5 {
            return Ok(sum);
        }
        scale /= pf;
    }
    Err(RmfError::DivergingNormalizer { p })
}

fn factor_pairs(mut n: u64) -> Vec<(u64, u32)> {
    let mut out = Vec::new();
    let mut p = 2;
    while p * p <= n {
        if n % p == 0 {
            let mut a = 0;
            while n % p == 0 {
                n /= p;
                a += 1;
            }
            out.push((p, a));
        }
        p += 1;
    }
    if n > 1 {
        out.push((n, 1));
    }
    out
}

/// Truncated `R` (or `R'` with `dominating`), with the last dyadic shell's contribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LimitConstant {
    pub value: f64,
    pub last_shell: f64,
}

fn r_terms(spec: &MultiplicativeSpec, n_max: u64, dominating: bool) -> Result<Vec<f64>> {
    // A(n) = prod_{p^a || n} series(p, a), local(n) = prod_{p | n} local factor
    let mut a = vec![0.0f64; n_max as usize + 1];
    let mut inv_local = vec![0.0f64; n_max as usize + 1];
    for n in 1..=n_max {
        let mut prod = Complex64::new(1.0, 0.0);
        let mut d = 1.0;
        for (p, e) in factor_pairs(n) {
            prod *= shifted_series(spec, p, e, dominating)?;
            d /= local_mean_factor(spec, p)?;
        }
        a[n as usize] = prod.norm_sqr();
        inv_local[n as usize] = d;
    }
    // contribution by max(n1, n2)
    let mut by_max = vec![0.0f64; n_max as usize + 1];
    for n1 in 1..=n_max as usize {
        for n2 in 1..=n_max as usize {
            if gcd(n1 as u64, n2 as u64) != 1 {
                continue;
            }
            let big = n1.max(n2);
            let dd = inv_local[n1] * inv_local[n2];
            by_max[big] += a[n1] * a[n2] * dd * dd / (big * big) as f64;
        }
    }
    Ok(by_max)
}

fn shell_split(by_max: &[f64], n_max: u64) -> LimitConstant {
    let value: f64 = by_max.iter().sum();
    let last_shell = by_max[(n_max as usize / 2 + 1)..].iter().sum();
    LimitConstant { value, last_shell }
}

/// `R` over coprime pairs `n_1, n_2 <= n_max`.
pub fn r_constant(spec: &MultiplicativeSpec, n_max: u64) -> Result<LimitConstant> {
    if n_max < 1 {
        return Err(RmfError::invalid("n_max must be >= 1"));
    }
    Ok(shell_split(&r_terms(spec, n_max, false)?, n_max))
}

/// `R'`, the dominating series; reported as a diagnostic only.
pub fn r_prime_constant(spec: &MultiplicativeSpec, n_max: u64) -> Result<LimitConstant> {
    if n_max < 1 {
        return Err(RmfError::invalid("n_max must be >= 1"));
    }
    Ok(shell_split(&r_terms(spec, n_max, true)?, n_max))
}

/// `R` for completely multiplicative `f`: `sum |f(n_1)|^2 |f(n_2)|^2 / max^2` over coprime pairs.
pub fn r_constant_simplified(spec: &MultiplicativeSpec, n_max: u64) -> Result<f64> {
    if !spec.is_completely_multiplicative() {
        return Err(RmfError::invalid("simplified R needs a completely multiplicative weight"));
    }
    let g: Vec<f64> = (0..=n_max)
        .map(|n| {
            if n == 0 {
                return 0.0;
            }
            factor_pairs(n)
                .iter()
                .map(|&(p, e)| spec.norm_sqr_at(p, e))
                .product()
        })
        .collect();
    let mut total = 0.0;
    for n1 in 1..=n_max {
        for n2 in 1..=n_max {
            if gcd(n1, n2) == 1 {
                let big = n1.max(n2) as f64;
                total += g[n1 as usize] * g[n2 as usize] / (big * big);
            }
        }
    }
    Ok(total)
}

/// `R^beta` over pairwise-coprime squarefree `g_3..g_6 <= g_max`.
pub fn r_beta_constant(spec: &MultiplicativeSpec, g_max: u64) -> Result<f64> {
    if !spec.squarefree_only {
        return Err(RmfError::invalid("R^beta needs a squarefree-supported weight"));
    }
    let tables = SieveTables::build(g_max.max(2) as usize)?;
    let vals = ValueTable::build(spec, &tables)?;
    // f^2(g) prod_{p | g} (1 + f^2(p)/p)^{-2}
    let support: Vec<(u64, f64)> = (1..=g_max)
        .filter_map(|g| {
            let v = vals.get(g as usize).norm_sqr();
            if v == 0.0 {
                return None;
            }
            let damp: f64 = prime_factors(g)
                .iter()
                .map(|&p| (1.0 + spec.norm_sqr_at(p, 1) / p as f64).powi(-2))
                .product();
            Some((g, v * damp))
        })
        .collect();
    let total = support
        .par_iter()
        .map(|&(g3, w3)| {
            let mut acc = 0.0;
            for &(g4, w4) in &support {
                if gcd(g3, g4) != 1 {
                    continue;
                }
                for &(g5, w5) in &support {
                    if gcd(g5, g3 * g4) != 1 {
                        continue;
                    }
                    for &(g6, w6) in &support {
                        if gcd(g6, g3 * g4 * g5) != 1 {
                            continue;
                        }
                        let m1 = (g3 * g4).max(g5 * g6) as f64;
                        let m2 = (g3 * g5).max(g4 * g6) as f64;
                        acc += w3 * w4 * w5 * w6 / (m1 * m2);
                    }
                }
            }
            acc
        })
        .sum();
    Ok(total)
}

// ---------------------------------------------------------------------------
// local cross-moments

/// One evaluation point `z = sigma + i s`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub sigma: f64,
    pub s: f64,
}

fn local_coeffs(spec: &MultiplicativeSpec, p: u64, z: Point, k_max: u32) -> Vec<Complex64> {
    let lp = (p as f64).ln();
    (0..=k_max)
        .map(|k| {
            if k == 0 {
                return Complex64::new(1.0, 0.0);
            }
            let kf = k as f64;
            spec.value_at(p, k) * Complex64::from_polar((-kf * z.sigma * lp).exp(), -kf * z.s * lp)
        })
        .collect()
}

fn moment_pattern(model: Model, up: usize, down: usize) -> f64 {
    match model {
        Model::Steinhaus => (up == down) as u8 as f64,
        Model::Rademacher => ((up + down) % 2 == 0) as u8 as f64,
    }
}

fn eval_poly(c: &[Complex64], a: Complex64) -> Complex64 {
    c.iter().rev().fold(Complex64::new(0.0, 0.0), |acc, &ck| acc * a + ck)
}

/// Exact `E|X_1|^2 |X_2|^2` for polynomials in `alpha(p)` with coefficients `c1`, `c2`.
pub fn two_point_exact(model: Model, c1: &[Complex64], c2: &[Complex64]) -> Complex64 {
    let mut total = Complex64::new(0.0, 0.0);
    for (a, &ca) in c1.iter().enumerate() {
        for (b, &cb) in c1.iter().enumerate() {
            for (c, &cc) in c2.iter().enumerate() {
                for (d, &cd) in c2.iter().enumerate() {
                    let e = moment_pattern(model, a + c, b + d);
                    if e != 0.0 {
                        total += ca * cb.conj() * cc * cd.conj() * e;
                    }
                }
            }
        }
    }
    total
}

/// Exact `E|X|^2`.
pub fn one_point_exact(model: Model, c: &[Complex64]) -> Complex64 {
    let mut total = Complex64::new(0.0, 0.0);
    for (a, &ca) in c.iter().enumerate() {
        for (b, &cb) in c.iter().enumerate() {
            let e = moment_pattern(model, a, b);
            if e != 0.0 {
                total += ca * cb.conj() * e;
            }
        }
    }
    total
}

/// Monte Carlo vs exact local factors at one prime: the full one-point factor at
/// `z_1` and the `k <= 2` two-point product at `(z_1, z_2)`. Rademacher keeps `k = 1`.
pub fn cross_moment_check(
    model: Model,
    spec: &MultiplicativeSpec,
    p: u64,
    z1: Point,
    z2: Point,
    n_mc: usize,
    seed: u64,
) -> Result<Vec<IdentityReport>> {
    if n_mc == 0 {
        return Err(RmfError::invalid("N_mc must be positive"));
    }
    if !crate::multfn::is_prime_u64(p) {
        return Err(RmfError::invalid(format!("{p} is not prime")));
    }
    let (k_one, k_two) = match model {
        Model::Steinhaus => (k_trunc(spec, p)?, 2),
        Model::Rademacher => (1, 1),
    };
    let one = local_coeffs(spec, p, z1, k_one);
    let c1 = local_coeffs(spec, p, z1, k_two);
    let c2 = local_coeffs(spec, p, z2, k_two);
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, p));
    let mut x1 = Vec::with_capacity(n_mc);
    let mut x2 = Vec::with_capacity(n_mc);
    for _ in 0..n_mc {
        let a = model.sample_unit(&mut rng);
        x1.push(Complex64::new(eval_poly(&one, a).norm_sqr(), 0.0));
        let v = eval_poly(&c1, a).norm_sqr() * eval_poly(&c2, a).norm_sqr();
        x2.push(Complex64::new(v, 0.0));
    }
    let params = json!({
        "model": model.name(),
        "family": spec.family_name(),
        "p": p,
        "sigma1": z1.sigma,
        "sigma2": z2.sigma,
        "s1": z1.s,
        "s2": z2.s,
        "n_mc": n_mc,
    });
    let (m1, se1) = mean_se(&x1);
    let (m2, se2) = mean_se(&x2);
    Ok(vec![
        IdentityReport::monte_carlo("cross_moment.one_point", params.clone(), m1, one_point_exact(model, &one), se1),
        IdentityReport::monte_carlo("cross_moment.two_point", params, m2, two_point_exact(model, &c1, &c2), se2),
    ])
}

// ---------------------------------------------------------------------------
// orthogonality

fn mobius_sq(tables: &SieveTables, n: usize) -> bool {
    tables.is_squarefree(n)
}

fn is_square(n: u64) -> bool {
    let r = (n as f64).sqrt().round() as u64;
    (r.saturating_sub(1)..=r + 1).any(|s| s * s == n)
}

/// `E[alpha(n) conj alpha(m)]` and `E[beta(n) beta(m)]` over all `n <= m <= n_max`.
pub fn orthogonality_table(n_max: usize, n_mc: usize, seed: u64) -> Result<Vec<IdentityReport>> {
    if n_max > 100 || n_max < 1 {
        return Err(RmfError::OutOfRange {
            what: "n_max",
            value: n_max as f64,
            lo: 1.0,
            hi: 100.0,
        });
    }
    if n_mc < 2 {
        return Err(RmfError::invalid("N_mc must be at least 2"));
    }
    let tables = SieveTables::build(n_max.max(2))?;
    let mut reports = Vec::new();
    for model in [Model::Steinhaus, Model::Rademacher] {
        let mut sums = vec![Complex64::new(0.0, 0.0); (n_max + 1) * (n_max + 1)];
        let mut sq = vec![0.0f64; (n_max + 1) * (n_max + 1)];
        for i in 0..n_mc {
            let draw = crate::engine::CoefficientDraw::sample(model, &tables, seed, i as u64);
            let a = crate::engine::alpha_values(&draw, &tables);
            for n in 1..=n_max {
                for m in n..=n_max {
                    let z = a[n] * a[m].conj();
                    sums[n * (n_max + 1) + m] += z;
                    sq[n * (n_max + 1) + m] += z.norm_sqr();
                }
            }
        }
        let nf = n_mc as f64;
        for n in 1..=n_max {
            for m in n..=n_max {
                let k = n * (n_max + 1) + m;
                let mean = sums[k] / nf;
                let var = ((sq[k] - nf * mean.norm_sqr()) / (nf - 1.0)).max(0.0);
                let exact = match model {
                    Model::Steinhaus => (n == m) as u8 as f64,
                    Model::Rademacher => {
                        let both = mobius_sq(&tables, n) && mobius_sq(&tables, m);
                        (both && is_square((n * m) as u64)) as u8 as f64
                    }
                };
                reports.push(IdentityReport::monte_carlo(
                    "orthogonality",
                    json!({ "model": model.name(), "n": n, "m": m, "n_mc": n_mc }),
                    mean,
                    Complex64::new(exact, 0.0),
                    (var / nf).sqrt(),
                ));
            }
        }
    }
    Ok(reports)
}

/// `E[beta(a) beta(b) beta(c) beta(d)]` against the perfect-square predicate.
pub fn fourfold_check(quads: &[[usize; 4]], n_mc: usize, seed: u64) -> Result<Vec<IdentityReport>> {
    if n_mc < 2 {
        return Err(RmfError::invalid("N_mc must be at least 2"));
    }
    let top = quads.iter().flatten().copied().max().unwrap_or(2).max(2);
    let tables = SieveTables::build(top)?;
    let mut samples = vec![Vec::with_capacity(n_mc); quads.len()];
    for i in 0..n_mc {
        let draw = crate::engine::CoefficientDraw::sample(Model::Rademacher, &tables, seed, i as u64);
        let b = crate::engine::alpha_values(&draw, &tables);
        for (q, out) in quads.iter().zip(samples.iter_mut()) {
            out.push(q.iter().map(|&n| b[n]).product::<Complex64>());
        }
    }
    Ok(quads
        .iter()
        .zip(&samples)
        .map(|(q, s)| {
            let all_sf = q.iter().all(|&n| mobius_sq(&tables, n));
            let prod: u64 = q.iter().map(|&n| n as u64).product();
            let exact = (all_sf && is_square(prod)) as u8 as f64;
            let (mean, se) = mean_se(s);
            IdentityReport::monte_carlo(
                "orthogonality.fourfold",
                json!({ "quad": q, "n_mc": n_mc }),
                mean,
                Complex64::new(exact, 0.0),
                se,
            )
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bijection_small_cases() {
        let tables = SieveTables::build(100).unwrap();
        assert_eq!(bijection_at(1, &tables).unwrap(), (1, 1, true));
        let (q, t, ok) = bijection_at(6, &tables).unwrap();
        assert!(ok);
        assert_eq!((q, t), (36, 36));
        assert_eq!(bijection_at(8, &tables).unwrap(), (0, 0, true));
        assert_eq!(bijection_at(4, &tables).unwrap(), (1, 1, true));
    }

    #[test]
    fn unit_at_two_evaluators_agree() {
        let spec = MultiplicativeSpec::unit();
        let a = exact_ux_second_moment(Model::Steinhaus, &spec, 2).unwrap();
        let b = formula_ux_second_moment(Model::Steinhaus, &spec, 2).unwrap();
        assert!((a - b).abs() < 1e-12, "{a} {b}");
        // F_1(2) = 1/2; only (1,1,1,1) carries weight (1/2)^2
        assert!((a - 1.0).abs() < 1e-12);
    }

    #[test]
    fn refuses_large_x() {
        let spec = MultiplicativeSpec::unit();
        assert!(matches!(
            exact_ux_second_moment(Model::Steinhaus, &spec, 301),
            Err(RmfError::Refused(_))
        ));
        assert!(exact_ux_second_moment(Model::Rademacher, &spec, 10).is_err());
    }

    #[test]
    fn report_pass_rule() {
        let r = IdentityReport::exact("t", json!({}), 1.0 + 1e-11, 1.0, 1e-10);
        assert!(r.pass);
        let r = IdentityReport::exact("t", json!({}), 2.0, 1.0, 1e-10);
        assert!(!r.pass);
        let line = r.to_json_line();
        assert!(line.contains("\"errs\"") && line.contains("\"pass\":false"));
    }

    #[test]
    fn one_point_unit_geometric() {
        let spec = MultiplicativeSpec::unit();
        let c = local_coeffs(&spec, 2, Point { sigma: 0.5, s: 0.0 }, 60);
        let e = one_point_exact(Model::Steinhaus, &c);
        assert!((e.re - 2.0).abs() < 1e-12);
    }
}
