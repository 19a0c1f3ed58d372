//! Deterministic multiplicative weights `f`, their value tables, and the
//! prime-density diagnostic for `|f|^2`.

use std::collections::BTreeMap;
use std::fmt;

use num_complex::Complex64;
use serde_json::json;

use crate::arith::SieveTables;
use crate::error::{Result, RmfError};

/// Rule used for prime powers missing from a custom table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Extension {
    /// `f(p^k) = f(p)^k`.
    CompletelyMultiplicative,
    /// `f(p^k) = 0` for `k >= 2`.
    Squarefree,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CustomTable {
    pub extension: Extension,
    pub theta: f64,
    /// Explicit `(p, k) -> f(p^k)`; primes absent from the map have `f(p^k) = 0`.
    pub entries: BTreeMap<(u64, u32), Complex64>,
}

impl CustomTable {
    /// Parses the text format
    ///
    /// ```text
    /// extension: completely_multiplicative | squarefree
    /// theta: 0.4          # optional, defaults to 1
    /// p k re im
    /// ```
    ///
    /// Blank lines and `#` comments are ignored.
    pub fn parse(text: &str) -> Result<Self> {
        let mut extension = None;
        let mut theta = 1.0;
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let err = |msg: String| RmfError::Parse { line: line_no, msg };
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some((key, value)) = line.split_once(':') {
                let value = value.trim();
                match key.trim() {
                    "extension" => {
                        extension = Some(match value {
                            "completely_multiplicative" => Extension::CompletelyMultiplicative,
                            "squarefree" => Extension::Squarefree,
                            other => return Err(err(format!("unknown extension policy '{other}'"))),
                        })
                    }
                    "theta" => {
                        theta = value
                            .parse::<f64>()
                            .map_err(|e| err(format!("bad theta '{value}': {e}")))?;
                        if !(theta > 0.0) {
                            return Err(err("theta must be positive".into()));
                        }
                    }
                    other => return Err(err(format!("unknown header '{other}'"))),
                }
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 4 {
                return Err(err(format!("expected 'p k re im', got {} fields", fields.len())));
            }
            let p: u64 = fields[0]
                .parse()
                .map_err(|e| err(format!("bad prime '{}': {e}", fields[0])))?;
            let k: u32 = fields[1]
                .parse()
                .map_err(|e| err(format!("bad exponent '{}': {e}", fields[1])))?;
            let re: f64 = fields[2]
                .parse()
                .map_err(|e| err(format!("bad real part '{}': {e}", fields[2])))?;
            let im: f64 = fields[3]
                .parse()
                .map_err(|e| err(format!("bad imaginary part '{}': {e}", fields[3])))?;
            if !is_prime_u64(p) {
                return Err(err(format!("{p} is not prime")));
            }
            if k == 0 {
                return Err(err("exponent must be >= 1".into()));
            }
            if !(re.is_finite() && im.is_finite()) {
                return Err(err("non-finite value".into()));
            }
            if entries.insert((p, k), Complex64::new(re, im)).is_some() {
                return Err(err(format!("duplicate entry for ({p}, {k})")));
            }
        }
        let extension = extension.ok_or(RmfError::Parse {
            line: 0,
            msg: "missing 'extension:' header".into(),
        })?;
        if extension == Extension::Squarefree {
            if let Some((&(p, k), _)) = entries.iter().find(|(&(_, k), _)| k >= 2) {
                return Err(RmfError::Parse {
                    line: 0,
                    msg: format!("entry ({p}, {k}) contradicts the squarefree extension"),
                });
            }
        }
        Ok(Self {
            extension,
            theta,
            entries,
        })
    }

    fn value(&self, p: u64, k: u32) -> Complex64 {
        if let Some(&v) = self.entries.get(&(p, k)) {
            return v;
        }
        match self.extension {
            Extension::Squarefree => Complex64::new(0.0, 0.0),
            Extension::CompletelyMultiplicative => self
                .entries
                .get(&(p, 1))
                .map(|v| v.powu(k))
                .unwrap_or_default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Family {
    Unit,
    DivisorZ { z: f64 },
    ThetaBigomega { theta: f64 },
    ResidueIndicator { modulus: u64, residues: Vec<u64> },
    TwoSquaresTOmega { t: f64 },
    Moebius,
    CustomTable(CustomTable),
}

/// A multiplicative weight given by its prime-power values.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiplicativeSpec {
    pub family: Family,
    /// Claimed prime density of `|f|^2`; analytic input, never estimated.
    pub theta: f64,
    /// `f(p^k) = 0` for all `k >= 2`.
    pub squarefree_only: bool,
    pub complex_valued: bool,
}

impl MultiplicativeSpec {
    pub fn unit() -> Self {
        Self::real(Family::Unit, 1.0, false)
    }

    /// `d_z`, the coefficients of `zeta(s)^z`.
    pub fn divisor_z(z: f64) -> Result<Self> {
        if !z.is_finite() {
            return Err(RmfError::invalid("z must be finite"));
        }
        Ok(Self::real(Family::DivisorZ { z }, z * z, false))
    }

    /// `f(n) = theta^(Omega(n)/2)`, so that `|f|^2 = theta^Omega`.
    pub fn theta_bigomega(theta: f64) -> Result<Self> {
        if !(theta > 0.0 && theta.is_finite()) {
            return Err(RmfError::invalid("theta must be positive"));
        }
        Ok(Self::real(Family::ThetaBigomega { theta }, theta, false))
    }

    /// Indicator of integers all of whose prime factors lie in residue classes `residues (mod modulus)`.
    pub fn residue_indicator(modulus: u64, residues: &[u64]) -> Result<Self> {
        if modulus == 0 {
            return Err(RmfError::invalid("modulus must be positive"));
        }
        let mut set: Vec<u64> = residues.iter().map(|r| r % modulus).collect();
        set.sort_unstable();
        set.dedup();
        if set.is_empty() {
            return Err(RmfError::invalid("residue set must be nonempty"));
        }
        if let Some(r) = set.iter().find(|&&r| crate::arith::gcd(r, modulus) != 1) {
            return Err(RmfError::invalid(format!(
                "residue {r} is not coprime to {modulus}"
            )));
        }
        let theta = set.len() as f64 / euler_phi(modulus) as f64;
        Ok(Self::real(
            Family::ResidueIndicator {
                modulus,
                residues: set,
            },
            theta,
            false,
        ))
    }

    /// `b(n) t^omega(n)` with `b` the indicator of sums of two squares.
    pub fn two_squares_t_omega(t: f64) -> Result<Self> {
        if !t.is_finite() {
            return Err(RmfError::invalid("t must be finite"));
        }
        Ok(Self::real(Family::TwoSquaresTOmega { t }, t * t / 2.0, false))
    }

    pub fn moebius() -> Self {
        Self::real(Family::Moebius, 1.0, true)
    }

    pub fn custom(table: CustomTable) -> Self {
        let complex_valued = table.entries.values().any(|v| v.im != 0.0);
        let squarefree_only = table.extension == Extension::Squarefree;
        let theta = table.theta;
        Self {
            family: Family::CustomTable(table),
            theta,
            squarefree_only,
            complex_valued,
        }
    }

    fn real(family: Family, theta: f64, squarefree_only: bool) -> Self {
        Self {
            family,
            theta,
            squarefree_only,
            complex_valued: false,
        }
    }

    /// `mu^2 f`: the same prime values with all higher prime powers zeroed.
    pub fn restricted_to_squarefree(mut self) -> Self {
        self.squarefree_only = true;
        self
    }

    /// `f(p^k)` with a primality check on `p`.
    pub fn eval_prime_power(&self, p: u64, k: u32) -> Result<Complex64> {
        if !is_prime_u64(p) {
            return Err(RmfError::invalid(format!("{p} is not prime")));
        }
        if k == 0 {
            return Err(RmfError::invalid("exponent must be >= 1"));
        }
        Ok(self.value_at(p, k))
    }

    /// `f(p^k)` for a caller-guaranteed prime `p` and `k >= 1`.
    pub fn value_at(&self, p: u64, k: u32) -> Complex64 {
        if self.squarefree_only && k >= 2 {
            return Complex64::new(0.0, 0.0);
        }
        let re = match &self.family {
            Family::Unit => 1.0,
            Family::DivisorZ { z } => {
                let mut v = 1.0;
                for j in 0..k {
                    v *= (z + j as f64) / (j as f64 + 1.0);
                }
                v
            }
            Family::ThetaBigomega { theta } => theta.powf(k as f64 / 2.0),
            Family::ResidueIndicator { modulus, residues } => {
                if residues.binary_search(&(p % modulus)).is_ok() {
                    1.0
                } else {
                    0.0
                }
            }
            Family::TwoSquaresTOmega { t } => {
                if p % 4 == 3 && k % 2 == 1 {
                    0.0
                } else {
                    *t
                }
            }
            Family::Moebius => {
                if k == 1 {
                    -1.0
                } else {
                    0.0
                }
            }
            Family::CustomTable(table) => return table.value(p, k),
        };
        Complex64::new(re, 0.0)
    }

    /// `|f(p^k)|^2`.
    #[inline]
    pub fn norm_sqr_at(&self, p: u64, k: u32) -> f64 {
        self.value_at(p, k).norm_sqr()
    }

    pub fn family_name(&self) -> &'static str {
        match self.family {
            Family::Unit => "unit",
            Family::DivisorZ { .. } => "divisor-z",
            Family::ThetaBigomega { .. } => "theta-bigomega",
            Family::ResidueIndicator { .. } => "residue-indicator",
            Family::TwoSquaresTOmega { .. } => "two-squares-t-omega",
            Family::Moebius => "moebius",
            Family::CustomTable(_) => "custom-table",
        }
    }

    pub fn family_params(&self) -> serde_json::Value {
        let mut v = match &self.family {
            Family::Unit | Family::Moebius => json!({}),
            Family::DivisorZ { z } => json!({ "z": z }),
            Family::ThetaBigomega { theta } => json!({ "theta": theta }),
            Family::ResidueIndicator { modulus, residues } => {
                json!({ "modulus": modulus, "residues": residues })
            }
            Family::TwoSquaresTOmega { t } => json!({ "t": t }),
            Family::CustomTable(table) => json!({
                "extension": match table.extension {
                    Extension::CompletelyMultiplicative => "completely_multiplicative",
                    Extension::Squarefree => "squarefree",
                },
                "entries": table.entries.len(),
            }),
        };
        v["squarefree_only"] = json!(self.squarefree_only);
        v
    }

    /// Whether `f(p^k) = f(p)^k` holds for every prime power.
    pub fn is_completely_multiplicative(&self) -> bool {
        if self.squarefree_only {
            return false;
        }
        match &self.family {
            Family::Unit | Family::ThetaBigomega { .. } | Family::ResidueIndicator { .. } => true,
            Family::DivisorZ { z } => *z == 0.0 || *z == 1.0,
            Family::CustomTable(t) => {
                t.extension == Extension::CompletelyMultiplicative
                    && t.entries.keys().all(|&(_, k)| k == 1)
            }
            Family::TwoSquaresTOmega { .. } | Family::Moebius => false,
        }
    }
}

impl fmt::Display for MultiplicativeSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.family_name(), self.family_params())
    }
}

/// `f(n)` for all `n <= limit` plus prefix sums of `|f|^2`.
#[derive(Debug, Clone)]
pub struct ValueTable {
    limit: usize,
    values: Vec<Complex64>,
    norm_sq_prefix: Vec<f64>,
}

impl ValueTable {
    /// One pass over the spf chain: `f(n) = f(p^a) f(n / p^a)`.
    pub fn build(spec: &MultiplicativeSpec, tables: &SieveTables) -> Result<Self> {
        let limit = tables.limit();
        let spf = tables.spf();
        let mut values = vec![Complex64::new(0.0, 0.0); limit + 1];
        values[1] = Complex64::new(1.0, 0.0);
        for n in 2..=limit {
            let p = spf[n] as usize;
            let mut pa = p;
            let mut a = 1u32;
            while n % (pa * p) == 0 {
                pa *= p;
                a += 1;
            }
            values[n] = if pa == n {
                spec.value_at(p as u64, a)
            } else {
                values[pa] * values[n / pa]
            };
        }
        let mut norm_sq_prefix = vec![0.0; limit + 1];
        for n in 1..=limit {
            norm_sq_prefix[n] = norm_sq_prefix[n - 1] + values[n].norm_sqr();
        }
        Ok(Self {
            limit,
            values,
            norm_sq_prefix,
        })
    }

    pub fn limit(&self) -> usize {
        self.limit
    }

    /// `values()[n] = f(n)`; index 0 is unused.
    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    #[inline]
    pub fn get(&self, n: usize) -> Complex64 {
        self.values[n]
    }

    /// `sum_{m <= n} |f(m)|^2`.
    #[inline]
    pub fn norm_sq_sum(&self, n: usize) -> f64 {
        self.norm_sq_prefix[n.min(self.limit)]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PthetaRow {
    pub t: usize,
    pub prime_sum: f64,
    pub model: f64,
    pub ratio: f64,
}

/// Rows `(t, pi_g(t), theta t / log t, ratio)` for `g = |f|^2`.
pub fn ptheta_diagnostic(
    spec: &MultiplicativeSpec,
    tables: &SieveTables,
    checkpoints: &[usize],
) -> Result<Vec<PthetaRow>> {
    let mut rows = Vec::with_capacity(checkpoints.len());
    for &t in checkpoints {
        if t < 2 || t > tables.limit() {
            return Err(RmfError::invalid(format!(
                "checkpoint {t} outside 2..={}",
                tables.limit()
            )));
        }
        let prime_sum: f64 = tables.primes()[..tables.prime_pi(t)]
            .iter()
            .map(|&p| spec.norm_sqr_at(p as u64, 1))
            .sum();
        let model = spec.theta * t as f64 / (t as f64).ln();
        rows.push(PthetaRow {
            t,
            prime_sum,
            model,
            ratio: prime_sum / model,
        });
    }
    Ok(rows)
}

pub fn euler_phi(mut n: u64) -> u64 {
    let mut result = n;
    let mut p = 2;
    while p * p <= n {
        if n % p == 0 {
            while n % p == 0 {
                n /= p;
            }
            result -= result / p;
        }
        p += 1;
    }
    if n > 1 {
        result -= result / n;
    }
    result
}

/// Deterministic Miller-Rabin for 64-bit inputs.
pub fn is_prime_u64(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    for p in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        if n % p == 0 {
            return n == p;
        }
    }
    let mut d = n - 1;
    let mut s = 0;
    while d % 2 == 0 {
        d /= 2;
        s += 1;
    }
    let mul = |a: u64, b: u64| ((a as u128 * b as u128) % n as u128) as u64;
    let pow = |mut b: u64, mut e: u64| {
        let mut r = 1u64;
        while e > 0 {
            if e & 1 == 1 {
                r = mul(r, b);
            }
            b = mul(b, b);
            e >>= 1;
        }
        r
    };
    'witness: for a in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        let mut x = pow(a, d);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mul(x, x);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};

    #[test]
    fn prime_power_examples() {
        let d2 = MultiplicativeSpec::divisor_z(2.0).unwrap();
        assert_eq!(d2.eval_prime_power(5, 1).unwrap().re, 2.0);
        let dh = MultiplicativeSpec::divisor_z(0.5).unwrap();
        assert_relative_eq!(dh.eval_prime_power(3, 2).unwrap().re, 0.375, epsilon = 1e-15);
        let tb = MultiplicativeSpec::theta_bigomega(0.49).unwrap();
        assert_relative_eq!(tb.eval_prime_power(7, 2).unwrap().re, 0.49, epsilon = 1e-15);
        assert!(tb.eval_prime_power(9, 1).is_err());
    }

    #[test]
    fn two_squares_rule() {
        let f = MultiplicativeSpec::two_squares_t_omega(0.5).unwrap();
        assert_eq!(f.value_at(2, 3).re, 0.5);
        assert_eq!(f.value_at(5, 1).re, 0.5);
        assert_eq!(f.value_at(3, 1).re, 0.0);
        assert_eq!(f.value_at(3, 2).re, 0.5);
        assert_eq!(f.value_at(7, 3).re, 0.0);
    }

    #[test]
    fn value_table_examples() {
        let t = SieveTables::build(1000).unwrap();
        let unit = ValueTable::build(&MultiplicativeSpec::unit(), &t).unwrap();
        assert_eq!(unit.get(6).re, 1.0);
        let tb = ValueTable::build(&MultiplicativeSpec::theta_bigomega(0.49).unwrap(), &t).unwrap();
        assert_relative_eq!(tb.get(12).re, 0.49f64.powf(1.5), epsilon = 1e-15);
        assert_relative_eq!(tb.get(12).re, 0.343, epsilon = 1e-15);
        let mu = ValueTable::build(&MultiplicativeSpec::moebius(), &t).unwrap();
        assert_eq!(mu.get(4).re, 0.0);
        assert_eq!(mu.get(30).re, -1.0);
    }

    #[test]
    fn divisor_one_is_identically_one() {
        let t = SieveTables::build(5000).unwrap();
        let v = ValueTable::build(&MultiplicativeSpec::divisor_z(1.0).unwrap(), &t).unwrap();
        assert!((1..=5000).all(|n| v.get(n) == Complex64::new(1.0, 0.0)));
    }

    #[test]
    fn residue_indicator_support() {
        let t = SieveTables::build(5000).unwrap();
        let spec = MultiplicativeSpec::residue_indicator(4, &[1]).unwrap();
        assert_relative_eq!(spec.theta, 0.5);
        let v = ValueTable::build(&spec, &t).unwrap();
        for n in 1..=5000usize {
            let all_in = t.factorize(n).unwrap().iter().all(|&(p, _)| p % 4 == 1);
            assert_eq!(v.get(n).re, if all_in { 1.0 } else { 0.0 });
        }
        assert!(MultiplicativeSpec::residue_indicator(4, &[2]).is_err());
    }

    #[test]
    fn multiplicativity_on_random_coprime_pairs() {
        let limit = 200_000;
        let t = SieveTables::build(limit).unwrap();
        let specs = [
            MultiplicativeSpec::divisor_z(0.6).unwrap(),
            MultiplicativeSpec::theta_bigomega(0.3).unwrap(),
            MultiplicativeSpec::two_squares_t_omega(0.7).unwrap(),
            MultiplicativeSpec::moebius(),
        ];
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for spec in &specs {
            let v = ValueTable::build(spec, &t).unwrap();
            let mut checked = 0;
            while checked < 10_000 {
                let a = rng.random_range(1..=2000usize);
                let b = rng.random_range(1..=limit / a);
                if crate::arith::gcd(a as u64, b as u64) != 1 {
                    continue;
                }
                let lhs = v.get(a * b);
                let rhs = v.get(a) * v.get(b);
                assert!((lhs - rhs).norm() <= 1e-12 * lhs.norm().max(1e-300));
                checked += 1;
            }
        }
    }

    #[test]
    fn norm_prefix_positive_and_monotone() {
        let t = SieveTables::build(2000).unwrap();
        let v = ValueTable::build(&MultiplicativeSpec::residue_indicator(5, &[2]).unwrap(), &t).unwrap();
        assert!((1..=2000).all(|n| v.norm_sq_sum(n) >= 1.0));
        assert!((2..=2000).all(|n| v.norm_sq_sum(n) >= v.norm_sq_sum(n - 1)));
    }

    #[test]
    fn ptheta_rows() {
        let t = SieveTables::build(10_000).unwrap();
        let rows = ptheta_diagnostic(&MultiplicativeSpec::unit(), &t, &[10_000]).unwrap();
        assert_eq!(rows[0].prime_sum, 1229.0);
        let expected = 1229.0 / (10_000.0 / 10_000f64.ln());
        assert_relative_eq!(rows[0].ratio, expected, epsilon = 1e-12);
        assert!((rows[0].ratio - 1.132).abs() < 5e-4);

        let tb = MultiplicativeSpec::theta_bigomega(0.3).unwrap();
        let r = ptheta_diagnostic(&tb, &t, &[1000, 10_000]).unwrap();
        assert_relative_eq!(r[0].prime_sum, 0.3 * 168.0, epsilon = 1e-9);
        let mu = ptheta_diagnostic(&MultiplicativeSpec::moebius(), &t, &[1000]).unwrap();
        assert_eq!(mu[0].prime_sum, 168.0);
        assert!(ptheta_diagnostic(&tb, &t, &[]).unwrap().is_empty());
    }

    #[test]
    fn custom_table_parsing() {
        let text = "# demo\nextension: completely_multiplicative\ntheta: 0.25\n2 1 0.5 0\n3 1 0 0.5\n3 2 0.1 0\n";
        let table = CustomTable::parse(text).unwrap();
        let spec = MultiplicativeSpec::custom(table);
        assert!(spec.complex_valued);
        assert_eq!(spec.theta, 0.25);
        assert_relative_eq!(spec.value_at(2, 3).re, 0.125);
        assert_eq!(spec.value_at(3, 2).re, 0.1);
        assert_eq!(spec.value_at(5, 1).norm(), 0.0);

        let err = CustomTable::parse("extension: squarefree\n2 1 1 0\n4 1 1 0\n").unwrap_err();
        assert_eq!(
            err,
            RmfError::Parse {
                line: 3,
                msg: "4 is not prime".into()
            }
        );
        assert!(matches!(
            CustomTable::parse("2 1 1 0\n"),
            Err(RmfError::Parse { line: 0, .. })
        ));
        assert!(matches!(
            CustomTable::parse("extension: squarefree\n2 1 1\n"),
            Err(RmfError::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn miller_rabin_agrees_with_sieve() {
        let t = SieveTables::build(100_000).unwrap();
        for n in 0..=100_000u64 {
            assert_eq!(is_prime_u64(n), t.is_prime(n as usize), "n = {n}");
        }
        assert!(is_prime_u64(1_000_000_007));
    }
}
