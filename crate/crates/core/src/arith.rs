//! Prime sieves, factorization tables and additive statistics.
//!
//! [`SieveTables`] holds, for every `n <= limit`, the smallest prime factor
//! `spf[n]` and the largest prime factor `P(n)` (with the convention
//! `P(1) = 1`), the ascending prime list, and a permutation of `2..=limit`
//! grouped by `P(n)`. Entries are `u32`, which caps `limit` at `u32::MAX`;
//! the practical bound is memory, roughly 12 bytes per integer
//! (`10^7` needs ~120 MB, `10^8` ~1.2 GB).

use crate::error::{Result, RmfError};

/// Hard cap imposed by the 32-bit table entries.
pub const MAX_SIEVE_LIMIT: usize = u32::MAX as usize - 1;

#[derive(Debug, Clone)]
pub struct SieveTables {
    limit: usize,
    spf: Vec<u32>,
    lpf: Vec<u32>,
    primes: Vec<u32>,
    lpf_order: Vec<u32>,
    /// `lpf_order[group_start[j]..group_start[j + 1]]` are the `n` with `P(n) = primes[j]`.
    group_start: Vec<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AdditiveStats {
    pub omega: u32,
    pub bigomega: u32,
    pub is_squarefree: bool,
    pub largest_prime_factor: u32,
}

impl SieveTables {
    /// Linear sieve over `1..=limit`.
    pub fn build(limit: usize) -> Result<Self> {
        if limit == 0 {
            return Err(RmfError::invalid("sieve limit must be at least 1"));
        }
        if limit > MAX_SIEVE_LIMIT {
            return Err(RmfError::OutOfRange {
                what: "sieve limit",
                value: limit as f64,
                lo: 1.0,
                hi: MAX_SIEVE_LIMIT as f64,
            });
        }
        let mut spf = vec![0u32; limit + 1];
        let mut primes: Vec<u32> = Vec::new();
        if limit >= 1 {
            spf[1] = 1;
        }
        for n in 2..=limit {
            if spf[n] == 0 {
                spf[n] = n as u32;
                primes.push(n as u32);
            }
            let sn = spf[n];
            for &p in &primes {
                if p > sn {
                    break;
                }
                let m = n * p as usize;
                if m > limit {
                    break;
                }
                spf[m] = p;
            }
        }

        let mut lpf = vec![0u32; limit + 1];
        lpf[0] = 0;
        lpf[1] = 1;
        for n in 2..=limit {
            let p = spf[n] as usize;
            lpf[n] = if p == n { n as u32 } else { lpf[n / p] };
        }

        // counting sort of 2..=limit by the rank of P(n)
        let mut rank = vec![0u32; limit + 1];
        for (j, &p) in primes.iter().enumerate() {
            rank[p as usize] = j as u32;
        }
        let mut group_start = vec![0u32; primes.len() + 1];
        for n in 2..=limit {
            group_start[rank[lpf[n] as usize] as usize + 1] += 1;
        }
        for j in 0..primes.len() {
            group_start[j + 1] += group_start[j];
        }
        let mut cursor: Vec<u32> = group_start[..primes.len()].to_vec();
        let mut lpf_order = vec![0u32; limit.saturating_sub(1)];
        for n in 2..=limit {
            let j = rank[lpf[n] as usize] as usize;
            lpf_order[cursor[j] as usize] = n as u32;
            cursor[j] += 1;
        }

        Ok(Self {
            limit,
            spf,
            lpf,
            primes,
            lpf_order,
            group_start,
        })
    }

    pub fn limit(&self) -> usize {
        self.limit
    }

    pub fn primes(&self) -> &[u32] {
        &self.primes
    }

    pub fn spf(&self) -> &[u32] {
        &self.spf
    }

    /// Largest prime factor table, `P(1) = 1`.
    pub fn lpf(&self) -> &[u32] {
        &self.lpf
    }

    pub fn lpf_order(&self) -> &[u32] {
        &self.lpf_order
    }

    /// The integers `n <= limit` with `P(n) = primes[j]`, ascending.
    pub fn group(&self, j: usize) -> &[u32] {
        let lo = self.group_start[j] as usize;
        let hi = self.group_start[j + 1] as usize;
        &self.lpf_order[lo..hi]
    }

    pub fn is_prime(&self, n: usize) -> bool {
        n >= 2 && n <= self.limit && self.spf[n] as usize == n
    }

    /// Rank of the prime `p` in [`Self::primes`].
    pub fn prime_index(&self, p: usize) -> Option<usize> {
        self.primes.binary_search(&(p as u32)).ok()
    }

    /// Number of primes `<= t`.
    pub fn prime_pi(&self, t: usize) -> usize {
        self.primes.partition_point(|&p| p as usize <= t)
    }

    #[inline]
    pub fn largest_prime_factor(&self, n: usize) -> u32 {
        self.lpf[n]
    }

    fn check(&self, n: usize) -> Result<()> {
        if n == 0 || n > self.limit {
            return Err(RmfError::invalid(format!(
                "n = {n} outside 1..={}",
                self.limit
            )));
        }
        Ok(())
    }

    /// `(p, a)` pairs with strictly ascending primes; empty for `n = 1`.
    pub fn factorize(&self, n: usize) -> Result<Vec<(u32, u32)>> {
        self.check(n)?;
        let mut out = Vec::new();
        let mut m = n;
        while m > 1 {
            let p = self.spf[m];
            let mut a = 0;
            while m > 1 && self.spf[m] == p {
                m /= p as usize;
                a += 1;
            }
            out.push((p, a));
        }
        Ok(out)
    }

    pub fn additive_stats(&self, n: usize) -> Result<AdditiveStats> {
        let fac = self.factorize(n)?;
        Ok(AdditiveStats {
            omega: fac.len() as u32,
            bigomega: fac.iter().map(|&(_, a)| a).sum(),
            is_squarefree: fac.iter().all(|&(_, a)| a == 1),
            largest_prime_factor: self.lpf[n],
        })
    }

    /// Squarefree test straight off the spf chain.
    #[inline]
    pub fn is_squarefree(&self, n: usize) -> bool {
        let mut m = n;
        while m > 1 {
            let p = self.spf[m] as usize;
            m /= p;
            if m % p == 0 {
                return false;
            }
        }
        true
    }
}

pub fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}
