//! Steinhaus / Rademacher coefficient draws and the per-realization
//! statistics `S_x`, `S_{x,eps}`, `Z_{x,p}`, `U_x`, `T_{x,eps}` and the
//! critically scaled sum.

use std::f64::consts::TAU;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::arith::SieveTables;
use crate::error::{Result, RmfError};
use crate::multfn::{Family, MultiplicativeSpec, ValueTable};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Model {
    Steinhaus,
    Rademacher,
}

impl Model {
    pub fn name(self) -> &'static str {
        match self {
            Model::Steinhaus => "steinhaus",
            Model::Rademacher => "rademacher",
        }
    }
}

impl Model {
    /// One `alpha(p)`: uniform on the circle, or a fair sign.
    pub fn sample_unit<R: RngCore>(self, rng: &mut R) -> Complex64 {
        match self {
            Model::Steinhaus => {
                let u = (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
                let (s, c) = (TAU * u).sin_cos();
                Complex64::new(c, s)
            }
            Model::Rademacher => {
                let sign = if rng.next_u64() >> 63 == 0 { 1.0 } else { -1.0 };
                Complex64::new(sign, 0.0)
            }
        }
    }
}

impl fmt::Display for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Model {
    type Err = RmfError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "steinhaus" => Ok(Model::Steinhaus),
            "rademacher" => Ok(Model::Rademacher),
            other => Err(RmfError::invalid(format!("unknown model '{other}'"))),
        }
    }
}

/// SplitMix64 finalizer.
#[inline]
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Per-realization stream seed derived from `(master_seed, index)`.
#[inline]
pub fn mix_seed(master_seed: u64, index: u64) -> u64 {
    splitmix64(master_seed ^ splitmix64(index))
}

/// One realization of `(alpha(p))_{p <= x}`, indexed by prime rank.
///
/// Coefficients are drawn in prime order from one stream, so draws at
/// different `x` with the same `(master_seed, index)` agree on common primes.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientDraw {
    pub model: Model,
    pub limit: usize,
    pub coeff: Vec<Complex64>,
    pub master_seed: u64,
    pub realization_index: u64,
}

impl CoefficientDraw {
    pub fn sample(model: Model, tables: &SieveTables, master_seed: u64, index: u64) -> Self {
        let n = tables.primes().len();
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(master_seed, index));
        let coeff = (0..n).map(|_| model.sample_unit(&mut rng)).collect();
        Self {
            model,
            limit: tables.limit(),
            coeff,
            master_seed,
            realization_index: index,
        }
    }
}

/// `alpha(n)` for `n <= x` (index 0 unused).
pub fn alpha_values(draw: &CoefficientDraw, tables: &SieveTables) -> Vec<Complex64> {
    let limit = tables.limit();
    assert_eq!(draw.limit, limit, "draw and sieve limits differ");
    let spf = tables.spf();
    let mut a = vec![Complex64::new(0.0, 0.0); limit + 1];
    a[1] = Complex64::new(1.0, 0.0);
    for (&p, &c) in tables.primes().iter().zip(&draw.coeff) {
        a[p as usize] = c;
    }
    for n in 4..=limit {
        let p = spf[n] as usize;
        if p == n {
            continue;
        }
        let m = n / p;
        a[n] = match draw.model {
            Model::Steinhaus => a[p] * a[m],
            Model::Rademacher if m % p == 0 => Complex64::new(0.0, 0.0),
            Model::Rademacher => a[p] * a[m],
        };
    }
    a
}

/// `(ln ln x)^{1/4}`.
pub fn critical_scale(x: usize) -> Result<f64> {
    if x < 16 {
        return Err(RmfError::invalid(format!(
            "critical scaling needs x >= 16, got {x}"
        )));
    }
    Ok((x as f64).ln().ln().powf(0.25))
}

/// `S_{x,eps}` together with the martingale differences `Z_{x,p}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Truncated {
    pub s_eps: Complex64,
    /// `(p, Z_{x,p})` for `x^eps <= p <= x`.
    pub z: Vec<(u32, Complex64)>,
    pub t_eps: f64,
}

/// Which optional statistics [`Engine::sample`] fills in.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SampleOptions {
    pub eps: Option<f64>,
    pub u: bool,
    pub critical: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SumSample {
    pub index: u64,
    pub s: Complex64,
    pub s_eps: Option<Complex64>,
    pub u: Option<f64>,
    pub t_eps: Option<f64>,
    pub s_critical: Option<Complex64>,
    pub v: Option<f64>,
}

/// Per-`(model, f, x)` state shared by every realization.
#[derive(Debug, Clone)]
pub struct Engine<'a> {
    model: Model,
    spec: &'a MultiplicativeSpec,
    tables: &'a SieveTables,
    values: ValueTable,
    norm_sq: f64,
    f1: f64,
}

impl<'a> Engine<'a> {
    pub fn new(model: Model, spec: &'a MultiplicativeSpec, tables: &'a SieveTables) -> Result<Self> {
        if model == Model::Rademacher && !spec.squarefree_only {
            return Err(RmfError::invalid(format!(
                "the Rademacher model needs a squarefree-supported weight, got {}",
                spec.family_name()
            )));
        }
        let values = ValueTable::build(spec, tables)?;
        let x = tables.limit();
        let norm_sq = values.norm_sq_sum(x);
        let xf = x as f64;
        let f1 = (1..=x)
            .map(|n| values.get(n).norm_sqr() * (1.0 / n as f64 - 1.0 / xf))
            .sum();
        Ok(Self {
            model,
            spec,
            tables,
            values,
            norm_sq,
            f1,
        })
    }

    pub fn model(&self) -> Model {
        self.model
    }

    pub fn spec(&self) -> &MultiplicativeSpec {
        self.spec
    }

    pub fn tables(&self) -> &SieveTables {
        self.tables
    }

    pub fn values(&self) -> &ValueTable {
        &self.values
    }

    pub fn x(&self) -> usize {
        self.tables.limit()
    }

    /// `sum_{n <= x} |f(n)|^2`.
    pub fn norm_sq(&self) -> f64 {
        self.norm_sq
    }

    /// `F_1(x) = sum_{n <= x} |f(n)|^2 (1/n - 1/x)`.
    pub fn f1(&self) -> f64 {
        self.f1
    }

    pub fn draw(&self, master_seed: u64, index: u64) -> CoefficientDraw {
        CoefficientDraw::sample(self.model, self.tables, master_seed, index)
    }

    /// `alpha(n) f(n)` for `n <= x`.
    pub fn weights(&self, alpha: &[Complex64]) -> Vec<Complex64> {
        alpha
            .iter()
            .zip(self.values.values())
            .map(|(a, f)| a * f)
            .collect()
    }

    fn check_draw(&self, draw: &CoefficientDraw) {
        assert_eq!(draw.model, self.model, "draw model differs from engine model");
    }

    pub fn normalized_sum(&self, draw: &CoefficientDraw) -> Complex64 {
        self.check_draw(draw);
        let w = self.weights(&alpha_values(draw, self.tables));
        self.s_from_weights(&w)
    }

    pub fn s_from_weights(&self, w: &[Complex64]) -> Complex64 {
        w[1..].iter().sum::<Complex64>() / self.norm_sq.sqrt()
    }

    pub fn truncated_sum_and_z(&self, draw: &CoefficientDraw, eps: f64) -> Result<Truncated> {
        self.check_draw(draw);
        let w = self.weights(&alpha_values(draw, self.tables));
        self.truncated_from_weights(&w, eps)
    }

    fn first_prime_rank(&self, eps: f64) -> Result<usize> {
        if !(eps > 0.0 && eps < 1.0) {
            return Err(RmfError::invalid(format!("eps must lie in (0, 1), got {eps}")));
        }
        let lo = (self.x() as f64).powf(eps);
        Ok(self
            .tables
            .primes()
            .partition_point(|&p| (p as f64) < lo * (1.0 - 1e-12)))
    }

    /// `Z_{x,p} = alpha(p) f(p) B_p / ||f||` with `B_p = sum_{m <= x/p, P(m) < p} alpha(m) f(m)`.
    pub fn truncated_from_weights(&self, w: &[Complex64], eps: f64) -> Result<Truncated> {
        let start = self.first_prime_rank(eps)?;
        let x = self.x();
        let lpf = self.tables.lpf();
        let inv = 1.0 / self.norm_sq.sqrt();
        let mut z = Vec::with_capacity(self.tables.primes().len() - start);
        let mut s_eps = Complex64::new(0.0, 0.0);
        let mut t = 0.0;
        for &p in &self.tables.primes()[start..] {
            let b = partial_b(w, lpf, p, x);
            let fp = self.values.get(p as usize);
            let zp = w[p as usize] * b * inv;
            s_eps += zp;
            t += fp.norm_sqr() * b.norm_sqr();
            z.push((p, zp));
        }
        Ok(Truncated {
            s_eps,
            z,
            t_eps: t / self.norm_sq,
        })
    }

    /// `S_{x,eps}` by summing `alpha(n) f(n)` over `P(n) >= x^eps`, `P(n)^2 ∤ n`
    /// straight off the `P(n)`-grouped ordering.
    pub fn truncated_sum_grouped(&self, w: &[Complex64], eps: f64) -> Result<Complex64> {
        let start = self.first_prime_rank(eps)?;
        let mut acc = Complex64::new(0.0, 0.0);
        for (j, &p) in self.tables.primes().iter().enumerate().skip(start) {
            let p = p as usize;
            for &n in self.tables.group(j) {
                let n = n as usize;
                if (n / p) % p != 0 {
                    acc += w[n];
                }
            }
        }
        Ok(acc / self.norm_sq.sqrt())
    }

    pub fn variance_proxy_u(&self, draw: &CoefficientDraw) -> Result<f64> {
        self.check_draw(draw);
        let w = self.weights(&alpha_values(draw, self.tables));
        self.u_from_weights(&w)
    }

    /// Exact evaluation of the step-function integral defining `U_x`.
    pub fn u_from_weights(&self, w: &[Complex64]) -> Result<f64> {
        let x = self.x();
        if x < 2 {
            return Err(RmfError::invalid("U_x needs x >= 2"));
        }
        let mut a = Complex64::new(0.0, 0.0);
        let mut num = 0.0;
        for (n, wn) in w.iter().enumerate().take(x).skip(1) {
            a += wn;
            let nf = n as f64;
            num += a.norm_sqr() * (1.0 / nf - 1.0 / (nf + 1.0));
        }
        Ok(num / self.f1)
    }

    pub fn conditional_variance_t(&self, draw: &CoefficientDraw, eps: f64) -> Result<f64> {
        Ok(self.truncated_sum_and_z(draw, eps)?.t_eps)
    }

    fn check_critical_family(&self) -> Result<()> {
        match self.spec.family {
            Family::Unit | Family::Moebius => Ok(()),
            _ => Err(RmfError::invalid(format!(
                "critical scaling is defined for unit and moebius weights, got {}",
                self.spec.family_name()
            ))),
        }
    }

    /// `(ln ln x)^{1/4} x^{-1/2} sum_{n <= x} alpha(n) f(n)`.
    pub fn critical_scaled_sum(&self, draw: &CoefficientDraw) -> Result<Complex64> {
        self.check_draw(draw);
        self.check_critical_family()?;
        let w = self.weights(&alpha_values(draw, self.tables));
        self.critical_from_weights(&w)
    }

    fn critical_from_weights(&self, w: &[Complex64]) -> Result<Complex64> {
        let scale = critical_scale(self.x())?;
        Ok(w[1..].iter().sum::<Complex64>() * (scale / (self.x() as f64).sqrt()))
    }

    /// All requested statistics from one pass over `alpha`.
    pub fn sample(&self, draw: &CoefficientDraw, opts: &SampleOptions) -> Result<SumSample> {
        self.check_draw(draw);
        if opts.critical {
            self.check_critical_family()?;
        }
        let w = self.weights(&alpha_values(draw, self.tables));
        let trunc = opts
            .eps
            .map(|eps| self.truncated_from_weights(&w, eps))
            .transpose()?;
        Ok(SumSample {
            index: draw.realization_index,
            s: self.s_from_weights(&w),
            s_eps: trunc.as_ref().map(|t| t.s_eps),
            u: if opts.u { Some(self.u_from_weights(&w)?) } else { None },
            t_eps: trunc.as_ref().map(|t| t.t_eps),
            s_critical: if opts.critical {
                Some(self.critical_from_weights(&w)?)
            } else {
                None
            },
            v: None,
        })
    }
}

#[inline]
fn partial_b(w: &[Complex64], lpf: &[u32], p: u32, x: usize) -> Complex64 {
    let top = x / p as usize;
    let mut b = Complex64::new(0.0, 0.0);
    for m in 1..=top {
        if lpf[m] < p {
            b += w[m];
        }
    }
    b
}
