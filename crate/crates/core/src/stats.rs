//! Empirical distributions, Kolmogorov–Smirnov distances, moment estimators
//! and Gaussian reference samplers.

use num_complex::Complex;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::engine::{mix_seed, Model};
use crate::error::{Result, RmfError};
use crate::scalar::Real;

/// Number of leave-one-block-out replicates for moment standard errors.
pub const JACKKNIFE_BLOCKS: usize = 100;

/// A real sample kept sorted, with its summary statistics.
#[derive(Debug, Clone)]
pub struct EmpiricalSample<T> {
    sorted: Vec<T>,
    mean: T,
    variance: T,
}

impl<T: Real> EmpiricalSample<T> {
    pub fn new(mut values: Vec<T>) -> Result<Self> {
        if values.is_empty() {
            return Err(RmfError::invalid("empirical sample is empty"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(RmfError::invalid("empirical sample contains a non-finite value"));
        }
        values.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
        let n = T::of_usize(values.len());
        let mean = values.iter().copied().sum::<T>() / n;
        let variance = if values.len() > 1 {
            values.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / (n - T::one())
        } else {
            T::zero()
        };
        Ok(Self { sorted: values, mean, variance })
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    pub fn sorted(&self) -> &[T] {
        &self.sorted
    }

    pub fn mean(&self) -> T {
        self.mean
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> T {
        self.variance
    }

    /// `sqrt(variance / N)`.
    pub fn se(&self) -> T {
        (self.variance / T::of_usize(self.len())).sqrt()
    }

    pub fn second_moment(&self) -> T {
        self.sorted.iter().map(|&v| v * v).sum::<T>() / T::of_usize(self.len())
    }

    /// Empirical CDF `#{v <= x} / N`.
    pub fn cdf(&self, x: T) -> T {
        let k = self.sorted.partition_point(|&v| v <= x);
        T::of_usize(k) / T::of_usize(self.len())
    }

    /// Linearly interpolated quantile, `q` in `[0, 1]`.
    pub fn quantile(&self, q: T) -> T {
        let n = self.len();
        let pos = q.max(T::zero()).min(T::one()) * T::of_usize(n - 1);
        let lo = pos.floor().to_usize().unwrap_or(0).min(n - 1);
        let hi = (lo + 1).min(n - 1);
        let frac = pos - T::of_usize(lo);
        self.sorted[lo] + frac * (self.sorted[hi] - self.sorted[lo])
    }
}

/// Two-sample Kolmogorov–Smirnov distance by a merged sweep.
pub fn ks_two_sample<T: Real>(a: &EmpiricalSample<T>, b: &EmpiricalSample<T>) -> T {
    let (xa, xb) = (a.sorted(), b.sorted());
    let (na, nb) = (T::of_usize(xa.len()), T::of_usize(xb.len()));
    let (mut i, mut j) = (0, 0);
    let mut d = T::zero();
    while i < xa.len() && j < xb.len() {
        let v = xa[i].min(xb[j]);
        while i < xa.len() && xa[i] <= v {
            i += 1;
        }
        while j < xb.len() && xb[j] <= v {
            j += 1;
        }
        d = d.max((T::of_usize(i) / na - T::of_usize(j) / nb).abs());
    }
    d
}

/// Mean with a leave-one-block-out jackknife standard error.
pub fn jackknife_mean<T: Real>(values: &[T]) -> (T, T) {
    let n = values.len();
    if n == 0 {
        return (T::nan(), T::nan());
    }
    let total: T = values.iter().copied().sum();
    let mean = total / T::of_usize(n);
    let blocks = JACKKNIFE_BLOCKS.min(n);
    if blocks < 2 {
        return (mean, T::zero());
    }
    let bounds = |k: usize| k * n / blocks;
    let reps: Vec<T> = (0..blocks)
        .map(|k| {
            let part: T = values[bounds(k)..bounds(k + 1)].iter().copied().sum();
            (total - part) / T::of_usize(n - (bounds(k + 1) - bounds(k)))
        })
        .collect();
    let bar = reps.iter().copied().sum::<T>() / T::of_usize(blocks);
    let g = T::of_usize(blocks);
    let var = (g - T::one()) / g * reps.iter().map(|&r| (r - bar) * (r - bar)).sum::<T>();
    (mean, var.sqrt())
}

/// `E|z|^{2q}` with a jackknife standard error.
pub fn abs_moment<T: Real>(sample: &[Complex<T>], q: T) -> Result<(T, T)> {
    if !(q >= T::zero()) {
        return Err(RmfError::invalid(format!("moment order must be >= 0, got {q}")));
    }
    if q == T::zero() {
        return Ok((T::one(), T::zero()));
    }
    let powered: Vec<T> = sample.iter().map(|z| z.norm_sqr().powf(q)).collect();
    Ok(jackknife_mean(&powered))
}

/// `E[V^q]` with a jackknife standard error.
pub fn power_mean<T: Real>(values: &[T], q: T) -> Result<(T, T)> {
    if !(q >= T::zero()) {
        return Err(RmfError::invalid(format!("moment order must be >= 0, got {q}")));
    }
    if values.iter().any(|&v| v < T::zero()) {
        return Err(RmfError::invalid("power mean of a negative value"));
    }
    let powered: Vec<T> = values.iter().map(|&v| v.powf(q)).collect();
    Ok(jackknife_mean(&powered))
}

/// Jackknife mean and SE of a difference of paired per-draw observations.
pub fn paired_difference<T: Real>(lhs: &[T], rhs: &[T]) -> Result<(T, T)> {
    if lhs.len() != rhs.len() {
        return Err(RmfError::invalid("paired samples differ in length"));
    }
    let d: Vec<T> = lhs.iter().zip(rhs).map(|(&a, &b)| a - b).collect();
    Ok(jackknife_mean(&d))
}

/// Seeded `N(0, variance)` sample.
pub fn gaussian_sample<T: Real>(n: usize, variance: T, seed: u64) -> Vec<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, 0x6761_7573));
    let sd = variance.as_f64().sqrt();
    (0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            T::of(sd * z)
        })
        .collect()
}

/// Seeded standard complex Gaussians: independent parts each `N(0, 1/2)`.
pub fn complex_gaussian_sample<T: Real>(n: usize, seed: u64) -> Vec<Complex<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, 0x6367_6175));
    let sd = std::f64::consts::FRAC_1_SQRT_2;
    (0..n)
        .map(|_| {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            Complex::new(T::of(sd * re), T::of(sd * im))
        })
        .collect()
}

/// Variance of the real Gaussian paired with `sqrt(V)` in the mixture.
pub fn mixture_variance(model: Model) -> f64 {
    match model {
        Model::Steinhaus => 0.5,
        Model::Rademacher => 1.0,
    }
}

/// `sqrt(V_i) * G_i` with independent `G_i`: `N(0, 1/2)` for Steinhaus, `N(0, 1)` for Rademacher.
pub fn mixture_sample<T: Real>(v: &[T], model: Model, seed: u64) -> Result<EmpiricalSample<T>> {
    if v.iter().any(|&x| !(x >= T::zero())) {
        return Err(RmfError::invalid("mixture needs V >= 0"));
    }
    let g = gaussian_sample::<T>(v.len(), T::of(mixture_variance(model)), seed);
    EmpiricalSample::new(v.iter().zip(&g).map(|(&vi, &gi)| vi.sqrt() * gi).collect())
}

/// Gaussian sample with the second moment of `sample`, of the same size.
pub fn variance_matched_gaussian<T: Real>(sample: &EmpiricalSample<T>, seed: u64) -> Result<EmpiricalSample<T>> {
    EmpiricalSample::new(gaussian_sample(sample.len(), sample.second_moment(), seed))
}

/// One `E[Y h(S)]` vs `E[Y h(sqrt(V) G)]` comparison.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairingCheck {
    pub weight: &'static str,
    pub test_fn: &'static str,
    pub lhs: f64,
    pub rhs: f64,
    pub diff: f64,
    pub se: f64,
    pub pass: bool,
}

const WEIGHTS: [&str; 3] = ["one", "min_v_2", "exp_neg_v"];
const TEST_FNS: [&str; 2] = ["exp_neg_abs_sq", "cos_re"];

fn weight(kind: usize, v: f64) -> f64 {
    match kind {
        0 => 1.0,
        1 => v.min(2.0),
        _ => (-v).exp(),
    }
}

fn test_fn(kind: usize, z: Complex<f64>) -> f64 {
    match kind {
        0 => (-z.norm_sqr()).exp(),
        _ => z.re.cos(),
    }
}

/// Compares `S_i` with `sqrt(V_i) G_i` under weights `w(V_i)`, paired by index.
/// `G` is standard complex Gaussian for Steinhaus and real `N(0, 1)` for Rademacher.
pub fn stable_pairing_check(v: &[f64], s: &[Complex<f64>], model: Model, seed: u64) -> Result<Vec<PairingCheck>> {
    if v.len() != s.len() {
        return Err(RmfError::invalid(format!(
            "pairing needs equal lengths, got {} and {}",
            v.len(),
            s.len()
        )));
    }
    if v.len() < 2 {
        return Err(RmfError::invalid("pairing needs at least two draws"));
    }
    if v.iter().any(|&x| !(x >= 0.0)) {
        return Err(RmfError::invalid("pairing needs V >= 0"));
    }
    let g: Vec<Complex<f64>> = match model {
        Model::Steinhaus => complex_gaussian_sample(v.len(), seed),
        Model::Rademacher => gaussian_sample(v.len(), 1.0, seed)
            .into_iter()
            .map(|x| Complex::new(x, 0.0))
            .collect(),
    };
    let mut out = Vec::new();
    for (wi, wname) in WEIGHTS.iter().enumerate() {
        for (hi, hname) in TEST_FNS.iter().enumerate() {
            let lhs: Vec<f64> = v.iter().zip(s).map(|(&vi, &si)| weight(wi, vi) * test_fn(hi, si)).collect();
            let rhs: Vec<f64> = v
                .iter()
                .zip(&g)
                .map(|(&vi, &gi)| weight(wi, vi) * test_fn(hi, gi * vi.sqrt()))
                .collect();
            let (diff, se) = paired_difference(&lhs, &rhs)?;
            let n = lhs.len() as f64;
            out.push(PairingCheck {
                weight: wname,
                test_fn: hname,
                lhs: lhs.iter().sum::<f64>() / n,
                rhs: rhs.iter().sum::<f64>() / n,
                diff,
                se,
                pass: diff.abs() <= 4.0 * se,
            });
        }
    }
    Ok(out)
}

/// Same check after a seeded permutation of `V`; a sound test should fail it.
pub fn shuffled_pairing_check(v: &[f64], s: &[Complex<f64>], model: Model, seed: u64) -> Result<Vec<PairingCheck>> {
    let mut shuffled = v.to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, 0x7368_7566));
    shuffled.shuffle(&mut rng);
    stable_pairing_check(&shuffled, s, model, seed)
}

/// One histogram bin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Bin {
    pub left: f64,
    pub right: f64,
    pub count: u64,
    pub density: f64,
}

/// Upper bound on the number of histogram bins.
pub const MAX_BINS: usize = 10_000;

/// Histogram on `[-M, M]`, `M = max |x|`, with Freedman–Diaconis width `2 IQR N^{-1/3}`.
pub fn histogram<T: Real>(sample: &EmpiricalSample<T>) -> Vec<Bin> {
    let xs: Vec<f64> = sample.sorted().iter().map(|v| v.as_f64()).collect();
    let n = xs.len();
    let m = xs[0].abs().max(xs[n - 1].abs());
    let iqr = (sample.quantile(T::of(0.75)) - sample.quantile(T::of(0.25))).as_f64();
    let bins = if iqr > 0.0 && m > 0.0 {
        let width = 2.0 * iqr / (n as f64).cbrt();
        ((2.0 * m / width).ceil() as usize).clamp(1, MAX_BINS)
    } else {
        1
    };
    let half = if m > 0.0 { m } else { 0.5 };
    let width = 2.0 * half / bins as f64;
    let mut counts = vec![0u64; bins];
    for &x in &xs {
        let k = (((x + half) / width).floor() as isize).clamp(0, bins as isize - 1) as usize;
        counts[k] += 1;
    }
    counts
        .iter()
        .enumerate()
        .map(|(k, &c)| Bin {
            left: -half + k as f64 * width,
            right: -half + (k + 1) as f64 * width,
            count: c,
            density: c as f64 / (n as f64 * width),
        })
        .collect()
}
