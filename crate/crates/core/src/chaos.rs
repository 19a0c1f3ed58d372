//! Finite random Euler products on vertical lines, the normalized chaos
//! density, the random variance `V` and dyadic / two-point diagnostics.
//!
//! The density at `sigma + i s` is
//! `prod_{p <= y} |1 + sum_k alpha(p)^k f(p^k) p^{-k(sigma + i s)}|^2 / N_p(sigma)`.
//! Each prime is classified once: completely multiplicative weights sum
//! the local series in closed form `1 / (1 - z)`, squarefree weights are
//! linear `1 + z`, everything else goes through a truncated Horner scheme.

use num_complex::{Complex, Complex64};
use rayon::prelude::*;

use crate::arith::SieveTables;
use crate::engine::{CoefficientDraw, Model};
use crate::error::{Result, RmfError};
use crate::multfn::{Family, MultiplicativeSpec};
use crate::scalar::Real;

/// Number of grid steps between exact re-anchorings of the rotating phases.
pub const ANCHOR_STRIDE: usize = 256;
const LANES: usize = 8;
const FOLD_CHUNKS: usize = 64;
const KTRUNC_TOL: f64 = 1e-14;
const KTRUNC_FLOOR: u32 = 3;
const KTRUNC_CAP: u32 = 4096;
const KTRUNC_WINDOW: u32 = 5;

/// The height parameter `t` of the chaos measure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Height {
    Infinite,
    Finite(f64),
}

impl Height {
    /// `1/2` for `t = inf`, otherwise `(1 + 1/log t) / 2`.
    pub fn sigma(self) -> Result<f64> {
        match self {
            Height::Infinite => Ok(0.5),
            Height::Finite(t) if t > 1.0 && t.is_finite() => Ok(0.5 * (1.0 + 1.0 / t.ln())),
            Height::Finite(t) => Err(RmfError::invalid(format!("height t must exceed 1, got {t}"))),
        }
    }
}

/// Symmetric grid `s_i = -s_max + i ds`, `i = 0..=2 s_max / ds`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub s_max: f64,
    pub ds: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            s_max: 50.0,
            ds: 1.0 / 64.0,
        }
    }
}

impl GridSpec {
    pub fn points(&self) -> Result<usize> {
        if !(self.s_max > 0.0 && self.ds > 0.0 && self.s_max.is_finite()) {
            return Err(RmfError::invalid("grid needs s_max > 0 and ds > 0"));
        }
        let steps = 2.0 * self.s_max / self.ds;
        let n = steps.round();
        if (steps - n).abs() > 1e-9 * steps.max(1.0) {
            return Err(RmfError::invalid(format!(
                "2 s_max / ds = {steps} is not an integer"
            )));
        }
        Ok(n as usize + 1)
    }

    pub fn s(&self, i: usize) -> f64 {
        -self.s_max + i as f64 * self.ds
    }
}

/// `(1/2 pi) int_{|s| > s_max} ds / (sigma^2 + s^2)`: the expected mass beyond the grid.
pub fn tail_correction(sigma: f64, s_max: f64) -> f64 {
    (std::f64::consts::FRAC_PI_2 - (s_max / sigma).atan()) / (std::f64::consts::PI * sigma)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LocalKind {
    Geometric,
    Linear,
    General,
}

fn local_kind(spec: &MultiplicativeSpec) -> LocalKind {
    if spec.squarefree_only {
        LocalKind::Linear
    } else if spec.is_completely_multiplicative() {
        LocalKind::Geometric
    } else {
        LocalKind::General
    }
}

/// Smallest `k >= 3` such that `p^{-j/2} |f(p^j)| < 1e-14` for `j = k..k+4`.
///
/// The window keeps weights that vanish on odd powers only from stopping early.
pub fn k_trunc(spec: &MultiplicativeSpec, p: u64) -> Result<u32> {
    let lp = (p as f64).ln();
    let small = |k: u32| {
        let mag = spec.value_at(p, k).norm();
        mag == 0.0 || mag.ln() - 0.5 * k as f64 * lp < KTRUNC_TOL.ln()
    };
    let mut run = 0;
    for k in 1..=KTRUNC_CAP {
        if small(k) {
            run += 1;
            if run == KTRUNC_WINDOW {
                return Ok((k + 1 - KTRUNC_WINDOW).max(KTRUNC_FLOOR));
            }
        } else {
            run = 0;
        }
    }
    Err(RmfError::DivergingNormalizer { p })
}

/// `N_p(sigma) = 1 + sum_k |f(p^k)|^2 p^{-2 k sigma}`.
pub fn local_norm_factor(spec: &MultiplicativeSpec, p: u64, sigma: f64) -> Result<f64> {
    if sigma < 0.5 {
        return Err(RmfError::OutOfRange {
            what: "sigma",
            value: sigma,
            lo: 0.5,
            hi: f64::INFINITY,
        });
    }
    let q = (p as f64).powf(-2.0 * sigma);
    match local_kind(spec) {
        LocalKind::Linear => Ok(1.0 + spec.norm_sqr_at(p, 1) * q),
        LocalKind::Geometric => {
            let r = spec.norm_sqr_at(p, 1) * q;
            if r >= 1.0 {
                return Err(RmfError::DivergingNormalizer { p });
            }
            Ok(1.0 / (1.0 - r))
        }
        LocalKind::General => {
            let mut sum = 1.0;
            let mut qk = 1.0;
            let mut run = 0;
            for k in 1..=KTRUNC_CAP {
                qk *= q;
                let term = spec.norm_sqr_at(p, k) * qk;
                if !term.is_finite() {
                    return Err(RmfError::DivergingNormalizer { p });
                }
                sum += term;
                run = if term < 1e-16 * sum { run + 1 } else { 0 };
                if run == KTRUNC_WINDOW && k >= KTRUNC_FLOOR {
                    return Ok(sum);
                }
            }
            Err(RmfError::DivergingNormalizer { p })
        }
    }
}

/// Per-prime data for one class, structure-of-arrays.
#[derive(Debug, Clone, Default)]
struct ClassTable {
    rank: Vec<usize>,
    prime: Vec<u32>,
    log_p: Vec<f64>,
    /// `f(p) p^{-sigma}`.
    amp: Vec<Complex64>,
}

#[derive(Debug, Clone, Default)]
struct GeneralTable {
    rank: Vec<usize>,
    prime: Vec<u32>,
    log_p: Vec<f64>,
    /// `f(p^k) p^{-k sigma}` for `k = 1..=k_p`, flattened.
    coef: Vec<Complex64>,
    offset: Vec<usize>,
}

/// Everything about `(f, y, sigma)` that does not depend on the draw.
#[derive(Debug, Clone)]
pub struct EulerPlan {
    model: Model,
    y: usize,
    sigma: f64,
    kind: LocalKind,
    geo: ClassTable,
    lin: ClassTable,
    gen: GeneralTable,
    log_norm: f64,
    k_trunc_max: u32,
    prime_count: usize,
}

impl EulerPlan {
    pub fn new(
        model: Model,
        spec: &MultiplicativeSpec,
        tables: &SieveTables,
        y: usize,
        height: Height,
    ) -> Result<Self> {
        if y < 2 || y > tables.limit() {
            return Err(RmfError::invalid(format!(
                "y = {y} must lie in 2..={}",
                tables.limit()
            )));
        }
        if model == Model::Rademacher && !spec.squarefree_only {
            return Err(RmfError::invalid(
                "the Rademacher model needs a squarefree-supported weight",
            ));
        }
        let sigma = height.sigma()?;
        let kind = local_kind(spec);
        let prime_count = tables.prime_pi(y);
        let mut geo = ClassTable::default();
        let mut lin = ClassTable::default();
        let mut gen = GeneralTable::default();
        let mut log_norm = 0.0;
        let mut k_trunc_max = 0;
        for (rank, &p) in tables.primes()[..prime_count].iter().enumerate() {
            let pu = p as u64;
            let kt = k_trunc(spec, pu)?;
            k_trunc_max = k_trunc_max.max(kt);
            let lp = (p as f64).ln();
            let scale = (-sigma * lp).exp();
            let f1 = spec.value_at(pu, 1);
            match kind {
                LocalKind::Geometric | LocalKind::Linear => {
                    if f1.norm_sqr() == 0.0 {
                        continue;
                    }
                    let table = if kind == LocalKind::Geometric { &mut geo } else { &mut lin };
                    table.rank.push(rank);
                    table.prime.push(p);
                    table.log_p.push(lp);
                    table.amp.push(f1 * scale);
                }
                LocalKind::General => {
                    let coef: Vec<Complex64> = (1..=kt)
                        .map(|k| spec.value_at(pu, k) * scale.powi(k as i32))
                        .collect();
                    if coef.iter().all(|c| c.norm_sqr() == 0.0) {
                        continue;
                    }
                    gen.rank.push(rank);
                    gen.prime.push(p);
                    gen.log_p.push(lp);
                    gen.offset.push(gen.coef.len());
                    gen.coef.extend(coef);
                }
            }
            log_norm += local_norm_factor(spec, pu, sigma)?.ln();
        }
        gen.offset.push(gen.coef.len());
        Ok(Self {
            model,
            y,
            sigma,
            kind,
            geo,
            lin,
            gen,
            log_norm,
            k_trunc_max,
            prime_count,
        })
    }

    pub fn model(&self) -> Model {
        self.model
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn y(&self) -> usize {
        self.y
    }

    pub fn kind(&self) -> LocalKind {
        self.kind
    }

    pub fn k_trunc_max(&self) -> u32 {
        self.k_trunc_max
    }

    /// `sum_p log N_p(sigma)`.
    pub fn log_norm(&self) -> f64 {
        self.log_norm
    }

    fn check(&self, draw: &CoefficientDraw) -> Result<()> {
        if draw.model != self.model {
            return Err(RmfError::invalid("draw model differs from plan model"));
        }
        if draw.coeff.len() < self.prime_count {
            return Err(RmfError::invalid(format!(
                "draw covers {} primes, plan needs {}",
                draw.coeff.len(),
                self.prime_count
            )));
        }
        Ok(())
    }

    /// Density at `s0 + i ds`, `i = 0..out.len()`.
    pub fn density_into<T: Real>(
        &self,
        draw: &CoefficientDraw,
        s0: f64,
        ds: f64,
        out: &mut [T],
    ) -> Result<()> {
        self.check(draw)?;
        let mut state = SweepState::<T>::new(self, draw, ds);
        for (b, block) in out.chunks_mut(ANCHOR_STRIDE).enumerate() {
            let s_b = s0 + (b * ANCHOR_STRIDE) as f64 * ds;
            state.anchor(self, s_b);
            state.run(self, block)?;
        }
        Ok(())
    }

    /// Same as [`Self::density_into`] with the anchor blocks spread over the rayon pool.
    pub fn density_into_par<T: Real>(
        &self,
        draw: &CoefficientDraw,
        s0: f64,
        ds: f64,
        out: &mut [T],
    ) -> Result<()> {
        self.check(draw)?;
        out.par_chunks_mut(ANCHOR_STRIDE)
            .enumerate()
            .try_for_each_init(
                || SweepState::<T>::new(self, draw, ds),
                |state, (b, block)| {
                    state.anchor(self, s0 + (b * ANCHOR_STRIDE) as f64 * ds);
                    state.run(self, block)
                },
            )
    }

    pub fn grid<T: Real>(&self, draw: &CoefficientDraw, grid: GridSpec) -> Result<ChaosGrid<T>> {
        let n = grid.points()?;
        let mut density = vec![T::zero(); n];
        self.density_into(draw, -grid.s_max, grid.ds, &mut density)?;
        let tail = tail_correction(self.sigma, grid.s_max);
        let v = variance_from_density(&density, self.sigma, grid)? + tail;
        Ok(ChaosGrid {
            y: self.y,
            sigma: T::of(self.sigma),
            s_max: T::of(grid.s_max),
            ds: T::of(grid.ds),
            density,
            v: T::of(v),
            tail_correction: T::of(tail),
            k_trunc_max: self.k_trunc_max,
        })
    }

    /// `V` for one draw without keeping the grid; `buf` is scratch space.
    pub fn variance<T: Real>(
        &self,
        draw: &CoefficientDraw,
        grid: GridSpec,
        buf: &mut Vec<T>,
    ) -> Result<f64> {
        let n = grid.points()?;
        buf.resize(n, T::zero());
        self.density_into(draw, -grid.s_max, grid.ds, buf)?;
        Ok(variance_from_density(buf, self.sigma, grid)? + tail_correction(self.sigma, grid.s_max))
    }
}

struct SweepState<T: Real> {
    coeff_geo: Vec<Complex64>,
    coeff_lin: Vec<Complex64>,
    coeff_gen: Vec<Complex<T>>,
    geo: Lanes<T>,
    lin: Lanes<T>,
    gen: Lanes<T>,
}

/// Rotating phases `w_p` and their per-step rotations, SoA.
struct Lanes<T> {
    wr: Vec<T>,
    wi: Vec<T>,
    rr: Vec<T>,
    ri: Vec<T>,
}

impl<T: Real> Lanes<T> {
    fn new(log_p: &[f64], ds: f64) -> Self {
        let n = log_p.len();
        let (mut rr, mut ri) = (Vec::with_capacity(n), Vec::with_capacity(n));
        for &lp in log_p {
            let (s, c) = (ds * lp).sin_cos();
            rr.push(T::of(c));
            ri.push(T::of(-s));
        }
        Self {
            wr: vec![T::zero(); n],
            wi: vec![T::zero(); n],
            rr,
            ri,
        }
    }

    /// `w_p = c_p e^{-i s log p}`.
    fn anchor(&mut self, c: &[Complex64], log_p: &[f64], s: f64) {
        for (i, (&cp, &lp)) in c.iter().zip(log_p).enumerate() {
            let w = cp * Complex64::from_polar(1.0, -s * lp);
            self.wr[i] = T::of(w.re);
            self.wi[i] = T::of(w.im);
        }
    }
}

impl<T: Real> SweepState<T> {
    fn new(plan: &EulerPlan, draw: &CoefficientDraw, ds: f64) -> Self {
        let c = |t: &ClassTable| -> Vec<Complex64> {
            t.rank
                .iter()
                .zip(&t.amp)
                .map(|(&r, &a)| draw.coeff[r] * a)
                .collect()
        };
        let mut coeff_gen = Vec::with_capacity(plan.gen.coef.len());
        for (j, &r) in plan.gen.rank.iter().enumerate() {
            let a = draw.coeff[r];
            let mut ak = a;
            for c in &plan.gen.coef[plan.gen.offset[j]..plan.gen.offset[j + 1]] {
                let v = ak * c;
                coeff_gen.push(Complex::new(T::of(v.re), T::of(v.im)));
                ak *= a;
            }
        }
        Self {
            coeff_geo: c(&plan.geo),
            coeff_lin: c(&plan.lin),
            coeff_gen,
            geo: Lanes::new(&plan.geo.log_p, ds),
            lin: Lanes::new(&plan.lin.log_p, ds),
            gen: Lanes::new(&plan.gen.log_p, ds),
        }
    }

    fn anchor(&mut self, plan: &EulerPlan, s: f64) {
        self.geo.anchor(&self.coeff_geo, &plan.geo.log_p, s);
        self.lin.anchor(&self.coeff_lin, &plan.lin.log_p, s);
        for (i, &lp) in plan.gen.log_p.iter().enumerate() {
            let v = Complex64::from_polar(1.0, -s * lp);
            self.gen.wr[i] = T::of(v.re);
            self.gen.wi[i] = T::of(v.im);
        }
    }

    fn run(&mut self, plan: &EulerPlan, out: &mut [T]) -> Result<()> {
        #[cfg(target_arch = "x86_64")]
        if has_avx2() {
            // SAFETY: the CPU supports AVX2 and FMA, checked at runtime.
            return unsafe { self.run_avx2(plan, out) };
        }
        self.run_portable(plan, out)
    }

    /// Same arithmetic per lane, only wider registers; results are bit-identical.
    #[cfg(target_arch = "x86_64")]
    #[target_feature(enable = "avx2,fma")]
    unsafe fn run_avx2(&mut self, plan: &EulerPlan, out: &mut [T]) -> Result<()> {
        self.run_portable(plan, out)
    }

    #[inline(always)]
    fn run_portable(&mut self, plan: &EulerPlan, out: &mut [T]) -> Result<()> {
        for o in out.iter_mut() {
            let mut log = -plan.log_norm;
            if !self.geo.wr.is_empty() {
                log -= sweep::<T, true>(&mut self.geo).as_f64();
            }
            if !self.lin.wr.is_empty() {
                log += sweep::<T, false>(&mut self.lin).as_f64();
            }
            if !self.gen.wr.is_empty() {
                log += sweep_general(&mut self.gen, &self.coeff_gen, &plan.gen.offset).as_f64();
            }
            let d = log.exp();
            if !d.is_finite() {
                return Err(overflow(plan));
            }
            *o = T::of(d);
            if !o.is_finite() {
                return Err(overflow(plan));
            }
        }
        Ok(())
    }
}

#[cfg(target_arch = "x86_64")]
fn has_avx2() -> bool {
    use std::sync::OnceLock;
    static FLAG: OnceLock<bool> = OnceLock::new();
    *FLAG.get_or_init(|| {
        std::env::var_os("RMFLAB_NO_SIMD").is_none()
            && is_x86_feature_detected!("avx2")
            && is_x86_feature_detected!("fma")
    })
}

fn overflow(plan: &EulerPlan) -> RmfError {
    let p = [&plan.geo.prime, &plan.lin.prime, &plan.gen.prime]
        .iter()
        .filter_map(|v| v.last().copied())
        .max()
        .unwrap_or(2);
    RmfError::NumericOverflow { p: p as u64 }
}

/// `sum_p log |1 -+ w_p|^2`, then advances every `w_p` by its rotation.
#[inline(always)]
fn sweep<T: Real, const NEG: bool>(l: &mut Lanes<T>) -> T {
    let one = T::one();
    let mut acc = [one; LANES];
    let mut log = T::zero();
    let Lanes { wr, wi, rr, ri } = l;
    let mut wr_c = wr.chunks_exact_mut(LANES);
    let mut wi_c = wi.chunks_exact_mut(LANES);
    let mut rr_c = rr.chunks_exact(LANES);
    let mut ri_c = ri.chunks_exact(LANES);
    let mut chunks = 0;
    for (((wr, wi), rr), ri) in (&mut wr_c).zip(&mut wi_c).zip(&mut rr_c).zip(&mut ri_c) {
        let a: [T; LANES] = (&*wr).try_into().unwrap();
        let b: [T; LANES] = (&*wi).try_into().unwrap();
        let c: [T; LANES] = rr.try_into().unwrap();
        let d: [T; LANES] = ri.try_into().unwrap();
        let mut na = [T::zero(); LANES];
        let mut nb = [T::zero(); LANES];
        for k in 0..LANES {
            let re = if NEG { one - a[k] } else { one + a[k] };
            acc[k] *= re * re + b[k] * b[k];
            na[k] = a[k] * c[k] - b[k] * d[k];
            nb[k] = a[k] * d[k] + b[k] * c[k];
        }
        wr.copy_from_slice(&na);
        wi.copy_from_slice(&nb);
        chunks += 1;
        if chunks == FOLD_CHUNKS {
            let mut prod = one;
            for a in acc.iter_mut() {
                prod *= *a;
                *a = one;
            }
            log += prod.ln();
            chunks = 0;
        }
    }
    let mut prod = one;
    let tails = wr_c
        .into_remainder()
        .iter_mut()
        .zip(wi_c.into_remainder().iter_mut())
        .zip(rr_c.remainder().iter().zip(ri_c.remainder()));
    for ((a, b), (&c, &d)) in tails {
        let (x, y) = (*a, *b);
        let re = if NEG { one - x } else { one + x };
        prod *= re * re + y * y;
        *a = x * c - y * d;
        *b = x * d + y * c;
    }
    for a in acc {
        prod *= a;
    }
    log + prod.ln()
}

/// Horner evaluation of `1 + sum_k a_k v^k` with unit phases `v_p`.
#[inline(always)]
fn sweep_general<T: Real>(l: &mut Lanes<T>, coef: &[Complex<T>], offset: &[usize]) -> T {
    let one = T::one();
    let mut acc = one;
    let mut log = T::zero();
    for i in 0..l.wr.len() {
        let v = Complex::new(l.wr[i], l.wi[i]);
        let cs = &coef[offset[i]..offset[i + 1]];
        let mut h = Complex::new(T::zero(), T::zero());
        for c in cs.iter().rev() {
            h = (h + c) * v;
        }
        h.re += one;
        acc *= h.norm_sqr();
        if i % FOLD_CHUNKS == FOLD_CHUNKS - 1 {
            log += acc.ln();
            acc = one;
        }
        let (rr, ri) = (l.rr[i], l.ri[i]);
        l.wr[i] = v.re * rr - v.im * ri;
        l.wi[i] = v.re * ri + v.im * rr;
    }
    log + acc.ln()
}

/// Density values of the normalized chaos measure on a symmetric grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ChaosGrid<T> {
    pub y: usize,
    pub sigma: T,
    pub s_max: T,
    pub ds: T,
    pub density: Vec<T>,
    pub v: T,
    pub tail_correction: T,
    pub k_trunc_max: u32,
}

impl<T: Real> ChaosGrid<T> {
    pub fn spec(&self) -> GridSpec {
        GridSpec {
            s_max: self.s_max.as_f64(),
            ds: self.ds.as_f64(),
        }
    }

    pub fn s(&self, i: usize) -> T {
        T::of(self.spec().s(i))
    }
}

/// `V` recomputed from a populated grid.
pub fn variance_from_grid<T: Real>(grid: &ChaosGrid<T>) -> Result<T> {
    let sigma = grid.sigma.as_f64();
    let spec = grid.spec();
    Ok(T::of(
        variance_from_density(&grid.density, sigma, spec)? + tail_correction(sigma, spec.s_max),
    ))
}

/// `(1/2 pi) * trapezoid(density / (sigma^2 + s^2))` over the grid, without the tail.
pub fn variance_from_density<T: Real>(density: &[T], sigma: f64, grid: GridSpec) -> Result<f64> {
    let n = grid.points()?;
    if density.len() != n {
        return Err(RmfError::invalid(format!(
            "density has {} points, grid has {n}",
            density.len()
        )));
    }
    let s2 = sigma * sigma;
    let w = |i: usize| {
        let s = grid.s(i);
        density[i].as_f64() / (s2 + s * s)
    };
    let inner: f64 = (1..n - 1).map(w).sum();
    let trap = grid.ds * (inner + 0.5 * (w(0) + w(n - 1)));
    Ok(trap / std::f64::consts::TAU)
}

/// `sqrt(ln ln x) * V` at `sigma = 1/2`, `y = x`, for unit or Moebius weights.
pub fn critical_variance<T: Real>(
    draw: &CoefficientDraw,
    spec: &MultiplicativeSpec,
    tables: &SieveTables,
    grid: GridSpec,
) -> Result<T> {
    let x = tables.limit();
    if !matches!(spec.family, Family::Unit | Family::Moebius) {
        return Err(RmfError::invalid(
            "critical variance is defined for unit and moebius weights",
        ));
    }
    let scale = crate::engine::critical_scale(x)?.powi(2);
    let plan = EulerPlan::new(draw.model, spec, tables, x, Height::Infinite)?;
    let g = plan.grid::<T>(draw, grid)?;
    Ok(T::of(scale * g.v.as_f64()))
}

/// `sum_j m(cell_j)^2` for dyadic cells of `[0, 1]` at levels `0..=n_levels`,
/// from a density sampled at `j ds` with `ds = 2^{-n_levels} / points_per_cell`.
pub fn dyadic_sums<T: Real>(density: &[T], n_levels: u32, points_per_cell: usize) -> Result<Vec<f64>> {
    if points_per_cell < 8 {
        return Err(RmfError::invalid(
            "dyadic cells need at least 8 grid points each",
        ));
    }
    let finest = 1usize << n_levels;
    if density.len() != finest * points_per_cell + 1 {
        return Err(RmfError::invalid("density does not match the dyadic grid"));
    }
    let ds = 1.0 / (finest * points_per_cell) as f64;
    let mut masses: Vec<f64> = (0..finest)
        .map(|j| {
            let c = &density[j * points_per_cell..=(j + 1) * points_per_cell];
            let inner: f64 = c[1..c.len() - 1].iter().map(|d| d.as_f64()).sum();
            ds * (inner + 0.5 * (c[0].as_f64() + c[c.len() - 1].as_f64()))
        })
        .collect();
    let mut out = vec![0.0; n_levels as usize + 1];
    for level in (0..=n_levels as usize).rev() {
        out[level] = masses.iter().map(|m| m * m).sum();
        masses = masses.chunks(2).map(|c| c.iter().sum()).collect();
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanSe {
    pub mean: f64,
    pub se: f64,
}

fn mean_se(rows: &[f64]) -> MeanSe {
    let n = rows.len() as f64;
    let mean = rows.iter().sum::<f64>() / n;
    let var = if rows.len() > 1 {
        rows.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    MeanSe {
        mean,
        se: (var / n).sqrt(),
    }
}

/// Monte Carlo `E sum_j m(cell_j)^2` per dyadic level over `draws`.
pub fn dyadic_mass_profile(
    plan: &EulerPlan,
    draws: &[CoefficientDraw],
    n_levels: u32,
    points_per_cell: usize,
) -> Result<Vec<MeanSe>> {
    if draws.is_empty() {
        return Err(RmfError::invalid("no draws"));
    }
    let points = (1usize << n_levels) * points_per_cell + 1;
    let ds = 1.0 / (points - 1) as f64;
    let per_draw: Vec<Vec<f64>> = draws
        .par_iter()
        .map(|d| {
            let mut buf = vec![0f64; points];
            plan.density_into(d, 0.0, ds, &mut buf)?;
            dyadic_sums(&buf, n_levels, points_per_cell)
        })
        .collect::<Result<_>>()?;
    Ok((0..=n_levels as usize)
        .map(|l| mean_se(&per_draw.iter().map(|r| r[l]).collect::<Vec<_>>()))
        .collect())
}

/// Monte Carlo `E[density(s) density(s + delta)]`, averaged over base points
/// `s in [0, span]` on a grid of step `ds`; every `delta` must be a multiple of `ds`.
pub fn two_point_kernel(
    plan: &EulerPlan,
    draws: &[CoefficientDraw],
    span: f64,
    ds: f64,
    deltas: &[f64],
) -> Result<Vec<MeanSe>> {
    if draws.is_empty() {
        return Err(RmfError::invalid("no draws"));
    }
    let offs: Vec<usize> = deltas
        .iter()
        .map(|&d| {
            let k = (d / ds).round();
            if k < 1.0 || (k * ds - d).abs() > 1e-9 {
                Err(RmfError::invalid(format!("delta {d} is not a positive multiple of ds")))
            } else {
                Ok(k as usize)
            }
        })
        .collect::<Result<_>>()?;
    let base = (span / ds).round() as usize + 1;
    let points = base + offs.iter().max().copied().unwrap_or(0);
    let per_draw: Vec<Vec<f64>> = draws
        .par_iter()
        .map(|d| {
            let mut buf = vec![0f64; points];
            plan.density_into(d, 0.0, ds, &mut buf)?;
            Ok(offs
                .iter()
                .map(|&k| (0..base).map(|i| buf[i] * buf[i + k]).sum::<f64>() / base as f64)
                .collect())
        })
        .collect::<Result<_>>()?;
    Ok((0..offs.len())
        .map(|j| mean_se(&per_draw.iter().map(|r| r[j]).collect::<Vec<_>>()))
        .collect())
}
