use crate::error::{Result, RmfError};
use crate::scalar::Real;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

/// One 15-point Kronrod panel; returns `(K15, |K15 - G7|, K15 of |f|)`.
fn kronrod<T: Real, F: FnMut(T) -> T>(f: &mut F, a: T, b: T) -> (T, T, T) {
    let half = T::of(0.5);
    let c = half * (a + b);
    let r = half * (b - a);
    let fc = f(c);
    let mut k = fc * T::of(WGK[7]);
    let mut g = fc * T::of(WG[3]);
    let mut k_abs = fc.abs() * T::of(WGK[7]);
    for j in 0..7 {
        let dx = r * T::of(XGK[j]);
        let (fl, fr) = (f(c - dx), f(c + dx));
        let s = fl + fr;
        k += T::of(WGK[j]) * s;
        k_abs += T::of(WGK[j]) * (fl.abs() + fr.abs());
        if j % 2 == 1 {
            g += T::of(WG[j / 2]) * s;
        }
    }
    (k * r, ((k - g) * r).abs(), k_abs * r.abs())
}

const MAX_PANELS: usize = 4000;

struct Panel<T> {
    lo: T,
    hi: T,
    value: T,
    err: T,
    abs: T,
}

/// Globally adaptive Gauss-Kronrod (7/15) on `[a, b]` to absolute tolerance `tol`.
///
/// The worst panel is bisected until the summed error estimate meets `tol`
/// or the roundoff floor, or the panel budget runs out.
pub fn integrate<T: Real, F: FnMut(T) -> T>(mut f: F, a: T, b: T, tol: T) -> Result<T> {
    if a == b {
        return Ok(T::zero());
    }
    let floor = T::epsilon() * T::of(64.0);
    let (value, err, mut total_abs) = kronrod(&mut f, a, b);
    let mut panels = vec![Panel { lo: a, hi: b, value, err, abs: total_abs }];
    let mut total_err = err;
    while panels.len() < MAX_PANELS {
        if !total_err.is_finite() {
            return Err(RmfError::invalid("non-finite integrand"));
        }
        if total_err <= tol.max(floor * total_abs) {
            break;
        }
        let worst = panels
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.err.as_f64().total_cmp(&y.1.err.as_f64()))
            .map(|(i, _)| i)
            .expect("non-empty");
        let p = panels.swap_remove(worst);
        let mid = T::of(0.5) * (p.lo + p.hi);
        if !(mid > p.lo.min(p.hi) && mid < p.lo.max(p.hi)) {
            panels.push(p);
            break;
        }
        let (v1, e1, a1) = kronrod(&mut f, p.lo, mid);
        let (v2, e2, a2) = kronrod(&mut f, mid, p.hi);
        total_err = total_err - p.err + e1 + e2;
        total_abs = total_abs - p.abs + a1 + a2;
        panels.push(Panel { lo: p.lo, hi: mid, value: v1, err: e1, abs: a1 });
        panels.push(Panel { lo: mid, hi: p.hi, value: v2, err: e2, abs: a2 });
    }
    let total = panels.iter().fold(T::zero(), |acc, p| acc + p.value);
    if !total.is_finite() {
        return Err(RmfError::invalid("non-finite integrand"));
    }
    Ok(total)
}
