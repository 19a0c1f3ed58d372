use crate::error::{Result, RmfError};
use crate::scalar::Real;

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

/// `ln Gamma(x)` for `x >= 1/2`.
fn ln_gamma_lanczos<T: Real>(x: T) -> T {
    let x = x - T::one();
    let mut a = T::of(LANCZOS[0]);
    for (k, &c) in LANCZOS.iter().enumerate().skip(1) {
        a += T::of(c) / (x + T::of_usize(k));
    }
    let t = x + T::of(LANCZOS_G + 0.5);
    let half = T::of(0.5);
    half * (T::TAU()).ln() + (x + half) * t.ln() - t + a.ln()
}

/// Lanczos approximation of `Gamma(x)` for `x > 0`.
pub fn gamma<T: Real>(x: T) -> Result<T> {
    if !(x > T::zero()) || !x.is_finite() {
        return Err(RmfError::invalid(format!("gamma needs x > 0, got {x}")));
    }
    if x < T::of(0.5) {
        // reflection
        let pi = T::PI();
        return Ok(pi / ((pi * x).sin() * ln_gamma_lanczos(T::one() - x).exp()));
    }
    Ok(ln_gamma_lanczos(x).exp())
}

/// `ln Gamma(x)` for `x > 0`.
pub fn ln_gamma<T: Real>(x: T) -> Result<T> {
    if !(x > T::zero()) || !x.is_finite() {
        return Err(RmfError::invalid(format!("ln_gamma needs x > 0, got {x}")));
    }
    if x < T::of(0.5) {
        let pi = T::PI();
        return Ok((pi / (pi * x).sin()).ln() - ln_gamma_lanczos(T::one() - x));
    }
    Ok(ln_gamma_lanczos(x))
}
