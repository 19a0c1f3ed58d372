#![allow(dead_code)]

use std::f64::consts::FRAC_PI_2;

use rmflab_core::special::RhoTable;

const T_RANGE: f64 = 4.0;

/// Double-exponential quadrature on `[a, b]`. `f` receives `(x, x - a, b - x)`
/// so integrands singular at an endpoint can use the exact distance.
pub fn tanh_sinh<F: FnMut(f64, f64, f64) -> f64>(mut f: F, a: f64, b: f64, tol: f64) -> f64 {
    let r = 0.5 * (b - a);
    let c = 0.5 * (a + b);
    let mut node = |t: f64| -> f64 {
        let u = FRAC_PI_2 * t.sinh();
        let w = FRAC_PI_2 * t.cosh() / (u.cosh() * u.cosh());
        // distance from the nearer endpoint: r (1 - tanh|u|)
        let d = r * 2.0 / ((2.0 * u.abs()).exp() + 1.0);
        if d == 0.0 || w == 0.0 {
            return 0.0;
        }
        let v = if u > 0.0 {
            f(b - d, 2.0 * r - d, d)
        } else if u < 0.0 {
            f(a + d, d, 2.0 * r - d)
        } else {
            f(c, r, r)
        };
        w * v
    };
    let mut h = 0.5;
    let mut n = (T_RANGE / h) as i64;
    let mut sum: f64 = (-n..=n).map(|k| node(k as f64 * h)).sum();
    let mut prev = sum * h * r;
    for _ in 0..10 {
        h *= 0.5;
        n *= 2;
        sum += (-n..=n)
            .filter(|k| k % 2 != 0)
            .map(|k| node(k as f64 * h))
            .sum::<f64>();
        let est = sum * h * r;
        if (est - prev).abs() <= tol {
            return est;
        }
        prev = est;
    }
    prev
}

/// `tanh_sinh` over consecutive cut points.
pub fn tanh_sinh_pieces<F: FnMut(f64, f64, f64) -> f64>(mut f: F, cuts: &[f64], tol: f64) -> f64 {
    cuts.windows(2)
        .map(|w| tanh_sinh(&mut f, w[0], w[1], tol))
        .sum()
}

pub fn gamma(x: f64) -> f64 {
    statrs::function::gamma::gamma(x)
}

/// `rho_theta` on `[1, 2]` from the integrating-factor form, by quadrature.
pub fn rho_one_two_oracle(theta: f64, t: f64) -> f64 {
    let integral = tanh_sinh(
        |s, from_a, _| s.powf(-theta) * from_a.powf(theta - 1.0),
        1.0,
        t,
        1e-15,
    );
    t.powf(theta - 1.0) / gamma(theta) * (1.0 - theta * integral)
}

/// Dickman `rho(3) = 1 - int_1^3 rho(t - 1) / t dt` with `rho(v) = 1 - int_1^v dw / w` on `[1, 2]`.
pub fn dickman_three_oracle() -> f64 {
    let inner = |v: f64| {
        if v <= 1.0 {
            1.0
        } else {
            1.0 - tanh_sinh(|w, _, _| 1.0 / w, 1.0, v, 1e-16)
        }
    };
    1.0 - tanh_sinh_pieces(|t, _, _| inner(t - 1.0) / t, &[1.0, 2.0, 3.0], 1e-15)
}

/// `C_eps` by tanh-sinh over the pieces where `(1 - v) / v` crosses an integer.
pub fn c_eps_oracle(t: &RhoTable<f64>, eps: f64) -> f64 {
    let theta = t.theta();
    let mut cuts = vec![eps];
    let mut k = ((1.0 - eps) / eps).floor();
    while k >= 1.0 {
        let v = 1.0 / (k + 1.0);
        if v > eps {
            cuts.push(v);
        }
        k -= 1.0;
    }
    cuts.push(1.0);
    let g = t.gamma_theta();
    let last = cuts.len() - 2;
    let total: f64 = cuts
        .windows(2)
        .enumerate()
        .map(|(i, w)| {
            tanh_sinh(
                |v, _, to_b| {
                    let one_minus_v = if i == last { to_b } else { 1.0 - v };
                    let u = one_minus_v / v;
                    if u > t.t_max() {
                        return 0.0;
                    }
                    // (1-v)^{theta-1} / u^{theta-1} = v^{theta-1}
                    v.powf(theta - 2.0) * g * t.rho(u).unwrap()
                },
                w[0],
                w[1],
                1e-14,
            )
        })
        .sum();
    theta * total
}
