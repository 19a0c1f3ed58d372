mod common;

use num_complex::Complex64;
use rmflab_core::oracle::*;
use rmflab_core::{Model, MultiplicativeSpec};

fn families() -> Vec<MultiplicativeSpec> {
    vec![
        MultiplicativeSpec::theta_bigomega(0.49).unwrap(),
        MultiplicativeSpec::divisor_z(0.7).unwrap(),
    ]
}

#[test]
fn bijection_up_to_ten_thousand() {
    let r = verify_param_bijection(10_000).unwrap();
    assert!(r.pass, "{}", r.to_json_line());
    assert_eq!(r.lhs, 0.0);
}

#[test]
fn gcd_recipe_inverts_forward_map() {
    let g = [1, 1, 2, 3, 5, 7];
    assert_eq!(param_inverse(param_forward(g)), g);
    assert_eq!(param_forward([1, 1, 1, 1, 1, 1]), [1, 1, 1, 1]);
}

#[test]
fn steinhaus_second_moment_exact_matches_formula() {
    for spec in families() {
        for x in [2usize, 3, 10, 37, 100] {
            let a = exact_ux_second_moment(Model::Steinhaus, &spec, x).unwrap();
            let b = formula_ux_second_moment(Model::Steinhaus, &spec, x).unwrap();
            assert!((a - b).abs() <= 1e-10 * a.abs().max(1.0), "{} x {x}: {a} {b}", spec.family_name());
        }
    }
}

#[test]
fn rademacher_second_moment_exact_matches_formula() {
    for spec in families() {
        let spec = spec.restricted_to_squarefree();
        for x in [2usize, 3, 10, 37, 100] {
            let a = exact_ux_second_moment(Model::Rademacher, &spec, x).unwrap();
            let b = formula_ux_second_moment(Model::Rademacher, &spec, x).unwrap();
            assert!((a - b).abs() <= 1e-10 * a.abs().max(1.0), "{} x {x}: {a} {b}", spec.family_name());
        }
    }
}

#[test]
fn unit_weight_at_x_two() {
    let e = exact_ux_second_moment(Model::Steinhaus, &MultiplicativeSpec::unit(), 2).unwrap();
    assert!((e - 1.0).abs() < 1e-14);
}

#[test]
fn s1_and_fm_basics() {
    let v = vec![Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0), Complex64::new(1.0, 0.0), Complex64::new(1.0, 0.0)];
    // F_1(3) = (1 - 1/3) + (1/2 - 1/3)
    assert!((f_m(&v, 1, 3.0) - (2.0 / 3.0 + 1.0 / 6.0)).abs() < 1e-15);
    assert!((f_m(&v, 2, 3.0) - 2.0 / 3.0).abs() < 1e-15);
    assert!((s_1(&v, 3.0, 1, 1.0) - 1.0).abs() < 1e-15);
    let unit = MultiplicativeSpec::unit();
    assert!((d_m(&unit, 6).unwrap() - (0.5 * 2.0 / 3.0)).abs() < 1e-14);
}

#[test]
fn simplified_r_agrees_with_general_series() {
    let spec = MultiplicativeSpec::theta_bigomega(0.49).unwrap();
    let general = r_constant(&spec, 200).unwrap();
    let simple = r_constant_simplified(&spec, 200).unwrap();
    assert!(general.value > 0.0 && general.last_shell < general.value);
    assert!((general.value - simple).abs() < 1e-10 * simple, "{} {simple}", general.value);
    let dom = r_prime_constant(&spec, 200).unwrap();
    assert!(dom.value >= general.value - 1e-12);
}

#[test]
fn r_beta_needs_squarefree_support() {
    let spec = MultiplicativeSpec::theta_bigomega(0.49).unwrap();
    assert!(r_beta_constant(&spec, 30).is_err());
    let v = r_beta_constant(&spec.restricted_to_squarefree(), 30).unwrap();
    assert!(v > 1.0);
}

#[test]
fn cross_moments_both_models() {
    let spec = MultiplicativeSpec::theta_bigomega(0.49).unwrap();
    let sq = spec.clone().restricted_to_squarefree();
    let configs = [
        (2u64, 0.5, 0.5, 0.0, 0.0),
        (2, 0.5, 0.5, 0.3, -0.3),
        (3, 0.5, 0.6, 1.0, 2.0),
        (5, 0.55, 0.5, 0.0, 3.0),
        (7, 0.5, 0.5, -1.5, 0.5),
        (11, 0.6, 0.6, 0.1, 0.2),
        (13, 0.5, 0.7, 5.0, -5.0),
        (17, 0.5, 0.5, 10.0, 0.0),
        (101, 0.5, 0.5, 0.0, 0.01),
        (997, 0.5, 0.55, 2.5, 2.5),
    ];
    for (i, &(p, s1, s2, t1, t2)) in configs.iter().enumerate() {
        let z1 = Point { sigma: s1, s: t1 };
        let z2 = Point { sigma: s2, s: t2 };
        for (model, f) in [(Model::Steinhaus, &spec), (Model::Rademacher, &sq)] {
            for r in cross_moment_check(model, f, p, z1, z2, 20_000, 17 + i as u64).unwrap() {
                assert!(r.pass, "{}", r.to_json_line());
            }
        }
    }
}

#[test]
fn orthogonality_small_table() {
    let reps = orthogonality_table(12, 4000, 5).unwrap();
    let fails = reps.iter().filter(|r| !r.pass).count();
    // 4 SE bands; allow rare excursions among 156 entries
    assert!(fails <= 1, "{fails}");
    let four = fourfold_check(&[[2, 3, 6, 1], [2, 3, 5, 7], [6, 10, 15, 1]], 4000, 9).unwrap();
    assert!(four.iter().all(|r| r.pass));
    assert!(orthogonality_table(101, 10, 1).is_err());
}
