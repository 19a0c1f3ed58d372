use num_complex::Complex64;
use proptest::prelude::*;
use rmflab_core::stats::*;
use rmflab_core::Model;

#[test]
fn gaussian_vs_gaussian_ks_is_small() {
    let a = EmpiricalSample::new(gaussian_sample(100_000, 1.0f64, 1)).unwrap();
    let b = EmpiricalSample::new(gaussian_sample(100_000, 1.0f64, 2)).unwrap();
    assert!(ks_two_sample(&a, &b) < 0.02);
}

#[test]
fn gaussian_sampler_moments() {
    let n = 1_000_000;
    let x = gaussian_sample(n, 1.0f64, 11);
    let nf = n as f64;
    let m1 = x.iter().sum::<f64>() / nf;
    let m2 = x.iter().map(|v| v * v).sum::<f64>() / nf;
    let m4 = x.iter().map(|v| v.powi(4)).sum::<f64>() / nf;
    // SEs from the Gaussian moments 1, 2 and 96
    assert!(m1.abs() < 5.0 / nf.sqrt());
    assert!((m2 - 1.0).abs() < 5.0 * (2.0 / nf).sqrt());
    assert!((m4 - 3.0).abs() < 5.0 * (96.0 / nf).sqrt());
}

#[test]
fn complex_gaussian_half_moment() {
    let z = complex_gaussian_sample::<f64>(1_000_000, 4);
    let (est, se) = abs_moment(&z, 0.5).unwrap();
    let want = std::f64::consts::PI.sqrt() / 2.0;
    assert!((est - want).abs() < 4.0 * se, "{est} {se}");
}

#[test]
fn real_gaussian_half_moment() {
    let z: Vec<Complex64> = gaussian_sample(1_000_000, 1.0f64, 5)
        .into_iter()
        .map(|x| Complex64::new(x, 0.0))
        .collect();
    let (est, se) = abs_moment(&z, 0.5).unwrap();
    let want = (2.0 / std::f64::consts::PI).sqrt();
    assert!((est - want).abs() < 4.0 * se, "{est} {se}");
}

#[test]
fn mixture_with_constant_variance() {
    let ones = vec![1.0f64; 100_000];
    let s = mixture_sample(&ones, Model::Steinhaus, 3).unwrap();
    let se = (2.0 * 0.25 / s.len() as f64).sqrt();
    assert!((s.variance() - 0.5).abs() < 4.0 * se);
    let r = mixture_sample(&ones, Model::Rademacher, 3).unwrap();
    assert!((r.variance() - 1.0).abs() < 4.0 * (2.0 / r.len() as f64).sqrt());
    let zeros = mixture_sample(&vec![0.0f64; 10], Model::Steinhaus, 3).unwrap();
    assert!(zeros.sorted().iter().all(|&v| v == 0.0));
    assert!(mixture_sample(&[-1.0f64], Model::Steinhaus, 3).is_err());
}

#[test]
fn mixture_second_moment_is_half_mean_v() {
    let v: Vec<f64> = (0..100_000).map(|i| (i % 7) as f64 / 3.0).collect();
    let mean_v = v.iter().sum::<f64>() / v.len() as f64;
    let s = mixture_sample(&v, Model::Steinhaus, 8).unwrap();
    let sq: Vec<f64> = s.sorted().iter().map(|x| x * x).collect();
    let (m, se) = jackknife_mean(&sq);
    assert!((m - mean_v / 2.0).abs() < 4.0 * se);
}

fn mixed_pairs(n: usize, seed: u64) -> (Vec<f64>, Vec<Complex64>) {
    let v: Vec<f64> = gaussian_sample(n, 1.0f64, seed).iter().map(|g| 2.0 * g * g).collect();
    let g = complex_gaussian_sample::<f64>(n, seed + 100);
    let s = v.iter().zip(&g).map(|(&vi, &gi)| gi * vi.sqrt()).collect();
    (v, s)
}

#[test]
fn pairing_passes_for_true_mixture_and_shuffle_fails() {
    let (v, s) = mixed_pairs(100_000, 21);
    let ok = stable_pairing_check(&v, &s, Model::Steinhaus, 5).unwrap();
    assert_eq!(ok.len(), 6);
    assert!(ok.iter().all(|c| c.pass), "{ok:?}");
    let bad = shuffled_pairing_check(&v, &s, Model::Steinhaus, 5).unwrap();
    assert!(bad.iter().any(|c| !c.pass));
    assert!(stable_pairing_check(&v[..10], &s[..9], Model::Steinhaus, 5).is_err());
}

#[test]
fn pairing_trivial_weight_and_test_function() {
    let (v, s) = mixed_pairs(1000, 2);
    let r = stable_pairing_check(&v, &s, Model::Steinhaus, 1).unwrap();
    // weight 1 with cos(Re z) is bounded, so lhs and rhs lie in [-1, 1]
    assert!(r.iter().all(|c| c.lhs.abs() <= 1.0 && c.rhs.abs() <= 1.0));
}

proptest! {
    #[test]
    fn ks_invariant_under_monotone_maps(
        a in prop::collection::vec(-10.0f64..10.0, 1..60),
        b in prop::collection::vec(-10.0f64..10.0, 1..60),
    ) {
        let d = ks_two_sample(&EmpiricalSample::new(a.clone()).unwrap(), &EmpiricalSample::new(b.clone()).unwrap());
        let f = |x: &f64| x.powi(3) + x.exp();
        let d2 = ks_two_sample(
            &EmpiricalSample::new(a.iter().map(f).collect()).unwrap(),
            &EmpiricalSample::new(b.iter().map(f).collect()).unwrap(),
        );
        prop_assert!((d - d2).abs() < 1e-15);
        prop_assert!((0.0..=1.0).contains(&d));
    }

    #[test]
    fn ks_matches_brute_force(
        a in prop::collection::vec(-3i32..3, 1..30),
        b in prop::collection::vec(-3i32..3, 1..30),
    ) {
        let af: Vec<f64> = a.iter().map(|&x| x as f64).collect();
        let bf: Vec<f64> = b.iter().map(|&x| x as f64).collect();
        let ea = EmpiricalSample::new(af.clone()).unwrap();
        let eb = EmpiricalSample::new(bf.clone()).unwrap();
        let brute = af.iter().chain(&bf)
            .map(|&t| (ea.cdf(t) - eb.cdf(t)).abs())
            .fold(0.0, f64::max);
        prop_assert!((ks_two_sample(&ea, &eb) - brute).abs() < 1e-15);
    }
}
