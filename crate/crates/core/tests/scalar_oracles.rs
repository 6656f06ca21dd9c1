use num_complex::Complex64;
use oamplab_core::seed::rng;
use oamplab_core::Prior;
use proptest::prelude::*;
use rand::Rng as _;
use rand_distr::StandardNormal;

/// Monte-Carlo MMSE with a direct posterior evaluation over the points.
fn mc_mmse(points: &[Complex64], rho: f64, samples: usize, seed: u64) -> (f64, f64) {
    let mut r = rng(seed);
    let sq = rho.sqrt();
    let (mut sum, mut sum2) = (0.0, 0.0);
    let mut w = vec![0.0; points.len()];
    for _ in 0..samples {
        let x = points[r.gen_range(0..points.len())];
        let z = Complex64::new(r.sample::<f64, _>(StandardNormal), r.sample::<f64, _>(StandardNormal))
            * std::f64::consts::FRAC_1_SQRT_2;
        let y = x * sq + z;
        let d: Vec<f64> = points.iter().map(|p| (y - p * sq).norm_sqr()).collect();
        let dmin = d.iter().cloned().fold(f64::INFINITY, f64::min);
        let mut norm = 0.0;
        for (wk, dk) in w.iter_mut().zip(&d) {
            *wk = (dmin - dk).exp();
            norm += *wk;
        }
        let mean: Complex64 = points.iter().zip(&w).map(|(p, wk)| p * wk).sum::<Complex64>() / norm;
        let e = (x - mean).norm_sqr();
        sum += e;
        sum2 += e * e;
    }
    let n = samples as f64;
    let m = sum / n;
    (m, ((sum2 / n - m * m) / n).sqrt())
}

fn qpsk_points() -> Vec<Complex64> {
    let a = std::f64::consts::FRAC_1_SQRT_2;
    vec![
        Complex64::new(a, a),
        Complex64::new(-a, a),
        Complex64::new(a, -a),
        Complex64::new(-a, -a),
    ]
}

#[test]
fn qpsk_mmse_matches_monte_carlo() {
    let prior = Prior::qpsk();
    for (rho, seed) in [(1.0, 11), (0.3, 12), (4.0, 13)] {
        let (mc, se) = mc_mmse(&qpsk_points(), rho, 2_000_000, seed);
        let q = prior.mmse(rho);
        assert!((q - mc).abs() <= 4.0 * se, "rho {rho}: quadrature {q} vs mc {mc} ± {se}");
    }
}

#[test]
fn qpsk_mmse_is_two_bpsk_dimensions() {
    // Each real axis is unit-power BPSK at SNR rho, so mmse = 1 - E tanh(rho + sqrt(rho) z),
    // evaluated by a plain Riemann sum.
    let bpsk = |s: f64| {
        let h = 1e-3;
        let mut acc = 0.0;
        let mut z: f64 = -10.0;
        while z <= 10.0 {
            let pdf = (-z * z / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt();
            acc += pdf * (s + s.sqrt() * z).tanh() * h;
            z += h;
        }
        1.0 - acc
    };
    let prior = Prior::qpsk();
    for rho in [0.1, 1.0, 10.0] {
        let oracle = bpsk(rho);
        assert!((prior.mmse(rho) - oracle).abs() < 1e-7, "rho {rho}");
    }
}

#[test]
fn i_mmse_identity() {
    for prior in [Prior::qpsk(), Prior::bpsk(), Prior::Gaussian] {
        for rho in [0.1f64, 1.0, 10.0] {
            let h = 1e-4 * rho.max(1.0);
            let d = (prior.mutual_information(rho + h) - prior.mutual_information(rho - h)) / (2.0 * h);
            assert!((d - prior.mmse(rho)).abs() <= 1e-5, "{} rho {rho}", prior.name());
        }
    }
}

#[test]
fn qpsk_saturates_at_ln4() {
    let prior = Prior::qpsk();
    assert!((prior.mutual_information(1e4) - 4f64.ln()).abs() < 1e-3);
    assert!(prior.mutual_information(0.0).abs() < 1e-12);
    assert!((prior.mmse(0.0) - 1.0).abs() < 1e-12);
}

#[test]
fn mmse_strictly_decreasing_on_grid() {
    for prior in [Prior::qpsk(), Prior::bpsk(), Prior::Gaussian] {
        let vals: Vec<f64> = (0..100).map(|i| prior.mmse(i as f64 * 0.1)).collect();
        assert!(vals.windows(2).all(|w| w[1] < w[0]), "{}", prior.name());
    }
}

proptest! {
    #[test]
    fn posterior_mean_inside_hull(re in -5.0f64..5.0, im in -5.0f64..5.0, rho in 0.0f64..50.0) {
        let m = Prior::qpsk().posterior_mean(Complex64::new(re, im), rho);
        let a = std::f64::consts::FRAC_1_SQRT_2;
        prop_assert!(m.re.abs() <= a + 1e-12 && m.im.abs() <= a + 1e-12);
    }

    #[test]
    fn mmse_bounded_by_gaussian(rho in 0.0f64..100.0) {
        for prior in [Prior::qpsk(), Prior::bpsk()] {
            let m = prior.mmse(rho);
            prop_assert!((0.0..=1.0).contains(&m));
            prop_assert!(m <= 1.0 / (1.0 + rho) + 1e-12);
        }
    }
}
