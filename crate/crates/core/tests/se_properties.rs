use oamplab_core::capacity::{area_report, capacity_areas_at, capacity_fixed_point, capacity_via_replica, envelope_area};
use oamplab_core::numeric::db_to_linear;
use oamplab_core::spectral_transforms::{r_transform, SpectralMeasure};
use oamplab_core::state_evolution::{crossings, solve_fixed_point, trace_se, SeSystem};
use oamplab_core::{make_kappa_spectrum, ChannelSpectrum, Prior};
use proptest::prelude::*;

fn system(kappa: f64, beta: f64, snr_db: f64) -> SeSystem {
    let n = 200;
    let m = (n as f64 / beta).round() as usize;
    SeSystem::new(&make_kappa_spectrum(m, n, kappa).unwrap(), db_to_linear(snr_db)).unwrap()
}

#[test]
fn se_trace_is_nonincreasing() {
    let se = system(10.0, 1.0, 8.0);
    let v = trace_se(&se, &Prior::qpsk(), 60).unwrap().v();
    assert!(v.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12)), "{v:?}");
}

#[test]
fn gaussian_fixed_point_is_unique() {
    for kappa in [1.0, 10.0, 50.0] {
        let se = system(kappa, 1.0, 5.0);
        assert_eq!(crossings(&se, &Prior::Gaussian).unwrap().len(), 1);
    }
}

#[test]
fn identity_spectrum_reduces_to_scalar_channel() {
    let spectrum = ChannelSpectrum::flat(64, 64).unwrap();
    for snr in [0.5, 4.0, 20.0] {
        let se = SeSystem::new(&spectrum, snr).unwrap();
        let fp = solve_fixed_point(&se, &Prior::qpsk()).unwrap();
        assert!((fp.rho_star - snr).abs() < 1e-8 * snr);
    }
}

#[test]
fn several_crossings_take_the_smallest_stationary_value() {
    let spectrum = make_kappa_spectrum(500, 500, 50.0).unwrap();
    let se = SeSystem::new(&spectrum, db_to_linear(10.0)).unwrap();
    let prior = Prior::qpsk();
    assert_eq!(crossings(&se, &prior).unwrap().len(), 3);
    let replica = capacity_via_replica(&se, &prior).unwrap().capacity;
    let fp = capacity_fixed_point(&se, &prior).unwrap();
    let areas = capacity_areas_at(&se, &prior, &fp).unwrap();
    assert!((replica - areas).abs() < 1e-8, "{replica} vs {areas}");
    assert!(replica <= 4f64.ln());
    for rho in crossings(&se, &prior).unwrap() {
        let other = oamplab_core::state_evolution::FixedPoint {
            rho_star: rho,
            v_star: prior.mmse(rho),
            ..fp
        };
        assert!(capacity_areas_at(&se, &prior, &other).unwrap() >= areas - 1e-12);
    }
    assert!(envelope_area(&se, &prior).unwrap() <= replica);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn gamma_hat_increasing_and_contracting(
        kappa in 1.0f64..60.0,
        beta in 0.5f64..1.6,
        snr_db in -5.0f64..15.0,
        v in 1e-4f64..1.0,
    ) {
        let se = system(kappa, beta, snr_db);
        let a = se.gamma_hat(v);
        let b = se.gamma_hat(v * 1.01);
        prop_assert!(b > a);
        prop_assert!(a < v);
    }

    #[test]
    fn fixed_point_properties(
        kappa in 1.0f64..60.0,
        beta in 0.5f64..1.6,
        snr_db in -5.0f64..15.0,
        qpsk in any::<bool>(),
    ) {
        let prior = if qpsk { Prior::qpsk() } else { Prior::Gaussian };
        let se = system(kappa, beta, snr_db);
        let fp = solve_fixed_point(&se, &prior).unwrap();
        prop_assert!(1.0 / fp.v_star - fp.rho_star > 0.0);
        // Fixed point against the R-transform.
        let snr = se.snr();
        let r = snr * r_transform(se.measure(), -snr * fp.v_star).unwrap();
        prop_assert!((fp.rho_star - r).abs() <= 1e-6 * fp.rho_star);
        // The fixed point is where the scalar curve meets the inverse of eta.
        prop_assert!((se.eta_clamped(fp.v_star) - fp.rho_star).abs() <= 1e-6 * fp.rho_star);
    }

    #[test]
    fn area_inequalities(
        kappa in 1.0f64..60.0,
        beta in 0.5f64..1.6,
        snr_db in -5.0f64..15.0,
    ) {
        let se = system(kappa, beta, snr_db);
        let prior = Prior::qpsk();
        let rep = area_report(&se, &prior);
        prop_assume!(rep.is_ok());
        let rep = rep.unwrap();
        let tol = 1e-6;
        prop_assert!(rep.acd >= -tol);
        prop_assert!(rep.dfg >= -tol);
        prop_assert!(rep.adgo <= rep.acgo + tol);
        prop_assert!(rep.adgo <= rep.afgo + tol);
        prop_assert!(rep.adgo <= rep.aho + tol);
        prop_assert!((rep.capacity_se - rep.capacity_replica).abs() < 1e-3);
    }

    #[test]
    fn capacity_nondecreasing_in_snr(kappa in 1.0f64..60.0, beta in 0.5f64..1.6) {
        let mut last = 0.0;
        for db in [-5.0, 0.0, 5.0, 10.0, 15.0] {
            let c = capacity_via_replica(&system(kappa, beta, db), &Prior::qpsk()).unwrap().capacity;
            prop_assert!(c >= last - 1e-9);
            last = c;
        }
    }

    #[test]
    fn r_transform_nondecreasing(kappa in 1.0f64..60.0, f1 in 0.0f64..1.0, f2 in 0.0f64..1.0) {
        let measure = SpectralMeasure::from_spectrum(&make_kappa_spectrum(100, 100, kappa).unwrap());
        let g0 = measure.stieltjes_at_origin();
        let (lo, hi) = if f1 > f2 { (f1 * g0, f2 * g0) } else { (f2 * g0, f1 * g0) };
        prop_assert!(r_transform(&measure, lo).unwrap() <= r_transform(&measure, hi).unwrap() + 1e-12);
    }
}
