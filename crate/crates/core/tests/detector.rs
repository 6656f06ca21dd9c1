use oamplab_core::ldpc::{regular_code, Modulation};
use oamplab_core::numeric::db_to_linear;
use oamplab_core::oamp::DetectorOptions;
use oamplab_core::sim::{se_conformance, simulate_point, uncoded_block, uncoded_trial, CodedSystem, StopRule};
use oamplab_core::{make_kappa_spectrum, Prior};

#[test]
fn same_seed_same_trajectory() {
    let spectrum = make_kappa_spectrum(128, 128, 10.0).unwrap();
    let opts = DetectorOptions::new(10);
    let a = uncoded_trial(&spectrum, 5.0, &Prior::qpsk(), &opts, 42).unwrap().0;
    let b = uncoded_trial(&spectrum, 5.0, &Prior::qpsk(), &opts, 42).unwrap().0;
    assert_eq!(a.history, b.history);
    assert_eq!(a.estimate, b.estimate);
}

#[test]
fn well_conditioned_detector_follows_se() {
    let spectrum = make_kappa_spectrum(1024, 1024, 1.0).unwrap();
    let rows = se_conformance(&spectrum, db_to_linear(8.0), &Prior::qpsk(), &DetectorOptions::new(8), 200, 3).unwrap();
    for r in &rows {
        assert!(r.v_relative_error() < 0.05, "t={} v_emp {} v_se {}", r.t, r.v_emp, r.v_se);
        assert!(r.le_correlation < 0.05 && r.nle_correlation < 0.05, "t={}", r.t);
    }
}

#[test]
fn point_statistics_do_not_depend_on_worker_count() {
    let spectrum = make_kappa_spectrum(64, 64, 10.0).unwrap();
    let opts = DetectorOptions::new(10);
    let rule = StopRule {
        max_blocks: 80,
        target_bit_errors: Some(40),
    };
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| {
                simulate_point(4.0, rule, 77, |s| {
                    uncoded_block(&spectrum, db_to_linear(4.0), &Prior::qpsk(), &opts, s)
                })
                .unwrap()
            })
    };
    assert_eq!(run(1), run(3));
}

#[test]
fn coded_block_decodes_at_high_snr() {
    let code = regular_code(1024, 3, 6, 5).unwrap();
    let spectrum = make_kappa_spectrum(256, 256, 10.0).unwrap();
    let sys = CodedSystem {
        code: &code,
        modulation: Modulation::Qpsk,
        spectrum: &spectrum,
        outer_iters: 20,
        inner_iters: 30,
    };
    assert_eq!(sys.segments().unwrap(), 2);
    for trial in 0..3 {
        let out = sys.block(db_to_linear(8.0), trial).unwrap();
        assert_eq!(out.bit_errors, 0);
        assert!(!out.block_error);
    }
}
