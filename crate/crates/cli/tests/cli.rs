use std::path::Path;
use std::process::{Command, Output};

fn oamplab(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_oamplab"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

#[test]
fn capacity_on_identity_channel_is_the_scalar_information() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("flat.csv");
    let mut text = String::from("# 8,8\n");
    for _ in 0..8 {
        text.push_str("1\n");
    }
    std::fs::write(&spec, text).unwrap();
    let snr_db = 10.0 * 4f64.log10();
    let out = oamplab(
        dir.path(),
        &[
            "capacity",
            "--set",
            &format!("system.spectrum_file={:?}", spec.display().to_string()),
            "--set",
            &format!("system.snr_db={snr_db}"),
        ],
    );
    ok(&out);
    let csv = std::fs::read_to_string(dir.path().join("capacity.csv")).unwrap();
    assert!(csv.starts_with("# schema=capacity"));
    let row: Vec<f64> = csv.lines().nth(2).unwrap().split(',').map(|f| f.parse().unwrap()).collect();
    let expected = oamplab_core::Prior::qpsk().mutual_information(4.0) / std::f64::consts::LN_2;
    assert!((row[1] - expected).abs() < 1e-6, "{} vs {expected}", row[1]);
    assert!((row[2] - expected).abs() < 1e-6);
}

#[test]
fn areas_are_reproducible_and_complete() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for d in [&a, &b] {
        ok(&oamplab(d, &["areas", "--seed", "3", "--set", "system.snr_db_sweep=[0, 6]"]));
    }
    let ca = std::fs::read(a.join("areas.csv")).unwrap();
    assert_eq!(ca, std::fs::read(b.join("areas.csv")).unwrap());
    let text = String::from_utf8(ca).unwrap();
    let header = text.lines().nth(1).unwrap();
    for key in ["ADGO", "BDEO", "AHO", "ACGO", "ACD", "ADEO", "DGE", "AFGO", "DFG", "FHG", "BDGO"] {
        assert!(header.split(',').any(|h| h == key), "missing {key}");
    }
    assert_eq!(text.lines().count(), 4);
    let manifest = std::fs::read_to_string(a.join("manifest.toml")).unwrap();
    assert!(manifest.contains("command = \"areas\""));
    assert!(manifest.contains("master_seed = 3"));
}

#[test]
fn uncoded_sweep_schema_and_worker_independence() {
    let dir = tempfile::tempdir().unwrap();
    let args = |w: &'static str| {
        vec![
            "sim-uncoded",
            "--workers",
            w,
            "--set",
            "system.m=64",
            "--set",
            "system.n=64",
            "--set",
            "system.snr_db_sweep=[2, 6]",
            "--set",
            "montecarlo.trials=40",
            "--set",
            "detector.outer_iters=8",
        ]
    };
    let (one, two) = (dir.path().join("one"), dir.path().join("two"));
    ok(&oamplab(&one, &args("1")));
    ok(&oamplab(&two, &args("2")));
    let a = std::fs::read_to_string(one.join("ber.csv")).unwrap();
    assert_eq!(a, std::fs::read_to_string(two.join("ber.csv")).unwrap());
    assert_eq!(a.lines().nth(1).unwrap(), "snr_db,ber,bler,blocks,bit_errors");
}

#[test]
fn coded_pipeline_small() {
    let dir = tempfile::tempdir().unwrap();
    let common = [
        "--set",
        "code.n=512",
        "--set",
        "system.m=128",
        "--set",
        "system.n=128",
        "--set",
        "code.inner_iters=20",
    ];
    let mut curve_args = vec!["code-curve", "--set", "code.rho_grid=[0, 0.5, 1, 1.5, 2, 4, 10]", "--set", "code.blocks_per_point=4"];
    curve_args.extend(common);
    ok(&oamplab(dir.path(), &curve_args));
    let curve = dir.path().join("code_curve.csv");
    assert!(std::fs::read_to_string(&curve).unwrap().starts_with("# rate="));
    assert!(dir.path().join("code.alist").exists());

    let curve_key = format!("code.curve={:?}", curve.display().to_string());
    let rate = ok(&oamplab(dir.path(), &["rate", "--nats", "--set", &curve_key]));
    assert!(rate.contains("nats"));
    ok(&oamplab(dir.path(), &["match-check", "--set", &curve_key, "--set", "system.snr_db=6"]));
    assert!(std::fs::read_to_string(dir.path().join("match_check.csv"))
        .unwrap()
        .contains("feasible,min_margin,threshold_snr_db,rate_gap"));

    let mut sim_args = vec!["sim-coded", "--set", "system.snr_db_sweep=[8]", "--set", "montecarlo.trials=2", "--set", "detector.outer_iters=10"];
    sim_args.extend(common);
    ok(&oamplab(dir.path(), &sim_args));
    let ber = std::fs::read_to_string(dir.path().join("ber.csv")).unwrap();
    let row: Vec<f64> = ber.lines().nth(2).unwrap().split(',').map(|f| f.parse().unwrap()).collect();
    assert_eq!(row, vec![8.0, 0.0, 0.0, 2.0, 0.0]);
}

#[test]
fn remaining_subcommands_write_outputs() {
    let dir = tempfile::tempdir().unwrap();
    for (cmd, file) in [
        ("spectrum", "spectrum.csv"),
        ("se-trace", "se_trace.csv"),
        ("fixed-point", "fixed_point.csv"),
    ] {
        ok(&oamplab(dir.path(), &[cmd]));
        let text = std::fs::read_to_string(dir.path().join(file)).unwrap();
        assert!(text.starts_with('#'), "{cmd}");
    }
    ok(&oamplab(
        dir.path(),
        &["conformance", "--set", "system.m=128", "--set", "system.n=128", "--set", "montecarlo.trials=4"],
    ));
    assert!(dir.path().join("conformance.csv").exists());
}

#[test]
fn bad_config_fails_with_field_path() {
    let dir = tempfile::tempdir().unwrap();
    let out = oamplab(dir.path(), &["capacity", "--set", "montecarlo.trials=0"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("montecarlo.trials"));
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, "[system]\nkappa = 0.5\n").unwrap();
    let out = oamplab(dir.path(), &["capacity", "--config", cfg.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("system.kappa"));
}
