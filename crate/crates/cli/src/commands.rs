use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context, Result};
use oamplab_core::capacity::{
    area_report_at, capacity_areas_at, capacity_fixed_point, capacity_via_replica, code_rate_integral, match_check, AreaReport,
    MatchVerdict,
};
use oamplab_core::ldpc::{estimate_transfer_curve, load_alist, regular_code, write_alist, CodeTransferCurve, LdpcCode, Modulation};
use oamplab_core::numeric::db_to_linear;
use oamplab_core::oamp::DetectorOptions;
use oamplab_core::sim::{ber_csv, conformance_csv, se_conformance, simulate_point, uncoded_block, CodedSystem, StopRule};
use oamplab_core::spectral_transforms::{gaussian_capacity, SpectralMeasure};
use oamplab_core::state_evolution::{solve_fixed_point, trace_se, SeSystem};
use oamplab_core::VERSION;
use serde::Serialize;

use crate::config::ExperimentConfig;

/// Output directory holding the run manifest and CSV files.
pub struct Output {
    dir: PathBuf,
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    config: &'a ExperimentConfig,
}

impl Output {
    /// Creates the directory and writes `manifest.toml`.
    pub fn create(cfg: &ExperimentConfig, command: &str) -> Result<Self> {
        let dir = cfg.output.directory.clone();
        fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        let manifest = Manifest {
            tool: "oamplab",
            version: VERSION,
            command,
            config: cfg,
        };
        let out = Output { dir };
        out.write("manifest.toml", &toml::to_string(&manifest)?)?;
        Ok(out)
    }

    pub fn write(&self, name: &str, contents: &str) -> Result<PathBuf> {
        let path = self.dir.join(name);
        fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }

    fn announce(&self, path: &Path) {
        println!("wrote {}", path.display());
    }
}

fn header(schema: &str, extra: &str) -> String {
    if extra.is_empty() {
        format!("# schema={schema} version={VERSION}\n")
    } else {
        format!("# schema={schema} version={VERSION} {extra}\n")
    }
}

fn se_systems(cfg: &ExperimentConfig) -> Result<Vec<(f64, SeSystem)>> {
    let measure = SpectralMeasure::from_spectrum(&cfg.spectrum()?);
    cfg.snr_points_db()
        .into_iter()
        .map(|db| Ok((db, SeSystem::from_measure(measure.clone(), db_to_linear(db))?)))
        .collect()
}

pub fn spectrum(cfg: &ExperimentConfig, out: &Output) -> Result<()> {
    let s = cfg.spectrum()?;
    println!(
        "m = {}, n = {}, rank = {}, beta = {}, condition number = {:.6}",
        s.m(),
        s.n(),
        s.rank(),
        s.beta(),
        s.condition_number()
    );
    out.announce(&out.write("spectrum.csv", &s.to_csv())?);
    Ok(())
}

pub fn se_trace(cfg: &ExperimentConfig, out: &Output) -> Result<()> {
    let prior = cfg.prior()?;
    let mut csv = header("se_trace", "");
    csv.push_str("snr_db,t,v,rho,mmse\n");
    for (db, se) in se_systems(cfg)? {
        let trace = trace_se(&se, &prior, cfg.detector.outer_iters)?;
        for st in &trace.steps {
            writeln!(csv, "{db},{},{:e},{:e},{:e}", st.t, st.v, st.rho, st.mmse)?;
        }
        if let Some(last) = trace.steps.last() {
            println!("snr {db} dB: v = {:.6e} after {} iterations", last.v, trace.steps.len());
        }
    }
    out.announce(&out.write("se_trace.csv", &csv)?);
    Ok(())
}

pub fn fixed_point(cfg: &ExperimentConfig, out: &Output) -> Result<()> {
    let prior = cfg.prior()?;
    let mut csv = header("fixed_point", "");
    csv.push_str("snr_db,rho_star,v_star,crossings,unique\n");
    for (db, se) in se_systems(cfg)? {
        let fp = solve_fixed_point(&se, &prior)?;
        println!(
            "snr {db} dB: rho* = {:.10e}, v* = {:.10e}, crossings = {}",
            fp.rho_star, fp.v_star, fp.crossings
        );
        writeln!(csv, "{db},{:e},{:e},{},{}", fp.rho_star, fp.v_star, fp.crossings, fp.converged)?;
    }
    out.announce(&out.write("fixed_point.csv", &csv)?);
    Ok(())
}

pub fn capacity(cfg: &ExperimentConfig, out: &Output) -> Result<()> {
    let prior = cfg.prior()?;
    let units = cfg.units()?;
    let u = units.as_str();
    let mut csv = header("capacity", &format!("units={u}"));
    csv.push_str("snr_db,capacity_replica,capacity_areas,gaussian_capacity,crossings\n");
    for (db, se) in se_systems(cfg)? {
        let replica = capacity_via_replica(&se, &prior)?.capacity;
        let fp = capacity_fixed_point(&se, &prior)?;
        let areas = capacity_areas_at(&se, &prior, &fp)?;
        let gauss = gaussian_capacity(se.measure(), se.snr());
        println!(
            "snr {db} dB: C = {:.8} {u} (replica), {:.8} {u} (areas{}), Gaussian {:.8} {u}",
            units.convert(replica),
            units.convert(areas),
            if fp.converged { "" } else { ", smallest over several crossings" },
            units.convert(gauss)
        );
        writeln!(
            csv,
            "{db},{:e},{:e},{:e},{}",
            units.convert(replica),
            units.convert(areas),
            units.convert(gauss),
            fp.crossings
        )?;
    }
    out.announce(&out.write("capacity.csv", &csv)?);
    Ok(())
}

pub fn areas(cfg: &ExperimentConfig, out: &Output) -> Result<()> {
    let prior = cfg.prior()?;
    let units = cfg.units()?;
    let mut csv = header("areas", &format!("units={}", units.as_str()));
    csv.push_str(&format!("snr_db,{}\n", AreaReport::csv_header()));
    for (db, se) in se_systems(cfg)? {
        let fp = capacity_fixed_point(&se, &prior)?;
        if !fp.converged {
            log::warn!("snr {db} dB: {} crossings; areas use the one of smallest capacity", fp.crossings);
        }
        let mut rep = area_report_at(&se, &prior, &fp)?;
        for field in [
            &mut rep.adgo,
            &mut rep.bdeo,
            &mut rep.aho,
            &mut rep.acgo,
            &mut rep.acd,
            &mut rep.adeo,
            &mut rep.dge,
            &mut rep.afgo,
            &mut rep.dfg,
            &mut rep.fhg,
            &mut rep.bdgo,
            &mut rep.capacity_se,
            &mut rep.capacity_replica,
            &mut rep.cascading_rate,
            &mut rep.gaussian_capacity,
            &mut rep.siso_capacity,
        ] {
            *field = units.convert(*field);
        }
        println!("snr {db} dB ({}):\n{}", units.as_str(), rep.to_text());
        writeln!(csv, "{db},{}", rep.csv_row())?;
    }
    out.announce(&out.write("areas.csv", &csv)?);
    Ok(())
}

fn load_curve(cfg: &ExperimentConfig) -> Result<CodeTransferCurve> {
    let path = cfg
        .code
        .curve
        .as_ref()
        .ok_or_else(|| anyhow!("code.curve: a transfer-curve CSV is required (see code-curve)"))?;
    let text = fs::read_to_string(path).with_context(|| format!("code.curve: {}", path.display()))?;
    CodeTransferCurve::from_csv(&text).with_context(|| format!("code.curve: {}", path.display()))
}

pub fn rate(cfg: &ExperimentConfig, out: &Output) -> Result<()> {
    let curve = load_curve(cfg)?;
    let units = cfg.units()?;
    let u = units.as_str();
    let r = code_rate_integral(&curve);
    let entropy = curve.prior().entropy();
    println!(
        "rate = {:.6} {u} per symbol (bracket {:.6} .. {:.6}, tail {:.2e}{})",
        units.convert(r.nats),
        units.convert(r.lower),
        units.convert(r.upper),
        units.convert(r.tail),
        if r.resolved { "" } else { ", tail unresolved" }
    );
    if let Some(h) = entropy {
        println!("code rate x entropy = {:.6} {u}", units.convert(curve.code_rate() * h));
    }
    let mut csv = header("rate", &format!("units={u}"));
    csv.push_str("rate,lower,upper,tail,resolved,code_rate\n");
    writeln!(
        csv,
        "{:e},{:e},{:e},{:e},{},{}",
        units.convert(r.nats),
        units.convert(r.lower),
        units.convert(r.upper),
        units.convert(r.tail),
        r.resolved,
        curve.code_rate()
    )?;
    out.announce(&out.write("rate.csv", &csv)?);
    Ok(())
}

pub fn match_check_sweep(cfg: &ExperimentConfig, out: &Output) -> Result<()> {
    let curve = load_curve(cfg)?;
    let prior = cfg.prior()?;
    let units = cfg.units()?;
    let mut csv = header("match_check", &format!("rate_gap_units={}", units.as_str()));
    csv.push_str(&format!("snr_db,{}\n", MatchVerdict::csv_header()));
    for (db, se) in se_systems(cfg)? {
        let mut v = match_check(&curve, &se, &prior)?;
        v.rate_gap = units.convert(v.rate_gap);
        println!(
            "snr {db} dB: feasible = {}, min margin = {:.3e}, threshold = {}",
            v.feasible,
            v.min_margin,
            v.threshold_snr_db()
                .map_or_else(|| "none in curve range".to_string(), |t| format!("{t:.2} dB"))
        );
        writeln!(csv, "{db},{}", v.csv_row())?;
    }
    out.announce(&out.write("match_check.csv", &csv)?);
    Ok(())
}

fn build_code(cfg: &ExperimentConfig) -> Result<LdpcCode> {
    let c = &cfg.code;
    match &c.alist {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("code.alist: {}", p.display()))?;
            load_alist(&text).with_context(|| format!("code.alist: {}", p.display()))
        }
        None => regular_code(c.n, c.dv, c.dc, c.seed).context("code"),
    }
}

fn modulation(cfg: &ExperimentConfig) -> Result<Modulation> {
    Modulation::from_prior(&cfg.prior()?).map_err(|e| anyhow!("prior.name: {e}"))
}

pub fn code_curve(cfg: &ExperimentConfig, out: &Output) -> Result<()> {
    let code = build_code(cfg)?;
    let modulation = modulation(cfg)?;
    println!("code: n = {}, k = {}, rate = {:.4}", code.n(), code.k(), code.rate());
    let curve = estimate_transfer_curve(
        &code,
        modulation,
        &cfg.code.rho_grid,
        cfg.code.blocks_per_point,
        cfg.code.inner_iters,
        cfg.montecarlo.master_seed,
    )?;
    let bad = curve.monotonicity_violations();
    if !bad.is_empty() {
        log::warn!("transfer curve rises beyond 2 sigma after samples {bad:?}");
    }
    out.announce(&out.write("code_curve.csv", &curve.to_csv())?);
    if cfg.code.alist.is_none() {
        out.announce(&out.write("code.alist", &write_alist(&code))?);
    }
    Ok(())
}

fn stop_rule(cfg: &ExperimentConfig) -> StopRule {
    StopRule {
        max_blocks: cfg.montecarlo.trials,
        target_bit_errors: cfg.montecarlo.target_bit_errors,
    }
}

pub fn sim_uncoded(cfg: &ExperimentConfig, out: &Output) -> Result<()> {
    let spectrum = cfg.spectrum()?;
    let prior = cfg.prior()?;
    let opts = DetectorOptions {
        tracking: cfg.tracking(),
        ..DetectorOptions::new(cfg.detector.outer_iters)
    };
    let mut points = Vec::new();
    for db in cfg.snr_points_db() {
        let snr = db_to_linear(db);
        let p = simulate_point(db, stop_rule(cfg), cfg.montecarlo.master_seed, |s| {
            uncoded_block(&spectrum, snr, &prior, &opts, s)
        })?;
        println!("snr {db} dB: ber = {:.3e}, bler = {:.3e} over {} blocks", p.ber, p.bler, p.blocks);
        points.push(p);
    }
    out.announce(&out.write("ber.csv", &ber_csv(&points))?);
    Ok(())
}

pub fn sim_coded(cfg: &ExperimentConfig, out: &Output) -> Result<()> {
    let spectrum = cfg.spectrum()?;
    let code = build_code(cfg)?;
    let sys = CodedSystem {
        code: &code,
        modulation: modulation(cfg)?,
        spectrum: &spectrum,
        outer_iters: cfg.detector.outer_iters,
        inner_iters: cfg.code.inner_iters,
    };
    let segments = sys.segments().context("system.n")?;
    println!(
        "code: n = {}, k = {}, {segments} channel blocks of {} symbols",
        code.n(),
        code.k(),
        spectrum.n()
    );
    let mut points = Vec::new();
    for db in cfg.snr_points_db() {
        let snr = db_to_linear(db);
        let p = simulate_point(db, stop_rule(cfg), cfg.montecarlo.master_seed, |s| sys.block(snr, s))?;
        println!(
            "snr {db} dB: ber = {:.3e}, bler = {:.3e} over {} blocks, {:.1} outer iterations",
            p.ber, p.bler, p.blocks, p.mean_iterations
        );
        points.push(p);
    }
    out.announce(&out.write("ber.csv", &ber_csv(&points))?);
    Ok(())
}

pub fn conformance(cfg: &ExperimentConfig, out: &Output) -> Result<()> {
    let spectrum = cfg.spectrum()?;
    let prior = cfg.prior()?;
    let opts = DetectorOptions {
        tracking: cfg.tracking(),
        ..DetectorOptions::new(cfg.detector.outer_iters)
    };
    let db = cfg.system.snr_db;
    let rows = se_conformance(
        &spectrum,
        db_to_linear(db),
        &prior,
        &opts,
        cfg.montecarlo.trials,
        cfg.montecarlo.master_seed,
    )?;
    let worst = rows.iter().map(|r| r.v_relative_error()).fold(0.0, f64::max);
    let corr = rows
        .iter()
        .map(|r| r.le_correlation.max(r.nle_correlation))
        .fold(0.0, f64::max);
    println!("snr {db} dB: max relative v deviation {worst:.4}, max error correlation {corr:.4}");
    out.announce(&out.write("conformance.csv", &conformance_csv(&rows))?);
    Ok(())
}
