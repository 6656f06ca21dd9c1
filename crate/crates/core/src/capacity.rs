//! Replica capacity along two routes, the areas of the transfer-curve
//! diagram, and curve matching for coded OAMP.
//!
//! All rates are in nats per symbol.

use std::f64::consts::LN_2;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::ldpc::CodeTransferCurve;
use crate::numeric;
use crate::scalar_denoiser::Prior;
use crate::spectral_transforms::{gaussian_capacity, log_det_term, r_integral, r_transform};
use crate::state_evolution::{crossings, solve_fixed_point, FixedPoint, SeSystem, Transfer};

const QUAD_ABS: f64 = 1e-10;
const QUAD_REL: f64 = 1e-11;
const REPLICA_TOL: f64 = 1e-10;
const REPLICA_MAX: usize = 10_000;
const REPLICA_DAMPING: f64 = 0.8;
const REPLICA_LOW_START: f64 = 1e-12;
/// Below this `v` the alternation has reached the noiseless solution.
const REPLICA_V_ZERO: f64 = 1e-300;
/// Required clearance between the code curve and the detection envelope.
pub const MATCH_EPSILON: f64 = 1e-4;
/// Code-curve values at or below this count as decoded.
pub const MATCH_FLOOR: f64 = 1e-4;
const MATCH_POINTS: usize = 1000;
const THRESHOLD_DB_LOW: f64 = -30.0;
const THRESHOLD_DB_RES: f64 = 0.01;

fn mmse_area(transfer: &dyn Transfer, a: f64, b: f64) -> Result<f64> {
    if b <= a {
        return Ok(0.0);
    }
    numeric::integrate(|r| transfer.transfer(r).0, a, b, QUAD_ABS, QUAD_REL)
}

/// Capacity from the area expression at a given crossing:
/// `∫_0^{ρ*} mmse + ln v* + (1/N) ln det((1/v* - ρ*) I + snr A^H A)`.
pub fn capacity_areas_at(se: &SeSystem, prior: &Prior, fp: &FixedPoint) -> Result<f64> {
    if se.snr() == 0.0 {
        return Ok(0.0);
    }
    let body = mmse_area(prior, 0.0, fp.rho_star)?;
    Ok(body + fp.v_star.ln() + log_det_term(se.measure(), se.snr(), fp.rho_star, fp.v_star)?)
}

/// Capacity by the area theorem at the unique fixed point.
pub fn capacity_via_areas(se: &SeSystem, prior: &Prior) -> Result<f64> {
    let fp = solve_fixed_point(se, prior)?.require_unique()?;
    capacity_areas_at(se, prior, &fp)
}

/// Solution of the replica saddle-point equations and the capacity value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReplicaSolution {
    pub capacity: f64,
    pub rho: f64,
    pub v: f64,
    pub iterations: usize,
}

/// Capacity `∫_0^{snr v} R(-z) dz + I(ρ) - ρ v` with `ρ = snr R(-snr v)`,
/// `v = mmse(ρ)` solved by damped alternation.
///
/// The alternation runs from `v = 1` and from `v` near zero. When the two
/// runs settle on different solutions the smaller value is the capacity.
pub fn capacity_via_replica(se: &SeSystem, prior: &Prior) -> Result<ReplicaSolution> {
    let snr = se.snr();
    if snr == 0.0 {
        return Ok(ReplicaSolution {
            capacity: 0.0,
            rho: 0.0,
            v: 1.0,
            iterations: 0,
        });
    }
    let high = replica_from(se, prior, 1.0f64.min(se.v_sup() * (1.0 - 1e-9)))?;
    let low = replica_from(se, prior, REPLICA_LOW_START)?;
    let same = (high.v - low.v).abs() <= 1e-6 * high.v.max(low.v);
    if !same {
        log::debug!(
            "replica equations have several solutions: v = {:e} ({:e} nats) and v = {:e} ({:e} nats)",
            high.v,
            high.capacity,
            low.v,
            low.capacity
        );
    }
    let mut best = if low.capacity < high.capacity { low } else { high };
    best.iterations = high.iterations + low.iterations;
    Ok(best)
}

fn replica_from(se: &SeSystem, prior: &Prior, v0: f64) -> Result<ReplicaSolution> {
    let snr = se.snr();
    let measure = se.measure();
    let rho_of = |v: f64| -> Result<f64> { Ok(snr * r_transform(measure, -snr * v)?) };
    let mut v = v0;
    let mut iterations = 0;
    let mut delta = f64::INFINITY;
    while iterations < REPLICA_MAX {
        iterations += 1;
        let target = prior.mmse(rho_of(v)?);
        let next = (1.0 - REPLICA_DAMPING) * v + REPLICA_DAMPING * target;
        delta = (next - v).abs();
        v = next;
        if delta <= REPLICA_TOL * v || v < REPLICA_V_ZERO {
            break;
        }
    }
    if delta > REPLICA_TOL * v && v >= REPLICA_V_ZERO {
        return Err(Error::NonConvergence {
            what: "replica saddle-point iteration",
            iterations,
            residual: delta / v,
        });
    }
    let rho = rho_of(v)?;
    let capacity = r_integral(measure, snr * v)? + prior.mutual_information(rho) - rho * v;
    Ok(ReplicaSolution {
        capacity,
        rho,
        v,
        iterations,
    })
}

/// The SE crossing that carries the capacity: the fixed point itself when
/// it is unique, otherwise the crossing with the smallest area expression.
pub fn capacity_fixed_point(se: &SeSystem, prior: &Prior) -> Result<FixedPoint> {
    let fp = solve_fixed_point(se, prior)?;
    if fp.converged {
        return Ok(fp);
    }
    let mut best = (capacity_areas_at(se, prior, &fp)?, fp);
    for rho in crossings(se, prior)? {
        let cand = FixedPoint {
            rho_star: rho,
            v_star: prior.mmse(rho),
            ..fp
        };
        let c = capacity_areas_at(se, prior, &cand)?;
        if c < best.0 {
            best = (c, cand);
        }
    }
    Ok(best.1)
}

/// `∫_a^b η^{-1}(ρ) dρ` for `η^{-1}` finite on `[a, b]`, integrated along
/// `v` so that vertical stretches of the curve need no special care.
fn eta_inverse_area(se: &SeSystem, a: f64, b: f64) -> Result<f64> {
    if b <= a {
        return Ok(0.0);
    }
    let vb = se.eta_inverse(b);
    let va = se.eta_inverse(a);
    let rect = (b - a) * vb;
    if va <= vb {
        return Ok(rect);
    }
    let side = numeric::integrate(|v| se.eta_clamped(v) - a, vb, va, QUAD_ABS, QUAD_REL)?;
    Ok(rect + side)
}

/// Area under `min(η^{-1}, φ̂)` on `[0, snr]` where `φ̂` is `transfer`.
pub fn envelope_area(se: &SeSystem, transfer: &dyn Transfer) -> Result<f64> {
    let snr = se.snr();
    if snr == 0.0 {
        return Ok(0.0);
    }
    let roots = crossings(se, transfer)?;
    let mut edges = vec![0.0];
    edges.extend(roots.iter().copied().filter(|&r| r > 0.0 && r < snr));
    edges.push(snr);
    let mut total = 0.0;
    for (k, w) in edges.windows(2).enumerate() {
        // Segments alternate, starting with the denoiser curve below.
        total += if k % 2 == 0 {
            mmse_area(transfer, w[0], w[1])?
        } else {
            eta_inverse_area(se, w[0], w[1])?
        };
    }
    Ok(total)
}

/// Supremum rate of coded OAMP: the area under the detection envelope
/// `min(η^{-1}, mmse)` on `[0, snr]`, with a matched code curve taken as zero
/// beyond `snr`.
pub fn oamp_achievable_rate(se: &SeSystem, prior: &Prior) -> Result<f64> {
    envelope_area(se, prior)
}

/// `∫_0^{v*} η(v) dv`, the area left of `η^{-1}` below `v*`.
pub fn eta_area(se: &SeSystem, v_star: f64) -> Result<f64> {
    if v_star <= 0.0 || se.snr() == 0.0 {
        return Ok(0.0);
    }
    numeric::integrate(|v| se.eta_clamped(v), 0.0, v_star, QUAD_ABS, QUAD_REL)
}

/// Every named area of the transfer-curve diagram, in nats.
///
/// Corner points: O origin, A `(0, 1)`, B `(0, v*)`, D `(ρ*, v*)`,
/// E `(ρ*, 0)`, G `(snr, 0)`; C, F and H close the Gaussian, interference-free
/// and entropy areas.
#[derive(Debug, Clone, PartialEq)]
pub struct AreaReport {
    pub snr: f64,
    pub rho_star: f64,
    pub v_star: f64,
    pub adgo: f64,
    pub bdeo: f64,
    /// `ln |S|`; infinite for continuous priors.
    pub aho: f64,
    pub acgo: f64,
    pub acd: f64,
    pub adeo: f64,
    pub dge: f64,
    pub afgo: f64,
    pub dfg: f64,
    pub fhg: f64,
    pub bdgo: f64,
    pub capacity_se: f64,
    pub capacity_replica: f64,
    pub cascading_rate: f64,
    pub gaussian_capacity: f64,
    pub siso_capacity: f64,
}

impl AreaReport {
    /// `(name, value)` pairs in a fixed order.
    pub fn entries(&self) -> Vec<(&'static str, f64)> {
        vec![
            ("snr", self.snr),
            ("rho_star", self.rho_star),
            ("v_star", self.v_star),
            ("ADGO", self.adgo),
            ("BDEO", self.bdeo),
            ("AHO", self.aho),
            ("ACGO", self.acgo),
            ("ACD", self.acd),
            ("ADEO", self.adeo),
            ("DGE", self.dge),
            ("AFGO", self.afgo),
            ("DFG", self.dfg),
            ("FHG", self.fhg),
            ("BDGO", self.bdgo),
            ("capacity_se", self.capacity_se),
            ("capacity_replica", self.capacity_replica),
            ("cascading_rate", self.cascading_rate),
            ("gaussian_capacity", self.gaussian_capacity),
            ("siso_capacity", self.siso_capacity),
        ]
    }

    /// `key = value` lines.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.entries() {
            let _ = writeln!(s, "{k} = {v:e}");
        }
        s
    }

    pub fn csv_header() -> String {
        let names: Vec<&str> = Self::placeholder().entries().iter().map(|e| e.0).collect();
        names.join(",")
    }

    pub fn csv_row(&self) -> String {
        let vals: Vec<String> = self.entries().iter().map(|e| format!("{:e}", e.1)).collect();
        vals.join(",")
    }

    fn placeholder() -> Self {
        AreaReport {
            snr: 0.0,
            rho_star: 0.0,
            v_star: 0.0,
            adgo: 0.0,
            bdeo: 0.0,
            aho: 0.0,
            acgo: 0.0,
            acd: 0.0,
            adeo: 0.0,
            dge: 0.0,
            afgo: 0.0,
            dfg: 0.0,
            fhg: 0.0,
            bdgo: 0.0,
            capacity_se: 0.0,
            capacity_replica: 0.0,
            cascading_rate: 0.0,
            gaussian_capacity: 0.0,
            siso_capacity: 0.0,
        }
    }
}

/// Fills every area at the unique fixed point.
pub fn area_report(se: &SeSystem, prior: &Prior) -> Result<AreaReport> {
    let fp = solve_fixed_point(se, prior)?.require_unique()?;
    area_report_at(se, prior, &fp)
}

/// Fills every area at a given crossing.
pub fn area_report_at(se: &SeSystem, prior: &Prior, fp: &FixedPoint) -> Result<AreaReport> {
    let snr = se.snr();
    let (rho, v) = (fp.rho_star, fp.v_star);
    let adgo = capacity_areas_at(se, prior, fp)?;
    let bdgo = r_integral(se.measure(), snr * v)?;
    let adeo = prior.mutual_information(rho);
    let bdeo = rho * v;
    let capacity_replica = bdgo + adeo - bdeo;
    let acgo = gaussian_capacity(se.measure(), snr);
    let afgo = prior.mutual_information(snr);
    let aho = prior.entropy().unwrap_or(f64::INFINITY);
    Ok(AreaReport {
        snr,
        rho_star: rho,
        v_star: v,
        adgo,
        bdeo,
        aho,
        acgo,
        acd: acgo - adgo,
        adeo,
        dge: adgo - adeo,
        afgo,
        dfg: afgo - adgo,
        fhg: aho - afgo,
        bdgo,
        capacity_se: adgo,
        capacity_replica,
        cascading_rate: adeo,
        gaussian_capacity: acgo,
        siso_capacity: afgo,
    })
}

/// Rate implied by a code transfer curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateIntegral {
    /// Best estimate (nats per symbol).
    pub nats: f64,
    /// Extrapolated contribution beyond the last sample.
    pub tail: f64,
    pub lower: f64,
    pub upper: f64,
    /// `false` when the curve stops above `1e-4` or the tail fit failed.
    pub resolved: bool,
}

impl RateIntegral {
    pub fn bits(&self) -> f64 {
        self.nats / LN_2
    }
}

/// `∫_0^∞ φ̂_C(ρ) dρ`: trapezoid over the samples plus an exponential tail.
///
/// The bracket runs from the trapezoid alone up to the trapezoid plus the
/// constellation area beyond the last sample, which bounds any code curve.
pub fn code_rate_integral(curve: &CodeTransferCurve) -> RateIntegral {
    let s = curve.samples();
    let mut body = 0.0;
    if s[0].rho > 0.0 {
        body += mmse_area(curve.prior(), 0.0, s[0].rho).unwrap_or(s[0].rho);
    }
    for w in s.windows(2) {
        body += 0.5 * (w[0].mmse + w[1].mmse) * (w[1].rho - w[0].rho);
    }
    let last = s[s.len() - 1];
    let mut resolved = last.mmse <= 1e-4;
    let tail = if last.mmse == 0.0 {
        0.0
    } else if s.len() >= 2 && s[s.len() - 2].mmse > last.mmse {
        let prev = s[s.len() - 2];
        let rate = (prev.mmse / last.mmse).ln() / (last.rho - prev.rho);
        last.mmse / rate
    } else {
        resolved = false;
        0.0
    };
    let prior_tail = match curve.prior().entropy() {
        Some(h) => (h - curve.prior().mutual_information(last.rho)).max(0.0),
        None => f64::INFINITY,
    };
    RateIntegral {
        nats: body + tail.min(prior_tail),
        tail,
        lower: body,
        upper: body + prior_tail,
        resolved,
    }
}

/// Outcome of checking a code curve against the detection envelope.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchVerdict {
    pub feasible: bool,
    /// Smallest `min(η^{-1}, mmse) - φ̂_C` over the grid.
    pub min_margin: f64,
    /// Smallest SNR (linear) at which the check passes; `None` if it fails
    /// over the whole curve range.
    pub threshold_snr: Option<f64>,
    /// Achievable rate minus the code's rate (nats).
    pub rate_gap: f64,
}

impl MatchVerdict {
    pub fn threshold_snr_db(&self) -> Option<f64> {
        self.threshold_snr.map(numeric::linear_to_db)
    }

    pub fn csv_header() -> &'static str {
        "feasible,min_margin,threshold_snr_db,rate_gap"
    }

    pub fn csv_row(&self) -> String {
        let th = self
            .threshold_snr_db()
            .map_or_else(|| "inf".to_string(), |d| format!("{d:.2}"));
        format!("{},{:e},{},{:e}", self.feasible, self.min_margin, th, self.rate_gap)
    }
}

/// Whether the code curve stays strictly below the detection envelope at
/// this SNR, and the smallest margin seen.
///
/// The check covers `ρ ∈ [γ(1), snr)`, the SNRs the detector can visit
/// starting from `v = 1`. A point passes if the decoder has already decoded
/// (`φ̂_C ≤ MATCH_FLOOR`) or `φ̂_C + ε` lies below both curves.
pub fn match_feasible(curve: &CodeTransferCurve, se: &SeSystem, prior: &Prior) -> (bool, f64) {
    let snr = se.snr();
    let rho0 = se.gamma(1.0);
    if !(rho0 < snr) {
        let vc = curve.evaluate(snr).0;
        return (vc <= MATCH_FLOOR, -vc);
    }
    let mut feasible = true;
    let mut margin = f64::INFINITY;
    for i in 0..MATCH_POINTS {
        let rho = rho0 + (snr - rho0) * i as f64 / MATCH_POINTS as f64;
        let vc = curve.evaluate(rho).0;
        let vs = prior.mmse(rho);
        if vc > MATCH_FLOOR {
            let probe = vc + MATCH_EPSILON;
            if !(probe < vs && se.eta_clamped(probe) > rho) {
                feasible = false;
            }
        }
        margin = margin.min(se.eta_inverse(rho).min(vs) - vc);
    }
    (feasible, margin)
}

/// Full matching verdict at one SNR, including the decoding threshold.
pub fn match_check(curve: &CodeTransferCurve, se: &SeSystem, prior: &Prior) -> Result<MatchVerdict> {
    let snr = se.snr();
    if curve.rho_max() < snr {
        return Err(Error::InsufficientCoverage {
            covered: curve.rho_max(),
            required: snr,
        });
    }
    let (feasible, min_margin) = match_feasible(curve, se, prior);
    let threshold_snr = match_threshold(curve, se, prior)?;
    let rate_gap = oamp_achievable_rate(se, prior)? - code_rate_integral(curve).nats;
    Ok(MatchVerdict {
        feasible,
        min_margin,
        threshold_snr,
        rate_gap,
    })
}

/// Smallest SNR (linear, 0.01 dB resolution) at which the match check
/// passes for the spectrum of `se`, searched up to the curve's `ρ_max`.
pub fn match_threshold(curve: &CodeTransferCurve, se: &SeSystem, prior: &Prior) -> Result<Option<f64>> {
    let at = |db: f64| -> Result<bool> {
        let sys = SeSystem::from_measure(se.measure().clone(), numeric::db_to_linear(db))?;
        Ok(match_feasible(curve, &sys, prior).0)
    };
    let mut lo = THRESHOLD_DB_LOW;
    let mut hi = numeric::linear_to_db(curve.rho_max());
    if !at(hi)? {
        return Ok(None);
    }
    if at(lo)? {
        return Ok(Some(numeric::db_to_linear(lo)));
    }
    while hi - lo > THRESHOLD_DB_RES {
        let mid = 0.5 * (lo + hi);
        if at(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(Some(numeric::db_to_linear(hi)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{make_kappa_spectrum, ChannelSpectrum};

    fn flat(snr: f64) -> SeSystem {
        SeSystem::new(&ChannelSpectrum::flat(16, 16).unwrap(), snr).unwrap()
    }

    fn ladder(kappa: f64, beta: f64, snr: f64) -> SeSystem {
        let n = 100;
        let m = (n as f64 / beta).round() as usize;
        SeSystem::new(&make_kappa_spectrum(m, n, kappa).unwrap(), snr).unwrap()
    }

    #[test]
    fn identity_collapse() {
        for prior in [Prior::qpsk(), Prior::bpsk(), Prior::Gaussian] {
            for snr in [0.0, 4.0, 10.0] {
                let se = flat(snr);
                let mi = prior.mutual_information(snr);
                let a = capacity_via_areas(&se, &prior).unwrap();
                let r = capacity_via_replica(&se, &prior).unwrap().capacity;
                assert!((a - mi).abs() < 1e-6, "{} {snr}: {a} vs {mi}", prior.name());
                assert!((r - mi).abs() < 1e-6, "{} {snr}: {r} vs {mi}", prior.name());
                let env = oamp_achievable_rate(&se, &prior).unwrap();
                assert!((env - mi).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn gaussian_prior_matches_log_det() {
        for (kappa, beta, snr) in [(10.0, 1.5, 2.0), (50.0, 0.5, 10.0)] {
            let se = ladder(kappa, beta, snr);
            let c = gaussian_capacity(se.measure(), snr);
            assert!((capacity_via_areas(&se, &Prior::Gaussian).unwrap() - c).abs() < 1e-6);
            assert!((capacity_via_replica(&se, &Prior::Gaussian).unwrap().capacity - c).abs() < 1e-6);
            assert!((oamp_achievable_rate(&se, &Prior::Gaussian).unwrap() - c).abs() < 1e-6);
        }
    }

    #[test]
    fn routes_agree_qpsk() {
        let se = ladder(10.0, 1.5, 1.0);
        let prior = Prior::qpsk();
        let a = capacity_via_areas(&se, &prior).unwrap();
        let r = capacity_via_replica(&se, &prior).unwrap();
        let env = oamp_achievable_rate(&se, &prior).unwrap();
        assert!((a - r.capacity).abs() < 1e-6, "{a} vs {}", r.capacity);
        assert!((a - env).abs() < 1e-6, "{a} vs {env}");
    }

    #[test]
    fn report_identities() {
        let prior = Prior::qpsk();
        let rep = area_report(&ladder(10.0, 1.0, 5.0), &prior).unwrap();
        assert!((rep.capacity_se - (rep.bdgo + rep.adeo - rep.bdeo)).abs() < 1e-6);
        assert!(rep.dge >= 0.0 && rep.dfg >= 0.0 && rep.fhg >= 0.0 && rep.acd >= 0.0);
        assert_eq!(rep.aho, 4f64.ln());
        let rep = area_report(&flat(5.0), &prior).unwrap();
        assert!(rep.dfg.abs() < 1e-6);
        let rep = area_report(&ladder(10.0, 1.0, 1e-9), &prior).unwrap();
        assert!(rep.adgo.abs() < 1e-8 && rep.adeo.abs() < 1e-8 && rep.acgo.abs() < 1e-8);
        assert!(area_report(&ladder(10.0, 1.0, 5.0), &Prior::Gaussian).unwrap().aho.is_infinite());
    }

    #[test]
    fn report_serialization() {
        let rep = area_report(&flat(2.0), &Prior::qpsk()).unwrap();
        let header = AreaReport::csv_header();
        assert_eq!(header.split(',').count(), rep.csv_row().split(',').count());
        assert!(header.contains("BDGO") && rep.to_text().contains("ADGO = "));
    }

    #[test]
    fn rate_integral_examples() {
        let prior = Prior::qpsk();
        let grid: Vec<(f64, f64)> = (0..=4000).map(|i| i as f64 * 0.02).map(|r| (r, prior.mmse(r))).collect();
        let uncoded = CodeTransferCurve::from_points(&grid, 1.0, prior.clone()).unwrap();
        let r = code_rate_integral(&uncoded);
        assert!(r.resolved);
        assert!((r.nats - 4f64.ln()).abs() < 1e-3, "{r:?}");
        let zero = CodeTransferCurve::from_points(&[(0.0, 0.0), (1.0, 0.0)], 0.0, prior).unwrap();
        assert_eq!(code_rate_integral(&zero).nats, 0.0);
    }

    #[test]
    fn matching_examples() {
        let prior = Prior::qpsk();
        let se = ladder(10.0, 1.0, 10.0);
        let grid: Vec<(f64, f64)> = (0..=200).map(|i| i as f64 * 0.1).map(|r| (r, prior.mmse(r))).collect();
        let uncoded = CodeTransferCurve::from_points(&grid, 1.0, prior.clone()).unwrap();
        let v = match_check(&uncoded, &se, &prior).unwrap();
        assert!(!v.feasible);
        let genie = CodeTransferCurve::from_points(&[(0.0, 0.0), (20.0, 0.0)], 0.5, prior.clone()).unwrap();
        let v = match_check(&genie, &se, &prior).unwrap();
        assert!(v.feasible);
        assert!(v.threshold_snr_db().unwrap() <= THRESHOLD_DB_LOW + 1e-9);
        let short = CodeTransferCurve::from_points(&[(0.0, 1.0), (5.0, 0.0)], 0.5, prior.clone()).unwrap();
        assert!(matches!(match_check(&short, &se, &prior), Err(Error::InsufficientCoverage { .. })));
    }
}
