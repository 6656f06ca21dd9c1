//! State evolution of OAMP: spectral transfer functions, their inverses,
//! trajectories and the fixed point.
//!
//! Notation: `v` is the error power of the message entering the linear
//! estimator, `rho` the SNR of the message entering the denoiser, `snr` the
//! inverse noise variance.

use std::fmt::Write as _;

use crate::channel::ChannelSpectrum;
use crate::error::{Error, Interval, Result};
use crate::numeric;
use crate::scalar_denoiser::Prior;
use crate::spectral_transforms::SpectralMeasure;

const ALTERNATION_TOL: f64 = 1e-10;
const ALTERNATION_MAX: usize = 10_000;
const SCAN_POINTS: usize = 1000;
const SCAN_LOW: f64 = 1e-4;
/// Floor used for the terminal sample of a vertical `eta^{-1}` segment.
pub const V_FLOOR: f64 = 1e-12;

/// A posterior-MSE transfer function `rho -> mmse(rho)`.
pub trait Transfer: Sync {
    /// Returns the MSE and whether the value was extrapolated.
    fn transfer(&self, rho: f64) -> (f64, bool);
}

impl Transfer for Prior {
    fn transfer(&self, rho: f64) -> (f64, bool) {
        (self.mmse(rho), false)
    }
}

/// Spectrum plus SNR: everything the linear-estimator transfer needs.
#[derive(Debug, Clone)]
pub struct SeSystem {
    measure: SpectralMeasure,
    snr: f64,
}

impl SeSystem {
    pub fn new(spectrum: &ChannelSpectrum, snr: f64) -> Result<Self> {
        Self::from_measure(SpectralMeasure::from_spectrum(spectrum), snr)
    }

    pub fn from_measure(measure: SpectralMeasure, snr: f64) -> Result<Self> {
        if !(snr >= 0.0 && snr.is_finite()) {
            return Err(Error::invalid(format!("snr must be finite and nonnegative, got {snr}")));
        }
        Ok(SeSystem { measure, snr })
    }

    pub fn measure(&self) -> &SpectralMeasure {
        &self.measure
    }

    pub fn snr(&self) -> f64 {
        self.snr
    }

    fn n(&self) -> f64 {
        self.measure.len() as f64
    }

    /// Largest value `η` takes: `snr * mean(λ)`, attained at `v = 0`.
    pub fn eta_max(&self) -> f64 {
        self.snr * self.measure.mean()
    }

    /// `γ̂(v) = (1/N) tr[(snr A^H A + I/v)^{-1}]`.
    pub fn gamma_hat(&self, v: f64) -> f64 {
        let inv = 1.0 / v;
        let s: f64 = self.measure.nonzero().iter().map(|l| 1.0 / (self.snr * l + inv)).sum();
        (s + self.measure.zero_count() as f64 * v) / self.n()
    }

    /// `γ(v) = 1/γ̂(v) - 1/v`, evaluated without cancellation; `γ(0) = η(0)`.
    pub fn gamma(&self, v: f64) -> f64 {
        let mut num = 0.0;
        let mut g = self.measure.zero_count() as f64;
        for l in self.measure.nonzero() {
            let a = self.snr * l;
            let den = 1.0 + a * v;
            num += a / den;
            g += 1.0 / den;
        }
        num / g
    }

    /// Solves `γ(v) = rho`. Returns `∞` below the range of `γ` and `0` at or
    /// above `γ(0)`.
    pub fn gamma_inverse(&self, rho: f64) -> f64 {
        if rho >= self.gamma(0.0) {
            return 0.0;
        }
        let mut lo = 1.0;
        while self.gamma(lo) < rho {
            lo *= 0.5;
            if lo < 1e-300 {
                return 0.0;
            }
        }
        let mut hi = 1.0;
        while self.gamma(hi) > rho {
            hi *= 2.0;
            if hi > 1e300 {
                return f64::INFINITY;
            }
        }
        numeric::bisect_relative(|v| self.gamma(v) - rho, lo, hi, 1e-14).unwrap_or(f64::INFINITY)
    }

    /// Supremum of `γ̂`: `(1/N) sum 1/(snr λ)` without zero eigenvalues,
    /// `∞` otherwise.
    pub fn v_sup(&self) -> f64 {
        if self.measure.zero_count() > 0 || self.snr == 0.0 {
            f64::INFINITY
        } else {
            self.measure.nonzero().iter().map(|l| 1.0 / (self.snr * l)).sum::<f64>() / self.n()
        }
    }

    /// `h(η; v) = (1/N) sum (snr λ - η) / (1 + v (snr λ - η))`; its zero in
    /// `η` gives `η(v)` and its zero in `v` gives `η^{-1}(η)`.
    fn h(&self, eta: f64, v: f64) -> f64 {
        let mut acc = 0.0;
        for l in self.measure.nonzero() {
            let x = self.snr * l - eta;
            let den = 1.0 + v * x;
            if den <= 0.0 {
                return f64::NEG_INFINITY;
            }
            acc += x / den;
        }
        let z = self.measure.zero_count() as f64;
        if z > 0.0 {
            let den = 1.0 - v * eta;
            if den <= 0.0 {
                return f64::NEG_INFINITY;
            }
            acc -= z * eta / den;
        }
        acc / self.n()
    }

    /// `η(v) = 1/v - 1/γ̂^{-1}(v)` for `v` in the range of `γ̂`.
    pub fn eta(&self, v: f64) -> Result<f64> {
        if !(v > 0.0) {
            return Err(Error::Domain {
                what: "eta",
                value: v,
                admissible: Interval { lo: 0.0, hi: self.v_sup() },
            });
        }
        if self.snr == 0.0 {
            return Ok(0.0);
        }
        let sup = self.v_sup();
        if v >= sup {
            return Err(Error::Domain {
                what: "eta",
                value: v,
                admissible: Interval { lo: 0.0, hi: sup },
            });
        }
        numeric::bisect_relative(|e| self.h(e, v), 0.0, 1.0 / v, 1e-14)
    }

    /// `η` extended by its boundary value `1/v_sup` beyond the range of `γ̂`.
    pub fn eta_clamped(&self, v: f64) -> f64 {
        if v >= self.v_sup() {
            return 1.0 / self.v_sup();
        }
        self.eta(v.max(f64::MIN_POSITIVE)).unwrap_or(1.0 / self.v_sup())
    }

    /// `γ̂^{-1}(v)`.
    pub fn gamma_hat_inverse(&self, v: f64) -> Result<f64> {
        let e = self.eta(v)?;
        Ok(1.0 / (1.0 / v - e))
    }

    /// `η^{-1}(rho)`: `∞` when `rho` lies below the range of `η`, `0` at or
    /// above `η(0)`.
    pub fn eta_inverse(&self, rho: f64) -> f64 {
        if !(rho > 0.0) {
            return f64::INFINITY;
        }
        if self.h(rho, 0.0) <= 0.0 {
            return 0.0;
        }
        let hi = 1.0 / rho;
        if self.h(rho, hi) >= 0.0 {
            return f64::INFINITY;
        }
        numeric::bisect_relative(|v| self.h(rho, v), 0.0, hi, 1e-14).unwrap_or(0.0)
    }

    /// Extrinsic denoiser transfer `φ(rho) = (1/mmse(rho) - rho)^{-1}`.
    pub fn phi(&self, transfer: &dyn Transfer, rho: f64) -> f64 {
        extrinsic(transfer.transfer(rho).0, rho)
    }
}

/// `(1/post - rho)^{-1}`, zero when the posterior MSE is zero.
pub fn extrinsic(post: f64, rho: f64) -> f64 {
    if post <= 0.0 {
        return 0.0;
    }
    let d = 1.0 / post - rho;
    if d <= 0.0 {
        f64::INFINITY
    } else {
        1.0 / d
    }
}

pub fn gamma_hat_se(spectrum: &ChannelSpectrum, snr: f64, v: f64) -> Result<f64> {
    Ok(SeSystem::new(spectrum, snr)?.gamma_hat(v))
}

pub fn gamma_se(spectrum: &ChannelSpectrum, snr: f64, v: f64) -> Result<f64> {
    Ok(SeSystem::new(spectrum, snr)?.gamma(v))
}

pub fn eta_se(spectrum: &ChannelSpectrum, snr: f64, v: f64) -> Result<f64> {
    SeSystem::new(spectrum, snr)?.eta(v)
}

/// The crossing `(rho*, v* = mmse(rho*))` of the two transfer curves.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedPoint {
    pub rho_star: f64,
    pub v_star: f64,
    pub iterations_used: usize,
    /// `false` when more than one crossing was found.
    pub converged: bool,
    pub crossings: usize,
}

impl FixedPoint {
    /// Errors unless the fixed point is unique.
    pub fn require_unique(self) -> Result<Self> {
        if self.converged {
            Ok(self)
        } else {
            Err(Error::MultipleFixedPoints {
                crossings: self.crossings,
            })
        }
    }
}

/// Runs the `γ`/`φ` alternation from `v = 1`, then refines the crossing of
/// `η^{-1}` and `mmse` by bisection and checks that it is unique.
pub fn solve_fixed_point(se: &SeSystem, prior: &Prior) -> Result<FixedPoint> {
    let snr = se.snr();
    if snr == 0.0 {
        return Ok(FixedPoint {
            rho_star: 0.0,
            v_star: 1.0,
            iterations_used: 0,
            converged: true,
            crossings: 1,
        });
    }

    let mut v = 1.0;
    let mut iterations = 0;
    let mut settled = false;
    while iterations < ALTERNATION_MAX {
        iterations += 1;
        let rho = se.gamma(v);
        let next = se.phi(prior, rho);
        let delta = (next - v).abs();
        v = next;
        if delta <= ALTERNATION_TOL * v || v == 0.0 {
            settled = true;
            break;
        }
    }
    if !settled {
        log::warn!("fixed-point alternation stopped after {iterations} iterations; refining by bisection");
    }
    let rho_alt = se.gamma(v);

    let roots = crossings(se, prior)?;
    let rho_star = roots[0];
    if settled && (rho_star - rho_alt).abs() > 1e-6 * rho_star {
        log::debug!("alternation settled at rho {rho_alt}, refined crossing at {rho_star}");
    }
    Ok(FixedPoint {
        rho_star,
        v_star: prior.mmse(rho_star),
        iterations_used: iterations,
        converged: roots.len() == 1,
        crossings: roots.len(),
    })
}

/// All crossings of `η^{-1}` and the denoiser curve on `(0, snr]`, in
/// increasing `rho`.
///
/// Sign changes of `rho - η(mmse(rho))` are located on a log grid over
/// `[1e-4 snr, snr]` and refined by bisection. Below the first crossing the
/// denoiser curve is the lower one.
pub fn crossings(se: &SeSystem, transfer: &dyn Transfer) -> Result<Vec<f64>> {
    let snr = se.snr();
    if snr == 0.0 {
        return Ok(vec![0.0]);
    }
    let f = |rho: f64| rho - se.eta_clamped(transfer.transfer(rho).0);
    let zero_band = 1e-12 * snr;
    let grid = numeric::log_grid(SCAN_LOW * snr, snr, SCAN_POINTS);
    let vals: Vec<f64> = grid.iter().map(|&r| f(r)).collect();
    let above = |x: f64| x >= -zero_band;
    let mut brackets = Vec::new();
    if above(vals[0]) {
        brackets.push((0.0, grid[0]));
    }
    for i in 1..grid.len() {
        if above(vals[i]) != above(vals[i - 1]) {
            brackets.push((grid[i - 1], grid[i]));
        }
    }
    if brackets.is_empty() {
        return Err(Error::NonConvergence {
            what: "fixed-point bracketing",
            iterations: SCAN_POINTS,
            residual: vals[vals.len() - 1],
        });
    }
    let last = vals[vals.len() - 1];
    brackets
        .into_iter()
        .map(|(lo, hi)| {
            if hi == snr && last.abs() <= zero_band {
                // Crossing on the vertical line rho = snr.
                Ok(snr)
            } else {
                numeric::bisect_relative(|r| if r == 0.0 { -1.0 } else { f(r) }, lo, hi, 1e-14)
            }
        })
        .collect()
}

/// One SE iteration: LE input error `v`, LE output SNR `rho = γ(v)`, and the
/// denoiser's posterior MSE at `rho`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeStep {
    pub t: usize,
    pub v: f64,
    pub rho: f64,
    pub mmse: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeTrace {
    pub steps: Vec<SeStep>,
    /// Some denoiser evaluation fell outside the sampled curve.
    pub extrapolated: bool,
}

impl SeTrace {
    /// `v_t` for `t = 0..=t_max` (the last entry follows the final step).
    pub fn v(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.v).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s = format!("# schema=se_trace version={}\nt,v,rho,mmse\n", crate::VERSION);
        for st in &self.steps {
            let _ = writeln!(s, "{},{:e},{:e},{:e}", st.t, st.v, st.rho, st.mmse);
        }
        s
    }
}

/// `t_max` iterations of `rho_t = γ(v_t)`, `v_{t+1} = φ(rho_t)` from `v_0 = 1`.
pub fn trace_se(se: &SeSystem, transfer: &dyn Transfer, t_max: usize) -> Result<SeTrace> {
    if t_max == 0 {
        return Err(Error::invalid("t_max must be at least 1"));
    }
    let mut steps = Vec::with_capacity(t_max);
    let mut extrapolated = false;
    let mut v: f64 = 1.0;
    for t in 0..t_max {
        let rho = se.gamma(v);
        let (post, ext) = transfer.transfer(rho);
        extrapolated |= ext;
        steps.push(SeStep { t, v, rho, mmse: post });
        v = extrinsic(post, rho).min(1.0);
    }
    if extrapolated {
        log::warn!("SE trace evaluated the code curve outside its sampled range");
    }
    Ok(SeTrace { steps, extrapolated })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CurveKind {
    EtaInverse,
    ConstellationMmse,
    CodeMmse,
    MinEnvelope,
}

impl CurveKind {
    pub fn as_str(self) -> &'static str {
        match self {
            CurveKind::EtaInverse => "eta_inverse",
            CurveKind::ConstellationMmse => "constellation_mmse",
            CurveKind::CodeMmse => "code_mmse",
            CurveKind::MinEnvelope => "min_envelope",
        }
    }
}

/// Samples `(rho, v)` of a monotone transfer curve.
#[derive(Debug, Clone, PartialEq)]
pub struct SeCurve {
    pub kind: CurveKind,
    pub samples: Vec<(f64, f64)>,
}

impl SeCurve {
    pub fn to_csv(&self) -> String {
        let mut s = format!("# kind={} schema=se_curve version={}\nrho,v\n", self.kind.as_str(), crate::VERSION);
        for (r, v) in &self.samples {
            let _ = writeln!(s, "{r:e},{v:e}");
        }
        s
    }
}

/// Samples a curve on `grid`. `transfer` supplies the denoiser curve for the
/// MMSE and envelope kinds.
///
/// `eta_inverse` samples above `v = 1` (outside the unit-power region) are
/// skipped, and the curve ends with `(snr, V_FLOOR)` so that a vertical drop
/// at `rho = snr` is explicit.
pub fn sample_curve(kind: CurveKind, se: &SeSystem, transfer: &dyn Transfer, grid: &[f64]) -> Result<SeCurve> {
    if grid.windows(2).any(|w| !(w[1] > w[0])) || grid.iter().any(|&r| !(r >= 0.0)) {
        return Err(Error::invalid("grid must be nonnegative and strictly increasing"));
    }
    let snr = se.snr();
    if matches!(kind, CurveKind::EtaInverse | CurveKind::MinEnvelope) && grid.last().is_some_and(|&r| r > snr * (1.0 + 1e-12)) {
        return Err(Error::invalid("grid must lie within [0, snr] for this curve kind"));
    }
    let mut samples = Vec::with_capacity(grid.len() + 1);
    match kind {
        CurveKind::ConstellationMmse | CurveKind::CodeMmse => {
            for &r in grid {
                samples.push((r, transfer.transfer(r).0));
            }
        }
        CurveKind::EtaInverse => {
            for &r in grid {
                let v = se.eta_inverse(r);
                if v <= 1.0 && r < snr {
                    samples.push((r, v.max(V_FLOOR)));
                }
            }
            samples.push((snr, V_FLOOR));
        }
        CurveKind::MinEnvelope => {
            for &r in grid {
                let v = se.eta_inverse(r).min(transfer.transfer(r).0);
                samples.push((r, if r >= snr { V_FLOOR } else { v.max(V_FLOOR) }));
            }
        }
    }
    if kind != CurveKind::CodeMmse {
        for w in samples.windows(2) {
            if w[1].1 > w[0].1 * (1.0 + 1e-9) + 1e-15 {
                return Err(Error::NonMonotone(format!(
                    "{} increases from {} to {} between rho = {} and {}; a unique fixed point requires monotone curves",
                    kind.as_str(),
                    w[0].1,
                    w[1].1,
                    w[0].0,
                    w[1].0
                )));
            }
        }
    }
    Ok(SeCurve { kind, samples })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::make_kappa_spectrum;

    fn flat(n: usize, snr: f64) -> SeSystem {
        SeSystem::new(&ChannelSpectrum::flat(n, n).unwrap(), snr).unwrap()
    }

    fn ladder(kappa: f64, beta: f64, snr: f64) -> SeSystem {
        let n = 120;
        let m = (n as f64 / beta).round() as usize;
        SeSystem::new(&make_kappa_spectrum(m, n, kappa).unwrap(), snr).unwrap()
    }

    #[test]
    fn gamma_hat_examples() {
        assert!((flat(4, 1.0).gamma_hat(1.0) - 0.5).abs() < 1e-15);
        let wide = ChannelSpectrum::new(1, 2, vec![2f64.sqrt()]).unwrap();
        assert!((gamma_hat_se(&wide, 1.0, 1.0).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        let se = ladder(10.0, 1.5, 3.0);
        assert!((se.gamma_hat(1e-9) / 1e-9 - 1.0).abs() < 1e-8);
    }

    #[test]
    fn gamma_examples() {
        assert!((flat(4, 1.0).gamma(1.0) - 1.0).abs() < 1e-15);
        for v in [1e-3, 0.4, 7.0] {
            assert!((flat(3, 2.5).gamma(v) - 2.5).abs() < 1e-13);
        }
        assert!(ladder(10.0, 1.0, 1e-12).gamma(0.5) < 1e-9);
        let se = ladder(10.0, 1.5, 2.0);
        for v in [0.01, 0.3, 1.0] {
            let direct = 1.0 / se.gamma_hat(v) - 1.0 / v;
            assert!((se.gamma(v) - direct).abs() < 1e-10 * direct);
        }
    }

    #[test]
    fn eta_examples() {
        let se = flat(5, 3.0);
        for v in [0.01, 0.2, 0.3] {
            assert!((se.eta(v).unwrap() - 3.0).abs() < 1e-12);
        }
        assert!(matches!(se.eta(1.0 / 3.0), Err(Error::Domain { .. })));
        let se = ladder(10.0, 1.0, 4.0);
        assert!((se.eta(1e-10).unwrap() / 4.0 - 1.0).abs() < 1e-8);
    }

    #[test]
    fn eta_inverts_gamma_hat() {
        for se in [ladder(10.0, 1.5, 2.0), ladder(50.0, 0.5, 10.0), ladder(10.0, 1.0, 5.0)] {
            for v in [0.05, 0.2, 0.5, 0.9] {
                if v >= se.v_sup() {
                    continue;
                }
                let u = se.gamma_hat_inverse(v).unwrap();
                assert!((se.gamma_hat(u) / v - 1.0).abs() < 1e-12);
                let rho = se.eta(v).unwrap();
                assert!((se.eta_inverse(rho) / v - 1.0).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn eta_matches_r_transform() {
        use crate::spectral_transforms::r_transform;
        let se = ladder(10.0, 1.5, 2.0);
        for v in [0.1, 0.5, 1.0] {
            let r = r_transform(se.measure(), -se.snr() * v).unwrap();
            assert!((se.eta(v).unwrap() - se.snr() * r).abs() < 1e-11);
        }
    }

    #[test]
    fn gamma_inverse_round_trip() {
        let se = ladder(10.0, 1.0, 6.0);
        for v in [0.02, 0.3, 2.0] {
            let rho = se.gamma(v);
            assert!((se.gamma_inverse(rho) / v - 1.0).abs() < 1e-10);
        }
        assert_eq!(se.gamma_inverse(7.0), 0.0);
    }

    #[test]
    fn fixed_point_identity_gaussian() {
        for snr in [0.5, 4.0, 20.0] {
            let fp = solve_fixed_point(&flat(8, snr), &Prior::Gaussian).unwrap();
            assert!(fp.converged);
            assert!((fp.rho_star - snr).abs() < 1e-12 * snr);
            assert!((fp.v_star - 1.0 / (1.0 + snr)).abs() < 1e-12);
        }
    }

    #[test]
    fn fixed_point_identity_qpsk() {
        let prior = Prior::qpsk();
        let fp = solve_fixed_point(&flat(8, 4.0), &prior).unwrap();
        assert!((fp.rho_star - 4.0).abs() < 1e-12);
        assert!((fp.v_star - prior.mmse(4.0)).abs() < 1e-15);
    }

    #[test]
    fn fixed_point_invariants() {
        let prior = Prior::qpsk();
        for se in [ladder(10.0, 1.5, 1.0), ladder(50.0, 1.0, 3.0), ladder(10.0, 0.5, 0.3)] {
            let fp = solve_fixed_point(&se, &prior).unwrap().require_unique().unwrap();
            assert!((fp.v_star - prior.mmse(fp.rho_star)).abs() <= 1e-9);
            let eta = se.eta(fp.v_star).unwrap();
            assert!((fp.rho_star - eta).abs() <= 1e-9 * fp.rho_star);
            assert!(1.0 / fp.v_star - fp.rho_star > 0.0);
            let v_alt = se.gamma_hat_inverse(fp.v_star).unwrap();
            assert!((se.gamma(v_alt) / fp.rho_star - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn multiple_crossings_flagged() {
        let fp = solve_fixed_point(&ladder(50.0, 1.0, 10.0), &Prior::qpsk()).unwrap();
        assert!(!fp.converged);
        assert_eq!(fp.crossings, 3);
        assert!(matches!(fp.require_unique(), Err(Error::MultipleFixedPoints { crossings: 3 })));
    }

    #[test]
    fn zero_snr_fixed_point() {
        let fp = solve_fixed_point(&ladder(10.0, 1.0, 0.0), &Prior::qpsk()).unwrap();
        assert_eq!((fp.rho_star, fp.v_star), (0.0, 1.0));
    }

    #[test]
    fn trace_first_step_and_monotone() {
        let se = ladder(10.0, 1.0, 6.0);
        let prior = Prior::qpsk();
        let one = trace_se(&se, &prior, 1).unwrap();
        assert_eq!(one.steps.len(), 1);
        assert_eq!(one.steps[0].rho, se.gamma(1.0));
        assert_eq!(one.steps[0].mmse, prior.mmse(se.gamma(1.0)));
        let tr = trace_se(&se, &prior, 40).unwrap();
        for w in tr.steps.windows(2) {
            assert!(w[1].v <= w[0].v);
        }
        assert!(trace_se(&se, &prior, 0).is_err());
    }

    #[test]
    fn curve_kinds() {
        let se = ladder(10.0, 1.0, 6.0);
        let prior = Prior::qpsk();
        let fp = solve_fixed_point(&se, &prior).unwrap();
        let grid = numeric::log_grid(1e-3, 5.99, 200);
        let env = sample_curve(CurveKind::MinEnvelope, &se, &prior, &grid).unwrap();
        for &(r, v) in &env.samples {
            if r < fp.rho_star * 0.999 {
                assert!((v - prior.mmse(r)).abs() < 1e-15);
            } else if r > fp.rho_star * 1.001 {
                assert!((v - se.eta_inverse(r)).abs() < 1e-15);
            }
        }
        let flat_curve = sample_curve(CurveKind::EtaInverse, &flat(4, 6.0), &prior, &grid).unwrap();
        assert_eq!(flat_curve.samples, vec![(6.0, V_FLOOR)]);
        assert!(env.to_csv().starts_with("# kind=min_envelope"));
    }
}
