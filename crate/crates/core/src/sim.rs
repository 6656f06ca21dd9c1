//! Seeded Monte-Carlo simulation of uncoded and coded detection.
//!
//! Block `i` of a run with master seed `s` uses trial seed `s ^ i`, so
//! results are identical for any number of worker threads.

use std::fmt::Write as _;

use num_complex::Complex64;
use rand::Rng as _;
use rayon::prelude::*;

use crate::channel::{apply_channel, sample_channel, ChannelInstance, ChannelSpectrum};
use crate::error::{Error, Result};
use crate::ldpc::{BpOptions, DecoderNle, LdpcCode, Modulation};
use crate::oamp::{run_coded, run_uncoded, DetectorOptions, DetectorState, ErrorCorrelation};
use crate::scalar_denoiser::Prior;
use crate::seed::{self, Stream};
use crate::state_evolution::{trace_se, SeSystem};

/// Blocks evaluated per parallel batch before the stopping rule is checked.
const BATCH: usize = 32;

/// Result of one simulated block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct BlockOutcome {
    pub bits: usize,
    pub bit_errors: usize,
    pub block_error: bool,
    /// Detector iterations used.
    pub iterations: usize,
}

/// One point of a BER curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BerPoint {
    pub snr_db: f64,
    pub ber: f64,
    pub bler: f64,
    pub blocks: usize,
    pub bit_errors: usize,
    pub mean_iterations: f64,
}

impl BerPoint {
    pub fn csv_header() -> &'static str {
        "snr_db,ber,bler,blocks,bit_errors"
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{:e},{:e},{},{}",
            self.snr_db, self.ber, self.bler, self.blocks, self.bit_errors
        )
    }
}

/// Renders a BER sweep with its `#` header line.
pub fn ber_csv(points: &[BerPoint]) -> String {
    let mut s = format!("# schema=ber version={}\n{}\n", crate::VERSION, BerPoint::csv_header());
    for p in points {
        let _ = writeln!(s, "{}", p.csv_row());
    }
    s
}

/// When to stop simulating a point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StopRule {
    pub max_blocks: usize,
    /// Stop once this many bit errors have accumulated.
    pub target_bit_errors: Option<usize>,
}

/// Runs blocks `0, 1, ...` of `block(trial_seed)` until the stop rule fires.
/// Blocks are evaluated in parallel batches, but the point is cut at exactly
/// the first block index where the rule holds.
pub fn simulate_point<F>(snr_db: f64, rule: StopRule, master_seed: u64, block: F) -> Result<BerPoint>
where
    F: Fn(u64) -> Result<BlockOutcome> + Sync,
{
    if rule.max_blocks == 0 {
        return Err(Error::invalid("at least one block is required"));
    }
    let (mut bits, mut errors, mut block_errors, mut iters, mut blocks) = (0usize, 0usize, 0usize, 0usize, 0usize);
    let mut start = 0;
    'outer: while start < rule.max_blocks {
        let end = (start + BATCH).min(rule.max_blocks);
        let outcomes: Vec<BlockOutcome> = (start..end)
            .into_par_iter()
            .map(|i| block(seed::trial_seed(master_seed, i as u64)))
            .collect::<Result<_>>()?;
        for o in outcomes {
            bits += o.bits;
            errors += o.bit_errors;
            block_errors += usize::from(o.block_error);
            iters += o.iterations;
            blocks += 1;
            if rule.target_bit_errors.is_some_and(|t| errors >= t) {
                break 'outer;
            }
        }
        start = end;
    }
    Ok(BerPoint {
        snr_db,
        ber: errors as f64 / bits.max(1) as f64,
        bler: block_errors as f64 / blocks as f64,
        blocks,
        bit_errors: errors,
        mean_iterations: iters as f64 / blocks as f64,
    })
}

/// SNR in dB at which `bler` first falls through `level`, interpolated
/// linearly between sweep points (sorted by SNR).
pub fn bler_crossing(points: &[BerPoint], level: f64) -> Option<f64> {
    points.windows(2).find_map(|w| {
        let (a, b) = (&w[0], &w[1]);
        if a.bler >= level && b.bler < level {
            let f = (a.bler - level) / (a.bler - b.bler);
            Some(a.snr_db + f * (b.snr_db - a.snr_db))
        } else {
            None
        }
    })
}

/// Draws the channel and observation of one uncoded block.
pub fn uncoded_instance(
    spectrum: &ChannelSpectrum,
    snr: f64,
    prior: &Prior,
    trial: u64,
) -> Result<(ChannelInstance, Vec<Complex64>, Vec<Complex64>, Option<Vec<usize>>)> {
    let ch = sample_channel(spectrum, 1.0 / snr, seed::stream_seed(trial, Stream::Channel))?;
    let (x, idx) = prior.sample(spectrum.n(), &mut seed::rng(seed::stream_seed(trial, Stream::Data)));
    let y = apply_channel(&ch, &x, seed::stream_seed(trial, Stream::Noise))?;
    Ok((ch, x, y, idx))
}

/// One uncoded detection trial with known transmitted symbols.
pub fn uncoded_trial(
    spectrum: &ChannelSpectrum,
    snr: f64,
    prior: &Prior,
    opts: &DetectorOptions,
    trial: u64,
) -> Result<(DetectorState, Vec<Complex64>, Option<Vec<usize>>)> {
    let (ch, x, y, idx) = uncoded_instance(spectrum, snr, prior, trial)?;
    let st = run_uncoded(&ch, &y, prior, opts, Some(&x))?;
    Ok((st, x, idx))
}

/// Bit errors of hard decisions on a labeled constellation (symbol errors
/// when the constellation size is not a power of two).
pub fn uncoded_block(
    spectrum: &ChannelSpectrum,
    snr: f64,
    prior: &Prior,
    opts: &DetectorOptions,
    trial: u64,
) -> Result<BlockOutcome> {
    let Some(constellation) = prior.constellation() else {
        return Err(Error::invalid("BER simulation needs a discrete prior"));
    };
    let (st, _, idx) = uncoded_trial(spectrum, snr, prior, opts, trial)?;
    let idx = idx.expect("discrete priors report symbol indices");
    let dec = st.decisions(constellation);
    let (bits, errors) = match constellation.bits_per_symbol() {
        Some(b) => (
            idx.len() * b as usize,
            idx.iter().zip(&dec).map(|(a, b)| (a ^ b).count_ones() as usize).sum(),
        ),
        None => (idx.len(), idx.iter().zip(&dec).filter(|(a, b)| a != b).count()),
    };
    Ok(BlockOutcome {
        bits,
        bit_errors: errors,
        block_error: errors > 0,
        iterations: st.t,
    })
}

/// Coded transmission: a codeword split over independent channel blocks of
/// `spectrum.n()` symbols each.
#[derive(Debug, Clone, Copy)]
pub struct CodedSystem<'a> {
    pub code: &'a LdpcCode,
    pub modulation: Modulation,
    pub spectrum: &'a ChannelSpectrum,
    pub outer_iters: usize,
    pub inner_iters: usize,
}

impl CodedSystem<'_> {
    pub fn segments(&self) -> Result<usize> {
        let symbols = self.modulation.symbols_for(self.code.n())?;
        let n = self.spectrum.n();
        if symbols % n != 0 {
            return Err(Error::invalid(format!(
                "{symbols} code symbols do not split into channel blocks of {n}"
            )));
        }
        Ok(symbols / n)
    }

    /// Simulates one coded block.
    pub fn block(&self, snr: f64, trial: u64) -> Result<BlockOutcome> {
        let segments = self.segments()?;
        let mut data = seed::rng(seed::stream_seed(trial, Stream::Data));
        let info: Vec<u8> = (0..self.code.k()).map(|_| data.gen_range(0..2u8)).collect();
        let x = self.modulation.map(&self.code.encode(&info)?)?;
        let n = self.spectrum.n();
        let (ch_seed, noise_seed) = (
            seed::stream_seed(trial, Stream::Channel),
            seed::stream_seed(trial, Stream::Noise),
        );
        let mut channels = Vec::with_capacity(segments);
        let mut ys = Vec::with_capacity(segments);
        for k in 0..segments {
            let ch = sample_channel(self.spectrum, 1.0 / snr, seed::child_seed(ch_seed, k as u64))?;
            ys.push(apply_channel(&ch, &x[k * n..(k + 1) * n], seed::child_seed(noise_seed, k as u64))?);
            channels.push(ch);
        }
        let blocks: Vec<(&ChannelInstance, &[Complex64])> =
            channels.iter().zip(&ys).map(|(c, y)| (c, y.as_slice())).collect();
        let mut dec = DecoderNle::new(self.code, self.modulation, BpOptions::new(self.inner_iters))?;
        let run = run_coded(&blocks, &mut dec, self.outer_iters, None)?;
        let errors = run.info_bits.iter().zip(&info).filter(|(a, b)| a != b).count();
        Ok(BlockOutcome {
            bits: info.len(),
            bit_errors: errors,
            block_error: errors > 0 || !run.syndrome_ok,
            iterations: run.state.t,
        })
    }
}

/// Per-iteration comparison of detector statistics with state evolution,
/// pooled over trials.
#[derive(Debug, Clone, PartialEq)]
pub struct ConformanceRow {
    pub t: usize,
    pub v_se: f64,
    /// Trial-averaged `|x^{φ→γ} - x|^2 / N`.
    pub v_emp: f64,
    pub v_emp_median: f64,
    pub rho_se: f64,
    /// `N / |x^{γ→φ} - x|^2` of the trial-averaged error power.
    pub rho_emp: f64,
    pub le_correlation: f64,
    pub nle_correlation: f64,
}

impl ConformanceRow {
    pub fn v_relative_error(&self) -> f64 {
        (self.v_emp - self.v_se).abs() / self.v_se
    }
}

pub fn conformance_csv(rows: &[ConformanceRow]) -> String {
    let mut s = format!(
        "# schema=conformance version={}\nt,v_emp,v_se,rho_emp,rho_se,v_emp_median,le_corr,nle_corr\n",
        crate::VERSION
    );
    for r in rows {
        let _ = writeln!(
            s,
            "{},{:e},{:e},{:e},{:e},{:e},{:e},{:e}",
            r.t, r.v_emp, r.v_se, r.rho_emp, r.rho_se, r.v_emp_median, r.le_correlation, r.nle_correlation
        );
    }
    s
}

/// Runs `trials` uncoded detections and compares them with `trace_se`.
pub fn se_conformance(
    spectrum: &ChannelSpectrum,
    snr: f64,
    prior: &Prior,
    opts: &DetectorOptions,
    trials: usize,
    master_seed: u64,
) -> Result<Vec<ConformanceRow>> {
    if trials == 0 {
        return Err(Error::invalid("at least one trial is required"));
    }
    let se = SeSystem::new(spectrum, snr)?;
    let trace = trace_se(&se, prior, opts.t_max)?;
    let states: Vec<DetectorState> = (0..trials)
        .into_par_iter()
        .map(|i| uncoded_trial(spectrum, snr, prior, opts, seed::trial_seed(master_seed, i as u64)).map(|r| r.0))
        .collect::<Result<_>>()?;
    let mut rows = Vec::with_capacity(opts.t_max);
    for (t, step) in trace.steps.iter().enumerate() {
        let mut v = Vec::with_capacity(trials);
        let mut inv_rho = 0.0;
        let (mut le, mut nle) = (ErrorCorrelation::default(), ErrorCorrelation::default());
        for st in &states {
            let rec = &st.history[t];
            v.push(rec.v_emp.expect("truth supplied"));
            inv_rho += 1.0 / rec.rho_emp.expect("truth supplied");
            le = le.merge(rec.le_correlation.expect("truth supplied"));
            nle = nle.merge(rec.nle_correlation.expect("truth supplied"));
        }
        let v_emp = v.iter().sum::<f64>() / trials as f64;
        v.sort_by(f64::total_cmp);
        let median = if trials % 2 == 1 {
            v[trials / 2]
        } else {
            0.5 * (v[trials / 2 - 1] + v[trials / 2])
        };
        rows.push(ConformanceRow {
            t,
            v_se: step.v,
            v_emp,
            v_emp_median: median,
            rho_se: step.rho,
            rho_emp: trials as f64 / inv_rho,
            le_correlation: le.coefficient(),
            nle_correlation: nle.coefficient(),
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::make_kappa_spectrum;
    use crate::ldpc::regular_code;

    #[test]
    fn stop_rule_is_exact_and_deterministic() {
        let block = |s: u64| {
            Ok(BlockOutcome {
                bits: 10,
                bit_errors: (s % 3) as usize,
                block_error: s % 3 != 0,
                iterations: 1,
            })
        };
        let rule = StopRule {
            max_blocks: 1000,
            target_bit_errors: Some(50),
        };
        let a = simulate_point(1.0, rule, 77, block).unwrap();
        let b = simulate_point(1.0, rule, 77, block).unwrap();
        assert_eq!(a, b);
        assert!(a.bit_errors >= 50 && a.bit_errors < 53);
        assert!(a.blocks < 1000);
    }

    #[test]
    fn crossing_interpolates() {
        let p = |snr_db, bler| BerPoint {
            snr_db,
            ber: 0.0,
            bler,
            blocks: 1,
            bit_errors: 0,
            mean_iterations: 0.0,
        };
        let pts = [p(0.0, 1.0), p(1.0, 0.8), p(2.0, 0.2), p(3.0, 0.0)];
        assert!((bler_crossing(&pts, 0.5).unwrap() - 1.5).abs() < 1e-12);
        assert!(bler_crossing(&pts[2..], 0.5).is_none());
    }

    #[test]
    fn noiseless_coded_block_decodes_at_once() {
        let code = regular_code(256, 3, 6, 5).unwrap();
        let spectrum = make_kappa_spectrum(64, 64, 10.0).unwrap();
        let sys = CodedSystem {
            code: &code,
            modulation: Modulation::Qpsk,
            spectrum: &spectrum,
            outer_iters: 10,
            inner_iters: 20,
        };
        assert_eq!(sys.segments().unwrap(), 2);
        let o = sys.block(1e9, 3).unwrap();
        assert_eq!(o.bit_errors, 0);
        assert_eq!(o.iterations, 1);
    }

    #[test]
    fn conformance_rows() {
        let spectrum = make_kappa_spectrum(64, 64, 1.0).unwrap();
        let rows = se_conformance(&spectrum, 4.0, &Prior::qpsk(), &DetectorOptions::new(3), 8, 1).unwrap();
        assert_eq!(rows.len(), 3);
        assert!((rows[0].v_emp - 1.0).abs() < 1e-12);
        assert!(rows.iter().all(|r| r.v_relative_error() < 0.2));
    }
}
