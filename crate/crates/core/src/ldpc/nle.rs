//! The LDPC decoder as a soft symbol denoiser.

use std::f64::consts::{FRAC_1_SQRT_2, SQRT_2};

use num_complex::Complex64;

use super::bp::{bp_decode_with, BpOptions, BpResult};
use super::code::LdpcCode;
use crate::error::{Error, Result};
use crate::oamp::{NleOutput, NlePlugin};
use crate::scalar_denoiser::Prior;

/// Bit-to-symbol map, following the labels of the built-in constellations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Modulation {
    /// Bit `b` maps to `1 - 2b`.
    Bpsk,
    /// Bits `(2k, 2k+1)` select the signs of the real and imaginary parts of
    /// symbol `k`, amplitude `1/sqrt(2)`.
    Qpsk,
}

impl Modulation {
    pub fn from_prior(prior: &Prior) -> Result<Self> {
        match prior.constellation().map(|c| c.name()) {
            Some("qpsk") => Ok(Modulation::Qpsk),
            Some("bpsk") => Ok(Modulation::Bpsk),
            _ => Err(Error::invalid(format!(
                "coded transmission supports qpsk and bpsk, not {}",
                prior.name()
            ))),
        }
    }

    pub fn prior(self) -> Prior {
        match self {
            Modulation::Bpsk => Prior::bpsk(),
            Modulation::Qpsk => Prior::qpsk(),
        }
    }

    pub fn bits_per_symbol(self) -> usize {
        match self {
            Modulation::Bpsk => 1,
            Modulation::Qpsk => 2,
        }
    }

    pub fn symbols_for(self, n_bits: usize) -> Result<usize> {
        let b = self.bits_per_symbol();
        if n_bits % b != 0 {
            return Err(Error::invalid(format!("{n_bits} bits do not fill whole symbols of {b} bits")));
        }
        Ok(n_bits / b)
    }

    pub fn map(self, bits: &[u8]) -> Result<Vec<Complex64>> {
        self.symbols_for(bits.len())?;
        let s = |b: u8| 1.0 - 2.0 * f64::from(b & 1);
        Ok(match self {
            Modulation::Bpsk => bits.iter().map(|&b| Complex64::new(s(b), 0.0)).collect(),
            Modulation::Qpsk => bits
                .chunks_exact(2)
                .map(|p| Complex64::new(s(p[0]), s(p[1])) * FRAC_1_SQRT_2)
                .collect(),
        })
    }

    /// Bit LLRs (positive favouring 0) of `r = sqrt(rho) x + z`,
    /// `z ~ CN(0, 1)`.
    pub fn llrs(self, r: &[Complex64], rho: f64) -> Vec<f64> {
        match self {
            Modulation::Bpsk => {
                let g = 4.0 * rho.sqrt();
                r.iter().map(|ri| g * ri.re).collect()
            }
            Modulation::Qpsk => {
                let g = 2.0 * SQRT_2 * rho.sqrt();
                r.iter().flat_map(|ri| [g * ri.re, g * ri.im]).collect()
            }
        }
    }

    /// Symbol means and block-averaged variance from bit posteriors.
    pub fn soft_symbols(self, llr: &[f64]) -> (Vec<Complex64>, f64) {
        let m = |l: f64| (0.5 * l).tanh();
        let means: Vec<Complex64> = match self {
            Modulation::Bpsk => llr.iter().map(|&l| Complex64::new(m(l), 0.0)).collect(),
            Modulation::Qpsk => llr
                .chunks_exact(2)
                .map(|p| Complex64::new(m(p[0]), m(p[1])) * FRAC_1_SQRT_2)
                .collect(),
        };
        let var = means.iter().map(|x| 1.0 - x.norm_sqr()).sum::<f64>() / means.len().max(1) as f64;
        (means, var)
    }
}

/// Soft decoder used as the detector's NLE.
#[derive(Debug, Clone)]
pub struct DecoderNle<'a> {
    code: &'a LdpcCode,
    modulation: Modulation,
    options: BpOptions,
    last: Option<BpResult>,
}

impl<'a> DecoderNle<'a> {
    pub fn new(code: &'a LdpcCode, modulation: Modulation, options: BpOptions) -> Result<Self> {
        modulation.symbols_for(code.n())?;
        Ok(DecoderNle {
            code,
            modulation,
            options,
            last: None,
        })
    }

    pub fn code(&self) -> &'a LdpcCode {
        self.code
    }

    pub fn modulation(&self) -> Modulation {
        self.modulation
    }

    pub fn symbols(&self) -> usize {
        self.code.n() / self.modulation.bits_per_symbol()
    }

    /// Result of the most recent decode.
    pub fn last_result(&self) -> Option<&BpResult> {
        self.last.as_ref()
    }

    /// Posterior symbol means and average posterior variance of `message`
    /// observed at SNR `rho`.
    pub fn decode(&mut self, message: &[Complex64], rho: f64) -> Result<(Vec<Complex64>, f64)> {
        if message.len() != self.symbols() {
            return Err(Error::DimensionMismatch {
                expected: self.symbols(),
                got: message.len(),
            });
        }
        let llr = self.modulation.llrs(message, rho);
        let res = bp_decode_with(self.code, &llr, self.options)?;
        let out = self.modulation.soft_symbols(&res.posterior);
        self.last = Some(res);
        Ok(out)
    }
}

impl NlePlugin for DecoderNle<'_> {
    fn denoise(&mut self, message: &[Complex64], rho: f64) -> Result<NleOutput> {
        let (means, variance) = self.decode(message, rho)?;
        Ok(NleOutput {
            means,
            variance,
            done: self.last.as_ref().is_some_and(|r| r.syndrome_ok),
        })
    }
}

/// Posterior symbol means and average posterior variance from one decode.
pub fn decoder_nle(
    code: &LdpcCode,
    modulation: Modulation,
    message: &[Complex64],
    rho: f64,
    max_iters: usize,
) -> Result<(Vec<Complex64>, f64)> {
    DecoderNle::new(code, modulation, BpOptions::new(max_iters))?.decode(message, rho)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ldpc::construct::regular_code;
    use crate::seed;
    use rand::Rng;

    #[test]
    fn llr_constant_matches_likelihood_ratio() {
        let rho: f64 = 1.7;
        let r = Complex64::new(0.31, -0.52);
        let g = rho.sqrt() * FRAC_1_SQRT_2;
        // Per-dimension noise variance 1/2: log N(r; a, 1/2) = -(r - a)^2 + const.
        let direct_re = -(r.re - g).powi(2) + (r.re + g).powi(2);
        let direct_im = -(r.im - g).powi(2) + (r.im + g).powi(2);
        let l = Modulation::Qpsk.llrs(&[r], rho);
        assert!((l[0] - direct_re).abs() < 1e-12 && (l[1] - direct_im).abs() < 1e-12);
        let gb = rho.sqrt();
        let direct = -(r.re - gb).powi(2) + (r.re + gb).powi(2);
        assert!((Modulation::Bpsk.llrs(&[r], rho)[0] - direct).abs() < 1e-12);
    }

    #[test]
    fn map_matches_constellation_labels() {
        let c = Prior::qpsk();
        let pts = c.constellation().unwrap().points();
        for k in 0..4u8 {
            let x = Modulation::Qpsk.map(&[k & 1, (k >> 1) & 1]).unwrap()[0];
            assert!((x - pts[k as usize]).norm() < 1e-15);
        }
    }

    #[test]
    fn zero_iterations_equal_uncoded_posterior() {
        let code = regular_code(96, 3, 6, 1).unwrap();
        let mut rng = seed::rng(2);
        let rho = 2.3;
        let msg: Vec<Complex64> = (0..48)
            .map(|_| Complex64::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)))
            .collect();
        let (means, var) = decoder_nle(&code, Modulation::Qpsk, &msg, rho, 0).unwrap();
        let prior = Prior::qpsk();
        let mut v = 0.0;
        for (m, r) in means.iter().zip(&msg) {
            let p = prior.posterior(*r, rho);
            assert!((m - p.mean).norm() < 1e-10);
            v += p.variance;
        }
        assert!((var - v / 48.0).abs() < 1e-10);
    }

    #[test]
    fn extremes() {
        let code = regular_code(96, 3, 6, 3).unwrap();
        let info: Vec<u8> = (0..code.k()).map(|i| (i % 3 == 0) as u8).collect();
        let x = Modulation::Qpsk.map(&code.encode(&info).unwrap()).unwrap();
        let (means, var) = decoder_nle(&code, Modulation::Qpsk, &x, 0.0, 20).unwrap();
        assert!(means.iter().all(|m| m.norm() == 0.0));
        assert!((var - 1.0).abs() < 1e-15);
        let rho: f64 = 1e4;
        let r: Vec<Complex64> = x.iter().map(|s| s * rho.sqrt()).collect();
        let (means, var) = decoder_nle(&code, Modulation::Qpsk, &r, rho, 20).unwrap();
        assert!(var < 1e-12);
        assert!(means.iter().zip(&x).all(|(a, b)| (a - b).norm() < 1e-6));
        assert!(decoder_nle(&code, Modulation::Qpsk, &x[..10], 1.0, 5).is_err());
    }
}
