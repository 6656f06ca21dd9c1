//! Monte-Carlo estimation of a code's MMSE transfer curve.

use num_complex::Complex64;
use rand::Rng as _;
use rayon::prelude::*;

use super::bp::BpOptions;
use super::code::LdpcCode;
use super::curve::{CodeTransferCurve, CurveSample};
use super::nle::{DecoderNle, Modulation};
use crate::channel::complex_gaussian_vector;
use crate::error::{Error, Result};
use crate::seed::{self, Stream};

/// Extra BP iterations after the syndrome is satisfied when estimating the
/// curve, so that soft outputs reflect a settled decoder.
pub const CURVE_SETTLE_ITERS: usize = 5;

/// Squared error of one block: random codeword over `r = sqrt(rho) x + z`,
/// decoded with BP.
pub fn block_mse(code: &LdpcCode, modulation: Modulation, rho: f64, options: BpOptions, seed: u64) -> Result<f64> {
    let mut data = seed::rng(seed::stream_seed(seed, Stream::Data));
    let info: Vec<u8> = (0..code.k()).map(|_| data.gen_range(0..2u8)).collect();
    let x = modulation.map(&code.encode(&info)?)?;
    let mut noise = seed::rng(seed::stream_seed(seed, Stream::Noise));
    let z = complex_gaussian_vector(x.len(), 1.0, &mut noise);
    let g = rho.sqrt();
    let r: Vec<Complex64> = x.iter().zip(&z).map(|(xi, zi)| xi * g + zi).collect();
    let mut dec = DecoderNle::new(code, modulation, options)?;
    let (means, _) = dec.decode(&r, rho)?;
    Ok(means.iter().zip(&x).map(|(m, xi)| (m - xi).norm_sqr()).sum::<f64>() / x.len() as f64)
}

/// Estimates `mmse(rho)` of the BP-decoded code at each grid point from
/// `blocks_per_point` random codewords. Blocks run in parallel; results do
/// not depend on the thread count.
pub fn estimate_transfer_curve(
    code: &LdpcCode,
    modulation: Modulation,
    rho_grid: &[f64],
    blocks_per_point: usize,
    inner_iters: usize,
    seed: u64,
) -> Result<CodeTransferCurve> {
    if blocks_per_point == 0 {
        return Err(Error::invalid("blocks_per_point must be at least 1"));
    }
    if rho_grid.is_empty() || rho_grid.windows(2).any(|w| !(w[1] > w[0])) || !(rho_grid[0] >= 0.0) {
        return Err(Error::invalid("rho grid must be nonempty, nonnegative and increasing"));
    }
    let options = BpOptions {
        max_iters: inner_iters,
        settle: CURVE_SETTLE_ITERS.min(inner_iters),
    };
    let jobs: Vec<(usize, usize)> = (0..rho_grid.len())
        .flat_map(|p| (0..blocks_per_point).map(move |b| (p, b)))
        .collect();
    let results: Vec<f64> = jobs
        .par_iter()
        .map(|&(p, b)| {
            let s = seed::child_seed(seed::trial_seed(seed, b as u64), p as u64);
            block_mse(code, modulation, rho_grid[p], options, s)
        })
        .collect::<Result<_>>()?;
    let samples = rho_grid
        .iter()
        .zip(results.chunks(blocks_per_point))
        .map(|(&rho, vals)| {
            let n = vals.len() as f64;
            let mean = vals.iter().sum::<f64>() / n;
            let std_error = if vals.len() > 1 {
                (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt()
            } else {
                0.0
            };
            CurveSample {
                rho,
                mmse: mean.clamp(0.0, 1.0),
                std_error,
                trials: vals.len(),
            }
        })
        .collect();
    CodeTransferCurve::new(samples, code.rate(), inner_iters, modulation.prior())
}
