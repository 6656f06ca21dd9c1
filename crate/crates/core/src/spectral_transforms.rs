//! Transforms of the eigenvalue distribution of `A^H A`.

use crate::channel::ChannelSpectrum;
use crate::error::{Error, Interval, Result};
use crate::numeric;

/// Empirical eigenvalue distribution of `A^H A`: the `T` squared singular
/// values padded with `N - T` zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralMeasure {
    nonzero: Vec<f64>,
    zeros: usize,
}

impl SpectralMeasure {
    pub fn from_spectrum(spectrum: &ChannelSpectrum) -> Self {
        SpectralMeasure {
            nonzero: spectrum.nonzero_eigenvalues(),
            zeros: spectrum.n() - spectrum.rank(),
        }
    }

    /// Arbitrary nonnegative eigenvalues (zeros allowed).
    pub fn from_eigenvalues(eigenvalues: &[f64]) -> Result<Self> {
        if eigenvalues.is_empty() {
            return Err(Error::invalid("spectral measure needs at least one eigenvalue"));
        }
        if eigenvalues.iter().any(|&l| !(l >= 0.0 && l.is_finite())) {
            return Err(Error::invalid("eigenvalues must be finite and nonnegative"));
        }
        let nonzero: Vec<f64> = eigenvalues.iter().copied().filter(|&l| l > 0.0).collect();
        Ok(SpectralMeasure {
            zeros: eigenvalues.len() - nonzero.len(),
            nonzero,
        })
    }

    /// Total number of eigenvalues `N`.
    pub fn len(&self) -> usize {
        self.nonzero.len() + self.zeros
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn nonzero(&self) -> &[f64] {
        &self.nonzero
    }

    pub fn zero_count(&self) -> usize {
        self.zeros
    }

    /// All `N` eigenvalues, zeros last.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut all = self.nonzero.clone();
        all.resize(self.len(), 0.0);
        all
    }

    pub fn mean(&self) -> f64 {
        self.nonzero.iter().sum::<f64>() / self.len() as f64
    }

    pub fn min(&self) -> f64 {
        if self.zeros > 0 {
            0.0
        } else {
            self.nonzero.iter().copied().fold(f64::INFINITY, f64::min)
        }
    }

    /// `G(0^-)`: `-(1/N) sum 1/λ` without zero eigenvalues, `-∞` otherwise.
    pub fn stieltjes_at_origin(&self) -> f64 {
        if self.zeros > 0 {
            f64::NEG_INFINITY
        } else {
            -self.nonzero.iter().map(|l| 1.0 / l).sum::<f64>() / self.len() as f64
        }
    }
}

/// `G(w) = (1/N) sum 1/(w - λ_i)` for `w < 0`.
pub fn stieltjes(measure: &SpectralMeasure, w: f64) -> Result<f64> {
    if !(w < 0.0) {
        return Err(Error::Domain {
            what: "Stieltjes transform",
            value: w,
            admissible: Interval { lo: f64::NEG_INFINITY, hi: 0.0 },
        });
    }
    let sum: f64 = measure.nonzero.iter().map(|l| 1.0 / (w - l)).sum::<f64>() + measure.zeros as f64 / w;
    Ok(sum / measure.len() as f64)
}

/// `R(s) = G^{-1}(s) - 1/s` for `s` in the image of `G` over `w < 0`;
/// `R(0) = mean eigenvalue`.
///
/// Solved as the root in `r` of `(1/N) sum (r - λ)/(1 + s (r - λ))`, which
/// is increasing in `r` and avoids inverting `G` directly.
pub fn r_transform(measure: &SpectralMeasure, s: f64) -> Result<f64> {
    if s == 0.0 {
        return Ok(measure.mean());
    }
    let g0 = measure.stieltjes_at_origin();
    let domain_error = || Error::Domain {
        what: "R-transform",
        value: s,
        admissible: Interval { lo: g0, hi: 0.0 },
    };
    if !(s < 0.0) || s.is_nan() {
        return Err(domain_error());
    }
    if s <= g0 {
        // G^{-1}(s) = 0 on the boundary itself.
        if (s - g0).abs() <= 1e-12 * g0.abs() {
            return Ok(-1.0 / s);
        }
        return Err(domain_error());
    }
    let a = -s;
    let n = measure.len() as f64;
    let zeros = measure.zeros as f64;
    let f = |r: f64| {
        let mut acc = 0.0;
        for l in &measure.nonzero {
            let x = r - l;
            let den = 1.0 - a * x;
            if den <= 0.0 {
                return f64::INFINITY;
            }
            acc += x / den;
        }
        if zeros > 0.0 {
            let den = 1.0 - a * r;
            if den <= 0.0 {
                return f64::INFINITY;
            }
            acc += zeros * r / den;
        }
        acc / n
    };
    let lo = measure.min();
    let hi = 1.0 / a;
    numeric::bisect(f, lo, hi, 1e-14)
}

/// `∫_0^upper R(-z) dz`.
pub fn r_integral(measure: &SpectralMeasure, upper: f64) -> Result<f64> {
    if !(upper >= 0.0 && upper.is_finite()) {
        return Err(Error::invalid(format!("integration limit must be finite and nonnegative, got {upper}")));
    }
    if upper == 0.0 {
        return Ok(0.0);
    }
    r_transform(measure, -upper)?;
    let mut failure = None;
    let value = numeric::integrate(
        |z| match r_transform(measure, -z) {
            Ok(v) => v,
            Err(e) => {
                failure.get_or_insert(e);
                0.0
            }
        },
        0.0,
        upper,
        1e-11,
        1e-12,
    )?;
    match failure {
        Some(e) => Err(e),
        None => Ok(value),
    }
}

/// `(1/N) sum ln((1/v* - ρ*) + snr λ_i)`.
pub fn log_det_term(measure: &SpectralMeasure, snr: f64, rho_star: f64, v_star: f64) -> Result<f64> {
    let shift = 1.0 / v_star - rho_star;
    if !(shift > 0.0) {
        return Err(Error::Domain {
            what: "log-determinant shift 1/v - rho",
            value: shift,
            admissible: Interval { lo: 0.0, hi: f64::INFINITY },
        });
    }
    let sum: f64 = measure.nonzero.iter().map(|l| (shift + snr * l).ln()).sum::<f64>()
        + measure.zeros as f64 * shift.ln();
    Ok(sum / measure.len() as f64)
}

/// `(1/N) ln det(I + snr A^H A)` in nats.
pub fn gaussian_capacity(measure: &SpectralMeasure, snr: f64) -> f64 {
    measure.nonzero.iter().map(|l| (snr * l).ln_1p()).sum::<f64>() / measure.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::make_kappa_spectrum;

    fn flat(n: usize) -> SpectralMeasure {
        SpectralMeasure::from_eigenvalues(&vec![1.0; n]).unwrap()
    }

    fn ladder(kappa: f64, beta: f64) -> SpectralMeasure {
        let n = 60;
        let m = (n as f64 / beta).round() as usize;
        SpectralMeasure::from_spectrum(&make_kappa_spectrum(m, n, kappa).unwrap())
    }

    #[test]
    fn stieltjes_examples() {
        assert_eq!(stieltjes(&flat(3), -1.0).unwrap(), -0.5);
        let zero = SpectralMeasure::from_eigenvalues(&[0.0; 4]).unwrap();
        assert_eq!(stieltjes(&zero, -2.0).unwrap(), -0.5);
        assert!(stieltjes(&flat(3), 0.0).is_err());
        let mixed = SpectralMeasure::from_eigenvalues(&[0.0, 0.5, 1.5, 2.0]).unwrap();
        let direct = (1.0 / -3.0 + 1.0 / -3.5 + 1.0 / -4.5 + 1.0 / -5.0) / 4.0;
        assert!((stieltjes(&mixed, -3.0).unwrap() - direct).abs() < 1e-14);
    }

    #[test]
    fn r_transform_flat_and_origin() {
        let m = flat(5);
        for s in [-0.9, -0.5, -1e-3] {
            assert!((r_transform(&m, s).unwrap() - 1.0).abs() < 1e-12);
        }
        let l = ladder(10.0, 1.5);
        assert!((r_transform(&l, -1e-9).unwrap() - 1.0).abs() < 1e-8);
        assert_eq!(r_transform(&l, 0.0).unwrap(), l.mean());
    }

    #[test]
    fn r_transform_inverts_stieltjes() {
        for (kappa, beta) in [(10.0, 1.5), (50.0, 1.0), (3.0, 0.5)] {
            let m = ladder(kappa, beta);
            for s in [-0.01, -0.3, -0.9] {
                if s <= m.stieltjes_at_origin() {
                    continue;
                }
                let r = r_transform(&m, s).unwrap();
                let w = r + 1.0 / s;
                assert!(w < 0.0);
                assert!((stieltjes(&m, w).unwrap() - s).abs() < 1e-12 * s.abs());
            }
        }
    }

    #[test]
    fn domain_reported() {
        let m = flat(4);
        let err = r_transform(&m, -1.5).unwrap_err();
        match err {
            Error::Domain { admissible, .. } => assert!((admissible.lo + 1.0).abs() < 1e-15),
            e => panic!("unexpected {e}"),
        }
        assert!((r_transform(&m, -1.0).unwrap() - 1.0).abs() < 1e-12);
        assert!(r_transform(&m, 0.1).is_err());
    }

    #[test]
    fn r_is_nondecreasing() {
        let m = ladder(10.0, 1.5);
        let mut prev = f64::NEG_INFINITY;
        for i in 1..200 {
            let s = -5.0 + 5.0 * i as f64 / 200.0;
            let r = r_transform(&m, s).unwrap();
            assert!(r >= prev - 1e-12);
            prev = r;
        }
    }

    #[test]
    fn r_integral_examples() {
        assert!((r_integral(&flat(3), 0.7).unwrap() - 0.7).abs() < 1e-10);
        assert_eq!(r_integral(&ladder(10.0, 1.0), 0.0).unwrap(), 0.0);
    }

    #[test]
    fn log_det_examples() {
        let m = flat(8);
        let (snr, v) = (4.0, 0.2);
        assert!((log_det_term(&m, snr, snr, v).unwrap() + v.ln()).abs() < 1e-14);
        assert!((log_det_term(&ladder(10.0, 1.0), 0.0, 1.0, 0.25).unwrap() - 3f64.ln()).abs() < 1e-14);
        assert!(log_det_term(&m, snr, 5.0, 0.2).is_err());
    }

    #[test]
    fn gaussian_capacity_examples() {
        assert_eq!(gaussian_capacity(&ladder(10.0, 1.5), 0.0), 0.0);
        assert!((gaussian_capacity(&flat(4), 3.0) - 4f64.ln()).abs() < 1e-15);
    }
}
