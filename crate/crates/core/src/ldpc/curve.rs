//! Monte-Carlo estimate of a decoder's posterior-MSE transfer curve.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::scalar_denoiser::Prior;
use crate::state_evolution::Transfer;

/// One point of a code transfer curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurveSample {
    pub rho: f64,
    pub mmse: f64,
    pub std_error: f64,
    pub trials: usize,
}

/// Posterior MSE of the decoder as a function of the per-symbol SNR.
///
/// Between samples the curve is interpolated linearly in `ln(mmse)`; outside
/// the sampled range the constellation curve of `prior` stands in and the
/// evaluation is flagged.
#[derive(Debug, Clone, PartialEq)]
pub struct CodeTransferCurve {
    samples: Vec<CurveSample>,
    code_rate: f64,
    inner_iterations: usize,
    prior: Prior,
}

impl CodeTransferCurve {
    pub fn new(samples: Vec<CurveSample>, code_rate: f64, inner_iterations: usize, prior: Prior) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::invalid("code transfer curve has no samples"));
        }
        if samples.windows(2).any(|w| !(w[1].rho > w[0].rho)) {
            return Err(Error::invalid("code transfer curve must be sampled at increasing rho"));
        }
        if samples.iter().any(|s| !(s.rho >= 0.0) || !(0.0..=1.0).contains(&s.mmse)) {
            return Err(Error::invalid("code transfer curve needs rho >= 0 and mmse in [0, 1]"));
        }
        Ok(CodeTransferCurve {
            samples,
            code_rate,
            inner_iterations,
            prior,
        })
    }

    /// Curve given by `(rho, mmse)` pairs without error bars.
    pub fn from_points(points: &[(f64, f64)], code_rate: f64, prior: Prior) -> Result<Self> {
        let samples = points
            .iter()
            .map(|&(rho, mmse)| CurveSample {
                rho,
                mmse,
                std_error: 0.0,
                trials: 0,
            })
            .collect();
        Self::new(samples, code_rate, 0, prior)
    }

    pub fn samples(&self) -> &[CurveSample] {
        &self.samples
    }

    pub fn code_rate(&self) -> f64 {
        self.code_rate
    }

    pub fn inner_iterations(&self) -> usize {
        self.inner_iterations
    }

    pub fn prior(&self) -> &Prior {
        &self.prior
    }

    /// Largest sampled `rho`.
    pub fn rho_max(&self) -> f64 {
        self.samples[self.samples.len() - 1].rho
    }

    /// Interpolated MSE and whether `rho` was outside the sampled range.
    pub fn evaluate(&self, rho: f64) -> (f64, bool) {
        let s = &self.samples;
        let first = s[0];
        let last = s[s.len() - 1];
        if rho < first.rho || rho > last.rho {
            return (self.prior.mmse(rho), true);
        }
        let i = s.partition_point(|p| p.rho <= rho);
        if i == s.len() {
            return (last.mmse, false);
        }
        let (a, b) = (s[i - 1], s[i]);
        let u = (rho - a.rho) / (b.rho - a.rho);
        let v = if a.mmse > 0.0 && b.mmse > 0.0 {
            (a.mmse.ln() * (1.0 - u) + b.mmse.ln() * u).exp()
        } else {
            a.mmse * (1.0 - u) + b.mmse * u
        };
        (v, false)
    }

    /// Indices `i` where sample `i + 1` exceeds sample `i` by more than two
    /// combined standard errors.
    pub fn monotonicity_violations(&self) -> Vec<usize> {
        self.samples
            .windows(2)
            .enumerate()
            .filter(|(_, w)| {
                let tol = 2.0 * (w[0].std_error.powi(2) + w[1].std_error.powi(2)).sqrt();
                w[1].mmse > w[0].mmse + tol
            })
            .map(|(i, _)| i)
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s = format!(
            "# rate={} inner_iterations={} prior={} schema=code_curve version={}\nrho,mmse,stderr,trials\n",
            self.code_rate,
            self.inner_iterations,
            self.prior.name(),
            crate::VERSION
        );
        for p in &self.samples {
            let _ = writeln!(s, "{:e},{:e},{:e},{}", p.rho, p.mmse, p.std_error, p.trials);
        }
        s
    }

    /// Parses the format written by [`CodeTransferCurve::to_csv`].
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut rate = None;
        let mut inner = 0;
        let mut prior = Prior::qpsk();
        let mut samples = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with("rho") {
                continue;
            }
            if let Some(header) = line.strip_prefix('#') {
                for tok in header.split_whitespace() {
                    if let Some((k, v)) = tok.split_once('=') {
                        match k {
                            "rate" => {
                                rate = Some(v.parse().map_err(|_| Error::parse(line_no, format!("bad rate {v:?}")))?)
                            }
                            "inner_iterations" => {
                                inner = v
                                    .parse()
                                    .map_err(|_| Error::parse(line_no, format!("bad iteration count {v:?}")))?
                            }
                            "prior" => prior = Prior::from_name(v).map_err(|e| Error::parse(line_no, e.to_string()))?,
                            _ => {}
                        }
                    }
                }
                continue;
            }
            let f: Vec<&str> = line.split(',').map(str::trim).collect();
            if f.len() != 4 {
                return Err(Error::parse(line_no, "expected `rho,mmse,stderr,trials`"));
            }
            let num = |s: &str| -> Result<f64> { s.parse().map_err(|_| Error::parse(line_no, format!("not a number: {s:?}"))) };
            samples.push(CurveSample {
                rho: num(f[0])?,
                mmse: num(f[1])?,
                std_error: num(f[2])?,
                trials: f[3]
                    .parse()
                    .map_err(|_| Error::parse(line_no, format!("bad trial count {:?}", f[3])))?,
            });
        }
        let rate = rate.ok_or_else(|| Error::parse(1, "missing `# rate=` header"))?;
        Self::new(samples, rate, inner, prior)
    }
}

impl Transfer for CodeTransferCurve {
    fn transfer(&self, rho: f64) -> (f64, bool) {
        self.evaluate(rho)
    }
}
