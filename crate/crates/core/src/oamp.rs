//! The OAMP detector: a linear estimator and a nonlinear denoiser whose
//! outputs are orthogonalized against their inputs and rescaled to be
//! unbiased, exchanging messages `x^{φ→γ}` (to the LE) and `x^{γ→φ}` (to the
//! NLE).

use std::fmt::Write as _;

use num_complex::Complex64;

use crate::channel::ChannelInstance;
use crate::error::{Error, Result};
use crate::scalar_denoiser::{Constellation, Prior};
use crate::state_evolution::SeSystem;

/// Floor on the tracked NLE-output variance so the LE stays well defined.
pub const V_MIN: f64 = 1e-14;

/// Result of one denoiser call.
#[derive(Debug, Clone, PartialEq)]
pub struct NleOutput {
    /// Posterior means, one per input symbol.
    pub means: Vec<Complex64>,
    /// Posterior variance averaged over the block.
    pub variance: f64,
    /// The denoiser has reached a final answer (e.g. a satisfied syndrome).
    pub done: bool,
}

/// A denoiser for the message `r = sqrt(rho) x + z`, `z ~ CN(0, 1)`.
pub trait NlePlugin {
    fn denoise(&mut self, message: &[Complex64], rho: f64) -> Result<NleOutput>;

    /// Expected posterior variance at `rho`, when known in closed form.
    fn analytic_variance(&self, _rho: f64) -> Option<f64> {
        None
    }
}

/// Symbol-by-symbol MMSE denoiser for an i.i.d. prior.
#[derive(Debug, Clone)]
pub struct PriorDenoiser {
    prior: Prior,
}

impl PriorDenoiser {
    pub fn new(prior: Prior) -> Self {
        PriorDenoiser { prior }
    }

    pub fn prior(&self) -> &Prior {
        &self.prior
    }
}

impl NlePlugin for PriorDenoiser {
    fn denoise(&mut self, message: &[Complex64], rho: f64) -> Result<NleOutput> {
        let mut means = Vec::with_capacity(message.len());
        let mut var = 0.0;
        for &r in message {
            let p = self.prior.posterior(r * rho.sqrt(), rho);
            means.push(p.mean);
            var += p.variance;
        }
        Ok(NleOutput {
            means,
            variance: var / message.len().max(1) as f64,
            done: false,
        })
    }

    fn analytic_variance(&self, rho: f64) -> Option<f64> {
        Some(self.prior.mmse(rho))
    }
}

/// How the NLE-side posterior variance is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum VarianceTracking {
    /// `mmse(rho)` of the denoiser's prior.
    #[default]
    Analytic,
    /// Block average of the denoiser's posterior variances.
    Empirical,
}

impl VarianceTracking {
    pub fn as_str(self) -> &'static str {
        match self {
            VarianceTracking::Analytic => "analytic",
            VarianceTracking::Empirical => "empirical",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "analytic" => Ok(VarianceTracking::Analytic),
            "empirical" => Ok(VarianceTracking::Empirical),
            other => Err(Error::invalid(format!(
                "unknown variance tracking {other:?} (expected analytic or empirical)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorOptions {
    pub t_max: usize,
    pub tracking: VarianceTracking,
    /// Convex weight on the new NLE output; `None` disables damping.
    pub damping: Option<f64>,
}

impl DetectorOptions {
    pub fn new(t_max: usize) -> Self {
        DetectorOptions {
            t_max,
            tracking: VarianceTracking::Analytic,
            damping: None,
        }
    }
}

/// Raw sums for the correlation between the input and output errors of one
/// orthogonalized step. Sums from independent trials can be added.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ErrorCorrelation {
    pub dot: Complex64,
    pub input_energy: f64,
    pub output_energy: f64,
}

impl ErrorCorrelation {
    fn measure(input: &[Complex64], output: &[Complex64], truth: &[Complex64]) -> Self {
        let mut c = ErrorCorrelation::default();
        for ((a, b), x) in input.iter().zip(output).zip(truth) {
            let (ea, eb) = (a - x, b - x);
            c.dot += ea.conj() * eb;
            c.input_energy += ea.norm_sqr();
            c.output_energy += eb.norm_sqr();
        }
        c
    }

    pub fn merge(self, other: Self) -> Self {
        ErrorCorrelation {
            dot: self.dot + other.dot,
            input_energy: self.input_energy + other.input_energy,
            output_energy: self.output_energy + other.output_energy,
        }
    }

    /// `|<e_in, e_out>| / (|e_in| |e_out|)`.
    pub fn coefficient(&self) -> f64 {
        let den = (self.input_energy * self.output_energy).sqrt();
        if den > 0.0 {
            self.dot.norm() / den
        } else {
            0.0
        }
    }
}

/// Statistics of one detector iteration. Empirical fields need the
/// transmitted vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub t: usize,
    /// Tracked error power of the LE input.
    pub v_se: f64,
    /// Tracked SNR of the LE output.
    pub rho_se: f64,
    /// Posterior variance used by the NLE step.
    pub v_post: f64,
    pub v_emp: Option<f64>,
    pub rho_emp: Option<f64>,
    /// Empirical MSE of the posterior means.
    pub mse_post: Option<f64>,
    pub le_correlation: Option<ErrorCorrelation>,
    pub nle_correlation: Option<ErrorCorrelation>,
    /// The NLE variance update was clamped.
    pub clamped: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectorState {
    pub t: usize,
    pub message_to_le: Vec<Complex64>,
    pub message_to_nle: Vec<Complex64>,
    pub v_current: f64,
    pub rho_current: f64,
    pub history: Vec<IterationRecord>,
    /// Latest posterior means of the NLE.
    pub estimate: Vec<Complex64>,
    /// Some NLE step was clamped.
    pub flagged: bool,
    pending: Option<IterationRecord>,
}

impl DetectorState {
    /// Zero messages with `v = 1` (unit-power, zero-mean symbols).
    pub fn new(n: usize) -> Self {
        DetectorState {
            t: 0,
            message_to_le: vec![Complex64::new(0.0, 0.0); n],
            message_to_nle: vec![Complex64::new(0.0, 0.0); n],
            v_current: 1.0,
            rho_current: 0.0,
            history: Vec::new(),
            estimate: vec![Complex64::new(0.0, 0.0); n],
            flagged: false,
            pending: None,
        }
    }

    /// Index of the nearest constellation point to each posterior mean.
    pub fn decisions(&self, constellation: &Constellation) -> Vec<usize> {
        self.estimate.iter().map(|&x| constellation.nearest(x)).collect()
    }

    /// CSV with columns `t,v_emp,v_se,rho_emp,rho_se`; unknown values are empty.
    pub fn trajectory_csv(&self) -> String {
        let mut s = format!("# schema=trajectory version={}\nt,v_emp,v_se,rho_emp,rho_se\n", crate::VERSION);
        let opt = |x: Option<f64>| x.map(|v| format!("{v:e}")).unwrap_or_default();
        for r in &self.history {
            let _ = writeln!(
                s,
                "{},{},{:e},{},{:e}",
                r.t,
                opt(r.v_emp),
                r.v_se,
                opt(r.rho_emp),
                r.rho_se
            );
        }
        s
    }
}

fn mean_sq_error(a: &[Complex64], x: &[Complex64]) -> f64 {
    a.iter().zip(x).map(|(u, v)| (u - v).norm_sqr()).sum::<f64>() / a.len() as f64
}

/// One channel block with its observation in the left singular basis.
#[derive(Debug, Clone)]
struct Segment<'a> {
    channel: &'a ChannelInstance,
    y_rot: Vec<Complex64>,
}

/// OAMP over one or more independent channel blocks sharing a spectrum and
/// noise level; the detector vector is their concatenation.
#[derive(Debug, Clone)]
pub struct Detector<'a> {
    segments: Vec<Segment<'a>>,
    se: SeSystem,
    n_total: usize,
}

impl<'a> Detector<'a> {
    pub fn new(channel: &'a ChannelInstance, y: &[Complex64]) -> Result<Self> {
        Self::segmented(&[(channel, y)])
    }

    pub fn segmented(blocks: &[(&'a ChannelInstance, &[Complex64])]) -> Result<Self> {
        let Some((first, _)) = blocks.first() else {
            return Err(Error::invalid("detector needs at least one channel block"));
        };
        let mut segments = Vec::with_capacity(blocks.len());
        for (ch, y) in blocks {
            if ch.spectrum() != first.spectrum() || ch.noise_variance() != first.noise_variance() {
                return Err(Error::invalid("channel blocks must share spectrum and noise variance"));
            }
            segments.push(Segment {
                channel: ch,
                y_rot: ch.rotate_observation(y)?,
            });
        }
        let se = SeSystem::new(first.spectrum(), first.snr())?;
        Ok(Detector {
            n_total: first.n() * segments.len(),
            segments,
            se,
        })
    }

    /// Length of the detector vector.
    pub fn len(&self) -> usize {
        self.n_total
    }

    pub fn is_empty(&self) -> bool {
        self.n_total == 0
    }

    pub fn se(&self) -> &SeSystem {
        &self.se
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.n_total {
            return Err(Error::DimensionMismatch {
                expected: self.n_total,
                got: len,
            });
        }
        Ok(())
    }

    /// `out = r + v/(1 - B) A^H (v A A^H + σ^2 I)^{-1} (y - A r)`, the
    /// orthogonalized and unbiased LMMSE output, with `rho = γ(v)`.
    pub fn le_step(&self, state: &mut DetectorState, truth: Option<&[Complex64]>) -> Result<()> {
        self.check_len(state.message_to_le.len())?;
        if let Some(x) = truth {
            self.check_len(x.len())?;
        }
        let v = state.v_current;
        let ch0 = self.segments[0].channel;
        let sigma2 = ch0.noise_variance();
        let snr = ch0.snr();
        let d = ch0.spectrum().singular_values();
        let n = ch0.n();
        let inv_gain = d
            .iter()
            .map(|di| {
                let a = snr * di * di;
                a / (1.0 + a * v)
            })
            .sum::<f64>()
            / n as f64;
        let scale = 1.0 / inv_gain;

        let mut out = Vec::with_capacity(self.n_total);
        for (k, seg) in self.segments.iter().enumerate() {
            let r = &state.message_to_le[k * n..(k + 1) * n];
            let mut z = r.to_vec();
            seg.channel.right().apply(&mut z);
            let mut q = vec![Complex64::new(0.0, 0.0); n];
            for (i, &di) in d.iter().enumerate() {
                q[i] = (seg.y_rot[i] - z[i] * di) * (di / (v * di * di + sigma2));
            }
            seg.channel.right().apply_adjoint(&mut q);
            out.extend(r.iter().zip(&q).map(|(ri, qi)| ri + qi * scale));
        }
        let rho = self.se.gamma(v);
        let mut rec = IterationRecord {
            t: state.t,
            v_se: v,
            rho_se: rho,
            v_post: f64::NAN,
            v_emp: None,
            rho_emp: None,
            mse_post: None,
            le_correlation: None,
            nle_correlation: None,
            clamped: false,
        };
        if let Some(x) = truth {
            rec.v_emp = Some(mean_sq_error(&state.message_to_le, x));
            rec.rho_emp = Some(1.0 / mean_sq_error(&out, x));
            rec.le_correlation = Some(ErrorCorrelation::measure(&state.message_to_le, &out, x));
        }
        state.message_to_nle = out;
        state.rho_current = rho;
        state.pending = Some(rec);
        Ok(())
    }

    /// NLE step; see [`nle_update`].
    pub fn nle_step(
        &self,
        plugin: &mut dyn NlePlugin,
        state: &mut DetectorState,
        opts: &DetectorOptions,
        truth: Option<&[Complex64]>,
    ) -> Result<NleOutput> {
        self.check_len(state.message_to_nle.len())?;
        nle_update(plugin, state, opts, truth)
    }

    /// Alternates LE and NLE steps from `v = 1`, stopping after `t_max`
    /// iterations or when the plugin reports `done`.
    pub fn run(
        &self,
        plugin: &mut dyn NlePlugin,
        opts: &DetectorOptions,
        truth: Option<&[Complex64]>,
    ) -> Result<DetectorState> {
        if opts.t_max == 0 {
            return Err(Error::invalid("t_max must be at least 1"));
        }
        if let Some(w) = opts.damping {
            if !(w > 0.0 && w <= 1.0) {
                return Err(Error::invalid("damping weight must lie in (0, 1]"));
            }
        }
        let mut state = DetectorState::new(self.n_total);
        for _ in 0..opts.t_max {
            self.le_step(&mut state, truth)?;
            if self.nle_step(plugin, &mut state, opts, truth)?.done {
                break;
            }
        }
        Ok(state)
    }
}

/// Single LE step on one channel block.
pub fn le_step(ch: &ChannelInstance, y: &[Complex64], state: &mut DetectorState) -> Result<()> {
    Detector::new(ch, y)?.le_step(state, None)
}

/// Denoises at `rho_current`, orthogonalizes with `B = rho v_post`,
/// rescales by `1/(1 - B)` and sets `v = (1/v_post - rho)^{-1}`.
pub fn nle_update(
    plugin: &mut dyn NlePlugin,
    state: &mut DetectorState,
    opts: &DetectorOptions,
    truth: Option<&[Complex64]>,
) -> Result<NleOutput> {
    let rho = state.rho_current;
    let output = plugin.denoise(&state.message_to_nle, rho)?;
    if output.means.len() != state.message_to_nle.len() {
        return Err(Error::DimensionMismatch {
            expected: state.message_to_nle.len(),
            got: output.means.len(),
        });
    }
    let v_post = match opts.tracking {
        VarianceTracking::Analytic => plugin.analytic_variance(rho).unwrap_or(output.variance),
        VarianceTracking::Empirical => output.variance,
    };
    let b = rho * v_post;
    let mut rec = state.pending.take().unwrap_or(IterationRecord {
        t: state.t,
        v_se: state.v_current,
        rho_se: rho,
        v_post,
        v_emp: None,
        rho_emp: None,
        mse_post: None,
        le_correlation: None,
        nle_correlation: None,
        clamped: false,
    });
    rec.v_post = v_post;
    let (new_msg, new_v) = if b < 1.0 {
        let c = 1.0 / (1.0 - b);
        let msg: Vec<Complex64> = output
            .means
            .iter()
            .zip(&state.message_to_nle)
            .map(|(m, r)| (m - r * b) * c)
            .collect();
        (msg, (v_post * c).max(V_MIN))
    } else {
        log::warn!("NLE posterior variance {v_post:e} >= 1/rho = {:e}; clamping", 1.0 / rho);
        rec.clamped = true;
        state.flagged = true;
        (output.means.clone(), state.v_current)
    };
    let (new_msg, new_v) = match opts.damping {
        Some(w) => (
            new_msg
                .iter()
                .zip(&state.message_to_le)
                .map(|(a, b)| a * w + b * (1.0 - w))
                .collect(),
            w * new_v + (1.0 - w) * state.v_current,
        ),
        None => (new_msg, new_v),
    };
    if let Some(x) = truth {
        rec.mse_post = Some(mean_sq_error(&output.means, x));
        rec.nle_correlation = Some(ErrorCorrelation::measure(&state.message_to_nle, &new_msg, x));
    }
    state.message_to_le = new_msg;
    state.v_current = new_v;
    state.estimate.clone_from(&output.means);
    state.history.push(rec);
    state.t += 1;
    Ok(output)
}

/// Single NLE step with analytic variance tracking where available.
pub fn nle_step(plugin: &mut dyn NlePlugin, state: &mut DetectorState) -> Result<NleOutput> {
    nle_update(plugin, state, &DetectorOptions::new(1), None)
}

/// Uncoded detection with the prior's MMSE denoiser.
pub fn run_uncoded(
    ch: &ChannelInstance,
    y: &[Complex64],
    prior: &Prior,
    opts: &DetectorOptions,
    truth: Option<&[Complex64]>,
) -> Result<DetectorState> {
    let mut plugin = PriorDenoiser::new(prior.clone());
    Detector::new(ch, y)?.run(&mut plugin, opts, truth)
}

/// Outcome of a coded run.
#[derive(Debug, Clone, PartialEq)]
pub struct CodedRun {
    pub state: DetectorState,
    /// Decoded information bits.
    pub info_bits: Vec<u8>,
    pub syndrome_ok: bool,
}

/// Coded detection over `blocks` with the LDPC soft decoder as the NLE.
/// Variance tracking is empirical.
pub fn run_coded(
    blocks: &[(&ChannelInstance, &[Complex64])],
    decoder: &mut crate::ldpc::DecoderNle<'_>,
    t_max: usize,
    truth: Option<&[Complex64]>,
) -> Result<CodedRun> {
    let det = Detector::segmented(blocks)?;
    let opts = DetectorOptions {
        t_max,
        tracking: VarianceTracking::Empirical,
        damping: None,
    };
    let state = det.run(decoder, &opts, truth)?;
    let last = decoder
        .last_result()
        .ok_or_else(|| Error::invalid("decoder was never called"))?;
    if !last.syndrome_ok {
        log::debug!("coded run ended after {} iterations without a valid codeword", state.t);
    }
    Ok(CodedRun {
        info_bits: decoder.code().extract_info(&last.hard),
        syndrome_ok: last.syndrome_ok,
        state,
    })
}
