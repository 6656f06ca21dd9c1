//! Posterior statistics of the scalar channel `r = sqrt(rho) x + z`,
//! `z ~ CN(0, 1)`, for a unit-power input prior.
//!
//! Product constellations (QPSK, BPSK, square QAM) split into two real
//! one-dimensional problems which are integrated adaptively. Other discrete
//! constellations use a tensor Gauss–Hermite rule.

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::sync::OnceLock;

use num_complex::Complex64;
use rand::Rng as _;

use crate::error::{Error, Result};
use crate::numeric::{self, GaussHermite};
use crate::seed::Rng;

const GH_ORDER_2D: usize = 100;
const PROB_TOL: f64 = 1e-9;
/// Half-width of the truncated real noise axis; the Gaussian mass beyond it
/// is below `exp(-81)`.
const NOISE_SPAN: f64 = 9.0;

fn gauss_hermite_2d() -> &'static GaussHermite {
    static RULE: OnceLock<GaussHermite> = OnceLock::new();
    RULE.get_or_init(|| GaussHermite::new(GH_ORDER_2D))
}

/// Input distribution `P_X`.
#[derive(Debug, Clone, PartialEq)]
pub enum Prior {
    Discrete(Constellation),
    /// `CN(0, 1)`.
    Gaussian,
    /// Zero with probability `1 - p`, `CN(0, 1/p)` with probability `p`.
    BernoulliGaussian { p: f64 },
}

/// Posterior mean and variance of `x` given one observation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Posterior {
    pub mean: Complex64,
    pub variance: f64,
}

/// Finite alphabet with probabilities, normalized to unit average power.
#[derive(Debug, Clone, PartialEq)]
pub struct Constellation {
    name: String,
    points: Vec<Complex64>,
    probs: Vec<f64>,
    /// Point `k` carries the binary label `k` (bit `j` = bit `j` of `k`).
    labeled: bool,
    axes: Option<[Pam; 2]>,
}

/// One real axis of a product constellation.
#[derive(Debug, Clone, PartialEq)]
struct Pam {
    levels: Vec<f64>,
    probs: Vec<f64>,
}

impl Constellation {
    /// Builds a constellation, rescaling the points to unit average power.
    pub fn new(name: impl Into<String>, points: Vec<Complex64>, probs: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::invalid("constellation has no points"));
        }
        if points.len() != probs.len() {
            return Err(Error::DimensionMismatch {
                expected: points.len(),
                got: probs.len(),
            });
        }
        if probs.iter().any(|&p| !(p >= 0.0 && p.is_finite())) {
            return Err(Error::invalid("probabilities must be nonnegative"));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > PROB_TOL {
            return Err(Error::invalid(format!("probabilities sum to {total}, not 1")));
        }
        let probs: Vec<f64> = probs.iter().map(|p| p / total).collect();
        let power: f64 = points.iter().zip(&probs).map(|(s, p)| p * s.norm_sqr()).sum();
        if !(power > 0.0 && power.is_finite()) {
            return Err(Error::invalid("constellation has zero average power"));
        }
        let scale = power.sqrt().recip();
        let points: Vec<Complex64> = points.iter().map(|s| s * scale).collect();
        let axes = split_axes(&points, &probs);
        Ok(Constellation {
            name: name.into(),
            points,
            probs,
            labeled: false,
            axes,
        })
    }

    /// `(±1 ± i)/sqrt(2)`, uniform. Gray labels: bit 0 selects the sign of the
    /// real part, bit 1 the sign of the imaginary part (`0 -> +`, `1 -> -`).
    pub fn qpsk() -> Self {
        let points = (0..4)
            .map(|k| {
                let re = if k & 1 == 0 { 1.0 } else { -1.0 };
                let im = if k & 2 == 0 { 1.0 } else { -1.0 };
                Complex64::new(re, im) * FRAC_1_SQRT_2
            })
            .collect();
        let mut c = Self::new("qpsk", points, vec![0.25; 4]).expect("valid qpsk");
        c.labeled = true;
        c
    }

    /// `±1`, uniform; bit 0 maps to `+1`.
    pub fn bpsk() -> Self {
        let points = vec![Complex64::new(1.0, 0.0), Complex64::new(-1.0, 0.0)];
        let mut c = Self::new("bpsk", points, vec![0.5; 2]).expect("valid bpsk");
        c.labeled = true;
        c
    }

    /// Parses CSV rows `re,im,prob`. Blank lines and `#` comments are skipped.
    pub fn from_csv(name: impl Into<String>, text: &str) -> Result<Self> {
        let mut points = Vec::new();
        let mut probs = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 3 {
                return Err(Error::parse(idx + 1, "expected `re,im,prob`"));
            }
            let mut vals = [0.0; 3];
            for (v, f) in vals.iter_mut().zip(&fields) {
                *v = f
                    .parse()
                    .map_err(|_| Error::parse(idx + 1, format!("not a number: {f:?}")))?;
            }
            points.push(Complex64::new(vals[0], vals[1]));
            probs.push(vals[2]);
        }
        Self::new(name, points, probs)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn points(&self) -> &[Complex64] {
        &self.points
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Bits per symbol if the points carry binary labels.
    pub fn bits_per_symbol(&self) -> Option<u32> {
        if self.labeled && self.len().is_power_of_two() {
            Some(self.len().trailing_zeros())
        } else {
            None
        }
    }

    /// Shannon entropy of the symbol distribution (nats).
    pub fn entropy(&self) -> f64 {
        -self
            .probs
            .iter()
            .filter(|&&p| p > 0.0)
            .map(|p| p * p.ln())
            .sum::<f64>()
    }

    /// Whether the constellation factors into independent real and
    /// imaginary alphabets.
    pub fn is_separable(&self) -> bool {
        self.axes.is_some()
    }

    /// Index of the point nearest to `x`.
    pub fn nearest(&self, x: Complex64) -> usize {
        let mut best = 0;
        let mut dist = f64::INFINITY;
        for (k, s) in self.points.iter().enumerate() {
            let d = (x - s).norm_sqr();
            if d < dist {
                dist = d;
                best = k;
            }
        }
        best
    }

    fn posterior(&self, r: Complex64, rho: f64) -> Posterior {
        if let Some([re, im]) = &self.axes {
            let (mr, vr) = re.posterior(r.re, rho);
            let (mi, vi) = im.posterior(r.im, rho);
            return Posterior {
                mean: Complex64::new(mr, mi),
                variance: vr + vi,
            };
        }
        let g = rho.sqrt();
        let logw: Vec<f64> = self
            .points
            .iter()
            .zip(&self.probs)
            .map(|(s, p)| p.ln() - (r - s * g).norm_sqr())
            .collect();
        let top = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut norm = 0.0;
        let mut mean = Complex64::new(0.0, 0.0);
        let mut second = 0.0;
        for (lw, s) in logw.iter().zip(&self.points) {
            let w = (lw - top).exp();
            norm += w;
            mean += s * w;
            second += w * s.norm_sqr();
        }
        mean /= norm;
        second /= norm;
        Posterior {
            mean,
            variance: (second - mean.norm_sqr()).max(0.0),
        }
    }

    fn mmse(&self, rho: f64) -> f64 {
        if let Some([re, im]) = &self.axes {
            return re.mmse(rho) + im.mmse(rho);
        }
        self.mmse_2d(rho)
    }

    fn mutual_information(&self, rho: f64) -> f64 {
        if let Some([re, im]) = &self.axes {
            return re.mutual_information(rho) + im.mutual_information(rho);
        }
        self.mutual_information_2d(rho)
    }

    /// MMSE by the tensor Gauss–Hermite rule, for any constellation.
    pub fn mmse_2d(&self, rho: f64) -> f64 {
        let g = rho.sqrt();
        let gh = gauss_hermite_2d();
        let mut acc = 0.0;
        for (s, p) in self.points.iter().zip(&self.probs) {
            if *p == 0.0 {
                continue;
            }
            let mut inner = 0.0;
            for (ti, wi) in gh.nodes.iter().zip(&gh.weights) {
                for (tj, wj) in gh.nodes.iter().zip(&gh.weights) {
                    let r = s * g + Complex64::new(*ti, *tj);
                    let xh = self.posterior_generic(r, rho);
                    inner += wi * wj * (s - xh).norm_sqr();
                }
            }
            acc += p * inner / PI;
        }
        acc.clamp(0.0, 1.0)
    }

    /// Mutual information by the tensor Gauss–Hermite rule, for any
    /// constellation.
    pub fn mutual_information_2d(&self, rho: f64) -> f64 {
        let g = rho.sqrt();
        let gh = gauss_hermite_2d();
        let mut acc = 0.0;
        for (sk, pk) in self.points.iter().zip(&self.probs) {
            if *pk == 0.0 {
                continue;
            }
            let mut inner = 0.0;
            for (ti, wi) in gh.nodes.iter().zip(&gh.weights) {
                for (tj, wj) in gh.nodes.iter().zip(&gh.weights) {
                    let z = Complex64::new(*ti, *tj);
                    let terms = self.points.iter().zip(&self.probs).filter(|(_, p)| **p > 0.0).map(|(sl, pl)| {
                        pl.ln() + z.norm_sqr() - (z + (sk - sl) * g).norm_sqr()
                    });
                    inner += wi * wj * log_sum_exp(terms);
                }
            }
            acc -= pk * inner / PI;
        }
        acc.max(0.0)
    }

    fn posterior_generic(&self, r: Complex64, rho: f64) -> Complex64 {
        let g = rho.sqrt();
        let mut top = f64::NEG_INFINITY;
        for (s, p) in self.points.iter().zip(&self.probs) {
            top = top.max(p.ln() - (r - s * g).norm_sqr());
        }
        let mut norm = 0.0;
        let mut mean = Complex64::new(0.0, 0.0);
        for (s, p) in self.points.iter().zip(&self.probs) {
            let w = (p.ln() - (r - s * g).norm_sqr() - top).exp();
            norm += w;
            mean += s * w;
        }
        mean / norm
    }

    fn sample_index(&self, rng: &mut Rng) -> usize {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        for (k, p) in self.probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return k;
            }
        }
        self.len() - 1
    }
}

fn log_sum_exp(terms: impl Iterator<Item = f64> + Clone) -> f64 {
    let top = terms.clone().fold(f64::NEG_INFINITY, f64::max);
    if top == f64::NEG_INFINITY {
        return top;
    }
    top + terms.map(|t| (t - top).exp()).sum::<f64>().ln()
}

fn dedup_levels(values: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::new();
    for v in values {
        if !out.iter().any(|u| (u - v).abs() <= 1e-12 * (1.0 + v.abs())) {
            out.push(v);
        }
    }
    out.sort_by(f64::total_cmp);
    out
}

fn split_axes(points: &[Complex64], probs: &[f64]) -> Option<[Pam; 2]> {
    let re = dedup_levels(points.iter().map(|s| s.re));
    let im = dedup_levels(points.iter().map(|s| s.im));
    if re.len() * im.len() != points.len() {
        return None;
    }
    let find = |levels: &[f64], v: f64| levels.iter().position(|u| (u - v).abs() <= 1e-12 * (1.0 + v.abs()));
    let mut joint = vec![f64::NAN; points.len()];
    for (s, p) in points.iter().zip(probs) {
        let i = find(&re, s.re)?;
        let j = find(&im, s.im)?;
        if !joint[i * im.len() + j].is_nan() {
            return None;
        }
        joint[i * im.len() + j] = *p;
    }
    let pr: Vec<f64> = (0..re.len()).map(|i| (0..im.len()).map(|j| joint[i * im.len() + j]).sum()).collect();
    let pi: Vec<f64> = (0..im.len()).map(|j| (0..re.len()).map(|i| joint[i * im.len() + j]).sum()).collect();
    for i in 0..re.len() {
        for j in 0..im.len() {
            if (joint[i * im.len() + j] - pr[i] * pi[j]).abs() > 1e-12 {
                return None;
            }
        }
    }
    Some([Pam { levels: re, probs: pr }, Pam { levels: im, probs: pi }])
}

impl Pam {
    /// Real observation `r = sqrt(rho) a + n`, `n ~ N(0, 1/2)`.
    fn posterior(&self, r: f64, rho: f64) -> (f64, f64) {
        if self.levels.len() == 1 {
            return (self.levels[0], 0.0);
        }
        let g = rho.sqrt();
        let mut top = f64::NEG_INFINITY;
        for (a, q) in self.levels.iter().zip(&self.probs) {
            if *q > 0.0 {
                top = top.max(q.ln() - (r - g * a).powi(2));
            }
        }
        let (mut norm, mut m1, mut m2) = (0.0, 0.0, 0.0);
        for (a, q) in self.levels.iter().zip(&self.probs) {
            if *q > 0.0 {
                let w = (q.ln() - (r - g * a).powi(2) - top).exp();
                norm += w;
                m1 += w * a;
                m2 += w * a * a;
            }
        }
        let m = m1 / norm;
        (m, (m2 / norm - m * m).max(0.0))
    }

    /// `E_n f(n)` for `n ~ N(0, 1/2)`.
    fn noise_expectation(f: impl Fn(f64) -> f64) -> f64 {
        let g = |t: f64| (-t * t).exp() * f(t);
        let v = numeric::integrate(g, -NOISE_SPAN, NOISE_SPAN, 1e-15, 1e-13)
            .expect("smooth bounded integrand");
        v / PI.sqrt()
    }

    fn mmse(&self, rho: f64) -> f64 {
        if self.levels.len() == 1 {
            return 0.0;
        }
        let g = rho.sqrt();
        let mut acc = 0.0;
        for (a, q) in self.levels.iter().zip(&self.probs) {
            if *q == 0.0 {
                continue;
            }
            acc += q * Self::noise_expectation(|t| {
                let (m, _) = self.posterior(g * a + t, rho);
                (a - m).powi(2)
            });
        }
        acc.max(0.0)
    }

    fn mutual_information(&self, rho: f64) -> f64 {
        if self.levels.len() == 1 {
            return 0.0;
        }
        let g = rho.sqrt();
        let mut acc = 0.0;
        for (a, q) in self.levels.iter().zip(&self.probs) {
            if *q == 0.0 {
                continue;
            }
            acc -= q * Self::noise_expectation(|t| {
                let terms = self
                    .levels
                    .iter()
                    .zip(&self.probs)
                    .filter(|(_, ql)| **ql > 0.0)
                    .map(|(b, ql)| {
                        let d = g * (a - b);
                        ql.ln() - 2.0 * t * d - d * d
                    });
                log_sum_exp(terms)
            });
        }
        acc.max(0.0)
    }
}

/// Largest `u = |r|^2` on the Bernoulli-Gaussian integration range, in units
/// of the widest component variance.
const BG_SPAN: f64 = 60.0;

fn bg_validate(p: f64) -> Result<()> {
    if p > 0.0 && p <= 1.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("Bernoulli-Gaussian sparsity must lie in (0, 1], got {p}")))
    }
}

/// Posterior probability that the Bernoulli-Gaussian input is active.
fn bg_activity(p: f64, s1: f64, u: f64) -> f64 {
    if p >= 1.0 {
        return 1.0;
    }
    let l = (p / s1).ln() - u / s1 - (1.0 - p).ln() + u;
    1.0 / (1.0 + (-l).exp())
}

fn bg_log_density(p: f64, s1: f64, u: f64) -> f64 {
    let active = (p / s1).ln() - u / s1;
    if p >= 1.0 {
        return active;
    }
    let idle = (1.0 - p).ln() - u;
    let top = active.max(idle);
    top + ((active - top).exp() + (idle - top).exp()).ln()
}

impl Prior {
    pub fn qpsk() -> Self {
        Prior::Discrete(Constellation::qpsk())
    }

    pub fn bpsk() -> Self {
        Prior::Discrete(Constellation::bpsk())
    }

    pub fn bernoulli_gaussian(p: f64) -> Result<Self> {
        bg_validate(p)?;
        Ok(Prior::BernoulliGaussian { p })
    }

    /// Built-in priors by name: `qpsk`, `bpsk`, `gaussian`,
    /// `bernoulli-gaussian(p)`.
    pub fn from_name(spec: &str) -> Result<Self> {
        let s = spec.trim().to_ascii_lowercase();
        match s.as_str() {
            "qpsk" => Ok(Self::qpsk()),
            "bpsk" => Ok(Self::bpsk()),
            "gaussian" => Ok(Prior::Gaussian),
            _ => {
                let inner = s
                    .strip_prefix("bernoulli-gaussian(")
                    .and_then(|t| t.strip_suffix(')'))
                    .ok_or_else(|| Error::invalid(format!("unknown prior {spec:?}")))?;
                let p: f64 = inner
                    .trim()
                    .parse()
                    .map_err(|_| Error::invalid(format!("bad sparsity in {spec:?}")))?;
                Self::bernoulli_gaussian(p)
            }
        }
    }

    pub fn name(&self) -> String {
        match self {
            Prior::Discrete(c) => c.name().to_string(),
            Prior::Gaussian => "gaussian".into(),
            Prior::BernoulliGaussian { p } => format!("bernoulli-gaussian({p})"),
        }
    }

    pub fn constellation(&self) -> Option<&Constellation> {
        match self {
            Prior::Discrete(c) => Some(c),
            _ => None,
        }
    }

    /// Entropy of a discrete prior (`ln |S|` when uniform); `None` for
    /// continuous priors.
    pub fn entropy(&self) -> Option<f64> {
        self.constellation().map(Constellation::entropy)
    }

    pub fn posterior(&self, r: Complex64, rho: f64) -> Posterior {
        let rho = rho.max(0.0);
        match self {
            Prior::Discrete(c) => c.posterior(r, rho),
            Prior::Gaussian => Posterior {
                mean: r * (rho.sqrt() / (1.0 + rho)),
                variance: 1.0 / (1.0 + rho),
            },
            Prior::BernoulliGaussian { p } => {
                let p = *p;
                let s1 = 1.0 + rho / p;
                let pi = bg_activity(p, s1, r.norm_sqr());
                let m1 = r * (rho.sqrt() / (p * s1));
                let v1 = 1.0 / (p + rho);
                let mean = m1 * pi;
                Posterior {
                    mean,
                    variance: (pi * (v1 + m1.norm_sqr()) - mean.norm_sqr()).max(0.0),
                }
            }
        }
    }

    pub fn posterior_mean(&self, r: Complex64, rho: f64) -> Complex64 {
        self.posterior(r, rho).mean
    }

    /// `mmse(rho) = E|x - E{x|r}|^2`.
    pub fn mmse(&self, rho: f64) -> f64 {
        let rho = rho.max(0.0);
        if rho == 0.0 {
            return 1.0;
        }
        match self {
            Prior::Discrete(c) => c.mmse(rho).min(1.0),
            Prior::Gaussian => 1.0 / (1.0 + rho),
            Prior::BernoulliGaussian { p } => {
                let p = *p;
                let s1 = 1.0 + rho / p;
                let c = rho / (p * p * s1 * s1);
                let f = |u: f64| {
                    let pi = bg_activity(p, s1, u);
                    pi * pi * c * u * bg_log_density(p, s1, u).exp()
                };
                let e = bg_integrate(f, s1);
                (1.0 - e).clamp(0.0, 1.0)
            }
        }
    }

    /// `I(x; sqrt(rho) x + z)` in nats.
    pub fn mutual_information(&self, rho: f64) -> f64 {
        let rho = rho.max(0.0);
        if rho == 0.0 {
            return 0.0;
        }
        match self {
            Prior::Discrete(c) => c.mutual_information(rho),
            Prior::Gaussian => rho.ln_1p(),
            Prior::BernoulliGaussian { p } => {
                let p = *p;
                let s1 = 1.0 + rho / p;
                let f = |u: f64| {
                    let lg = bg_log_density(p, s1, u);
                    -lg * lg.exp()
                };
                (bg_integrate(f, s1) - 1.0).max(0.0)
            }
        }
    }

    /// Draws `n` symbols; for discrete priors also returns the point indices.
    pub fn sample(&self, n: usize, rng: &mut Rng) -> (Vec<Complex64>, Option<Vec<usize>>) {
        match self {
            Prior::Discrete(c) => {
                let idx: Vec<usize> = (0..n).map(|_| c.sample_index(rng)).collect();
                (idx.iter().map(|&k| c.points[k]).collect(), Some(idx))
            }
            Prior::Gaussian => (crate::channel::complex_gaussian_vector(n, 1.0, rng), None),
            Prior::BernoulliGaussian { p } => {
                let x = (0..n)
                    .map(|_| {
                        if rng.gen::<f64>() < *p {
                            crate::channel::complex_gaussian_vector(1, 1.0 / p, rng)[0]
                        } else {
                            Complex64::new(0.0, 0.0)
                        }
                    })
                    .collect();
                (x, None)
            }
        }
    }

    /// `∫_0^∞ mmse(rho) d rho`, equal to the entropy for discrete priors.
    pub fn mmse_integral(&self) -> Result<TailedIntegral> {
        if self.constellation().is_none() {
            return Err(Error::invalid("mmse integral diverges for continuous priors"));
        }
        let mut upper: f64 = 8.0;
        while self.mmse(upper) > 1e-12 && upper < 1e6 {
            upper *= 2.0;
        }
        let body = numeric::integrate(|r| self.mmse(r), 0.0, upper, 1e-10, 1e-10)?;
        let (tail, resolved) = exponential_tail(|r| self.mmse(r), upper);
        Ok(TailedIntegral {
            value: body + tail,
            tail,
            upper,
            resolved,
        })
    }
}

fn bg_integrate(f: impl Fn(f64) -> f64, s1: f64) -> f64 {
    // Split where the two mixture components have their own scales.
    let knee = BG_SPAN.min(BG_SPAN * s1);
    let a = numeric::integrate(&f, 0.0, knee, 1e-14, 1e-12).expect("smooth integrand");
    let hi = BG_SPAN * s1.max(1.0);
    let b = if hi > knee {
        numeric::integrate(&f, knee, hi, 1e-14, 1e-12).expect("smooth integrand")
    } else {
        0.0
    };
    a + b
}

/// Integral over `[0, ∞)` split into a quadrature body and a tail estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailedIntegral {
    pub value: f64,
    /// Estimated contribution beyond `upper`.
    pub tail: f64,
    pub upper: f64,
    /// `false` if the tail could not be bounded by an exponential fit.
    pub resolved: bool,
}

/// Tail `∫_upper^∞ f` assuming exponential decay fitted at `upper`.
pub(crate) fn exponential_tail(f: impl Fn(f64) -> f64, upper: f64) -> (f64, bool) {
    let h = 0.05 * upper.max(1.0);
    let (f0, f1) = (f(upper - h), f(upper));
    if f1 <= 0.0 {
        return (0.0, true);
    }
    if f0 <= f1 {
        return (f1 * upper, false);
    }
    let rate = (f0 / f1).ln() / h;
    (f1 / rate, true)
}

pub fn posterior_mean(prior: &Prior, r: Complex64, rho: f64) -> Complex64 {
    prior.posterior_mean(r, rho)
}

pub fn mmse(prior: &Prior, rho: f64) -> f64 {
    prior.mmse(rho)
}

pub fn mutual_information(prior: &Prior, rho: f64) -> f64 {
    prior.mutual_information(rho)
}
