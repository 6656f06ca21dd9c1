//! Sensing-matrix spectra, Haar rotations and the noisy linear channel
//! `y = A x + w` with `A = U^H Σ V`.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng as _;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::seed::{self, Rng};

/// Singular values of an `m x n` sensing matrix.
///
/// Holds `T = min(m, n)` strictly positive values in nonincreasing order with
/// `sum d_i^2 = n` (unit average column power).
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSpectrum {
    m: usize,
    n: usize,
    singular_values: Vec<f64>,
}

const NORMALIZATION_TOL: f64 = 1e-9;

impl ChannelSpectrum {
    pub fn new(m: usize, n: usize, singular_values: Vec<f64>) -> Result<Self> {
        if m == 0 || n == 0 {
            return Err(Error::invalid("spectrum dimensions must be positive"));
        }
        let t = m.min(n);
        if singular_values.len() != t {
            return Err(Error::DimensionMismatch {
                expected: t,
                got: singular_values.len(),
            });
        }
        if singular_values.iter().any(|&d| !(d > 0.0 && d.is_finite())) {
            return Err(Error::invalid("singular values must be finite and strictly positive"));
        }
        if singular_values.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::invalid("singular values must be nonincreasing"));
        }
        let power: f64 = singular_values.iter().map(|d| d * d).sum();
        if ((power - n as f64) / n as f64).abs() > NORMALIZATION_TOL {
            return Err(Error::invalid(format!(
                "sum of squared singular values is {power}, expected n = {n}"
            )));
        }
        Ok(ChannelSpectrum { m, n, singular_values })
    }

    /// Rescales arbitrary positive values to satisfy the power normalization,
    /// sorting them into nonincreasing order.
    pub fn normalized(m: usize, n: usize, mut values: Vec<f64>) -> Result<Self> {
        values.sort_by(|a, b| b.total_cmp(a));
        let power: f64 = values.iter().map(|d| d * d).sum();
        if !(power > 0.0) {
            return Err(Error::invalid("spectrum has no energy"));
        }
        let c = (n as f64 / power).sqrt();
        values.iter_mut().for_each(|d| *d *= c);
        Self::new(m, n, values)
    }

    /// Identity-like spectrum: all singular values equal.
    pub fn flat(m: usize, n: usize) -> Result<Self> {
        make_kappa_spectrum(m, n, 1.0)
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of nonzero singular values, `min(m, n)`.
    pub fn rank(&self) -> usize {
        self.singular_values.len()
    }

    /// Aspect ratio `N / M`.
    pub fn beta(&self) -> f64 {
        self.n as f64 / self.m as f64
    }

    pub fn singular_values(&self) -> &[f64] {
        &self.singular_values
    }

    /// Nonzero eigenvalues of `A^H A` (the squared singular values).
    pub fn nonzero_eigenvalues(&self) -> Vec<f64> {
        self.singular_values.iter().map(|d| d * d).collect()
    }

    /// Ratio of the largest to the smallest singular value.
    pub fn condition_number(&self) -> f64 {
        self.singular_values[0] / self.singular_values[self.rank() - 1]
    }

    /// CSV export: a `#` header carrying the dimensions, then one value per line.
    pub fn to_csv(&self) -> String {
        let mut s = format!(
            "# m={},n={} schema=spectrum version={}\n",
            self.m,
            self.n,
            crate::VERSION
        );
        for d in &self.singular_values {
            let _ = writeln!(s, "{d:e}");
        }
        s
    }

    /// Parses the format written by [`ChannelSpectrum::to_csv`]. A bare
    /// `# m,n` header (two integers) is also accepted.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut dims: Option<(usize, usize)> = None;
        let mut values = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(comment) = line.strip_prefix('#') {
                if dims.is_none() {
                    dims = Some(parse_dims(comment, line_no)?);
                }
                continue;
            }
            let v: f64 = line
                .parse()
                .map_err(|_| Error::parse(line_no, format!("not a number: {line:?}")))?;
            values.push(v);
        }
        let (m, n) = dims.ok_or_else(|| Error::parse(1, "missing `# m,n` header"))?;
        Self::new(m, n, values)
    }
}

fn parse_dims(comment: &str, line: usize) -> Result<(usize, usize)> {
    let first = comment.split_whitespace().next().unwrap_or("");
    let mut parts = first.split(',');
    let mut take = |key: &str| -> Result<usize> {
        let tok = parts
            .next()
            .ok_or_else(|| Error::parse(line, "header must be `# m,n`"))?;
        let tok = tok.strip_prefix(key).unwrap_or(tok);
        tok.parse()
            .map_err(|_| Error::parse(line, format!("bad dimension {tok:?}")))
    };
    let m = take("m=")?;
    let n = take("n=")?;
    Ok((m, n))
}

/// Geometric singular-value ladder `d_i = c * kappa^((T - i) / T)`, `i = 1..T`,
/// with `c` chosen so that `sum d_i^2 = n`.
pub fn make_kappa_spectrum(m: usize, n: usize, kappa: f64) -> Result<ChannelSpectrum> {
    if m == 0 || n == 0 {
        return Err(Error::invalid("spectrum dimensions must be positive"));
    }
    if !(kappa >= 1.0 && kappa.is_finite()) {
        return Err(Error::invalid(format!("kappa must be >= 1, got {kappa}")));
    }
    let t = m.min(n);
    let tf = t as f64;
    let raw: Vec<f64> = (1..=t).map(|i| kappa.powf((tf - i as f64) / tf)).collect();
    let power: f64 = raw.iter().map(|d| d * d).sum();
    let c = (n as f64 / power).sqrt();
    ChannelSpectrum::new(m, n, raw.into_iter().map(|d| c * d).collect())
}

/// A unitary matrix, stored in whatever form is cheapest to apply.
#[derive(Debug, Clone)]
pub enum Rotation {
    Identity(usize),
    Dense(DMatrix<Complex64>),
    /// Product of Householder reflectors times a diagonal phase:
    /// `Q = H_0 H_1 ... H_{n-1} diag(phase)`.
    Householder(Reflectors),
}

#[derive(Debug, Clone)]
pub struct Reflectors {
    n: usize,
    /// Unit reflector vectors, the `k`-th of length `n - k`, concatenated.
    vectors: Vec<Complex64>,
    phases: Vec<Complex64>,
}

impl Reflectors {
    fn offset(&self, k: usize) -> usize {
        // sum_{j<k} (n - j)
        k * self.n - k * (k.saturating_sub(1)) / 2
    }

    fn reflect(&self, k: usize, x: &mut [Complex64]) {
        let len = self.n - k;
        let off = self.offset(k);
        let u = &self.vectors[off..off + len];
        let tail = &mut x[k..];
        let mut dot = Complex64::new(0.0, 0.0);
        for (ui, xi) in u.iter().zip(tail.iter()) {
            dot += ui.conj() * xi;
        }
        let s = dot * 2.0;
        for (ui, xi) in u.iter().zip(tail.iter_mut()) {
            *xi -= ui * s;
        }
    }
}

/// How Haar rotations are drawn. Every method yields the exact Haar law.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RotationMethod {
    /// Householder QR of an implicit complex Gaussian matrix, stored in
    /// factored form: `O(n^2)` to draw and to apply.
    #[default]
    Householder,
    /// Explicit dense QR of a complex Gaussian matrix with the diagonal of
    /// `R` made real-positive.
    DenseQr,
    /// `U = I`, `V = I`, for analytic tests.
    Identity,
}

fn complex_normal(rng: &mut Rng) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

impl Rotation {
    pub fn haar(n: usize, method: RotationMethod, rng: &mut Rng) -> Self {
        match method {
            RotationMethod::Identity => Rotation::Identity(n),
            RotationMethod::DenseQr => Rotation::Dense(haar_dense_qr(n, rng)),
            RotationMethod::Householder => Rotation::Householder(haar_reflectors(n, rng)),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Rotation::Identity(n) => *n,
            Rotation::Dense(q) => q.nrows(),
            Rotation::Householder(h) => h.n,
        }
    }

    /// `x <- Q x`.
    pub fn apply(&self, x: &mut [Complex64]) {
        match self {
            Rotation::Identity(_) => {}
            Rotation::Dense(q) => {
                let v = nalgebra::DVectorView::from_slice(x, x.len());
                let out = q * v;
                x.copy_from_slice(out.as_slice());
            }
            Rotation::Householder(h) => {
                for (xi, p) in x.iter_mut().zip(&h.phases) {
                    *xi *= p;
                }
                for k in (0..h.n).rev() {
                    h.reflect(k, x);
                }
            }
        }
    }

    /// `x <- Q^H x`.
    pub fn apply_adjoint(&self, x: &mut [Complex64]) {
        match self {
            Rotation::Identity(_) => {}
            Rotation::Dense(q) => {
                let v = nalgebra::DVectorView::from_slice(x, x.len());
                let out = q.ad_mul(&v);
                x.copy_from_slice(out.as_slice());
            }
            Rotation::Householder(h) => {
                for k in 0..h.n {
                    h.reflect(k, x);
                }
                for (xi, p) in x.iter_mut().zip(&h.phases) {
                    *xi *= p.conj();
                }
            }
        }
    }

    /// Dense copy of the matrix (`O(n^3)` for the factored form).
    pub fn to_dense(&self) -> DMatrix<Complex64> {
        match self {
            Rotation::Dense(q) => q.clone(),
            _ => {
                let n = self.dim();
                let mut out = DMatrix::<Complex64>::zeros(n, n);
                let mut col = vec![Complex64::new(0.0, 0.0); n];
                for j in 0..n {
                    col.iter_mut().for_each(|c| *c = Complex64::new(0.0, 0.0));
                    col[j] = Complex64::new(1.0, 0.0);
                    self.apply(&mut col);
                    out.column_mut(j).copy_from_slice(&col);
                }
                out
            }
        }
    }
}

fn haar_dense_qr(n: usize, rng: &mut Rng) -> DMatrix<Complex64> {
    let g = DMatrix::<Complex64>::from_fn(n, n, |_, _| complex_normal(rng));
    let qr = g.qr();
    let r = qr.r();
    let mut q = qr.q();
    for k in 0..n {
        let rkk = r[(k, k)];
        let phase = if rkk.norm() > 0.0 {
            rkk / rkk.norm()
        } else {
            Complex64::new(1.0, 0.0)
        };
        q.column_mut(k).scale_mut_complex(phase);
    }
    q
}

trait ScaleComplex {
    fn scale_mut_complex(&mut self, s: Complex64);
}

impl<S: nalgebra::StorageMut<Complex64, nalgebra::Dyn, nalgebra::U1>> ScaleComplex
    for nalgebra::Matrix<Complex64, nalgebra::Dyn, nalgebra::U1, S>
{
    fn scale_mut_complex(&mut self, s: Complex64) {
        self.iter_mut().for_each(|v| *v *= s);
    }
}

fn haar_reflectors(n: usize, rng: &mut Rng) -> Reflectors {
    let mut vectors = Vec::with_capacity(n * (n + 1) / 2);
    let mut phases = Vec::with_capacity(n);
    for k in 0..n {
        let len = n - k;
        let start = vectors.len();
        vectors.extend((0..len).map(|_| complex_normal(rng)));
        let g = &mut vectors[start..];
        let norm = g.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        let alpha = g[0];
        let phi = if alpha.norm() > 0.0 {
            alpha / alpha.norm()
        } else {
            Complex64::new(1.0, 0.0)
        };
        // Reflector mapping g to -phi * |g| e_0; R_kk = -phi * |g|.
        g[0] += phi * norm;
        let unorm = g.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        g.iter_mut().for_each(|c| *c /= unorm);
        phases.push(-phi);
    }
    Reflectors { n, vectors, phases }
}

/// A sampled system `A = U^H Σ V` with noise variance `σ^2 = 1 / snr`.
#[derive(Debug, Clone)]
pub struct ChannelInstance {
    spectrum: ChannelSpectrum,
    left: Rotation,
    right: Rotation,
    noise_variance: f64,
}

impl ChannelInstance {
    pub fn new(spectrum: ChannelSpectrum, left: Rotation, right: Rotation, noise_variance: f64) -> Result<Self> {
        if left.dim() != spectrum.m() {
            return Err(Error::DimensionMismatch {
                expected: spectrum.m(),
                got: left.dim(),
            });
        }
        if right.dim() != spectrum.n() {
            return Err(Error::DimensionMismatch {
                expected: spectrum.n(),
                got: right.dim(),
            });
        }
        if !(noise_variance > 0.0 && noise_variance.is_finite()) {
            return Err(Error::invalid("noise variance must be positive and finite"));
        }
        Ok(ChannelInstance {
            spectrum,
            left,
            right,
            noise_variance,
        })
    }

    pub fn spectrum(&self) -> &ChannelSpectrum {
        &self.spectrum
    }

    /// `U` (m x m).
    pub fn left(&self) -> &Rotation {
        &self.left
    }

    /// `V` (n x n).
    pub fn right(&self) -> &Rotation {
        &self.right
    }

    pub fn noise_variance(&self) -> f64 {
        self.noise_variance
    }

    pub fn snr(&self) -> f64 {
        1.0 / self.noise_variance
    }

    pub fn m(&self) -> usize {
        self.spectrum.m()
    }

    pub fn n(&self) -> usize {
        self.spectrum.n()
    }

    /// Noiseless forward map `A x`.
    pub fn forward(&self, x: &[Complex64]) -> Result<Vec<Complex64>> {
        if x.len() != self.n() {
            return Err(Error::DimensionMismatch {
                expected: self.n(),
                got: x.len(),
            });
        }
        let mut z = x.to_vec();
        self.right.apply(&mut z);
        let mut y = vec![Complex64::new(0.0, 0.0); self.m()];
        for (i, d) in self.spectrum.singular_values().iter().enumerate() {
            y[i] = z[i] * d;
        }
        self.left.apply_adjoint(&mut y);
        Ok(y)
    }

    /// `U y`: the observation expressed in the left singular basis.
    pub fn rotate_observation(&self, y: &[Complex64]) -> Result<Vec<Complex64>> {
        if y.len() != self.m() {
            return Err(Error::DimensionMismatch {
                expected: self.m(),
                got: y.len(),
            });
        }
        let mut out = y.to_vec();
        self.left.apply(&mut out);
        Ok(out)
    }

    /// Dense `A` (tests and small diagnostics only).
    pub fn to_dense(&self) -> DMatrix<Complex64> {
        let (m, n) = (self.m(), self.n());
        let mut sigma = DMatrix::<Complex64>::zeros(m, n);
        for (i, d) in self.spectrum.singular_values().iter().enumerate() {
            sigma[(i, i)] = Complex64::new(*d, 0.0);
        }
        self.left.to_dense().adjoint() * sigma * self.right.to_dense()
    }
}

/// Draws `U` and `V` as independent Haar unitaries (deterministic in `seed`).
pub fn sample_channel(spectrum: &ChannelSpectrum, noise_variance: f64, seed: u64) -> Result<ChannelInstance> {
    sample_channel_with(spectrum, noise_variance, seed, RotationMethod::default())
}

pub fn sample_channel_with(
    spectrum: &ChannelSpectrum,
    noise_variance: f64,
    seed: u64,
    method: RotationMethod,
) -> Result<ChannelInstance> {
    let mut rng = seed::rng(seed);
    let left = Rotation::haar(spectrum.m(), method, &mut rng);
    let right = Rotation::haar(spectrum.n(), method, &mut rng);
    ChannelInstance::new(spectrum.clone(), left, right, noise_variance)
}

/// `y = A x + w`, `w ~ CN(0, σ^2 I)`, deterministic in `seed`.
pub fn apply_channel(ch: &ChannelInstance, x: &[Complex64], seed: u64) -> Result<Vec<Complex64>> {
    let mut y = ch.forward(x)?;
    let mut rng = seed::rng(seed);
    let s = ch.noise_variance().sqrt();
    for yi in y.iter_mut() {
        *yi += complex_normal(&mut rng) * s;
    }
    Ok(y)
}

/// `n` draws from `CN(0, variance)`.
pub fn complex_gaussian_vector(n: usize, variance: f64, rng: &mut Rng) -> Vec<Complex64> {
    let s = variance.sqrt();
    (0..n).map(|_| complex_normal(rng) * s).collect()
}
