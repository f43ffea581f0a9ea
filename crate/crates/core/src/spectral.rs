//! Scalar spectra and their causal (minimum-phase) factorizations.
//!
//! Two factorization routes are provided:
//! * [`polynomial_factor`] — exact: a strictly positive trigonometric
//!   polynomial of degree `m` is factored through the roots of its associated
//!   palindromic polynomial into a causal polynomial of the same degree.
//! * [`spectral_factor_grid`] — grid-based: an arbitrary positive spectrum
//!   sampled on a grid is factored with the cepstral (log/exp) method. The
//!   magnitude identity `|L|^2 = N` holds exactly at the grid points.

use nalgebra::DMatrix;
use num_complex::Complex64;
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::fft;
use crate::lti::{FrequencyGrid, GridSpectrum};

/// Real even trigonometric polynomial `p(w) = c_0 + 2 sum_{k>=1} c_k cos(k w)`.
#[derive(Clone, Debug, PartialEq)]
pub struct LaurentPolynomial {
    coeffs: Vec<f64>,
}

impl LaurentPolynomial {
    pub fn new(coeffs: Vec<f64>) -> Self {
        assert!(!coeffs.is_empty(), "need at least the constant coefficient");
        LaurentPolynomial { coeffs }
    }

    pub fn constant(c: f64) -> Self {
        LaurentPolynomial { coeffs: vec![c] }
    }

    /// Cosine-series coefficients `c_0..c_m`.
    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn eval(&self, omega: f64) -> f64 {
        let mut acc = self.coeffs[0];
        for (k, c) in self.coeffs.iter().enumerate().skip(1) {
            acc += 2.0 * c * (k as f64 * omega).cos();
        }
        acc
    }

    pub fn sample(&self, grid: FrequencyGrid) -> GridSpectrum {
        GridSpectrum::from_scalar_fn(grid, |_, w| Complex64::new(self.eval(w), 0.0))
    }

    /// Truncate a real scalar spectrum to a degree-`m` cosine series.
    pub fn from_spectrum(spectrum: &GridSpectrum, m: usize) -> Result<Self> {
        let n = spectrum.len();
        if 2 * m >= n {
            return Err(Error::GridMismatch(format!(
                "degree {m} needs more than {n} grid points"
            )));
        }
        let coeffs = spectrum.fourier_coefficients();
        let mut out = Vec::with_capacity(m + 1);
        for (k, item) in coeffs.iter().enumerate().take(m + 1) {
            let fwd = item[(0, 0)];
            let bwd = coeffs[(n - k) % n][(0, 0)];
            // Real even spectra have matching +/- lags; average them.
            out.push(0.5 * (fwd.re + bwd.re));
        }
        Ok(LaurentPolynomial::new(out))
    }

    pub fn min_value(&self, probes: usize) -> f64 {
        (0..probes)
            .map(|k| self.eval(2.0 * PI * k as f64 / probes as f64))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn max_value(&self, probes: usize) -> f64 {
        (0..probes)
            .map(|k| self.eval(2.0 * PI * k as f64 / probes as f64))
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Causal real polynomial `L(z) = sum_{k=0}^m l_k z^{-k}` with `l_0 > 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct CausalPolynomial {
    coeffs: Vec<f64>,
}

impl CausalPolynomial {
    pub fn new(coeffs: Vec<f64>) -> Self {
        assert!(!coeffs.is_empty(), "need at least the leading coefficient");
        CausalPolynomial { coeffs }
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    /// Evaluate at `z = e^{i omega}`.
    pub fn eval_omega(&self, omega: f64) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for (k, l) in self.coeffs.iter().enumerate() {
            acc += Complex64::from_polar(1.0, -(k as f64) * omega).scale(*l);
        }
        acc
    }

    pub fn sample(&self, grid: FrequencyGrid) -> GridSpectrum {
        GridSpectrum::from_scalar_fn(grid, |_, w| self.eval_omega(w))
    }

    /// The spectrum `|L|^2` as a cosine series: `c_d = sum_k l_k l_{k+d}`.
    pub fn squared_magnitude(&self) -> LaurentPolynomial {
        let m = self.degree();
        let mut coeffs = vec![0.0; m + 1];
        for (d, c) in coeffs.iter_mut().enumerate() {
            for k in 0..=(m - d) {
                *c += self.coeffs[k] * self.coeffs[k + d];
            }
        }
        LaurentPolynomial::new(coeffs)
    }

    pub fn scale(&self, s: f64) -> CausalPolynomial {
        CausalPolynomial::new(self.coeffs.iter().map(|l| s * l).collect())
    }
}

/// Roots of `sum_j a_j z^j` via the companion matrix of the monic form.
fn poly_roots(coeffs: &[f64]) -> Vec<Complex64> {
    let deg = coeffs.len() - 1;
    if deg == 0 {
        return Vec::new();
    }
    let lead = coeffs[deg];
    let n = deg;
    let mut companion = DMatrix::<f64>::zeros(n, n);
    for i in 1..n {
        companion[(i, i - 1)] = 1.0;
    }
    for i in 0..n {
        companion[(i, n - 1)] = -coeffs[i] / lead;
    }
    companion.complex_eigenvalues().iter().copied().collect()
}

/// One Horner pass returning `(P(z), P'(z))`.
fn horner(coeffs: &[f64], z: Complex64) -> (Complex64, Complex64) {
    let mut p = Complex64::new(0.0, 0.0);
    let mut dp = Complex64::new(0.0, 0.0);
    for &a in coeffs.iter().rev() {
        dp = dp * z + p;
        p = p * z + Complex64::new(a, 0.0);
    }
    (p, dp)
}

fn newton_polish(coeffs: &[f64], mut z: Complex64) -> Complex64 {
    for _ in 0..24 {
        let (p, dp) = horner(coeffs, z);
        if dp.norm() == 0.0 {
            break;
        }
        let step = p / dp;
        z -= step;
        if step.norm() <= 1e-15 * (1.0 + z.norm()) {
            break;
        }
    }
    z
}

/// Exact causal factorization of a strictly positive trigonometric polynomial:
/// returns `L` with `|L(e^{i w})|^2 = p(w)` and all zeros strictly inside the
/// unit circle.
pub fn polynomial_factor(p: &LaurentPolynomial) -> Result<CausalPolynomial> {
    // Drop numerically irrelevant top coefficients; they only perturb the
    // spectrum at the level of the final residual check.
    let max_c = p.coeffs().iter().fold(0.0f64, |a, c| a.max(c.abs()));
    if max_c == 0.0 {
        return Err(Error::NotPositive(0.0));
    }
    let mut coeffs: Vec<f64> = p.coeffs().to_vec();
    while coeffs.len() > 1 && coeffs.last().unwrap().abs() <= 1e-12 * max_c {
        coeffs.pop();
    }
    let m = coeffs.len() - 1;

    if m == 0 {
        if coeffs[0] <= 0.0 {
            return Err(Error::NotPositive(coeffs[0]));
        }
        return Ok(CausalPolynomial::new(vec![coeffs[0].sqrt()]));
    }

    // Palindromic polynomial z^m p(z): coefficient of z^j is c_{|j-m|}.
    let pal: Vec<f64> = (0..=2 * m)
        .map(|j| coeffs[(j as isize - m as isize).unsigned_abs()])
        .collect();
    let mut roots: Vec<Complex64> = poly_roots(&pal)
        .into_iter()
        .map(|r| newton_polish(&pal, r))
        .collect();
    roots.sort_by(|a, b| a.norm().partial_cmp(&b.norm()).unwrap());

    let ring = 1e-7;
    let inside = roots.iter().filter(|r| r.norm() < 1.0 - ring).count();
    if inside != m || roots[m..].iter().any(|r| r.norm() <= 1.0 + ring) {
        return Err(Error::RootPairingFailure {
            inside,
            total: roots.len(),
        });
    }

    // Product of (1 - r_i z^{-1}) over the inside roots; conjugate pairs make
    // the coefficients real.
    let mut prod = vec![Complex64::new(1.0, 0.0)];
    for r in &roots[..m] {
        let mut next = vec![Complex64::new(0.0, 0.0); prod.len() + 1];
        for (k, c) in prod.iter().enumerate() {
            next[k] += c;
            next[k + 1] -= c * r;
        }
        prod = next;
    }
    let max_im = prod.iter().map(|c| c.im.abs()).fold(0.0, f64::max);
    if max_im > 1e-8 * (1.0 + max_c) {
        return Err(Error::FactorizationFailure { residual: max_im });
    }
    let unscaled = CausalPolynomial::new(prod.iter().map(|c| c.re).collect());

    // Fix the scale where p is largest, then verify the factorization
    // everywhere on a probe set.
    let probes = (8 * (m + 1)).next_power_of_two().max(512);
    let mut best_w = 0.0;
    let mut best_p = f64::NEG_INFINITY;
    for k in 0..probes {
        let w = 2.0 * PI * k as f64 / probes as f64;
        let v = p.eval(w);
        if v > best_p {
            best_p = v;
            best_w = w;
        }
    }
    if best_p <= 0.0 {
        return Err(Error::NotPositive(best_p));
    }
    let base = unscaled.eval_omega(best_w).norm_sqr();
    let scale = (best_p / base).sqrt();
    let factor = unscaled.scale(scale);

    let mut residual = 0.0f64;
    for k in 0..probes {
        let w = 2.0 * PI * k as f64 / probes as f64;
        residual = residual.max((p.eval(w) - factor.eval_omega(w).norm_sqr()).abs());
    }
    if residual > 1e-8 * best_p.abs() {
        return Err(Error::FactorizationFailure {
            residual: residual / best_p.abs(),
        });
    }
    Ok(factor)
}

/// Cepstral factorization of a strictly positive scalar spectrum sampled on a
/// grid. The returned samples satisfy `|L(w_k)|^2 = N(w_k)` exactly (to
/// rounding) at every grid point, and the underlying coefficient sequence is
/// causal up to grid aliasing.
pub fn spectral_factor_grid(spectrum: &GridSpectrum) -> Result<GridSpectrum> {
    let n = spectrum.len();
    let mut min_val = f64::INFINITY;
    for k in 0..n {
        min_val = min_val.min(spectrum.real_scalar(k));
    }
    if min_val <= 0.0 {
        return Err(Error::NonPositiveSpectrum(min_val));
    }
    Ok(cepstral_factor(spectrum, 0.0))
}

/// Variant of [`spectral_factor_grid`] for spectra that may touch zero:
/// factors `N + eps` with `eps = 1e-10 * max N`. Returns the factor and the
/// regularization actually applied (zero when none was needed).
pub fn spectral_factor_grid_regularized(spectrum: &GridSpectrum) -> Result<(GridSpectrum, f64)> {
    let n = spectrum.len();
    let mut min_val = f64::INFINITY;
    let mut max_val = f64::NEG_INFINITY;
    for k in 0..n {
        let v = spectrum.real_scalar(k);
        min_val = min_val.min(v);
        max_val = max_val.max(v);
    }
    if max_val <= 0.0 {
        return Err(Error::NonPositiveSpectrum(min_val));
    }
    let eps = if min_val > 1e-10 * max_val {
        0.0
    } else {
        1e-10 * max_val
    };
    if min_val + eps <= 0.0 {
        return Err(Error::NonPositiveSpectrum(min_val));
    }
    Ok((cepstral_factor(spectrum, eps), eps))
}

fn cepstral_factor(spectrum: &GridSpectrum, eps: f64) -> GridSpectrum {
    let n = spectrum.len();
    let log_samples: Vec<Complex64> = (0..n)
        .map(|k| Complex64::new((spectrum.real_scalar(k) + eps).ln(), 0.0))
        .collect();
    let cepstrum = fft::coeffs_from_samples(&log_samples);
    // Causal fold: keep lags 0..=n/2, halving the two self-paired lags.
    let mut folded = vec![Complex64::new(0.0, 0.0); n];
    folded[0] = cepstrum[0] * 0.5;
    folded[1..n / 2].copy_from_slice(&cepstrum[1..n / 2]);
    folded[n / 2] = cepstrum[n / 2] * 0.5;
    let log_factor = fft::samples_from_coeffs(&folded);
    GridSpectrum::from_scalar_fn(spectrum.grid(), |k, _| log_factor[k].exp())
}

/// Real coefficient sequence of a grid-sampled causal factor (lags `0..n`).
/// Entries at high indices hold the aliased anticausal leakage and should be
/// near zero for a genuinely causal factor.
pub fn causal_coefficients(factor: &GridSpectrum) -> Vec<f64> {
    let samples: Vec<Complex64> = (0..factor.len()).map(|k| factor.scalar(k)).collect();
    fft::coeffs_from_samples(&samples)
        .into_iter()
        .map(|c| c.re)
        .collect()
}
