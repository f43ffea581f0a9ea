//! Thin FFT helpers fixing the sign convention used throughout the crate.
//!
//! A spectrum sample sequence `x[k] = X(omega_k)` with `omega_k = 2*pi*k/N`
//! corresponds to Fourier coefficients `c[n]` through
//! `X(omega) = sum_n c[n] exp(-i n omega)`, so samples are the *forward* DFT
//! of the coefficients and coefficients are the inverse DFT of the samples.
//! Index `n` in `0..N/2` is the causal side, `N-1` downwards is lag -1, -2, ...

use num_complex::Complex64;
use rustfft::FftPlanner;

/// Forward DFT: coefficients -> samples.
pub(crate) fn samples_from_coeffs(coeffs: &[Complex64]) -> Vec<Complex64> {
    let mut buf = coeffs.to_vec();
    FftPlanner::new()
        .plan_fft_forward(buf.len())
        .process(&mut buf);
    buf
}

/// Inverse DFT with 1/N normalization: samples -> coefficients.
pub(crate) fn coeffs_from_samples(samples: &[Complex64]) -> Vec<Complex64> {
    let mut buf = samples.to_vec();
    FftPlanner::new()
        .plan_fft_inverse(buf.len())
        .process(&mut buf);
    let scale = 1.0 / buf.len() as f64;
    for v in &mut buf {
        *v *= scale;
    }
    buf
}
