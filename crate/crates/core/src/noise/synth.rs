//! Seeded synthetic noise and IQ-record generation.
//!
//! Colored noise is shaped in the spectral domain: independent Gaussian
//! Fourier coefficients are drawn with variance matching the target
//! one-sided PSD and inverse-transformed. The construction is exact in
//! expectation, which makes these generators the reference for every
//! slope-recovery check, and deterministic for a given seed.

use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use rustfft::FftPlanner;

use super::NoiseError;

/// Deterministic generator for a given 64-bit seed.
pub fn seeded_rng(seed: u64) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(seed)
}

/// Zero-mean Gaussian white noise with the given standard deviation.
pub fn white_noise(n: usize, sigma: f64, rng: &mut ChaCha12Rng) -> Vec<f64> {
    (0..n)
        .map(|_| sigma * rng.sample::<f64, _>(StandardNormal))
        .collect()
}

/// Real series whose one-sided PSD follows `shape(f)` (unit^2/Hz).
///
/// The zero-frequency coefficient is forced to zero, so the output is
/// zero-mean regardless of how the shape diverges toward DC.
pub fn shaped_noise<F>(
    n: usize,
    sample_rate: f64,
    shape: F,
    rng: &mut ChaCha12Rng,
) -> Result<Vec<f64>, NoiseError>
where
    F: Fn(f64) -> f64,
{
    if n < 2 {
        return Err(NoiseError::InvalidInput(format!(
            "series length {n} too short for spectral synthesis"
        )));
    }
    if !(sample_rate > 0.0) {
        return Err(NoiseError::InvalidInput(format!(
            "sample rate must be positive, got {sample_rate}"
        )));
    }
    let mut spectrum = vec![Complex64::new(0.0, 0.0); n];
    let half = n / 2;
    for k in 1..=half {
        let f = k as f64 * sample_rate / n as f64;
        let target = shape(f);
        if !(target >= 0.0) || !target.is_finite() {
            return Err(NoiseError::InvalidInput(format!(
                "target PSD at {f} Hz is {target}, must be finite and non-negative"
            )));
        }
        // E|X_k|^2 = n fs S(f_k) / 2 reproduces the one-sided density.
        let amp = (target * sample_rate * n as f64 / 2.0).sqrt();
        let coeff = if n % 2 == 0 && k == half {
            // Nyquist coefficient of a real series is real.
            Complex64::new(amp * rng.sample::<f64, _>(StandardNormal), 0.0)
        } else {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            Complex64::new(amp * re, amp * im) * std::f64::consts::FRAC_1_SQRT_2
        };
        spectrum[k] = coeff;
        if k != half || n % 2 != 0 {
            spectrum[n - k] = coeff.conj();
        }
    }
    let mut planner = FftPlanner::new();
    planner.plan_fft_inverse(n).process(&mut spectrum);
    let inv_n = 1.0 / n as f64;
    Ok(spectrum.iter().map(|z| z.re * inv_n).collect())
}

/// Power-law noise `S(f) = level_at_1hz * f^exponent`.
pub fn power_law_noise(
    n: usize,
    sample_rate: f64,
    exponent: f64,
    level_at_1hz: f64,
    rng: &mut ChaCha12Rng,
) -> Result<Vec<f64>, NoiseError> {
    shaped_noise(n, sample_rate, |f| level_at_1hz * f.powf(exponent), rng)
}

/// Complex homodyne samples on a resonance circle.
///
/// `z_k = center + radius (1 + amplitude_k) e^{i(angle + phase_k)}`;
/// pass empty slices to skip a quadrature.
pub fn samples_on_circle(
    center: Complex64,
    radius: f64,
    angle: f64,
    phase: &[f64],
    amplitude: &[f64],
) -> Vec<Complex64> {
    let n = phase.len().max(amplitude.len());
    (0..n)
        .map(|k| {
            let ph = phase.get(k).copied().unwrap_or(0.0);
            let am = amplitude.get(k).copied().unwrap_or(0.0);
            center + Complex64::from_polar(radius * (1.0 + am), angle + ph)
        })
        .collect()
}
