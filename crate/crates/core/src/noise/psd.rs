//! Averaged-periodogram spectral estimation.
//!
//! Segmented, windowed, overlapped one-sided PSD with window power
//! normalization:
//!
//! ```text
//! S(f_k) = 2 / (fs sum w^2) * mean_over_segments |FFT(w x_seg)[k]|^2
//! ```
//!
//! The per-segment mean is removed before windowing by default; without it,
//! record power below the segment resolution leaks through the window's
//! zero-frequency response and corrupts the lowest bins of steep spectra.
//! The DC bin is kept out of the returned grid (it is excluded from any
//! downstream fit) and reported separately.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::NoiseError;

/// Window applied to each segment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WindowKind {
    Rectangular,
    #[default]
    Hann,
    Hamming,
}

impl WindowKind {
    fn sample(&self, i: usize, n: usize) -> f64 {
        use std::f64::consts::PI;
        let x = 2.0 * PI * i as f64 / (n - 1) as f64;
        match self {
            WindowKind::Rectangular => 1.0,
            WindowKind::Hann => 0.5 * (1.0 - x.cos()),
            WindowKind::Hamming => 0.54 - 0.46 * x.cos(),
        }
    }
}

/// Per-segment trend handling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Detrend {
    /// Leave segments untouched; constant inputs land in the DC bin.
    None,
    /// Remove the mean of each segment before windowing.
    #[default]
    SegmentMean,
}

#[derive(Debug, Clone)]
pub struct PsdSettings {
    pub segment_length: usize,
    pub overlap_fraction: f64,
    pub window: WindowKind,
    pub detrend: Detrend,
}

impl Default for PsdSettings {
    fn default() -> Self {
        Self {
            segment_length: 1 << 14,
            overlap_fraction: 0.5,
            window: WindowKind::Hann,
            detrend: Detrend::SegmentMean,
        }
    }
}

/// One-sided power spectral density estimate.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SpectrumEstimate {
    /// Bin centers from 1/segment-duration up to the Nyquist frequency (Hz).
    pub frequency: Vec<f64>,
    /// One-sided PSD per bin (unit^2 / Hz).
    pub psd: Vec<f64>,
    /// Power density in the excluded zero-frequency bin.
    pub dc_psd: f64,
    pub segment_length: usize,
    pub window: WindowKind,
    pub overlap_fraction: f64,
    /// Equivalent noise bandwidth of one bin (Hz).
    pub equivalent_noise_bandwidth: f64,
    /// Number of segments averaged; one means no variance reduction.
    pub segments_averaged: usize,
    /// Sample rate of the analyzed series (Hz).
    pub sample_rate: f64,
}

impl SpectrumEstimate {
    /// Bin spacing (Hz).
    pub fn bin_width(&self) -> f64 {
        self.sample_rate / self.segment_length as f64
    }

    /// PSD read-out at a frequency: median over the bin and its three
    /// neighbours on each side, robust against single-bin scatter.
    pub fn value_at(&self, frequency: f64) -> Result<f64, NoiseError> {
        if self.frequency.is_empty() {
            return Err(NoiseError::InsufficientData("empty spectrum".into()));
        }
        let first = self.frequency[0];
        let last = *self.frequency.last().expect("non-empty");
        if frequency < first || frequency > last {
            return Err(NoiseError::InvalidInput(format!(
                "frequency {frequency} Hz outside the spectral grid [{first}, {last}]"
            )));
        }
        let nearest = self
            .frequency
            .iter()
            .enumerate()
            .min_by(|a, b| {
                (a.1 - frequency)
                    .abs()
                    .partial_cmp(&(b.1 - frequency).abs())
                    .expect("finite")
            })
            .map(|(i, _)| i)
            .expect("non-empty");
        let lo = nearest.saturating_sub(3);
        let hi = (nearest + 3).min(self.psd.len() - 1);
        let mut vals: Vec<f64> = self.psd[lo..=hi].to_vec();
        vals.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
        Ok(vals[vals.len() / 2])
    }
}

/// Welch estimate of the one-sided PSD of a real series.
pub fn estimate_psd(
    samples: &[f64],
    sample_rate: f64,
    settings: &PsdSettings,
) -> Result<SpectrumEstimate, NoiseError> {
    let n = settings.segment_length;
    if n < 8 {
        return Err(NoiseError::InvalidInput(format!(
            "segment length {n} too short"
        )));
    }
    if n > samples.len() {
        return Err(NoiseError::InvalidInput(format!(
            "segment length {n} exceeds series length {}",
            samples.len()
        )));
    }
    if !(0.0..=0.9).contains(&settings.overlap_fraction) {
        return Err(NoiseError::InvalidInput(format!(
            "overlap fraction {} outside [0, 0.9]",
            settings.overlap_fraction
        )));
    }
    if !(sample_rate > 0.0) {
        return Err(NoiseError::InvalidInput(format!(
            "sample rate must be positive, got {sample_rate}"
        )));
    }

    let window: Vec<f64> = (0..n).map(|i| settings.window.sample(i, n)).collect();
    let window_power: f64 = window.iter().map(|w| w * w).sum();
    let window_sum: f64 = window.iter().sum();
    let step = ((n as f64) * (1.0 - settings.overlap_fraction)).max(1.0) as usize;

    let mut planner = FftPlanner::new();
    let fft: Arc<dyn Fft<f64>> = planner.plan_fft_forward(n);
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    let mut acc = vec![0.0f64; n / 2 + 1];
    let mut segments = 0usize;
    let mut start = 0usize;
    while start + n <= samples.len() {
        let seg = &samples[start..start + n];
        let mean = match settings.detrend {
            Detrend::None => 0.0,
            Detrend::SegmentMean => seg.iter().sum::<f64>() / n as f64,
        };
        for (b, (&s, &w)) in buf.iter_mut().zip(seg.iter().zip(&window)) {
            *b = Complex64::new((s - mean) * w, 0.0);
        }
        fft.process(&mut buf);
        for (a, b) in acc.iter_mut().zip(buf.iter().take(n / 2 + 1)) {
            *a += b.norm_sqr();
        }
        segments += 1;
        start += step;
    }
    debug_assert!(segments >= 1);

    let scale = 1.0 / (sample_rate * window_power * segments as f64);
    let dc_psd = acc[0] * scale;
    let mut frequency = Vec::with_capacity(n / 2);
    let mut psd = Vec::with_capacity(n / 2);
    for (k, a) in acc.iter().enumerate().skip(1) {
        let one_sided = if k == n / 2 { 1.0 } else { 2.0 };
        frequency.push(k as f64 * sample_rate / n as f64);
        psd.push(a * scale * one_sided);
    }

    Ok(SpectrumEstimate {
        frequency,
        psd,
        dc_psd,
        segment_length: n,
        window: settings.window,
        overlap_fraction: settings.overlap_fraction,
        equivalent_noise_bandwidth: sample_rate * window_power / (window_sum * window_sum),
        segments_averaged: segments,
        sample_rate,
    })
}
