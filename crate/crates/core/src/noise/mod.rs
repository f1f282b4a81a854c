//! Homodyne IQ analysis: calibration, quadrature decomposition, spectra and
//! power-law characterization.
//!
//! The measurement chain maps the resonator response onto a circle in the
//! IQ plane. Calibration fits that circle from mean IQ points taken across
//! the resonance and rotates the frame so the resonance point sits on the
//! positive real axis of the circle frame. Fluctuations of a fixed-drive
//! record then split into a tangential (phase) and a radial (amplitude)
//! quadrature; the phase PSD is the primary observable.

mod psd;
mod synth;

use num_complex::Complex64;
use thiserror::Error;

pub use psd::{estimate_psd, Detrend, PsdSettings, SpectrumEstimate, WindowKind};
pub use synth::{
    power_law_noise, samples_on_circle, seeded_rng, shaped_noise, white_noise,
};

use crate::fit::algebraic_circle_fit;
use crate::resonator::{resonant_frequency, ResonatorError, ResonatorModel};
use crate::squid::{load_inductance, solve_total_flux, FluxState};

#[derive(Debug, Error)]
pub enum NoiseError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("calibration failed: {0}")]
    Calibration(String),
    #[error(transparent)]
    Forward(#[from] ResonatorError),
}

/// Context attached to an IQ record.
#[derive(Debug, Clone, Copy, PartialEq, Default, serde::Serialize, serde::Deserialize)]
pub struct IqMetadata {
    pub carrier_hz: Option<f64>,
    pub power_dbm: Option<f64>,
    /// Applied flux in flux-quantum units.
    pub applied_flux: Option<f64>,
}

/// Two-quadrature homodyne record.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct IqTimeSeries {
    pub i_samples: Vec<f64>,
    pub q_samples: Vec<f64>,
    /// Samples per second (Hz).
    pub sample_rate: f64,
    pub metadata: IqMetadata,
}

impl IqTimeSeries {
    pub fn new(
        i_samples: Vec<f64>,
        q_samples: Vec<f64>,
        sample_rate: f64,
        metadata: IqMetadata,
    ) -> Result<Self, NoiseError> {
        if i_samples.len() != q_samples.len() {
            return Err(NoiseError::InvalidInput(format!(
                "I and Q lengths differ: {} vs {}",
                i_samples.len(),
                q_samples.len()
            )));
        }
        if !(sample_rate > 0.0) {
            return Err(NoiseError::InvalidInput(format!(
                "sample rate must be positive, got {sample_rate}"
            )));
        }
        Ok(Self {
            i_samples,
            q_samples,
            sample_rate,
            metadata,
        })
    }

    pub fn len(&self) -> usize {
        self.i_samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.i_samples.is_empty()
    }

    /// Record duration (s); the length is `round(sample_rate * duration)`.
    pub fn duration(&self) -> f64 {
        self.len() as f64 / self.sample_rate
    }

    pub fn sample(&self, k: usize) -> Complex64 {
        Complex64::new(self.i_samples[k], self.q_samples[k])
    }
}

/// Frame of the measured resonance circle in the IQ plane.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CircleCalibration {
    /// Circle center (V).
    pub center: Complex64,
    /// Circle radius (V).
    pub radius: f64,
    /// Rotation that puts the resonance point on the positive real axis of
    /// the circle frame (rad).
    pub rotation: f64,
    /// Mean IQ point at the resonance drive, projected onto the circle (V).
    pub resonance_point: Complex64,
}

/// Fit the calibration circle from mean IQ points across the resonance.
///
/// `traces` maps drive frequency to the mean transformed IQ voltage. The
/// resonance point is taken as the point farthest from the off-resonant
/// side (the midpoint of the two extreme-frequency points).
pub fn calibrate_iq(traces: &[(f64, Complex64)]) -> Result<CircleCalibration, NoiseError> {
    let mut sorted: Vec<(f64, Complex64)> = traces.to_vec();
    sorted.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite frequencies"));
    sorted.dedup_by(|a, b| a.0 == b.0);
    if sorted.len() < 5 {
        return Err(NoiseError::InsufficientData(format!(
            "calibration needs at least 5 distinct drive frequencies, got {}",
            sorted.len()
        )));
    }
    let points: Vec<Complex64> = sorted.iter().map(|(_, p)| *p).collect();
    let circle =
        algebraic_circle_fit(&points).map_err(|e| NoiseError::Calibration(e.to_string()))?;
    if circle.radius < 3.0 * circle.rms_residual {
        return Err(NoiseError::Calibration(format!(
            "degenerate circle: radius {} below 3x point scatter {}",
            circle.radius, circle.rms_residual
        )));
    }
    let off_estimate = 0.5 * (points[0] + points[points.len() - 1]);
    let resonance_raw = points
        .iter()
        .max_by(|a, b| {
            (*a - off_estimate)
                .norm()
                .partial_cmp(&(*b - off_estimate).norm())
                .expect("finite")
        })
        .copied()
        .expect("non-empty");
    let angle = (resonance_raw - circle.center).arg();
    Ok(CircleCalibration {
        center: circle.center,
        radius: circle.radius,
        rotation: -angle,
        resonance_point: circle.center + Complex64::from_polar(circle.radius, angle),
    })
}

/// Phase and amplitude quadratures of a calibrated record.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureSeries {
    /// Tangential displacement about the circle center, relative to the mean
    /// angle of the record (rad).
    pub phase: Vec<f64>,
    /// Radial displacement normalized by the circle radius.
    pub amplitude: Vec<f64>,
    /// Samples discarded because they fell on the circle center.
    pub excluded: usize,
}

/// Split a record into phase and amplitude quadratures in the circle frame.
pub fn decompose_quadratures(
    series: &IqTimeSeries,
    cal: &CircleCalibration,
) -> Result<QuadratureSeries, NoiseError> {
    if series.is_empty() {
        return Err(NoiseError::InsufficientData("empty IQ record".into()));
    }
    if !(cal.radius > 0.0) {
        return Err(NoiseError::InvalidInput("calibration radius must be positive".into()));
    }
    let rot = Complex64::from_polar(1.0, cal.rotation);
    let tiny = 1e-12 * cal.radius;
    let mut angles = Vec::with_capacity(series.len());
    let mut radii = Vec::with_capacity(series.len());
    let mut excluded = 0usize;
    let mut mean_dir = Complex64::new(0.0, 0.0);
    for k in 0..series.len() {
        let z = (series.sample(k) - cal.center) * rot;
        let r = z.norm();
        if r < tiny {
            excluded += 1;
            continue;
        }
        mean_dir += z / r;
        angles.push(z.arg());
        radii.push(r);
    }
    if angles.is_empty() {
        return Err(NoiseError::InsufficientData(
            "every sample sat on the circle center".into(),
        ));
    }
    let mean_angle = mean_dir.arg();
    let phase = angles
        .iter()
        .map(|a| {
            let mut d = a - mean_angle;
            while d > std::f64::consts::PI {
                d -= 2.0 * std::f64::consts::PI;
            }
            while d < -std::f64::consts::PI {
                d += 2.0 * std::f64::consts::PI;
            }
            d
        })
        .collect();
    let amplitude = radii.iter().map(|r| (r - cal.radius) / cal.radius).collect();
    Ok(QuadratureSeries {
        phase,
        amplitude,
        excluded,
    })
}

/// Power-law fit of a spectrum over a frequency band.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PowerLawFit {
    /// Fitted spectral exponent.
    pub exponent: f64,
    /// PSD extrapolated to 1 Hz (unit^2/Hz).
    pub level_at_1hz: f64,
    /// Standard error of the exponent.
    pub stderr: f64,
    pub bins_used: usize,
    /// Non-positive bins dropped before the log-log fit.
    pub bins_excluded: usize,
}

/// Least-squares line in log-log coordinates over `band`.
pub fn fit_power_law(
    spectrum: &SpectrumEstimate,
    band: (f64, f64),
) -> Result<PowerLawFit, NoiseError> {
    let (lo, hi) = band;
    if !(hi > lo) || !(lo > 0.0) {
        return Err(NoiseError::InvalidInput(format!(
            "band ({lo}, {hi}) must be positive and ordered"
        )));
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut excluded = 0usize;
    for (f, p) in spectrum.frequency.iter().zip(&spectrum.psd) {
        if *f < lo || *f > hi {
            continue;
        }
        if *p > 0.0 {
            xs.push(f.ln());
            ys.push(p.ln());
        } else {
            excluded += 1;
        }
    }
    let n = xs.len();
    if n < 10 {
        return Err(NoiseError::InsufficientData(format!(
            "power-law fit needs at least 10 positive bins in band, found {n}"
        )));
    }
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (x, y) in xs.iter().zip(&ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let mut rss = 0.0;
    for (x, y) in xs.iter().zip(&ys) {
        let r = y - (intercept + slope * x);
        rss += r * r;
    }
    let stderr = if n > 2 {
        (rss / (nf - 2.0) / sxx).sqrt()
    } else {
        f64::NAN
    };
    Ok(PowerLawFit {
        exponent: slope,
        level_at_1hz: intercept.exp(),
        stderr,
        bins_used: n,
        bins_excluded: excluded,
    })
}

/// One spectrum read-out in a power or flux series.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SeriesPoint {
    /// Grouping variable: input power (dBm) or applied flux (flux quanta).
    pub key: f64,
    /// Phase-noise PSD at the evaluation frequency (rad^2/Hz).
    pub s_theta: f64,
}

/// Scaling of the phase noise with drive power.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PowerScaling {
    /// Slope of log S_theta versus log P_in.
    pub exponent: f64,
    pub stderr: f64,
    pub eval_frequency: f64,
    pub points: Vec<SeriesPoint>,
}

/// Read each spectrum at `eval_frequency` and fit the power-law exponent
/// of the noise level versus input power.
pub fn noise_vs_power(
    spectra: &[(f64, SpectrumEstimate)],
    eval_frequency: f64,
) -> Result<PowerScaling, NoiseError> {
    if spectra.len() < 3 {
        return Err(NoiseError::InsufficientData(format!(
            "power scaling needs at least 3 powers, got {}",
            spectra.len()
        )));
    }
    let mut points = Vec::with_capacity(spectra.len());
    for (power_dbm, spec) in spectra {
        points.push(SeriesPoint {
            key: *power_dbm,
            s_theta: spec.value_at(eval_frequency)?,
        });
    }
    let xs: Vec<f64> = points
        .iter()
        .map(|p| crate::constants::dbm_to_watts(p.key).ln())
        .collect();
    let ys: Vec<f64> = points
        .iter()
        .map(|p| {
            if p.s_theta > 0.0 {
                p.s_theta.ln()
            } else {
                f64::NEG_INFINITY
            }
        })
        .collect();
    if ys.iter().any(|y| !y.is_finite()) {
        return Err(NoiseError::InvalidInput(
            "non-positive noise level in power series".into(),
        ));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (x, y) in xs.iter().zip(&ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
    }
    if sxx <= 0.0 {
        return Err(NoiseError::InvalidInput(
            "all powers identical, slope undefined".into(),
        ));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let mut rss = 0.0;
    for (x, y) in xs.iter().zip(&ys) {
        let r = y - (intercept + slope * x);
        rss += r * r;
    }
    let stderr = if xs.len() > 2 {
        (rss / (n - 2.0) / sxx).sqrt()
    } else {
        f64::NAN
    };
    Ok(PowerScaling {
        exponent: slope,
        stderr,
        eval_frequency,
        points,
    })
}

/// Flux dependence (or absence of it) of the phase noise.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FluxIndependence {
    /// Largest over smallest noise level across flux points.
    pub max_relative_spread: f64,
    /// True when the spread stays under the threshold.
    pub independent: bool,
    pub threshold: f64,
    pub eval_frequency: f64,
    pub points: Vec<SeriesPoint>,
}

/// Compare the noise level across applied-flux points.
///
/// Flux independence is declared when max/min stays below `threshold`
/// (conventionally 2, i.e. 3 dB).
pub fn noise_vs_flux(
    spectra: &[(f64, SpectrumEstimate)],
    eval_frequency: f64,
    threshold: f64,
) -> Result<FluxIndependence, NoiseError> {
    if spectra.len() < 3 {
        return Err(NoiseError::InsufficientData(format!(
            "flux comparison needs at least 3 flux points, got {}",
            spectra.len()
        )));
    }
    if !(threshold >= 1.0) {
        return Err(NoiseError::InvalidInput(format!(
            "threshold must be at least 1, got {threshold}"
        )));
    }
    let mut points = Vec::with_capacity(spectra.len());
    for (flux, spec) in spectra {
        points.push(SeriesPoint {
            key: *flux,
            s_theta: spec.value_at(eval_frequency)?,
        });
    }
    let max = points.iter().map(|p| p.s_theta).fold(f64::NEG_INFINITY, f64::max);
    let min = points.iter().map(|p| p.s_theta).fold(f64::INFINITY, f64::min);
    if !(min > 0.0) {
        return Err(NoiseError::InvalidInput(
            "non-positive noise level in flux series".into(),
        ));
    }
    let ratio = max / min;
    Ok(FluxIndependence {
        max_relative_spread: ratio,
        independent: ratio <= threshold,
        threshold,
        eval_frequency,
        points,
    })
}

/// Sensitivity of the resonant frequency to applied flux at an operating
/// point (Hz per flux quantum).
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TransferCoefficient {
    pub hz_per_phi0: f64,
    /// True when a fold forced a one-sided difference.
    pub one_sided: bool,
}

/// Flux step for the transfer-coefficient central difference.
pub const TRANSFER_STEP: f64 = 1.0 / 10_000.0;

/// Numerical df0/dPhi_ext at a stable operating point.
///
/// Central difference continued along the operating branch; when one side
/// folds away (within two steps of a jump) the difference degrades to
/// one-sided and is flagged.
pub fn flux_transfer_coefficient(
    model: &ResonatorModel,
    operating_point: &FluxState,
) -> Result<TransferCoefficient, NoiseError> {
    if !operating_point.stable {
        return Err(NoiseError::InvalidInput(
            "transfer coefficient needs a stable operating point".into(),
        ));
    }
    let band = operating_point.total_flux.round();
    let freq_at = |applied: f64| -> Option<f64> {
        let state = solve_total_flux(&model.squid, applied, operating_point.total_flux).ok()?;
        if !state.stable || state.total_flux.round() != band {
            return None;
        }
        let load = load_inductance(&model.squid, state.total_flux);
        resonant_frequency(model, load).ok()
    };
    let center = operating_point.applied_flux;
    let h = TRANSFER_STEP;
    match (freq_at(center + h), freq_at(center - h)) {
        (Some(fp), Some(fm)) => Ok(TransferCoefficient {
            hz_per_phi0: (fp - fm) / (2.0 * h),
            one_sided: false,
        }),
        (Some(fp), None) => {
            let fc = freq_at(center).ok_or_else(|| {
                NoiseError::InvalidInput("operating point itself does not solve".into())
            })?;
            Ok(TransferCoefficient {
                hz_per_phi0: (fp - fc) / h,
                one_sided: true,
            })
        }
        (None, Some(fm)) => {
            let fc = freq_at(center).ok_or_else(|| {
                NoiseError::InvalidInput("operating point itself does not solve".into())
            })?;
            Ok(TransferCoefficient {
                hz_per_phi0: (fc - fm) / h,
                one_sided: true,
            })
        }
        (None, None) => Err(NoiseError::InvalidInput(
            "no stable solution on either side of the operating point".into(),
        )),
    }
}

/// Convert a phase-noise density to a frequency-noise density,
/// `S_f = S_theta (f0 / 4 Ql)^2` from the small-signal gain of the notch.
pub fn phase_to_frequency_noise(s_theta: f64, f0: f64, ql: f64) -> f64 {
    s_theta * (f0 / (4.0 * ql)).powi(2)
}

/// Convert a frequency-noise density to an equivalent flux-noise density,
/// `S_phi = S_f / (df0/dPhi)^2`. With the resonator's own jitter folded in,
/// this is an upper bound on the intrinsic flux noise of the loop.
pub fn frequency_to_flux_noise(s_f: f64, coeff: &TransferCoefficient) -> f64 {
    s_f / (coeff.hz_per_phi0 * coeff.hz_per_phi0)
}
