//! Forward model of the SQUID-terminated quarter-wave resonator.
//!
//! A lossless line of characteristic impedance Z0 and phase velocity c,
//! terminated by a load Z_L, presents the input impedance
//!
//! ```text
//! Zin(f, Z_L) = Z0 (Z_L + i Z0 tan(2 pi f l / c)) / (Z0 + i Z_L tan(2 pi f l / c))
//! ```
//!
//! With a purely inductive termination `Z_L = i 2 pi f L` the notch
//! resonance sits where the imaginary part of Zin diverges, i.e. where the
//! denominator `Z0 - 2 pi f L tan(2 pi f l / c)` vanishes. The root finder
//! works on the singularity-free form `Z0 cos(theta) - w L sin(theta)`.
//!
//! The same module synthesizes notch-type S21 traces and converts input
//! power to the average photon number in the resonator.

use std::f64::consts::PI;

use num_complex::Complex64;
use thiserror::Error;

use crate::constants::PLANCK;
use crate::cpw::TransmissionLineModel;
use crate::fit::{ComplexSweep, SweepMetadata};
use crate::squid::{
    all_flux_branches, load_inductance, sweep_flux, FluxState, SquidError, SquidParams,
};

/// Bisection width target for the resonance root (Hz). Far tighter than the
/// 1 Hz contract so that numerical flux derivatives stay clean.
const RESONANCE_TOL_HZ: f64 = 1e-3;

#[derive(Debug, Error, PartialEq)]
pub enum ResonatorError {
    #[error("invalid resonator model: {0}")]
    InvalidModel(String),
    #[error("no resonance within 20% of the bare quarter-wave frequency {bare_frequency} Hz for load {load_inductance} H")]
    NoResonanceInWindow {
        load_inductance: f64,
        bare_frequency: f64,
    },
    #[error("domain error: {0}")]
    Domain(String),
    #[error(transparent)]
    Squid(#[from] SquidError),
}

/// Full description of the loaded quarter-wave resonator.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ResonatorModel {
    /// Bare-line per-length parameters.
    pub line: TransmissionLineModel,
    /// Physical length of the resonator section (m).
    pub physical_length: f64,
    /// Flux-dependent termination.
    pub squid: SquidParams,
    /// Coupling quality factor.
    pub coupling_q: f64,
    /// Internal quality factor.
    pub internal_q: f64,
    /// Impedance-mismatch angle of the notch (rad).
    pub mismatch_angle: f64,
    /// Coupling capacitance to the feedline (F); informational only.
    pub coupling_capacitance: f64,
}

impl ResonatorModel {
    pub fn validate(&self) -> Result<(), ResonatorError> {
        if !(self.physical_length > 0.0) || !self.physical_length.is_finite() {
            return Err(ResonatorError::InvalidModel(format!(
                "physical length must be positive, got {}",
                self.physical_length
            )));
        }
        if !(self.coupling_q > 0.0) || !(self.internal_q > 0.0) {
            return Err(ResonatorError::InvalidModel(format!(
                "quality factors must be positive, got Qc = {}, Qi = {}",
                self.coupling_q, self.internal_q
            )));
        }
        if !self.bare_quarter_wave_frequency().is_finite() {
            return Err(ResonatorError::InvalidModel(
                "bare quarter-wave frequency is not finite".into(),
            ));
        }
        Ok(())
    }

    /// Resonant frequency of the unloaded (short-terminated) line, c/4l.
    pub fn bare_quarter_wave_frequency(&self) -> f64 {
        self.line.phase_velocity / (4.0 * self.physical_length)
    }

    /// Loaded quality factor `1/Ql = 1/Qi + cos(phi0)/Qc`.
    ///
    /// The mismatch-angle weighting keeps the synthesizer and the fitter on
    /// one shared formula, so round trips are exact.
    pub fn loaded_q(&self) -> f64 {
        1.0 / (1.0 / self.internal_q + self.mismatch_angle.cos() / self.coupling_q)
    }
}

/// Baseline of a transmission trace: overall amplitude, phase and delay.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SweepBaseline {
    /// Off-resonant amplitude.
    pub amplitude: f64,
    /// Global phase offset (rad).
    pub phase_offset: f64,
    /// Cable delay (s).
    pub cable_delay: f64,
}

impl Default for SweepBaseline {
    fn default() -> Self {
        Self {
            amplitude: 1.0,
            phase_offset: 0.0,
            cable_delay: 0.0,
        }
    }
}

/// Direction of a flux ramp.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum SweepDirection {
    Up,
    Down,
}

/// Resonant frequency versus applied flux, with recorded jump locations.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TuningCurve {
    /// Applied flux per point (flux-quantum units).
    pub applied_flux: Vec<f64>,
    /// Resonant frequency per point (Hz).
    pub resonant_frequency: Vec<f64>,
    /// Flux states behind each point.
    pub states: Vec<FluxState>,
    /// Applied flux of each hysteretic jump.
    pub jump_locations: Vec<f64>,
    pub sweep_direction: SweepDirection,
}

/// Input impedance of the loaded line at `frequency` for an inductive load.
///
/// Evaluated in the cos/sin form, which stays finite across the tangent
/// singularity at odd quarter-wave multiples.
pub fn input_impedance(
    model: &ResonatorModel,
    frequency: f64,
    load_inductance: f64,
) -> Result<Complex64, ResonatorError> {
    if !(frequency > 0.0) {
        return Err(ResonatorError::Domain(format!(
            "frequency must be positive, got {frequency}"
        )));
    }
    let z0 = model.line.characteristic_impedance;
    let theta = 2.0 * PI * frequency * model.physical_length / model.line.phase_velocity;
    let z_load = Complex64::new(0.0, 2.0 * PI * frequency * load_inductance);
    let (sin_t, cos_t) = theta.sin_cos();
    let numerator = z_load * cos_t + Complex64::new(0.0, z0 * sin_t);
    let denominator = Complex64::new(z0 * cos_t, 0.0) + Complex64::new(0.0, sin_t) * z_load;
    Ok(z0 * numerator / denominator)
}

/// Resonant frequency for a fixed load inductance.
///
/// Root of `Z0 cos(theta) - 2 pi f L sin(theta)` nearest the bare
/// quarter-wave frequency, bracketed within +-20% and refined by bisection
/// to well below 1 Hz.
pub fn resonant_frequency(
    model: &ResonatorModel,
    load_inductance: f64,
) -> Result<f64, ResonatorError> {
    model.validate()?;
    if load_inductance < 0.0 {
        return Err(ResonatorError::Domain(format!(
            "load inductance must be non-negative, got {load_inductance}"
        )));
    }
    let bare = model.bare_quarter_wave_frequency();
    let z0 = model.line.characteristic_impedance;
    let v = model.line.phase_velocity;
    let l = model.physical_length;
    let condition = |f: f64| {
        let theta = 2.0 * PI * f * l / v;
        let (sin_t, cos_t) = theta.sin_cos();
        z0 * cos_t - 2.0 * PI * f * load_inductance * sin_t
    };
    let mut lo = 0.8 * bare;
    let mut hi = 1.2 * bare;
    let mut q_lo = condition(lo);
    let q_hi = condition(hi);
    if q_lo == 0.0 {
        return Ok(lo);
    }
    if q_lo * q_hi > 0.0 {
        return Err(ResonatorError::NoResonanceInWindow {
            load_inductance,
            bare_frequency: bare,
        });
    }
    while hi - lo > RESONANCE_TOL_HZ {
        let mid = 0.5 * (lo + hi);
        let q_mid = condition(mid);
        if q_mid == 0.0 {
            return Ok(mid);
        }
        if q_lo * q_mid < 0.0 {
            hi = mid;
        } else {
            lo = mid;
            q_lo = q_mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Resonant frequency at a solved flux state.
pub fn load_resonant_frequency(
    model: &ResonatorModel,
    state: &FluxState,
) -> Result<f64, ResonatorError> {
    resonant_frequency(model, load_inductance(&model.squid, state.total_flux))
}

/// Stable flux state closest to the naive (unscreened) guess at `applied`.
pub fn initial_flux_state(
    params: &SquidParams,
    applied_flux: f64,
) -> Result<FluxState, ResonatorError> {
    let window = (applied_flux - 1.5, applied_flux + 1.5);
    let states = all_flux_branches(params, applied_flux, window)?;
    states
        .into_iter()
        .filter(|s| s.stable)
        .min_by(|a, b| {
            let da = (a.total_flux - applied_flux).abs();
            let db = (b.total_flux - applied_flux).abs();
            da.partial_cmp(&db).expect("finite")
        })
        .ok_or(ResonatorError::Squid(SquidError::NoStableRoot {
            applied_flux,
        }))
}

/// Resonant frequency along an applied-flux ramp, with branch continuation.
pub fn tuning_curve(model: &ResonatorModel, flux_ramp: &[f64]) -> Result<TuningCurve, ResonatorError> {
    model.validate()?;
    let direction = match (flux_ramp.first(), flux_ramp.last()) {
        (Some(first), Some(last)) if last < first => SweepDirection::Down,
        _ => SweepDirection::Up,
    };
    if flux_ramp.is_empty() {
        return Ok(TuningCurve {
            applied_flux: Vec::new(),
            resonant_frequency: Vec::new(),
            states: Vec::new(),
            jump_locations: Vec::new(),
            sweep_direction: direction,
        });
    }
    let start = initial_flux_state(&model.squid, flux_ramp[0])?;
    let sweep = sweep_flux(&model.squid, flux_ramp, start)?;
    let mut freqs = Vec::with_capacity(sweep.states.len());
    for state in &sweep.states {
        let load = load_inductance(&model.squid, state.total_flux);
        freqs.push(resonant_frequency(model, load)?);
    }
    Ok(TuningCurve {
        applied_flux: flux_ramp.to_vec(),
        resonant_frequency: freqs,
        states: sweep.states,
        jump_locations: sweep.jumps.iter().map(|j| j.applied_flux).collect(),
        sweep_direction: direction,
    })
}

/// Notch-type S21 trace of the resonator.
///
/// ```text
/// S21(f) = a e^{i(alpha - 2 pi f tau)} [1 - (Ql/Qc) e^{i phi0} / (1 + 2i Ql (f/f0 - 1))]
/// ```
///
/// with `Ql` from [`ResonatorModel::loaded_q`].
pub fn synthesize_s21(
    model: &ResonatorModel,
    frequencies: &[f64],
    f0: f64,
    baseline: &SweepBaseline,
) -> Result<ComplexSweep, ResonatorError> {
    model.validate()?;
    if !(f0 > 0.0) {
        return Err(ResonatorError::Domain(format!(
            "resonant frequency must be positive, got {f0}"
        )));
    }
    let ql = model.loaded_q();
    if !(ql > 0.0) || !ql.is_finite() {
        return Err(ResonatorError::InvalidModel(format!(
            "loaded Q = {ql} is not usable"
        )));
    }
    let depth = ql / model.coupling_q;
    let dip = Complex64::from_polar(depth, model.mismatch_angle);
    let s21: Vec<Complex64> = frequencies
        .iter()
        .map(|&f| {
            let detuning = Complex64::new(1.0, 2.0 * ql * (f / f0 - 1.0));
            let envelope = Complex64::from_polar(
                baseline.amplitude,
                baseline.phase_offset - 2.0 * PI * f * baseline.cable_delay,
            );
            envelope * (Complex64::new(1.0, 0.0) - dip / detuning)
        })
        .collect();
    ComplexSweep::new(frequencies.to_vec(), s21, SweepMetadata::default())
        .map_err(|e| ResonatorError::Domain(e.to_string()))
}

/// Full chain from a flux state to a synthesized S21 sweep.
pub fn s21_response_at_flux(
    model: &ResonatorModel,
    flux_state: &FluxState,
    frequencies: &[f64],
    baseline: &SweepBaseline,
) -> Result<ComplexSweep, ResonatorError> {
    let load = load_inductance(&model.squid, flux_state.total_flux);
    let f0 = resonant_frequency(model, load)?;
    let mut sweep = synthesize_s21(model, frequencies, f0, baseline)?;
    sweep.metadata.applied_flux = Some(flux_state.applied_flux);
    Ok(sweep)
}

/// Line length that puts the loaded resonance at `target_f0` for load `l0`.
///
/// Closed form from the resonance condition:
/// `l = c atan(Z0 / (2 pi f0 L)) / (2 pi f0)`.
pub fn calibrate_length(
    line: &TransmissionLineModel,
    load_inductance: f64,
    target_f0: f64,
) -> Result<f64, ResonatorError> {
    if !(target_f0 > 0.0) || load_inductance < 0.0 {
        return Err(ResonatorError::Domain(format!(
            "need positive target frequency and non-negative load, got {target_f0}, {load_inductance}"
        )));
    }
    let omega = 2.0 * PI * target_f0;
    let theta = if load_inductance == 0.0 {
        0.5 * PI
    } else {
        (line.characteristic_impedance / (omega * load_inductance)).atan()
    };
    Ok(line.phase_velocity * theta / omega)
}

/// How the printed photon-number expression is read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
pub enum PhotonNumberConvention {
    /// `(2/pi) P / (h f0^2 (Qi^-1 + Qc^-1)^2 Qc^2)`;
    /// grows with quality factor, consistent with the stored-energy
    /// definition `<n> = <E_int>/(h f0)`.
    #[default]
    EnergyConsistent,
    /// `(2/pi) (Qi^-1 + Qc^-1)^2 / Qc^2 * P / (h f0^2)`, kept for
    /// cross-checks against the literal handbook layout.
    AsPrinted,
}

/// Average photon number in the resonator for a given input power (W).
pub fn photon_number(
    f0: f64,
    qi: f64,
    qc: f64,
    input_power: f64,
    convention: PhotonNumberConvention,
) -> Result<f64, ResonatorError> {
    if !(f0 > 0.0 && qi > 0.0 && qc > 0.0 && input_power > 0.0) {
        return Err(ResonatorError::Domain(format!(
            "photon number needs positive inputs, got f0 = {f0}, Qi = {qi}, Qc = {qc}, P = {input_power}"
        )));
    }
    let inv_sum = 1.0 / qi + 1.0 / qc;
    let scale = 2.0 / PI * input_power / (PLANCK * f0 * f0);
    Ok(match convention {
        PhotonNumberConvention::EnergyConsistent => scale / (inv_sum * inv_sum * qc * qc),
        PhotonNumberConvention::AsPrinted => scale * inv_sum * inv_sum / (qc * qc),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cpw::{compute_line_params, CpwGeometry};

    fn device_line() -> TransmissionLineModel {
        let geom = CpwGeometry::new(10e-6, 5.64e-6, 150e-9, 11.45, 5.3e-3).unwrap();
        compute_line_params(&geom).unwrap()
    }

    fn device_model() -> ResonatorModel {
        let line = device_line();
        let squid = SquidParams::symmetric(1.55e-12, 320e-6).unwrap();
        let l0 = load_inductance(&squid, 0.0);
        let length = calibrate_length(&line, l0, 5.6513e9).unwrap();
        ResonatorModel {
            line,
            physical_length: length,
            squid,
            coupling_q: 1.41e5,
            internal_q: 1.41e5,
            mismatch_angle: 0.0,
            coupling_capacitance: 0.7e-15,
        }
    }

    #[test]
    fn short_termination_is_quarter_wave() {
        let model = device_model();
        let bare = model.bare_quarter_wave_frequency();
        let f0 = resonant_frequency(&model, 0.0).unwrap();
        assert!((f0 - bare).abs() < 1.0, "f0 = {f0}, bare = {bare}");
    }

    #[test]
    fn inductive_loading_lowers_frequency() {
        let model = device_model();
        let bare = model.bare_quarter_wave_frequency();
        let mut prev = bare + 1.0;
        for i in 0..20 {
            let load = 1e-13 * (1 + i) as f64;
            let f0 = resonant_frequency(&model, load).unwrap();
            assert!(f0 < prev, "f0({load}) = {f0} not below {prev}");
            prev = f0;
        }
    }

    #[test]
    fn calibrated_model_hits_target_frequency() {
        let model = device_model();
        let l0 = load_inductance(&model.squid, 0.0);
        let f0 = resonant_frequency(&model, l0).unwrap();
        assert!((f0 - 5.6513e9).abs() < 1.0, "f0 = {f0}");
    }

    #[test]
    fn short_circuit_impedance_matches_tangent_form() {
        let model = device_model();
        let z0 = model.line.characteristic_impedance;
        let l = model.physical_length;
        let v = model.line.phase_velocity;
        for &f in &[1e9, 3e9, 5e9] {
            let zin = input_impedance(&model, f, 0.0).unwrap();
            let theta = 2.0 * PI * f * l / v;
            assert!((zin.re).abs() < 1e-9);
            assert!(
                (zin.im - z0 * theta.tan()).abs() < 1e-6 * zin.im.abs().max(1.0),
                "Zin = {zin} at {f}"
            );
        }
    }

    #[test]
    fn huge_load_approaches_open_circuit() {
        let model = device_model();
        let z0 = model.line.characteristic_impedance;
        let l = model.physical_length;
        let v = model.line.phase_velocity;
        let f = 2.3e9;
        let zin = input_impedance(&model, f, 1e3).unwrap();
        let theta = 2.0 * PI * f * l / v;
        let expected = -z0 / theta.tan();
        assert!(
            (zin.im - expected).abs() < 1e-3 * expected.abs(),
            "Zin = {zin}, open-circuit limit {expected}"
        );
    }

    #[test]
    fn impedance_rejects_nonpositive_frequency() {
        let model = device_model();
        assert!(input_impedance(&model, 0.0, 1e-12).is_err());
        assert!(input_impedance(&model, -1e9, 1e-12).is_err());
    }

    #[test]
    fn empty_ramp_gives_empty_curve() {
        let model = device_model();
        let curve = tuning_curve(&model, &[]).unwrap();
        assert!(curve.applied_flux.is_empty());
        assert!(curve.resonant_frequency.is_empty());
        assert!(curve.jump_locations.is_empty());
    }

    #[test]
    fn tuning_curve_jumps_at_critical_flux() {
        let model = device_model();
        let ramp: Vec<f64> = (0..=2000).map(|i| i as f64 / 2000.0).collect();
        let curve = tuning_curve(&model, &ramp).unwrap();
        assert_eq!(curve.jump_locations.len(), 1);
        let expected = crate::squid::critical_applied_flux(&model.squid).unwrap();
        assert!(
            (curve.jump_locations[0] - expected).abs() <= crate::squid::GRID_STEP,
            "jump at {}",
            curve.jump_locations[0]
        );
        assert_eq!(curve.sweep_direction, SweepDirection::Up);
    }

    #[test]
    fn tuning_curve_monotone_between_jumps() {
        let model = device_model();
        let ramp: Vec<f64> = (0..=800).map(|i| i as f64 / 800.0).collect();
        let curve = tuning_curve(&model, &ramp).unwrap();
        let jump = curve.jump_locations[0];
        let mut segments: Vec<Vec<f64>> = vec![Vec::new(), Vec::new()];
        for (phi, f) in curve.applied_flux.iter().zip(&curve.resonant_frequency) {
            segments[usize::from(*phi >= jump)].push(*f);
        }
        for seg in &segments {
            let increasing = seg.windows(2).all(|w| w[1] >= w[0]);
            let decreasing = seg.windows(2).all(|w| w[1] <= w[0]);
            assert!(increasing || decreasing, "segment not monotone");
        }
    }

    #[test]
    fn s21_on_resonance_depth() {
        let mut model = device_model();
        model.mismatch_angle = 0.0;
        let ql = model.loaded_q();
        let sweep = synthesize_s21(&model, &[5.6513e9], 5.6513e9, &SweepBaseline::default()).unwrap();
        let expected = 1.0 - ql / model.coupling_q;
        assert!((sweep.s21[0].re - expected).abs() < 1e-12);
        assert!(sweep.s21[0].im.abs() < 1e-12);
    }

    #[test]
    fn s21_off_resonance_baseline() {
        let model = device_model();
        let f0 = 5.6513e9;
        let far = f0 * (1.0 + 1000.0 / model.loaded_q());
        let baseline = SweepBaseline {
            amplitude: 0.7,
            phase_offset: 0.3,
            cable_delay: 0.0,
        };
        let sweep = synthesize_s21(&model, &[far], f0, &baseline).unwrap();
        assert!(
            (sweep.s21[0].norm() - 0.7).abs() < 1e-3,
            "baseline magnitude {}",
            sweep.s21[0].norm()
        );
    }

    #[test]
    fn equal_loads_give_identical_sweeps() {
        let model = device_model();
        let freqs: Vec<f64> = (0..101).map(|i| 5.650e9 + 2.0e3 * i as f64).collect();
        let a = FluxState {
            applied_flux: 0.2,
            total_flux: 0.25,
            branch_index: 0,
            stable: true,
        };
        let b = FluxState {
            applied_flux: -0.2,
            total_flux: -0.25,
            branch_index: 0,
            stable: true,
        };
        // Load inductance is even in total flux, so these two states load the
        // line identically.
        let sa = s21_response_at_flux(&model, &a, &freqs, &SweepBaseline::default()).unwrap();
        let sb = s21_response_at_flux(&model, &b, &freqs, &SweepBaseline::default()).unwrap();
        for (x, y) in sa.s21.iter().zip(&sb.s21) {
            assert_eq!(x.re.to_bits(), y.re.to_bits());
            assert_eq!(x.im.to_bits(), y.im.to_bits());
        }
    }

    #[test]
    fn half_flux_resonance_reflects_shunt_arm_only() {
        let model = device_model();
        let state = FluxState {
            applied_flux: 0.5,
            total_flux: 0.5,
            branch_index: 0,
            stable: true,
        };
        let load = load_inductance(&model.squid, state.total_flux);
        assert_eq!(load, model.squid.shunt_arm_inductance);
        let f_half = resonant_frequency(&model, load).unwrap();
        let f_zero = resonant_frequency(&model, load_inductance(&model.squid, 0.0)).unwrap();
        assert!(f_half < f_zero);
    }

    #[test]
    fn photon_number_linear_in_power() {
        let n1 = photon_number(5.6513e9, 1.41e5, 1e5, 1e-11, PhotonNumberConvention::default())
            .unwrap();
        let n2 = photon_number(5.6513e9, 1.41e5, 1e5, 2e-11, PhotonNumberConvention::default())
            .unwrap();
        assert!((n2 / n1 - 2.0).abs() < 1e-12);
    }

    #[test]
    fn photon_number_qi_limit_depends_only_on_qc() {
        let huge = photon_number(5e9, 1e15, 2e4, 1e-12, PhotonNumberConvention::default()).unwrap();
        // Qi -> infinity collapses the quality-factor weight to 1/Qc^... the
        // combination (Qc * (1/Qi + 1/Qc))^2 -> 1.
        let expected = 2.0 / PI * 1e-12 / (PLANCK * 5e9 * 5e9);
        assert!((huge - expected).abs() / expected < 1e-9, "n = {huge}");
    }

    #[test]
    fn photon_number_scales_inverse_square_frequency() {
        let conv = PhotonNumberConvention::default();
        let n1 = photon_number(4e9, 1e5, 1e5, 1e-11, conv).unwrap();
        let n2 = photon_number(8e9, 1e5, 1e5, 1e-11, conv).unwrap();
        assert!((n1 / n2 - 4.0).abs() < 1e-12);
    }

    #[test]
    fn photon_number_rejects_nonpositive_inputs() {
        let conv = PhotonNumberConvention::default();
        assert!(photon_number(0.0, 1e5, 1e5, 1e-11, conv).is_err());
        assert!(photon_number(5e9, -1.0, 1e5, 1e-11, conv).is_err());
        assert!(photon_number(5e9, 1e5, 1e5, 0.0, conv).is_err());
    }
}
