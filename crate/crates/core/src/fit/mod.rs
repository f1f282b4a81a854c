//! Inverse problems: resonance-circle fits of S21 sweeps and model fits of
//! flux-tuning curves.
//!
//! The resonance fit canonicalizes a measured sweep in stages (cable-delay
//! estimate from the off-resonant wings, algebraic circle fit, phase-versus-
//! frequency fit about the circle center) and then polishes every parameter
//! with one full-model least-squares pass on the complex data. Synthesis and
//! extraction share the notch formula
//!
//! ```text
//! S21(f) = a e^{i(alpha - 2 pi f tau)} [1 - d e^{i phi0} / (1 + 2i Ql (f/f0 - 1))]
//! ```
//!
//! with `d = Ql/Qc` and `1/Ql = 1/Qi + cos(phi0)/Qc`, so noiseless round
//! trips are exact.
//!
//! The tuning fit extracts the screening parameter, arm split and flux-axis
//! calibration from a measured frequency-versus-flux curve. An observed
//! hysteretic jump pins the screening parameter exactly through the inverse
//! of the critical-flux map; without a jump at least one full period of data
//! is required.

mod circle;
mod least_squares;

use std::f64::consts::PI;

use num_complex::Complex64;
use thiserror::Error;

pub use circle::{algebraic_circle_fit, CircleFit};
pub use least_squares::{levenberg_marquardt, LsOptions, LsReport, StopReason};

use crate::constants::PHI0;
use crate::resonator::{
    calibrate_length, tuning_curve, ResonatorError, ResonatorModel, SweepDirection, TuningCurve,
};
use crate::squid::{beta_for_critical_flux, beta_l, load_inductance, SquidParams};

#[derive(Debug, Error)]
pub enum FitError {
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),
    #[error("fit did not converge: {0}")]
    NonConvergent(String),
    #[error("unphysical result: {0}")]
    Unphysical(String),
    #[error("parameters not identifiable: {0}")]
    Unidentifiable(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Forward(#[from] ResonatorError),
}

/// Optional context attached to a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Default, serde::Serialize, serde::Deserialize)]
pub struct SweepMetadata {
    pub power_dbm: Option<f64>,
    pub temperature_k: Option<f64>,
    /// Applied flux in flux-quantum units.
    pub applied_flux: Option<f64>,
}

/// Frequency-indexed complex transmission trace.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ComplexSweep {
    /// Strictly increasing frequencies (Hz).
    pub frequency: Vec<f64>,
    /// Complex S21 per frequency.
    pub s21: Vec<Complex64>,
    pub metadata: SweepMetadata,
}

impl ComplexSweep {
    pub fn new(
        frequency: Vec<f64>,
        s21: Vec<Complex64>,
        metadata: SweepMetadata,
    ) -> Result<Self, FitError> {
        if frequency.len() != s21.len() {
            return Err(FitError::InvalidInput(format!(
                "frequency and S21 lengths differ: {} vs {}",
                frequency.len(),
                s21.len()
            )));
        }
        if frequency.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(FitError::InvalidInput(
                "frequencies must be strictly increasing".into(),
            ));
        }
        if frequency.iter().any(|f| !f.is_finite())
            || s21.iter().any(|z| !z.re.is_finite() || !z.im.is_finite())
        {
            return Err(FitError::InvalidInput("non-finite sample in sweep".into()));
        }
        Ok(Self {
            frequency,
            s21,
            metadata,
        })
    }

    pub fn len(&self) -> usize {
        self.frequency.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frequency.is_empty()
    }

    pub fn span(&self) -> f64 {
        match (self.frequency.first(), self.frequency.last()) {
            (Some(a), Some(b)) => b - a,
            _ => 0.0,
        }
    }
}

/// Which coupling convention converts the circle diameter into Qi.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
pub enum QFactorConvention {
    /// `1/Qi = 1/Ql - cos(phi0)/Qc`; the mismatch angle rescales the
    /// coupling before it is subtracted.
    #[default]
    DiameterCorrected,
    /// `1/Qi = 1/Ql - 1/Qc`, ignoring the mismatch angle.
    AbsoluteQc,
}

#[derive(Debug, Clone)]
pub struct ResonanceFitOptions {
    /// Fraction of points on each side treated as off-resonant wings.
    pub wing_fraction: f64,
    pub q_convention: QFactorConvention,
    pub ls: LsOptions,
}

impl Default for ResonanceFitOptions {
    fn default() -> Self {
        Self {
            wing_fraction: 0.2,
            q_convention: QFactorConvention::default(),
            ls: LsOptions::default(),
        }
    }
}

/// Standard errors for the fitted resonance parameters.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ResonanceUncertainties {
    pub f0: f64,
    pub qi: f64,
    pub qc: f64,
    pub ql: f64,
    pub mismatch_angle: f64,
    pub cable_delay: f64,
    pub amplitude: f64,
    pub phase_offset: f64,
}

/// Result of a notch resonance fit.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ResonanceFit {
    pub f0: f64,
    pub qi: f64,
    pub qc: f64,
    pub ql: f64,
    pub mismatch_angle: f64,
    pub cable_delay: f64,
    pub amplitude: f64,
    pub phase_offset: f64,
    pub uncertainties: Option<ResonanceUncertainties>,
    /// RMS of the complex residuals at the optimum.
    pub rms_residual: f64,
    /// Sweep span in fitted linewidths; below 5 the wings are unreliable.
    pub span_linewidths: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn unwrap_phases(phases: &mut [f64]) {
    for i in 1..phases.len() {
        let mut d = phases[i] - phases[i - 1];
        while d > PI {
            phases[i] -= 2.0 * PI;
            d = phases[i] - phases[i - 1];
        }
        while d < -PI {
            phases[i] += 2.0 * PI;
            d = phases[i] - phases[i - 1];
        }
    }
}

/// Linear fit y = b0 + b1 x over the given indices.
fn line_fit(xs: &[f64], ys: &[f64], idx: &[usize]) -> (f64, f64) {
    let n = idx.len() as f64;
    let mx = idx.iter().map(|&i| xs[i]).sum::<f64>() / n;
    let my = idx.iter().map(|&i| ys[i]).sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for &i in idx {
        let dx = xs[i] - mx;
        sxx += dx * dx;
        sxy += dx * (ys[i] - my);
    }
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    (my - slope * mx, slope)
}

/// Estimate the cable delay from the off-resonant wings and unwind it.
///
/// Fits a straight line to the unwrapped phase of the outer
/// `wing_fraction` of points on each side and returns the corrected sweep
/// together with the delay. The estimate carries a small bias from the
/// resonance tails that shrinks quadratically with sweep span; the full
/// resonance fit refines it.
pub fn remove_cable_delay(sweep: &ComplexSweep) -> Result<(ComplexSweep, f64), FitError> {
    remove_cable_delay_with(sweep, 0.2)
}

pub fn remove_cable_delay_with(
    sweep: &ComplexSweep,
    wing_fraction: f64,
) -> Result<(ComplexSweep, f64), FitError> {
    if !(wing_fraction > 0.0 && wing_fraction <= 0.5) {
        return Err(FitError::InvalidInput(format!(
            "wing fraction must lie in (0, 0.5], got {wing_fraction}"
        )));
    }
    let n = sweep.len();
    let wing = ((n as f64) * wing_fraction).floor() as usize;
    if 2 * wing < 8 {
        return Err(FitError::InsufficientData(format!(
            "need at least 8 wing points for the delay estimate, got {}",
            2 * wing
        )));
    }
    let mut phases: Vec<f64> = sweep.s21.iter().map(|z| z.arg()).collect();
    unwrap_phases(&mut phases);
    let idx: Vec<usize> = (0..wing).chain(n - wing..n).collect();
    let (_, slope) = line_fit(&sweep.frequency, &phases, &idx);
    let tau = -slope / (2.0 * PI);
    let corrected: Vec<Complex64> = sweep
        .frequency
        .iter()
        .zip(&sweep.s21)
        .map(|(&f, z)| z * Complex64::from_polar(1.0, 2.0 * PI * f * tau))
        .collect();
    let out = ComplexSweep::new(sweep.frequency.clone(), corrected, sweep.metadata)?;
    Ok((out, tau))
}

fn wrap_angle(a: f64) -> f64 {
    let mut x = a.rem_euclid(2.0 * PI);
    if x > PI {
        x -= 2.0 * PI;
    }
    x
}

/// Notch model with the delay phase referenced to the band center.
///
/// An absolute delay phase `-2 pi f tau` makes the cost periodic in tau
/// with period 1/f (a comb of local minima a fraction of a nanosecond
/// apart); referencing to `f - f_center` leaves a single smooth basin, and
/// the center phase folds into the offset parameter.
fn notch_model(f: f64, f_center: f64, p: &[f64; 7]) -> Complex64 {
    let [f0, ql, depth, phi0, amp, alpha_c, tau] = *p;
    let env = Complex64::from_polar(amp, alpha_c - 2.0 * PI * (f - f_center) * tau);
    let det = Complex64::new(1.0, 2.0 * ql * (f / f0 - 1.0));
    env * (Complex64::new(1.0, 0.0) - Complex64::from_polar(depth, phi0) / det)
}

/// Extract resonance parameters from a notch-type S21 sweep.
pub fn fit_resonance(sweep: &ComplexSweep) -> Result<ResonanceFit, FitError> {
    fit_resonance_with(sweep, &ResonanceFitOptions::default())
}

pub fn fit_resonance_with(
    sweep: &ComplexSweep,
    options: &ResonanceFitOptions,
) -> Result<ResonanceFit, FitError> {
    let n = sweep.len();
    if n < 16 {
        return Err(FitError::InsufficientData(format!(
            "resonance fit needs at least 16 points, got {n}"
        )));
    }

    // Stage 1: wing delay estimate.
    let (corrected, tau0) = remove_cable_delay_with(sweep, options.wing_fraction)?;

    // Stage 2: resonance circle.
    let circle = algebraic_circle_fit(&corrected.s21)?;
    if circle.radius < 3.0 * circle.rms_residual {
        return Err(FitError::DegenerateGeometry(format!(
            "no resonance above the noise: radius {} vs scatter {}",
            circle.radius, circle.rms_residual
        )));
    }

    // Stage 3: phase-versus-frequency fit about the circle center.
    let wing = ((n as f64) * options.wing_fraction).floor() as usize;
    let off_guess = {
        let mut acc = Complex64::new(0.0, 0.0);
        for i in (0..wing).chain(n - wing..n) {
            acc += corrected.s21[i];
        }
        acc / (2 * wing) as f64
    };
    let excursion: Vec<f64> = corrected
        .s21
        .iter()
        .map(|z| (z - off_guess).norm())
        .collect();
    let peak = excursion
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).expect("finite"))
        .map(|(i, _)| i)
        .unwrap_or(n / 2);
    let f0_init = corrected.frequency[peak];
    let half = 0.5 * excursion[peak];
    let lo_cross = (0..peak).rev().find(|&i| excursion[i] < half);
    let hi_cross = (peak..n).find(|&i| excursion[i] < half);
    let ql_init = match (lo_cross, hi_cross) {
        (Some(lo), Some(hi)) if corrected.frequency[hi] > corrected.frequency[lo] => {
            (f0_init / (corrected.frequency[hi] - corrected.frequency[lo])).clamp(2.0, 1e9)
        }
        _ => (4.0 * f0_init / corrected.span()).clamp(2.0, 1e9),
    };

    let mut thetas: Vec<f64> = corrected
        .s21
        .iter()
        .map(|z| (z - circle.center).arg())
        .collect();
    unwrap_phases(&mut thetas);
    let theta0_init = thetas[peak];
    let freqs = corrected.frequency.clone();
    let phase_residuals = |p: &[f64]| -> Result<Vec<f64>, String> {
        let (theta0, ql, f0) = (p[0], p[1], p[2]);
        Ok(freqs
            .iter()
            .zip(&thetas)
            .map(|(&f, &th)| theta0 + 2.0 * (2.0 * ql * (1.0 - f / f0)).atan() - th)
            .collect())
    };
    let span = corrected.span();
    let phase_report = levenberg_marquardt(
        phase_residuals,
        &[theta0_init, ql_init, f0_init],
        &[1e-8, (ql_init * 1e-7).max(1e-4), (span * 1e-9).max(1e-4)],
        Some(&[
            (f64::NEG_INFINITY, f64::INFINITY),
            (1.0, 1e12),
            (freqs[0] - span, freqs[n - 1] + span),
        ]),
        &options.ls,
    )
    .map_err(FitError::NonConvergent)?;
    let [theta0, ql1, f01] = [
        phase_report.params[0],
        phase_report.params[1],
        phase_report.params[2],
    ];

    // Stage 4: geometry of the canonical frame.
    let off_point = circle.center - Complex64::from_polar(circle.radius, theta0);
    let amp0 = off_point.norm();
    if amp0 < 1e-300 {
        return Err(FitError::DegenerateGeometry(
            "off-resonant point at the origin".into(),
        ));
    }
    let alpha0 = off_point.arg();
    let depth0 = (2.0 * circle.radius / amp0).min(1.999);
    let phi0_0 = wrap_angle(theta0 - PI - alpha0);

    // Stage 5: full-model refinement on the raw complex data.
    let raw_freqs = sweep.frequency.clone();
    let raw_s21 = sweep.s21.clone();
    let f_center = 0.5 * (raw_freqs[0] + raw_freqs[n - 1]);
    let full_residuals = |p: &[f64]| -> Result<Vec<f64>, String> {
        let arr = [p[0], p[1], p[2], p[3], p[4], p[5], p[6]];
        let mut out = Vec::with_capacity(2 * raw_freqs.len());
        for (f, z) in raw_freqs.iter().zip(&raw_s21) {
            let m = notch_model(*f, f_center, &arr);
            out.push(m.re - z.re);
            out.push(m.im - z.im);
        }
        Ok(out)
    };
    let linewidth = (f01 / ql1).max(1e-6);
    // The wing estimate already took out the center phase of the delay, so
    // the center-referenced offset starts at the corrected-frame angle minus
    // the center rotation of tau0.
    let alpha_c0 = wrap_angle(alpha0 - 2.0 * PI * f_center * tau0);
    let p0 = [f01, ql1, depth0, phi0_0, amp0, alpha_c0, tau0];
    let steps = [
        linewidth * 1e-5,
        (ql1 * 1e-6).max(1e-3),
        1e-8,
        1e-8,
        (amp0 * 1e-7).max(1e-10),
        1e-8,
        1e-12,
    ];
    let bounds = [
        (raw_freqs[0] - span, raw_freqs[n - 1] + span),
        (1.0, 1e12),
        (1e-9, 1.999_999),
        (-PI, PI),
        (1e-12, f64::INFINITY),
        (f64::NEG_INFINITY, f64::INFINITY),
        (-1e-3, 1e-3),
    ];
    let report = levenberg_marquardt(full_residuals, &p0, &steps, Some(&bounds), &options.ls)
        .map_err(FitError::NonConvergent)?;
    if !report.converged {
        return Err(FitError::NonConvergent(format!(
            "full-model refinement stopped after {} iterations ({:?}), rms {}",
            report.iterations, report.stop, report.rms_residual
        )));
    }
    let [f0, ql, depth, phi0, amp, alpha_c, tau] = [
        report.params[0],
        report.params[1],
        report.params[2],
        report.params[3],
        report.params[4],
        report.params[5],
        report.params[6],
    ];
    let alpha = alpha_c + 2.0 * PI * f_center * tau;
    if f0 < raw_freqs[0] || f0 > raw_freqs[n - 1] {
        return Err(FitError::Unphysical(format!(
            "fitted resonance {f0} Hz lies outside the sweep"
        )));
    }

    let qc = ql / depth;
    let internal_weight = match options.q_convention {
        QFactorConvention::DiameterCorrected => 1.0 - depth * phi0.cos(),
        QFactorConvention::AbsoluteQc => 1.0 - depth,
    };
    if internal_weight <= 0.0 {
        return Err(FitError::Unphysical(format!(
            "extracted internal loss is non-positive (1 - d cos(phi0) = {internal_weight})"
        )));
    }
    let qi = ql / internal_weight;

    let uncertainties = report.covariance.as_ref().map(|cov| {
        let np = 7;
        let var = |i: usize| cov[i * np + i].max(0.0);
        // Qc = Ql/d and Qi = Ql/(1 - d cos phi0): first-order propagation
        // through the (Ql, d, phi0) block of the covariance.
        let g_qc = [1.0 / depth, -ql / (depth * depth)];
        let idx_qc = [1usize, 2usize];
        let mut var_qc = 0.0;
        for (a, &ia) in g_qc.iter().zip(&idx_qc) {
            for (b, &ib) in g_qc.iter().zip(&idx_qc) {
                var_qc += a * b * cov[ia * np + ib];
            }
        }
        let w = internal_weight;
        let g_qi = [
            1.0 / w,
            ql * phi0.cos() / (w * w),
            -ql * depth * phi0.sin() / (w * w),
        ];
        let idx_qi = [1usize, 2usize, 3usize];
        let mut var_qi = 0.0;
        for (a, &ia) in g_qi.iter().zip(&idx_qi) {
            for (b, &ib) in g_qi.iter().zip(&idx_qi) {
                var_qi += a * b * cov[ia * np + ib];
            }
        }
        // phase_offset = alpha_c + 2 pi f_center tau, so its variance picks
        // up the delay variance and the cross term.
        let wc = 2.0 * PI * f_center;
        let var_alpha =
            var(5) + wc * wc * var(6) + 2.0 * wc * cov[5 * np + 6];
        ResonanceUncertainties {
            f0: var(0).sqrt(),
            qi: var_qi.max(0.0).sqrt(),
            qc: var_qc.max(0.0).sqrt(),
            ql: var(1).sqrt(),
            mismatch_angle: var(3).sqrt(),
            cable_delay: var(6).sqrt(),
            amplitude: var(4).sqrt(),
            phase_offset: var_alpha.max(0.0).sqrt(),
        }
    });

    Ok(ResonanceFit {
        f0,
        qi,
        qc,
        ql,
        mismatch_angle: phi0,
        cable_delay: tau,
        amplitude: amp,
        phase_offset: wrap_angle(alpha),
        uncertainties,
        rms_residual: report.rms_residual,
        span_linewidths: span / (f0 / ql),
        iterations: report.iterations,
        converged: report.converged,
    })
}

/// Options for the tuning-curve fit.
#[derive(Debug, Clone, Default)]
pub struct TuningFitOptions {
    /// Also fit the flux-axis period scale (default: data already in
    /// flux-quantum units).
    pub fit_scale: bool,
    /// Also fit the loop inductance. Weakly identifiable; prefer fixing it
    /// from an external inductance estimate.
    pub fit_loop_inductance: bool,
    pub ls: LsOptions,
}

/// Result of a tuning-curve fit.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TuningFit {
    pub beta_l: f64,
    pub loop_inductance: f64,
    pub critical_current: f64,
    /// Junction-arm fraction L1 / L_loop in (0, 1).
    pub arm_split_fraction: f64,
    /// Flux offset of the data axis, wrapped into [0, 1) flux quanta.
    pub flux_offset: f64,
    /// Multiplicative conversion from data flux units to flux quanta.
    pub flux_period_scale: f64,
    /// Calibrated resonator length (m).
    pub resonator_length: f64,
    /// RMS frequency residual (Hz).
    pub rms_residual: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Set when a parameter finished pinned at a search bound.
    pub boundary_warning: bool,
}

/// Fit the forward tuning model to a measured curve.
pub fn fit_tuning_curve(
    curve: &TuningCurve,
    template: &ResonatorModel,
    options: &TuningFitOptions,
) -> Result<TuningFit, FitError> {
    let n = curve.applied_flux.len();
    if n < 8 || curve.resonant_frequency.len() != n {
        return Err(FitError::InsufficientData(format!(
            "tuning fit needs at least 8 consistent points, got {n}"
        )));
    }
    let span = curve
        .applied_flux
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max)
        - curve
            .applied_flux
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min);
    let jump_obs = curve.jump_locations.first().copied();
    if jump_obs.is_none() && span < 1.0 {
        return Err(FitError::Unidentifiable(format!(
            "no jump observed and the flux span {span} is below one period"
        )));
    }

    let l_loop0 = template.squid.loop_inductance;
    let split0 = template.squid.junction_arm_fraction();
    let i0_init = template.squid.critical_current;
    let f_max = curve
        .resonant_frequency
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    let load0 = load_inductance(&template.squid, 0.0);
    let length0 = calibrate_length(&template.line, load0, f_max)?;

    // Parameter vector layout: [i0?] split offset [scale?] length [l_loop?]
    let fit_i0 = jump_obs.is_none();
    let mut p0 = Vec::new();
    let mut steps = Vec::new();
    let mut bounds = Vec::new();
    if fit_i0 {
        p0.push(i0_init);
        steps.push(i0_init * 1e-5);
        bounds.push((1e-7, 1e-1));
    }
    p0.push(split0);
    steps.push(1e-6);
    bounds.push((0.02, 0.98));
    p0.push(0.0);
    steps.push(1e-7);
    bounds.push((-1.0, 2.0));
    if options.fit_scale {
        p0.push(1.0);
        steps.push(1e-7);
        bounds.push((0.5, 2.0));
    }
    p0.push(length0);
    steps.push(length0 * 1e-7);
    bounds.push((0.3 * length0, 3.0 * length0));
    if options.fit_loop_inductance {
        p0.push(l_loop0);
        steps.push(l_loop0 * 1e-5);
        bounds.push((0.1 * l_loop0, 10.0 * l_loop0));
    }

    let direction = curve.sweep_direction;
    let unpack = |p: &[f64]| -> (Option<f64>, f64, f64, f64, f64, f64) {
        let mut k = 0;
        let i0 = if fit_i0 {
            k += 1;
            Some(p[0])
        } else {
            None
        };
        let split = p[k];
        let offset = p[k + 1];
        let mut k2 = k + 2;
        let scale = if options.fit_scale {
            k2 += 1;
            p[k + 2]
        } else {
            1.0
        };
        let length = p[k2];
        let l_loop = if options.fit_loop_inductance {
            p[k2 + 1]
        } else {
            l_loop0
        };
        (i0, split, offset, scale, length, l_loop)
    };

    let data_flux = curve.applied_flux.clone();
    let data_freq = curve.resonant_frequency.clone();
    // The jump lands on the ramp grid, so model and data can disagree by one
    // ramp step right at the discontinuity no matter how good the fit is.
    // Points within two steps of an observed jump stay out of the residuals;
    // the jump location itself constrains the fit through the inversion.
    let mut steps_sorted: Vec<f64> = data_flux.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
    steps_sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    let ramp_step = steps_sorted.get(steps_sorted.len() / 2).copied().unwrap_or(0.0);
    let guard = 2.5 * ramp_step;
    let mut include: Vec<bool> = data_flux
        .iter()
        .map(|u| {
            curve
                .jump_locations
                .iter()
                .all(|j| (u - j).abs() > guard)
        })
        .collect();
    if include.iter().filter(|b| **b).count() < 8 {
        include.iter_mut().for_each(|b| *b = true);
    }
    let n_included = include.iter().filter(|b| **b).count();
    let big = 1e12;
    let residuals = |p: &[f64]| -> Result<Vec<f64>, String> {
        let (i0_opt, split, offset, scale, length, l_loop) = unpack(p);
        let i0 = match i0_opt {
            Some(v) => v,
            None => {
                // Pin the screening parameter through the observed jump.
                let phys = scale * jump_obs.expect("jump present") - offset;
                let wrapped = phys - phys.floor();
                let up_critical = match direction {
                    SweepDirection::Up => wrapped,
                    SweepDirection::Down => 1.0 - wrapped,
                };
                match beta_for_critical_flux(up_critical) {
                    Ok(beta) => beta * PHI0 / (2.0 * PI * l_loop),
                    Err(_) => return Ok(vec![big; n_included]),
                }
            }
        };
        let squid = match SquidParams::with_split(l_loop, split, i0, None) {
            Ok(s) => s,
            Err(_) => return Ok(vec![big; n_included]),
        };
        let mut model = *template;
        model.squid = squid;
        model.physical_length = length;
        let ramp: Vec<f64> = data_flux.iter().map(|u| scale * u - offset).collect();
        match tuning_curve(&model, &ramp) {
            Ok(fc) => Ok(fc
                .resonant_frequency
                .iter()
                .zip(&data_freq)
                .zip(&include)
                .filter(|(_, inc)| **inc)
                .map(|((m, d), _)| m - d)
                .collect()),
            Err(_) => Ok(vec![big; n_included]),
        }
    };

    let report = levenberg_marquardt(residuals, &p0, &steps, Some(&bounds), &options.ls)
        .map_err(FitError::NonConvergent)?;
    let (i0_opt, split, offset, scale, length, l_loop) = unpack(&report.params);
    let i0 = match i0_opt {
        Some(v) => v,
        None => {
            let phys = scale * jump_obs.expect("jump present") - offset;
            let wrapped = phys - phys.floor();
            let up_critical = match direction {
                SweepDirection::Up => wrapped,
                SweepDirection::Down => 1.0 - wrapped,
            };
            beta_for_critical_flux(up_critical)
                .map_err(|e| FitError::Unphysical(e.to_string()))?
                * PHI0
                / (2.0 * PI * l_loop)
        }
    };
    let squid = SquidParams::with_split(l_loop, split, i0, None)
        .map_err(|e| FitError::Unphysical(e.to_string()))?;

    Ok(TuningFit {
        beta_l: beta_l(&squid),
        loop_inductance: l_loop,
        critical_current: i0,
        arm_split_fraction: split,
        flux_offset: offset.rem_euclid(1.0),
        flux_period_scale: scale,
        resonator_length: length,
        rms_residual: report.rms_residual,
        iterations: report.iterations,
        converged: report.converged,
        boundary_warning: report.at_bound.iter().any(|b| *b),
    })
}
