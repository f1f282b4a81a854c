//! `fit-s21`: resonance parameters from a measured transmission sweep.

use std::path::Path;

use fluxres::fit::{fit_resonance, FitError, ResonanceFit};
use serde::Serialize;

use super::Context;
use crate::error::{CliError, CliResult};
use crate::formats::{atomic_write, read_s21_sweep};
use crate::plot::SvgPlot;

#[derive(Serialize)]
struct FitReport<'a> {
    input: String,
    fit: &'a ResonanceFit,
}

pub fn run(ctx: &Context, input: &Path) -> CliResult<()> {
    let sweep = read_s21_sweep(input)?;
    let fit = fit_resonance(&sweep).map_err(map_fit_error)?;

    let stem = input
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("sweep")
        .to_string();
    let report_path = ctx.out_dir.join(format!("{stem}_fit.json"));
    let report = FitReport {
        input: input.display().to_string(),
        fit: &fit,
    };
    let json = serde_json::to_string_pretty(&report)
        .map_err(|e| CliError::Io(format!("encoding fit report: {e}")))?;
    atomic_write(&report_path, json.as_bytes())?;

    // Amplitude panel with the fitted model overlaid.
    let model_curve: Vec<(f64, f64)> = sweep
        .frequency
        .iter()
        .map(|&f| (f / 1e9, notch_magnitude(&fit, f)))
        .collect();
    let data_curve: Vec<(f64, f64)> = sweep
        .frequency
        .iter()
        .zip(&sweep.s21)
        .map(|(f, z)| (f / 1e9, z.norm()))
        .collect();
    let x_range = SvgPlot::padded_range(data_curve.iter().map(|p| p.0), false);
    let y_range = SvgPlot::padded_range(
        data_curve.iter().chain(model_curve.iter()).map(|p| p.1),
        false,
    );
    let mut amp = SvgPlot::new(
        &format!(
            "S21 magnitude, f0 = {:.6} GHz, Qi = {:.3e}, Qc = {:.3e}",
            fit.f0 / 1e9,
            fit.qi,
            fit.qc
        ),
        "frequency (GHz)",
        x_range,
        false,
        "|S21|",
        y_range,
        false,
    );
    amp.scatter(&data_curve, "#c0392b", 1.6);
    amp.polyline(&model_curve, "#1f4e9c", 1.4);
    let amp_path = ctx.out_dir.join(format!("{stem}_amplitude.svg"));
    amp.save(&amp_path)?;

    // Complex-plane panel after removing the fitted delay.
    let corrected: Vec<(f64, f64)> = sweep
        .frequency
        .iter()
        .zip(&sweep.s21)
        .map(|(&f, z)| {
            let rot = num_complex::Complex64::from_polar(
                1.0,
                2.0 * std::f64::consts::PI * f * fit.cable_delay,
            );
            let w = z * rot;
            (w.re, w.im)
        })
        .collect();
    let x_range = SvgPlot::padded_range(corrected.iter().map(|p| p.0), false);
    let y_range = SvgPlot::padded_range(corrected.iter().map(|p| p.1), false);
    let mut plane = SvgPlot::new(
        "S21 in the complex plane (delay removed)",
        "Re S21",
        x_range,
        false,
        "Im S21",
        y_range,
        false,
    );
    plane.scatter(&corrected, "#c0392b", 1.6);
    let circle_pts: Vec<(f64, f64)> = (0..=256)
        .map(|k| {
            let f = sweep.frequency[0]
                + sweep.span() * k as f64 / 256.0;
            let rot = num_complex::Complex64::from_polar(
                1.0,
                2.0 * std::f64::consts::PI * f * fit.cable_delay,
            );
            let z = notch_complex(&fit, f) * rot;
            (z.re, z.im)
        })
        .collect();
    plane.polyline(&circle_pts, "#1f4e9c", 1.2);
    let plane_path = ctx.out_dir.join(format!("{stem}_circle.svg"));
    plane.save(&plane_path)?;

    println!("wrote {}", report_path.display());
    println!("wrote {}", amp_path.display());
    println!("wrote {}", plane_path.display());
    println!(
        "f0 = {:.6} GHz, Ql = {:.4e}, Qi = {:.4e}, Qc = {:.4e}, phi0 = {:.4} rad, tau = {:.3} ns",
        fit.f0 / 1e9,
        fit.ql,
        fit.qi,
        fit.qc,
        fit.mismatch_angle,
        fit.cable_delay * 1e9
    );
    if fit.span_linewidths < 5.0 {
        eprintln!(
            "warning: sweep spans only {:.1} linewidths; delay and baseline are weakly constrained",
            fit.span_linewidths
        );
    }
    Ok(())
}

pub fn map_fit_error(err: FitError) -> CliError {
    match err {
        FitError::InvalidInput(m) => CliError::Validation(m),
        other => CliError::Fit(other.to_string()),
    }
}

fn notch_complex(fit: &ResonanceFit, f: f64) -> num_complex::Complex64 {
    use num_complex::Complex64;
    use std::f64::consts::PI;
    let env = Complex64::from_polar(
        fit.amplitude,
        fit.phase_offset - 2.0 * PI * f * fit.cable_delay,
    );
    let depth = fit.ql / fit.qc;
    let det = Complex64::new(1.0, 2.0 * fit.ql * (f / fit.f0 - 1.0));
    env * (Complex64::new(1.0, 0.0) - Complex64::from_polar(depth, fit.mismatch_angle) / det)
}

fn notch_magnitude(fit: &ResonanceFit, f: f64) -> f64 {
    notch_complex(fit, f).norm()
}
