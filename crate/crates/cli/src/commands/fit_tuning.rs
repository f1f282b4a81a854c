//! `fit-tuning`: screening parameter and flux calibration from a measured
//! tuning curve.

use std::path::Path;

use fluxres::fit::{fit_tuning_curve, TuningFit, TuningFitOptions};
use fluxres::resonator::tuning_curve;
use fluxres::squid::SquidParams;
use serde::Serialize;

use super::fit_s21::map_fit_error;
use super::Context;
use crate::error::{CliError, CliResult};
use crate::formats::{atomic_write, read_tuning_curve};
use crate::plot::SvgPlot;

#[derive(Serialize)]
struct TuningReport<'a> {
    input: String,
    fit: &'a TuningFit,
}

pub fn run(ctx: &Context, input: &Path) -> CliResult<()> {
    let curve = read_tuning_curve(input)?;
    let template = ctx.config.model()?;
    let fit = fit_tuning_curve(&curve, &template, &TuningFitOptions::default())
        .map_err(map_fit_error)?;

    let stem = input
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("curve")
        .to_string();
    let report_path = ctx.out_dir.join(format!("{stem}_tuning_fit.json"));
    let report = TuningReport {
        input: input.display().to_string(),
        fit: &fit,
    };
    let json = serde_json::to_string_pretty(&report)
        .map_err(|e| CliError::Io(format!("encoding tuning report: {e}")))?;
    atomic_write(&report_path, json.as_bytes())?;

    // Overlay of the fitted forward model on the data.
    let mut fitted_model = template;
    fitted_model.squid = SquidParams::with_split(
        fit.loop_inductance,
        fit.arm_split_fraction,
        fit.critical_current,
        None,
    )
    .map_err(|e| CliError::Fit(e.to_string()))?;
    fitted_model.physical_length = fit.resonator_length;
    let phys_ramp: Vec<f64> = curve
        .applied_flux
        .iter()
        .map(|u| fit.flux_period_scale * u - fit.flux_offset)
        .collect();
    let model_curve = tuning_curve(&fitted_model, &phys_ramp)
        .map_err(|e| CliError::Fit(format!("fitted model does not evaluate: {e}")))?;

    let data_pts: Vec<(f64, f64)> = curve
        .applied_flux
        .iter()
        .zip(&curve.resonant_frequency)
        .map(|(x, f)| (*x, f / 1e9))
        .collect();
    let model_pts: Vec<(f64, f64)> = curve
        .applied_flux
        .iter()
        .zip(&model_curve.resonant_frequency)
        .map(|(x, f)| (*x, f / 1e9))
        .collect();
    let x_range = SvgPlot::padded_range(data_pts.iter().map(|p| p.0), false);
    let y_range = SvgPlot::padded_range(
        data_pts.iter().chain(model_pts.iter()).map(|p| p.1),
        false,
    );
    let mut plot = SvgPlot::new(
        &format!(
            "Tuning fit: beta_L = {:.3}, I0 = {:.1} uA, split = {:.3}",
            fit.beta_l,
            fit.critical_current * 1e6,
            fit.arm_split_fraction
        ),
        "applied flux (data units)",
        x_range,
        false,
        "resonant frequency (GHz)",
        y_range,
        false,
    );
    plot.scatter(&data_pts, "#c0392b", 1.8);
    plot.polyline(&model_pts, "#1f4e9c", 1.4);
    for jump in &curve.jump_locations {
        plot.vline(*jump, "#999999");
    }
    let plot_path = ctx.out_dir.join(format!("{stem}_tuning_fit.svg"));
    plot.save(&plot_path)?;

    println!("wrote {}", report_path.display());
    println!("wrote {}", plot_path.display());
    println!(
        "beta_L = {:.4}, I0 = {:.2} uA, junction-arm fraction = {:.4}, flux offset = {:.4}, rms = {:.1} Hz",
        fit.beta_l,
        fit.critical_current * 1e6,
        fit.arm_split_fraction,
        fit.flux_offset,
        fit.rms_residual
    );
    if fit.boundary_warning {
        eprintln!("warning: a fit parameter finished at a search bound; treat values with care");
    }
    Ok(())
}
