//! `noise`: batch homodyne analysis over a dataset manifest.
//!
//! Per IQ record: checksum verification, circle calibration, quadrature
//! decomposition, spectrum estimation, and the configured power-law fits.
//! Aggregate sections compare the noise level across drive powers and flux
//! points when the manifest carries enough of either.

use std::collections::BTreeMap;
use std::path::Path;

use num_complex::Complex64;
use serde::Serialize;

use fluxres::noise::{
    calibrate_iq, decompose_quadratures, estimate_psd, fit_power_law, noise_vs_flux,
    noise_vs_power, CircleCalibration, FluxIndependence, PowerLawFit, PowerScaling,
    SpectrumEstimate,
};

use super::{run_parallel, Context};
use crate::error::{CliError, CliResult};
use crate::formats::{atomic_write, read_iq_record, read_s21_sweep, write_spectrum};
use crate::manifest::{DatasetManifest, RecordKind};
use crate::plot::SvgPlot;

#[derive(Serialize)]
struct RecordReport {
    record: String,
    spectrum_file: String,
    power_dbm: Option<f64>,
    applied_flux_phi0: Option<f64>,
    segments_averaged: usize,
    low_band_fit: Option<PowerLawFit>,
    mid_band_fit: Option<PowerLawFit>,
    excluded_samples: usize,
    warnings: Vec<String>,
}

#[derive(Serialize)]
#[serde(untagged)]
enum Aggregate<T> {
    NotApplicable { status: String },
    Ready(T),
}

#[derive(Serialize)]
struct NoiseReport {
    manifest: String,
    eval_frequency_hz: f64,
    records: Vec<RecordReport>,
    skipped: Vec<SkippedRecord>,
    noise_vs_power: Aggregate<PowerScaling>,
    noise_vs_flux: Aggregate<FluxIndependence>,
    /// Phase noise converted to an equivalent flux noise; with the
    /// resonator's own jitter folded in this is an upper bound on the
    /// intrinsic flux noise of the loop.
    flux_noise_upper_bound: Option<FluxNoiseBound>,
}

#[derive(Serialize)]
struct SkippedRecord {
    record: String,
    error: String,
}

#[derive(Serialize)]
struct FluxNoiseBound {
    eval_frequency_hz: f64,
    s_theta_rad2_per_hz: f64,
    s_frequency_hz2_per_hz: f64,
    transfer_coefficient_hz_per_phi0: f64,
    flux_noise_upper_bound_phi0_per_sqrt_hz: f64,
    note: String,
}

pub fn run(ctx: &Context, manifest_path: &Path) -> CliResult<()> {
    let manifest = DatasetManifest::load(manifest_path)?;
    let base_dir = manifest_path
        .parent()
        .unwrap_or_else(|| Path::new("."))
        .to_path_buf();
    let iq_records: Vec<_> = manifest
        .records
        .iter()
        .filter(|r| r.kind == RecordKind::IqRecord)
        .collect();
    if manifest.records.is_empty() {
        return Err(CliError::Validation("manifest lists no records".into()));
    }
    if iq_records.is_empty() {
        return Err(CliError::Validation(
            "manifest has no iq-record entries to analyze".into(),
        ));
    }

    // Calibrations referenced by the records, verified and fitted once.
    let mut calibrations: BTreeMap<String, CircleCalibration> = BTreeMap::new();
    let mut skipped: Vec<SkippedRecord> = Vec::new();
    for record in &iq_records {
        let Some(cal_path) = record.metadata.calibration.clone() else {
            continue;
        };
        if calibrations.contains_key(&cal_path) {
            continue;
        }
        let cal_record = manifest
            .records
            .iter()
            .find(|r| r.path == cal_path && r.kind == RecordKind::S21Sweep);
        let result = match cal_record {
            Some(cr) => manifest
                .verify(&base_dir, cr)
                .and_then(|p| read_s21_sweep(&p))
                .and_then(|sweep| {
                    let traces: Vec<(f64, Complex64)> = sweep
                        .frequency
                        .iter()
                        .zip(&sweep.s21)
                        .map(|(f, z)| (*f, *z))
                        .collect();
                    calibrate_iq(&traces).map_err(|e| CliError::Validation(e.to_string()))
                }),
            None => Err(CliError::Validation(format!(
                "calibration {cal_path} is not an s21-sweep record in the manifest"
            ))),
        };
        match result {
            Ok(cal) => {
                calibrations.insert(cal_path, cal);
            }
            Err(e) => skipped.push(SkippedRecord {
                record: cal_path,
                error: e.to_string(),
            }),
        }
    }

    let settings = ctx.config.psd_settings()?;
    let noise_cfg = &ctx.config.noise;
    let eval = noise_cfg.eval_frequency_hz;

    // Per-record analysis in a bounded worker pool; output paths are
    // disjoint so in-worker writes are safe.
    let outputs = run_parallel(iq_records.len(), ctx.workers, |idx| {
        let record = iq_records[idx];
        let analyze = || -> CliResult<(RecordReport, SpectrumEstimate)> {
            let path = manifest.verify(&base_dir, record)?;
            let series = read_iq_record(&path)?;
            let cal_key = record.metadata.calibration.as_ref().ok_or_else(|| {
                CliError::Validation(format!(
                    "{}: record carries no calibration reference",
                    record.path
                ))
            })?;
            let cal = calibrations.get(cal_key).ok_or_else(|| {
                CliError::Validation(format!(
                    "{}: calibration {cal_key} unavailable",
                    record.path
                ))
            })?;
            let quads = decompose_quadratures(&series, cal)
                .map_err(|e| CliError::Validation(format!("{}: {e}", record.path)))?;
            let spectrum = estimate_psd(&quads.phase, series.sample_rate, &settings)
                .map_err(|e| CliError::Validation(format!("{}: {e}", record.path)))?;
            let mut warnings = Vec::new();
            if spectrum.segments_averaged < 2 {
                warnings.push("single segment: spectral variance not reduced".into());
            }
            if quads.excluded > 0 {
                warnings.push(format!(
                    "{} samples at the circle center were excluded",
                    quads.excluded
                ));
            }
            let stem = Path::new(&record.path)
                .file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or("record")
                .to_string();
            let spectrum_file = format!("{stem}_spectrum.csv");
            write_spectrum(&ctx.out_dir.join(&spectrum_file), &spectrum)?;
            let low = fit_power_law(&spectrum, (noise_cfg.low_band_hz[0], noise_cfg.low_band_hz[1]));
            let mid = fit_power_law(&spectrum, (noise_cfg.mid_band_hz[0], noise_cfg.mid_band_hz[1]));
            let low_band_fit = match low {
                Ok(f) => Some(f),
                Err(e) => {
                    warnings.push(format!("low-band fit skipped: {e}"));
                    None
                }
            };
            let mid_band_fit = match mid {
                Ok(f) => Some(f),
                Err(e) => {
                    warnings.push(format!("mid-band fit skipped: {e}"));
                    None
                }
            };
            Ok((
                RecordReport {
                    record: record.path.clone(),
                    spectrum_file,
                    power_dbm: record.metadata.power_dbm,
                    applied_flux_phi0: record.metadata.applied_flux_phi0,
                    segments_averaged: spectrum.segments_averaged,
                    low_band_fit,
                    mid_band_fit,
                    excluded_samples: quads.excluded,
                    warnings,
                },
                spectrum,
            ))
        };
        (record.path.clone(), analyze())
    });

    let mut reports = Vec::new();
    let mut spectra: Vec<(RecordMeta, SpectrumEstimate)> = Vec::new();
    for (path, outcome) in outputs {
        match outcome {
            Ok((report, spectrum)) => {
                spectra.push((
                    RecordMeta {
                        power_dbm: report.power_dbm,
                        flux: report.applied_flux_phi0,
                    },
                    spectrum,
                ));
                reports.push(report);
            }
            Err(e) => {
                eprintln!("error: skipping {path}: {e}");
                skipped.push(SkippedRecord {
                    record: path,
                    error: e.to_string(),
                });
            }
        }
    }
    if reports.is_empty() {
        return Err(CliError::Validation(
            "no record in the manifest could be analyzed".into(),
        ));
    }

    // Aggregates.
    let power_series: Vec<(f64, SpectrumEstimate)> = spectra
        .iter()
        .filter_map(|(m, s)| m.power_dbm.map(|p| (p, s.clone())))
        .collect();
    let distinct_powers = distinct(power_series.iter().map(|(p, _)| *p));
    let noise_power = if distinct_powers >= 3 {
        match noise_vs_power(&power_series, eval) {
            Ok(scaling) => Aggregate::Ready(scaling),
            Err(e) => Aggregate::NotApplicable {
                status: format!("not applicable: {e}"),
            },
        }
    } else {
        Aggregate::NotApplicable {
            status: format!(
                "not applicable: {distinct_powers} distinct power levels (need 3)"
            ),
        }
    };
    let flux_series: Vec<(f64, SpectrumEstimate)> = spectra
        .iter()
        .filter_map(|(m, s)| m.flux.map(|f| (f, s.clone())))
        .collect();
    let distinct_fluxes = distinct(flux_series.iter().map(|(f, _)| *f));
    let noise_flux = if distinct_fluxes >= 3 {
        match noise_vs_flux(&flux_series, eval, noise_cfg.independence_threshold) {
            Ok(v) => Aggregate::Ready(v),
            Err(e) => Aggregate::NotApplicable {
                status: format!("not applicable: {e}"),
            },
        }
    } else {
        Aggregate::NotApplicable {
            status: format!(
                "not applicable: {distinct_fluxes} distinct flux points (need 3)"
            ),
        }
    };

    let flux_bound = flux_noise_bound(ctx, &spectra, eval);

    // Plots: every spectrum on one log-log panel, plus the power scaling.
    write_spectra_plot(ctx, &spectra)?;
    if let Aggregate::Ready(scaling) = &noise_power {
        write_power_plot(ctx, scaling)?;
    }

    let report = NoiseReport {
        manifest: manifest_path.display().to_string(),
        eval_frequency_hz: eval,
        records: reports,
        skipped,
        noise_vs_power: noise_power,
        noise_vs_flux: noise_flux,
        flux_noise_upper_bound: flux_bound,
    };
    let report_path = ctx.out_dir.join("noise_report.json");
    let json = serde_json::to_string_pretty(&report)
        .map_err(|e| CliError::Io(format!("encoding noise report: {e}")))?;
    atomic_write(&report_path, json.as_bytes())?;
    println!("wrote {}", report_path.display());
    match &report.noise_vs_power {
        Aggregate::Ready(s) => println!(
            "noise versus power: slope {:.3} +- {:.3} at {} Hz",
            s.exponent, s.stderr, eval
        ),
        Aggregate::NotApplicable { status } => println!("noise versus power: {status}"),
    }
    match &report.noise_vs_flux {
        Aggregate::Ready(v) => println!(
            "noise versus flux: max/min spread {:.3}, independent = {}",
            v.max_relative_spread, v.independent
        ),
        Aggregate::NotApplicable { status } => println!("noise versus flux: {status}"),
    }
    Ok(())
}

struct RecordMeta {
    power_dbm: Option<f64>,
    flux: Option<f64>,
}

fn distinct(values: impl Iterator<Item = f64>) -> usize {
    let mut sorted: Vec<f64> = values.collect();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    sorted.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    sorted.len()
}

/// Equivalent flux-noise upper bound at the evaluation frequency, using the
/// configured model's transfer coefficient at the most flux-sensitive
/// recorded bias point.
fn flux_noise_bound(
    ctx: &Context,
    spectra: &[(RecordMeta, SpectrumEstimate)],
    eval: f64,
) -> Option<FluxNoiseBound> {
    let model = ctx.config.model().ok()?;
    let mut best: Option<(f64, f64)> = None; // (|coeff|, s_theta)
    for (meta, spectrum) in spectra {
        let flux = meta.flux?;
        let state = fluxres::resonator::initial_flux_state(&model.squid, flux).ok()?;
        let coeff = fluxres::noise::flux_transfer_coefficient(&model, &state).ok()?;
        let s_theta = spectrum.value_at(eval).ok()?;
        let mag = coeff.hz_per_phi0.abs();
        if best.map(|(m, _)| mag > m).unwrap_or(mag > 0.0) {
            best = Some((mag, s_theta));
        }
    }
    let (coeff, s_theta) = best?;
    let ql = model.loaded_q();
    let f0 = ctx.config.resonator.target_f0_hz;
    let s_f = fluxres::noise::phase_to_frequency_noise(s_theta, f0, ql);
    let s_phi = s_f / (coeff * coeff);
    Some(FluxNoiseBound {
        eval_frequency_hz: eval,
        s_theta_rad2_per_hz: s_theta,
        s_frequency_hz2_per_hz: s_f,
        transfer_coefficient_hz_per_phi0: coeff,
        flux_noise_upper_bound_phi0_per_sqrt_hz: s_phi.sqrt(),
        note: "upper bound: resonator jitter dominates the measured phase noise".into(),
    })
}

fn write_spectra_plot(
    ctx: &Context,
    spectra: &[(RecordMeta, SpectrumEstimate)],
) -> CliResult<()> {
    let all_freqs = spectra.iter().flat_map(|(_, s)| s.frequency.iter().copied());
    let all_psd = spectra.iter().flat_map(|(_, s)| s.psd.iter().copied());
    let x_range = SvgPlot::padded_range(all_freqs, true);
    let y_range = SvgPlot::padded_range(all_psd, true);
    let mut plot = SvgPlot::new(
        "Phase-noise spectra",
        "frequency (Hz)",
        x_range,
        true,
        "S_theta (rad^2/Hz)",
        y_range,
        true,
    );
    let palette = ["#1f4e9c", "#c0392b", "#1e8449", "#7d3c98", "#b7950b", "#148f9f"];
    for (k, (_, spectrum)) in spectra.iter().enumerate() {
        let pts: Vec<(f64, f64)> = spectrum
            .frequency
            .iter()
            .zip(&spectrum.psd)
            .filter(|(f, p)| **f > 0.0 && **p > 0.0)
            .map(|(f, p)| (*f, *p))
            .collect();
        plot.polyline(&pts, palette[k % palette.len()], 1.0);
    }
    plot.save(&ctx.out_dir.join("spectra.svg"))
}

fn write_power_plot(ctx: &Context, scaling: &PowerScaling) -> CliResult<()> {
    let pts: Vec<(f64, f64)> = scaling
        .points
        .iter()
        .map(|p| (fluxres::constants::dbm_to_watts(p.key), p.s_theta))
        .collect();
    let x_range = SvgPlot::padded_range(pts.iter().map(|p| p.0), true);
    let y_range = SvgPlot::padded_range(pts.iter().map(|p| p.1), true);
    let mut plot = SvgPlot::new(
        &format!(
            "Phase noise at {} Hz versus drive power (slope {:.3})",
            scaling.eval_frequency, scaling.exponent
        ),
        "input power (W)",
        x_range,
        true,
        "S_theta (rad^2/Hz)",
        y_range,
        true,
    );
    plot.scatter(&pts, "#c0392b", 3.0);
    // Fitted line through the first and last powers.
    if let (Some(first), Some(last)) = (pts.first(), pts.last()) {
        let level = |p: f64| {
            let anchor = first.1;
            anchor * (p / first.0).powf(scaling.exponent)
        };
        plot.polyline(
            &[(first.0, level(first.0)), (last.0, level(last.0))],
            "#1f4e9c",
            1.2,
        );
    }
    plot.save(&ctx.out_dir.join("noise_vs_power.svg"))
}
