//! `generate`: deterministic synthetic datasets for the analysis workflows.
//!
//! Every scenario is seeded; the same seed produces byte-identical files.

use clap::ValueEnum;
use num_complex::Complex64;

use fluxres::constants::dbm_to_watts;
use fluxres::fit::SweepMetadata;
use fluxres::noise::{
    calibrate_iq, power_law_noise, samples_on_circle, seeded_rng, white_noise, IqMetadata,
    IqTimeSeries,
};
use fluxres::resonator::{
    initial_flux_state, load_resonant_frequency, s21_response_at_flux, synthesize_s21,
    tuning_curve, ResonatorModel,
};

use super::{record_seed, Context};
use crate::error::{CliError, CliResult};
use crate::formats::{write_iq_record, write_s21_sweep, write_tuning_curve};
use crate::manifest::{DatasetManifest, RecordKind, RecordMetadata};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Scenario {
    /// One notch-type S21 sweep with additive complex noise.
    S21,
    /// Forward tuning curve over one flux period.
    Tuning,
    /// Homodyne records across drive powers with noise scaling as the
    /// inverse square root of power.
    NoisePower,
    /// Homodyne records across flux points with identical noise statistics.
    NoiseFlux,
}

pub struct GenerateArgs {
    pub scenario: Scenario,
    /// Complex noise sigma for the s21 scenario.
    pub noise_sigma: f64,
}

pub fn run(ctx: &Context, args: &GenerateArgs) -> CliResult<()> {
    let model = ctx.config.model()?;
    let mut manifest = DatasetManifest::new();
    match args.scenario {
        Scenario::S21 => generate_s21(ctx, &model, args.noise_sigma, &mut manifest)?,
        Scenario::Tuning => generate_tuning(ctx, &model, &mut manifest)?,
        Scenario::NoisePower => generate_noise_power(ctx, &model, &mut manifest)?,
        Scenario::NoiseFlux => generate_noise_flux(ctx, &model, &mut manifest)?,
    }
    let manifest_path = ctx.out_dir.join("manifest.json");
    manifest.save(&manifest_path)?;
    println!("wrote {}", manifest_path.display());
    Ok(())
}

fn generate_s21(
    ctx: &Context,
    model: &ResonatorModel,
    sigma: f64,
    manifest: &mut DatasetManifest,
) -> CliResult<()> {
    let f0 = zero_flux_f0(model)?;
    let ql = model.loaded_q();
    let span = 10.0 * f0 / ql;
    let freqs: Vec<f64> = (0..2001)
        .map(|i| f0 - 0.5 * span + span * i as f64 / 2000.0)
        .collect();
    let mut sweep = synthesize_s21(model, &freqs, f0, &ctx.config.baseline())
        .map_err(|e| CliError::Validation(e.to_string()))?;
    if sigma > 0.0 {
        let mut rng = seeded_rng(record_seed(ctx.seed, 0));
        let re = white_noise(sweep.len(), sigma, &mut rng);
        let im = white_noise(sweep.len(), sigma, &mut rng);
        for (z, (r, i)) in sweep.s21.iter_mut().zip(re.iter().zip(&im)) {
            *z += Complex64::new(*r, *i);
        }
    }
    sweep.metadata = SweepMetadata {
        power_dbm: Some(-80.0),
        temperature_k: Some(0.016),
        applied_flux: Some(0.0),
    };
    let name = "s21_sweep.csv";
    write_s21_sweep(&ctx.out_dir.join(name), &sweep)?;
    manifest.push(
        &ctx.out_dir,
        name,
        RecordKind::S21Sweep,
        RecordMetadata {
            power_dbm: Some(-80.0),
            applied_flux_phi0: Some(0.0),
            temperature_k: Some(0.016),
            calibration: None,
        },
    )?;
    println!("wrote {}", ctx.out_dir.join(name).display());
    Ok(())
}

fn generate_tuning(
    ctx: &Context,
    model: &ResonatorModel,
    manifest: &mut DatasetManifest,
) -> CliResult<()> {
    let ramp: Vec<f64> = (0..=2000).map(|i| i as f64 / 2000.0).collect();
    let curve =
        tuning_curve(model, &ramp).map_err(|e| CliError::Validation(e.to_string()))?;
    let name = "tuning_curve.csv";
    write_tuning_curve(&ctx.out_dir.join(name), &curve)?;
    manifest.push(
        &ctx.out_dir,
        name,
        RecordKind::TuningCurve,
        RecordMetadata::default(),
    )?;
    println!("wrote {}", ctx.out_dir.join(name).display());
    Ok(())
}

/// Calibration sweep and circle frame at one flux point.
fn calibration_at_flux(
    ctx: &Context,
    model: &ResonatorModel,
    flux: f64,
    name: &str,
    manifest: &mut DatasetManifest,
) -> CliResult<(Complex64, f64, f64, f64)> {
    let state = initial_flux_state(&model.squid, flux)
        .map_err(|e| CliError::Validation(e.to_string()))?;
    let f0 = load_resonant_frequency(model, &state).map_err(|e| CliError::Validation(e.to_string()))?;
    let ql = model.loaded_q();
    let span = 8.0 * f0 / ql;
    let freqs: Vec<f64> = (0..21)
        .map(|i| f0 - 0.5 * span + span * i as f64 / 20.0)
        .collect();
    let mut sweep = s21_response_at_flux(model, &state, &freqs, &ctx.config.baseline())
        .map_err(|e| CliError::Validation(e.to_string()))?;
    sweep.metadata.applied_flux = Some(flux);
    write_s21_sweep(&ctx.out_dir.join(name), &sweep)?;
    manifest.push(
        &ctx.out_dir,
        name,
        RecordKind::S21Sweep,
        RecordMetadata {
            applied_flux_phi0: Some(flux),
            ..Default::default()
        },
    )?;
    let traces: Vec<(f64, Complex64)> = sweep
        .frequency
        .iter()
        .zip(&sweep.s21)
        .map(|(f, z)| (*f, *z))
        .collect();
    let cal = calibrate_iq(&traces).map_err(|e| CliError::Validation(e.to_string()))?;
    let angle = (cal.resonance_point - cal.center).arg();
    Ok((cal.center, cal.radius, angle, f0))
}

/// Phase-noise level at 1 Hz for a drive power, scaling as P^-1/2 and
/// pinned to 1e-10 rad^2/Hz at 1 kHz for -80 dBm.
fn phase_level_at_1hz(power_dbm: f64) -> f64 {
    let p_w = dbm_to_watts(power_dbm);
    1e-10 * 1000f64.sqrt() * (p_w / dbm_to_watts(-80.0)).powf(-0.5)
}

fn iq_record_with_phase_noise(
    ctx: &Context,
    center: Complex64,
    radius: f64,
    angle: f64,
    carrier: f64,
    power_dbm: f64,
    flux: f64,
    seed_index: u64,
) -> CliResult<IqTimeSeries> {
    let fs = ctx.config.noise.sample_rate_hz;
    let n = (fs * ctx.config.noise.record_seconds).round() as usize;
    let mut rng = seeded_rng(record_seed(ctx.seed, seed_index));
    let phase = power_law_noise(n, fs, -0.5, phase_level_at_1hz(power_dbm), &mut rng)
        .map_err(|e| CliError::Validation(e.to_string()))?;
    let amplitude = white_noise(n, 3e-4, &mut rng);
    let samples = samples_on_circle(center, radius, angle, &phase, &amplitude);
    IqTimeSeries::new(
        samples.iter().map(|z| z.re).collect(),
        samples.iter().map(|z| z.im).collect(),
        fs,
        IqMetadata {
            carrier_hz: Some(carrier),
            power_dbm: Some(power_dbm),
            applied_flux: Some(flux),
        },
    )
    .map_err(|e| CliError::Validation(e.to_string()))
}

fn generate_noise_power(
    ctx: &Context,
    model: &ResonatorModel,
    manifest: &mut DatasetManifest,
) -> CliResult<()> {
    let cal_name = "calibration.csv";
    let (center, radius, angle, f0) = calibration_at_flux(ctx, model, 0.0, cal_name, manifest)?;
    for (k, &power) in [-90.0, -85.0, -80.0, -75.0].iter().enumerate() {
        let series = iq_record_with_phase_noise(
            ctx,
            center,
            radius,
            angle,
            f0,
            power,
            0.0,
            (k + 1) as u64,
        )?;
        let name = format!("iq_power_{}dbm.iq", power.abs() as i64);
        write_iq_record(&ctx.out_dir.join(&name), &series)?;
        manifest.push(
            &ctx.out_dir,
            &name,
            RecordKind::IqRecord,
            RecordMetadata {
                power_dbm: Some(power),
                applied_flux_phi0: Some(0.0),
                temperature_k: Some(0.016),
                calibration: Some(cal_name.into()),
            },
        )?;
        println!("wrote {}", ctx.out_dir.join(&name).display());
    }
    Ok(())
}

fn generate_noise_flux(
    ctx: &Context,
    model: &ResonatorModel,
    manifest: &mut DatasetManifest,
) -> CliResult<()> {
    let power = -85.0;
    for k in 0..20 {
        let flux = 0.025 * k as f64;
        let cal_name = format!("calibration_flux{k:02}.csv");
        let (center, radius, angle, f0) =
            calibration_at_flux(ctx, model, flux, &cal_name, manifest)?;
        let series = iq_record_with_phase_noise(
            ctx,
            center,
            radius,
            angle,
            f0,
            power,
            flux,
            100 + k as u64,
        )?;
        let name = format!("iq_flux{k:02}.iq");
        write_iq_record(&ctx.out_dir.join(&name), &series)?;
        manifest.push(
            &ctx.out_dir,
            &name,
            RecordKind::IqRecord,
            RecordMetadata {
                power_dbm: Some(power),
                applied_flux_phi0: Some(flux),
                temperature_k: Some(0.016),
                calibration: Some(cal_name),
            },
        )?;
        println!("wrote {}", ctx.out_dir.join(&name).display());
    }
    Ok(())
}

fn zero_flux_f0(model: &ResonatorModel) -> CliResult<f64> {
    let state = initial_flux_state(&model.squid, 0.0)
        .map_err(|e| CliError::Validation(e.to_string()))?;
    load_resonant_frequency(model, &state).map_err(|e| CliError::Validation(e.to_string()))
}
