//! On-disk data formats.
//!
//! Columnar data is UTF-8 CSV behind a `#`-prefixed header block that names
//! the format, its major version, metadata keys with units, and the column
//! order. Bulk IQ records are little-endian 64-bit floats, interleaved I,Q,
//! with a JSON sidecar carrying the acquisition metadata. Readers reject
//! any major version they do not know. All writes go through a
//! write-then-rename so concurrent runs never observe partial files.

use std::io::Write;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use fluxres::fit::{ComplexSweep, SweepMetadata};
use fluxres::noise::{IqMetadata, IqTimeSeries, SpectrumEstimate};
use fluxres::resonator::{SweepDirection, TuningCurve};
use fluxres::squid::FluxState;

use crate::error::{CliError, CliResult};

pub const FORMAT_VERSION: u32 = 1;

/// Write a file atomically: temp file in the same directory, then rename.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::io(&format!("creating {}", dir.display()), e))?;
    let tmp: PathBuf = dir.join(format!(
        ".{}.tmp-{}",
        path.file_name().and_then(|n| n.to_str()).unwrap_or("out"),
        std::process::id()
    ));
    {
        let mut f = std::fs::File::create(&tmp)
            .map_err(|e| CliError::io(&format!("creating {}", tmp.display()), e))?;
        f.write_all(bytes)
            .map_err(|e| CliError::io(&format!("writing {}", tmp.display()), e))?;
        f.sync_all()
            .map_err(|e| CliError::io(&format!("syncing {}", tmp.display()), e))?;
    }
    std::fs::rename(&tmp, path)
        .map_err(|e| CliError::io(&format!("renaming into {}", path.display()), e))
}

fn parse_header_line(line: &str, lineno: usize) -> CliResult<(String, String)> {
    let body = line.trim_start_matches('#').trim();
    match body.split_once(':') {
        Some((k, v)) => Ok((k.trim().to_string(), v.trim().to_string())),
        None => Err(CliError::Validation(format!(
            "line {lineno}: malformed header comment {line:?}"
        ))),
    }
}

fn check_format_line(line: &str, expected_kind: &str) -> CliResult<()> {
    // First line: "# fluxres <kind> v<major>"
    let body = line.trim_start_matches('#').trim();
    let mut parts = body.split_whitespace();
    let tool = parts.next().unwrap_or("");
    let kind = parts.next().unwrap_or("");
    let version = parts.next().unwrap_or("");
    if tool != "fluxres" || kind != expected_kind {
        return Err(CliError::Validation(format!(
            "line 1: expected a \"fluxres {expected_kind}\" file, found {body:?}"
        )));
    }
    let major: u32 = version
        .strip_prefix('v')
        .and_then(|v| v.split('.').next())
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| {
            CliError::Validation(format!("line 1: missing or malformed version in {body:?}"))
        })?;
    if major != FORMAT_VERSION {
        return Err(CliError::Validation(format!(
            "line 1: unsupported {expected_kind} major version {major} (supported: {FORMAT_VERSION})"
        )));
    }
    Ok(())
}

fn opt_meta(value: Option<f64>) -> String {
    match value {
        Some(v) => format!("{v}"),
        None => "none".into(),
    }
}

fn parse_opt_meta(s: &str, lineno: usize, key: &str) -> CliResult<Option<f64>> {
    if s == "none" {
        return Ok(None);
    }
    s.parse::<f64>().map(Some).map_err(|_| {
        CliError::Validation(format!("line {lineno}: metadata {key} is not a number: {s:?}"))
    })
}

fn parse_field(s: &str, lineno: usize, column: &str) -> CliResult<f64> {
    s.trim().parse::<f64>().map_err(|_| {
        CliError::Validation(format!(
            "line {lineno}: column {column} is not a number: {s:?}"
        ))
    })
}

// ---------------------------------------------------------------- s21 sweeps

pub fn write_s21_sweep(path: &Path, sweep: &ComplexSweep) -> CliResult<()> {
    let mut out = String::new();
    out.push_str(&format!("# fluxres s21-sweep v{FORMAT_VERSION}\n"));
    out.push_str(&format!("# power_dbm: {}\n", opt_meta(sweep.metadata.power_dbm)));
    out.push_str(&format!(
        "# temperature_k: {}\n",
        opt_meta(sweep.metadata.temperature_k)
    ));
    out.push_str(&format!(
        "# applied_flux_phi0: {}\n",
        opt_meta(sweep.metadata.applied_flux)
    ));
    out.push_str("# columns: frequency_hz,s21_re,s21_im\n");
    for (f, z) in sweep.frequency.iter().zip(&sweep.s21) {
        out.push_str(&format!("{f},{},{}\n", z.re, z.im));
    }
    atomic_write(path, out.as_bytes())
}

pub fn read_s21_sweep(path: &Path) -> CliResult<ComplexSweep> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::io(&format!("reading {}", path.display()), e))?;
    let mut metadata = SweepMetadata::default();
    let mut frequency = Vec::new();
    let mut s21 = Vec::new();
    let mut saw_format = false;
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if line.starts_with('#') {
            if !saw_format {
                check_format_line(line, "s21-sweep")?;
                saw_format = true;
                continue;
            }
            let (key, value) = parse_header_line(line, lineno)?;
            match key.as_str() {
                "power_dbm" => metadata.power_dbm = parse_opt_meta(&value, lineno, &key)?,
                "temperature_k" => metadata.temperature_k = parse_opt_meta(&value, lineno, &key)?,
                "applied_flux_phi0" => {
                    metadata.applied_flux = parse_opt_meta(&value, lineno, &key)?
                }
                "columns" => {}
                _ => {}
            }
            continue;
        }
        if !saw_format {
            return Err(CliError::Validation(format!(
                "line {lineno}: data before the format header"
            )));
        }
        let mut fields = line.split(',');
        let (Some(f), Some(re), Some(im)) = (fields.next(), fields.next(), fields.next()) else {
            return Err(CliError::Validation(format!(
                "line {lineno}: expected frequency_hz,s21_re,s21_im, found {line:?}"
            )));
        };
        frequency.push(parse_field(f, lineno, "frequency_hz")?);
        s21.push(Complex64::new(
            parse_field(re, lineno, "s21_re")?,
            parse_field(im, lineno, "s21_im")?,
        ));
    }
    if !saw_format {
        return Err(CliError::Validation("line 1: empty file, no format header".into()));
    }
    ComplexSweep::new(frequency, s21, metadata)
        .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

// -------------------------------------------------------------- tuning curves

pub fn write_tuning_curve(path: &Path, curve: &TuningCurve) -> CliResult<()> {
    let mut out = String::new();
    out.push_str(&format!("# fluxres tuning-curve v{FORMAT_VERSION}\n"));
    let direction = match curve.sweep_direction {
        SweepDirection::Up => "up",
        SweepDirection::Down => "down",
    };
    out.push_str(&format!("# sweep_direction: {direction}\n"));
    out.push_str("# columns: applied_flux_phi0,f0_hz,branch,jumped\n");
    for (i, (flux, f0)) in curve
        .applied_flux
        .iter()
        .zip(&curve.resonant_frequency)
        .enumerate()
    {
        let branch = curve.states.get(i).map(|s| s.branch_index).unwrap_or(0);
        let jumped = curve.jump_locations.iter().any(|j| j == flux) as u8;
        out.push_str(&format!("{flux},{f0},{branch},{jumped}\n"));
    }
    atomic_write(path, out.as_bytes())
}

pub fn read_tuning_curve(path: &Path) -> CliResult<TuningCurve> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::io(&format!("reading {}", path.display()), e))?;
    let mut direction = SweepDirection::Up;
    let mut applied_flux = Vec::new();
    let mut resonant_frequency = Vec::new();
    let mut states = Vec::new();
    let mut jump_locations = Vec::new();
    let mut saw_format = false;
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if line.starts_with('#') {
            if !saw_format {
                check_format_line(line, "tuning-curve")?;
                saw_format = true;
                continue;
            }
            let (key, value) = parse_header_line(line, lineno)?;
            if key == "sweep_direction" {
                direction = match value.as_str() {
                    "up" => SweepDirection::Up,
                    "down" => SweepDirection::Down,
                    other => {
                        return Err(CliError::Validation(format!(
                            "line {lineno}: unknown sweep direction {other:?}"
                        )))
                    }
                };
            }
            continue;
        }
        if !saw_format {
            return Err(CliError::Validation(format!(
                "line {lineno}: data before the format header"
            )));
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(CliError::Validation(format!(
                "line {lineno}: expected applied_flux_phi0,f0_hz,branch,jumped, found {line:?}"
            )));
        }
        let flux = parse_field(fields[0], lineno, "applied_flux_phi0")?;
        let f0 = parse_field(fields[1], lineno, "f0_hz")?;
        let branch = parse_field(fields[2], lineno, "branch")? as i32;
        let jumped = parse_field(fields[3], lineno, "jumped")? != 0.0;
        if jumped {
            jump_locations.push(flux);
        }
        applied_flux.push(flux);
        resonant_frequency.push(f0);
        states.push(FluxState {
            applied_flux: flux,
            total_flux: flux,
            branch_index: branch,
            stable: true,
        });
    }
    if !saw_format {
        return Err(CliError::Validation("line 1: empty file, no format header".into()));
    }
    Ok(TuningCurve {
        applied_flux,
        resonant_frequency,
        states,
        jump_locations,
        sweep_direction: direction,
    })
}

// ------------------------------------------------------------------- spectra

pub fn write_spectrum(path: &Path, spectrum: &SpectrumEstimate) -> CliResult<()> {
    let mut out = String::new();
    out.push_str(&format!("# fluxres spectrum v{FORMAT_VERSION}\n"));
    out.push_str(&format!("# segment_length: {}\n", spectrum.segment_length));
    out.push_str(&format!("# segments_averaged: {}\n", spectrum.segments_averaged));
    out.push_str(&format!("# sample_rate_hz: {}\n", spectrum.sample_rate));
    out.push_str("# columns: frequency_hz,psd_rad2_per_hz\n");
    for (f, p) in spectrum.frequency.iter().zip(&spectrum.psd) {
        out.push_str(&format!("{f},{p}\n"));
    }
    atomic_write(path, out.as_bytes())
}

// ---------------------------------------------------------------- IQ records

/// JSON sidecar stored next to each binary IQ record.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IqSidecar {
    pub format: String,
    pub version: u32,
    pub sample_rate_hz: f64,
    pub samples: usize,
    pub carrier_hz: Option<f64>,
    pub power_dbm: Option<f64>,
    pub applied_flux_phi0: Option<f64>,
}

pub fn sidecar_path(record: &Path) -> PathBuf {
    let mut name = record
        .file_name()
        .and_then(|n| n.to_str())
        .unwrap_or("record")
        .to_string();
    name.push_str(".json");
    record.with_file_name(name)
}

pub fn write_iq_record(path: &Path, series: &IqTimeSeries) -> CliResult<()> {
    let mut bytes = Vec::with_capacity(16 * series.len());
    for k in 0..series.len() {
        bytes.extend_from_slice(&series.i_samples[k].to_le_bytes());
        bytes.extend_from_slice(&series.q_samples[k].to_le_bytes());
    }
    atomic_write(path, &bytes)?;
    let sidecar = IqSidecar {
        format: "fluxres iq-record".into(),
        version: FORMAT_VERSION,
        sample_rate_hz: series.sample_rate,
        samples: series.len(),
        carrier_hz: series.metadata.carrier_hz,
        power_dbm: series.metadata.power_dbm,
        applied_flux_phi0: series.metadata.applied_flux,
    };
    let json = serde_json::to_string_pretty(&sidecar)
        .map_err(|e| CliError::Io(format!("encoding sidecar: {e}")))?;
    atomic_write(&sidecar_path(path), json.as_bytes())
}

pub fn read_iq_record(path: &Path) -> CliResult<IqTimeSeries> {
    let sidecar_file = sidecar_path(path);
    let sidecar_text = std::fs::read_to_string(&sidecar_file)
        .map_err(|e| CliError::io(&format!("reading sidecar {}", sidecar_file.display()), e))?;
    let sidecar: IqSidecar = serde_json::from_str(&sidecar_text)
        .map_err(|e| CliError::Validation(format!("{}: {e}", sidecar_file.display())))?;
    if sidecar.format != "fluxres iq-record" {
        return Err(CliError::Validation(format!(
            "{}: unexpected format {:?}",
            sidecar_file.display(),
            sidecar.format
        )));
    }
    if sidecar.version != FORMAT_VERSION {
        return Err(CliError::Validation(format!(
            "{}: unsupported iq-record version {}",
            sidecar_file.display(),
            sidecar.version
        )));
    }
    let bytes = std::fs::read(path)
        .map_err(|e| CliError::io(&format!("reading {}", path.display()), e))?;
    if bytes.len() != 16 * sidecar.samples {
        return Err(CliError::Validation(format!(
            "{}: expected {} bytes for {} samples, found {}",
            path.display(),
            16 * sidecar.samples,
            sidecar.samples,
            bytes.len()
        )));
    }
    let mut i_samples = Vec::with_capacity(sidecar.samples);
    let mut q_samples = Vec::with_capacity(sidecar.samples);
    for chunk in bytes.chunks_exact(16) {
        i_samples.push(f64::from_le_bytes(chunk[0..8].try_into().expect("8 bytes")));
        q_samples.push(f64::from_le_bytes(chunk[8..16].try_into().expect("8 bytes")));
    }
    IqTimeSeries::new(
        i_samples,
        q_samples,
        sidecar.sample_rate_hz,
        IqMetadata {
            carrier_hz: sidecar.carrier_hz,
            power_dbm: sidecar.power_dbm,
            applied_flux: sidecar.applied_flux_phi0,
        },
    )
    .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tmp(name: &str) -> PathBuf {
        let dir = std::env::temp_dir().join(format!("fluxres-fmt-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        dir.join(name)
    }

    #[test]
    fn s21_sweep_round_trip() {
        let sweep = ComplexSweep::new(
            vec![1e9, 2e9, 3e9],
            vec![
                Complex64::new(0.5, -0.25),
                Complex64::new(0.125, 0.0),
                Complex64::new(-1.0, 1e-17),
            ],
            SweepMetadata {
                power_dbm: Some(-80.0),
                temperature_k: None,
                applied_flux: Some(0.25),
            },
        )
        .unwrap();
        let path = tmp("sweep.csv");
        write_s21_sweep(&path, &sweep).unwrap();
        let back = read_s21_sweep(&path).unwrap();
        assert_eq!(sweep, back);
    }

    #[test]
    fn truncated_sweep_names_the_line() {
        let path = tmp("bad.csv");
        std::fs::write(
            &path,
            "# fluxres s21-sweep v1\n# columns: frequency_hz,s21_re,s21_im\n1e9,0.5\n",
        )
        .unwrap();
        let err = read_s21_sweep(&path).unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
    }

    #[test]
    fn future_major_version_rejected() {
        let path = tmp("future.csv");
        std::fs::write(&path, "# fluxres s21-sweep v2\n1e9,0,0\n").unwrap();
        let err = read_s21_sweep(&path).unwrap_err();
        assert!(err.to_string().contains("version"), "{err}");
    }

    #[test]
    fn iq_record_round_trip_is_bit_exact() {
        let series = IqTimeSeries::new(
            vec![0.1, -0.2, 3e-17],
            vec![0.4, 0.5, -1.25],
            112e3,
            IqMetadata {
                carrier_hz: Some(5.6513e9),
                power_dbm: Some(-85.0),
                applied_flux: None,
            },
        )
        .unwrap();
        let path = tmp("rec.iq");
        write_iq_record(&path, &series).unwrap();
        let back = read_iq_record(&path).unwrap();
        for k in 0..series.len() {
            assert_eq!(series.i_samples[k].to_bits(), back.i_samples[k].to_bits());
            assert_eq!(series.q_samples[k].to_bits(), back.q_samples[k].to_bits());
        }
        assert_eq!(back.metadata.power_dbm, Some(-85.0));
    }
}
