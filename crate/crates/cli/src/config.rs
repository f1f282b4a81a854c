//! Toolkit configuration: one TOML file validated against the model
//! invariants on load.
//!
//! Missing optional fields take the documented defaults (the reference
//! device parameters). In strict mode unknown fields anywhere in the file
//! are rejected; otherwise they are ignored with a warning to stderr.

use std::path::Path;

use serde::{Deserialize, Serialize};

use fluxres::cpw::{compute_line_params, gap_for_impedance, CpwGeometry};
use fluxres::noise::{Detrend, PsdSettings, WindowKind};
use fluxres::resonator::{calibrate_length, ResonatorModel, SweepBaseline};
use fluxres::squid::{load_inductance, SquidParams};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct CpwConfig {
    pub center_width_m: f64,
    /// Ground-plane gap; when absent it is derived from the target impedance.
    pub gap_m: Option<f64>,
    pub film_thickness_m: f64,
    pub substrate_rel_permittivity: f64,
    pub target_impedance_ohm: f64,
}

impl Default for CpwConfig {
    fn default() -> Self {
        Self {
            center_width_m: 10e-6,
            gap_m: None,
            film_thickness_m: 150e-9,
            substrate_rel_permittivity: 11.45,
            target_impedance_ohm: 50.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct SquidConfig {
    pub loop_inductance_h: f64,
    pub critical_current_a: f64,
    /// Junction-arm fraction L1 / L_loop.
    pub junction_arm_fraction: f64,
    /// Override for the zero-flux Josephson inductance.
    pub junction_inductance_zero_h: Option<f64>,
}

impl Default for SquidConfig {
    fn default() -> Self {
        Self {
            loop_inductance_h: 1.55e-12,
            critical_current_a: 320e-6,
            junction_arm_fraction: 0.5,
            junction_inductance_zero_h: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct ResonatorConfig {
    /// Zero-flux resonance the line length is calibrated to (Hz).
    pub target_f0_hz: f64,
    pub coupling_q: f64,
    pub internal_q: f64,
    pub mismatch_angle_rad: f64,
    pub cable_delay_s: f64,
    pub amplitude: f64,
    pub phase_offset_rad: f64,
    pub coupling_capacitance_f: f64,
}

impl Default for ResonatorConfig {
    fn default() -> Self {
        Self {
            target_f0_hz: 5.6513e9,
            coupling_q: 1.41e5,
            internal_q: 1.41e5,
            mismatch_angle_rad: 0.0,
            cable_delay_s: 0.0,
            amplitude: 1.0,
            phase_offset_rad: 0.0,
            coupling_capacitance_f: 0.7e-15,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct NoiseConfig {
    pub segment_length: usize,
    pub overlap_fraction: f64,
    /// "rectangular", "hann" or "hamming".
    pub window: String,
    /// "none" or "segment-mean".
    pub detrend: String,
    /// Band for the low-frequency slope fit (Hz).
    pub low_band_hz: [f64; 2],
    /// Band for the mid-frequency slope fit (Hz).
    pub mid_band_hz: [f64; 2],
    pub eval_frequency_hz: f64,
    /// Max/min spread below which the noise counts as flux independent.
    pub independence_threshold: f64,
    pub sample_rate_hz: f64,
    pub record_seconds: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            segment_length: 1 << 14,
            overlap_fraction: 0.5,
            window: "hann".into(),
            detrend: "segment-mean".into(),
            low_band_hz: [1.0, 100.0],
            mid_band_hz: [100.0, 10_000.0],
            eval_frequency_hz: 1_000.0,
            independence_threshold: 2.0,
            sample_rate_hz: 112_000.0,
            record_seconds: 10.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Default)]
#[serde(default)]
pub struct ToolkitConfig {
    pub rng_seed: Option<u64>,
    pub output_dir: Option<String>,
    pub cpw: CpwConfig,
    pub squid: SquidConfig,
    pub resonator: ResonatorConfig,
    pub noise: NoiseConfig,
}

impl ToolkitConfig {
    pub fn load(path: &Path, strict: bool) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::io(&format!("reading config {}", path.display()), e))?;
        Self::parse(&text, strict)
    }

    pub fn parse(text: &str, strict: bool) -> CliResult<Self> {
        let table: toml::Table = toml::from_str(text)
            .map_err(|e| CliError::Validation(format!("config is not valid TOML: {e}")))?;
        let unknown = unknown_keys(&table);
        if !unknown.is_empty() {
            if strict {
                return Err(CliError::Validation(format!(
                    "unknown configuration fields: {}",
                    unknown.join(", ")
                )));
            }
            eprintln!("warning: ignoring unknown configuration fields: {}", unknown.join(", "));
        }
        let config: ToolkitConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e| CliError::Validation(format!("config does not deserialize: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    /// Cross-check every section against the model invariants.
    pub fn validate(&self) -> CliResult<()> {
        self.geometry()?;
        self.squid_params()?;
        let r = &self.resonator;
        if !(r.target_f0_hz > 0.0 && r.coupling_q > 0.0 && r.internal_q > 0.0) {
            return Err(CliError::Validation(format!(
                "resonator section: target_f0_hz, coupling_q and internal_q must be positive \
                 (got {}, {}, {})",
                r.target_f0_hz, r.coupling_q, r.internal_q
            )));
        }
        if !(r.amplitude > 0.0) {
            return Err(CliError::Validation(format!(
                "resonator section: amplitude must be positive, got {}",
                r.amplitude
            )));
        }
        self.psd_settings()?;
        let n = &self.noise;
        if !(n.sample_rate_hz > 0.0 && n.record_seconds > 0.0) {
            return Err(CliError::Validation(
                "noise section: sample rate and record length must be positive".into(),
            ));
        }
        for band in [&n.low_band_hz, &n.mid_band_hz] {
            if !(band[0] > 0.0 && band[1] > band[0]) {
                return Err(CliError::Validation(format!(
                    "noise section: band [{}, {}] must be positive and ordered",
                    band[0], band[1]
                )));
            }
        }
        if !(n.independence_threshold >= 1.0) {
            return Err(CliError::Validation(
                "noise section: independence_threshold must be at least 1".into(),
            ));
        }
        Ok(())
    }

    pub fn geometry(&self) -> CliResult<CpwGeometry> {
        let c = &self.cpw;
        let gap = match c.gap_m {
            Some(g) => g,
            None => gap_for_impedance(
                c.center_width_m,
                c.substrate_rel_permittivity,
                c.target_impedance_ohm,
            )
            .map_err(|e| CliError::Validation(format!("cpw section: {e}")))?,
        };
        // Physical length is calibrated from the resonance target later; a
        // placeholder keeps the geometry self-consistent.
        CpwGeometry::new(
            c.center_width_m,
            gap,
            c.film_thickness_m,
            c.substrate_rel_permittivity,
            1.0,
        )
        .map_err(|e| CliError::Validation(format!("cpw section: {e}")))
    }

    pub fn squid_params(&self) -> CliResult<SquidParams> {
        let s = &self.squid;
        SquidParams::with_split(
            s.loop_inductance_h,
            s.junction_arm_fraction,
            s.critical_current_a,
            s.junction_inductance_zero_h,
        )
        .map_err(|e| CliError::Validation(format!("squid section: {e}")))
    }

    /// Full resonator model with the length calibrated to the target
    /// zero-flux resonance.
    pub fn model(&self) -> CliResult<ResonatorModel> {
        let geometry = self.geometry()?;
        let line = compute_line_params(&geometry)
            .map_err(|e| CliError::Validation(format!("cpw section: {e}")))?;
        let squid = self.squid_params()?;
        let length = calibrate_length(
            &line,
            load_inductance(&squid, 0.0),
            self.resonator.target_f0_hz,
        )
        .map_err(|e| CliError::Validation(format!("resonator section: {e}")))?;
        Ok(ResonatorModel {
            line,
            physical_length: length,
            squid,
            coupling_q: self.resonator.coupling_q,
            internal_q: self.resonator.internal_q,
            mismatch_angle: self.resonator.mismatch_angle_rad,
            coupling_capacitance: self.resonator.coupling_capacitance_f,
        })
    }

    pub fn baseline(&self) -> SweepBaseline {
        SweepBaseline {
            amplitude: self.resonator.amplitude,
            phase_offset: self.resonator.phase_offset_rad,
            cable_delay: self.resonator.cable_delay_s,
        }
    }

    pub fn psd_settings(&self) -> CliResult<PsdSettings> {
        let n = &self.noise;
        let window = match n.window.as_str() {
            "rectangular" => WindowKind::Rectangular,
            "hann" => WindowKind::Hann,
            "hamming" => WindowKind::Hamming,
            other => {
                return Err(CliError::Validation(format!(
                    "noise section: unknown window \"{other}\" (rectangular, hann, hamming)"
                )))
            }
        };
        let detrend = match n.detrend.as_str() {
            "none" => Detrend::None,
            "segment-mean" => Detrend::SegmentMean,
            other => {
                return Err(CliError::Validation(format!(
                    "noise section: unknown detrend \"{other}\" (none, segment-mean)"
                )))
            }
        };
        if n.segment_length < 8 {
            return Err(CliError::Validation(format!(
                "noise section: segment_length {} too short",
                n.segment_length
            )));
        }
        if !(0.0..=0.9).contains(&n.overlap_fraction) {
            return Err(CliError::Validation(format!(
                "noise section: overlap_fraction {} outside [0, 0.9]",
                n.overlap_fraction
            )));
        }
        Ok(PsdSettings {
            segment_length: n.segment_length,
            overlap_fraction: n.overlap_fraction,
            window,
            detrend,
        })
    }

    pub fn seed(&self, override_seed: Option<u64>) -> u64 {
        override_seed.or(self.rng_seed).unwrap_or(42)
    }

    /// Normalized serialized form (defaults filled in).
    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}

/// Collect dotted paths of fields that the schema does not know about.
fn unknown_keys(table: &toml::Table) -> Vec<String> {
    const TOP: &[&str] = &["rng_seed", "output_dir", "cpw", "squid", "resonator", "noise"];
    const CPW: &[&str] = &[
        "center_width_m",
        "gap_m",
        "film_thickness_m",
        "substrate_rel_permittivity",
        "target_impedance_ohm",
    ];
    const SQUID: &[&str] = &[
        "loop_inductance_h",
        "critical_current_a",
        "junction_arm_fraction",
        "junction_inductance_zero_h",
    ];
    const RESONATOR: &[&str] = &[
        "target_f0_hz",
        "coupling_q",
        "internal_q",
        "mismatch_angle_rad",
        "cable_delay_s",
        "amplitude",
        "phase_offset_rad",
        "coupling_capacitance_f",
    ];
    const NOISE: &[&str] = &[
        "segment_length",
        "overlap_fraction",
        "window",
        "detrend",
        "low_band_hz",
        "mid_band_hz",
        "eval_frequency_hz",
        "independence_threshold",
        "sample_rate_hz",
        "record_seconds",
    ];
    let mut unknown = Vec::new();
    for (key, sub) in table {
        if !TOP.contains(&key.as_str()) {
            unknown.push(key.clone());
            continue;
        }
        let allowed: &[&str] = match key.as_str() {
            "cpw" => CPW,
            "squid" => SQUID,
            "resonator" => RESONATOR,
            "noise" => NOISE,
            _ => continue,
        };
        if let Some(section) = sub.as_table() {
            for inner in section.keys() {
                if !allowed.contains(&inner.as_str()) {
                    unknown.push(format!("{key}.{inner}"));
                }
            }
        }
    }
    unknown
}
