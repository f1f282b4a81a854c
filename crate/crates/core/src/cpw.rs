//! Coplanar-waveguide line parameters and weak-link feasibility.
//!
//! The cross-section is mapped to per-unit-length inductance and capacitance
//! with the conformal-mapping result for a zero-thickness conductor on an
//! infinitely thick substrate:
//!
//! ```text
//! k  = w / (w + 2s)          k' = sqrt(1 - k^2)
//! Ll = (mu0/4) K(k')/K(k)    Cl = 4 eps0 eps_eff K(k)/K(k')
//! ```
//!
//! with `eps_eff = (1 + eps_r)/2`. Kinetic inductance of the film is
//! neglected; the line is purely geometric. The complete elliptic integral
//! K is evaluated by arithmetic-geometric-mean iteration.
//!
//! The same module carries the Ginzburg-Landau coherence-length scaling
//! `xi(T) = xi_ref sqrt((1 - T_ref/Tc)/(1 - T/Tc))` used to decide whether a
//! superconducting constriction is short enough (l <= 3.5 xi) to behave as a
//! Josephson weak link.

use std::f64::consts::FRAC_PI_2;

use thiserror::Error;

use crate::constants::{EPS0, MU0};

#[derive(Debug, Error, PartialEq)]
pub enum CpwError {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),
    #[error("elliptic modulus {0} outside [0, 1)")]
    InvalidModulus(f64),
    #[error("elliptic integral evaluation not finite for modulus {0}")]
    NonFiniteElliptic(f64),
    #[error("temperature {temperature} K outside (0, {critical}) K")]
    TemperatureOutOfRange { temperature: f64, critical: f64 },
    #[error("invalid nanobridge parameters: {0}")]
    InvalidNanobridge(String),
}

/// Cross-section and material of the bare coplanar waveguide.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CpwGeometry {
    /// Width of the center conductor (m).
    pub center_width: f64,
    /// Gap between the center conductor and each ground plane (m).
    pub gap: f64,
    /// Film thickness (m); informational, the mapping assumes zero thickness.
    pub film_thickness: f64,
    /// Relative permittivity of the substrate.
    pub substrate_rel_permittivity: f64,
    /// Physical length of the line (m).
    pub physical_length: f64,
}

impl CpwGeometry {
    pub fn new(
        center_width: f64,
        gap: f64,
        film_thickness: f64,
        substrate_rel_permittivity: f64,
        physical_length: f64,
    ) -> Result<Self, CpwError> {
        let geom = Self {
            center_width,
            gap,
            film_thickness,
            substrate_rel_permittivity,
            physical_length,
        };
        geom.validate()?;
        Ok(geom)
    }

    pub fn validate(&self) -> Result<(), CpwError> {
        for (name, v) in [
            ("center_width", self.center_width),
            ("gap", self.gap),
            ("film_thickness", self.film_thickness),
            ("physical_length", self.physical_length),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(CpwError::InvalidGeometry(format!(
                    "{name} must be strictly positive, got {v}"
                )));
            }
        }
        if !(self.substrate_rel_permittivity >= 1.0) {
            return Err(CpwError::InvalidGeometry(format!(
                "substrate_rel_permittivity must be >= 1, got {}",
                self.substrate_rel_permittivity
            )));
        }
        Ok(())
    }

    /// Conformal-mapping modulus k = w/(w + 2s).
    pub fn modulus(&self) -> f64 {
        self.center_width / (self.center_width + 2.0 * self.gap)
    }
}

/// Per-unit-length description of the line and its derived wave quantities.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TransmissionLineModel {
    /// Series inductance per unit length (H/m).
    pub inductance_per_length: f64,
    /// Shunt capacitance per unit length (F/m).
    pub capacitance_per_length: f64,
    /// Characteristic impedance sqrt(Ll/Cl) (ohm).
    pub characteristic_impedance: f64,
    /// Phase velocity 1/sqrt(Ll Cl) (m/s).
    pub phase_velocity: f64,
}

impl TransmissionLineModel {
    /// Build from per-unit-length parameters, deriving impedance and velocity.
    pub fn from_per_length(l_per_m: f64, c_per_m: f64) -> Self {
        Self {
            inductance_per_length: l_per_m,
            capacitance_per_length: c_per_m,
            characteristic_impedance: (l_per_m / c_per_m).sqrt(),
            phase_velocity: 1.0 / (l_per_m * c_per_m).sqrt(),
        }
    }
}

/// Weak-link geometry and coherence-length reference point.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct NanobridgeParams {
    /// Geometric length of the constriction (m).
    pub geometric_length: f64,
    /// Coherence length at the reference temperature (m).
    pub coherence_length_ref: f64,
    /// Temperature at which the reference coherence length holds (K).
    pub reference_temperature: f64,
    /// Critical temperature of the film (K).
    pub critical_temperature: f64,
}

impl NanobridgeParams {
    pub fn new(
        geometric_length: f64,
        coherence_length_ref: f64,
        reference_temperature: f64,
        critical_temperature: f64,
    ) -> Result<Self, CpwError> {
        if !(reference_temperature > 0.0 && reference_temperature < critical_temperature) {
            return Err(CpwError::InvalidNanobridge(format!(
                "need 0 < T_ref ({reference_temperature}) < T_c ({critical_temperature})"
            )));
        }
        if !(geometric_length > 0.0) || !(coherence_length_ref > 0.0) {
            return Err(CpwError::InvalidNanobridge(
                "lengths must be strictly positive".into(),
            ));
        }
        Ok(Self {
            geometric_length,
            coherence_length_ref,
            reference_temperature,
            critical_temperature,
        })
    }
}

/// Outcome of the weak-link criterion l <= 3.5 xi(T).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JosephsonMargin {
    /// True when the effective length satisfies the criterion.
    pub ok: bool,
    /// 3.5 xi(T) minus the effective length (m); negative when too long.
    pub margin: f64,
    /// Coherence length at the evaluated temperature (m).
    pub coherence_length: f64,
}

/// Complete elliptic integral of the first kind K(k), modulus convention.
///
/// AGM iteration, relative accuracy better than 1e-12 over [0, 1).
pub fn complete_elliptic_k(modulus: f64) -> Result<f64, CpwError> {
    if !modulus.is_finite() || !(0.0..1.0).contains(&modulus) {
        return Err(CpwError::InvalidModulus(modulus));
    }
    let mut a = 1.0f64;
    let mut b = (1.0 - modulus * modulus).sqrt();
    for _ in 0..64 {
        let an = 0.5 * (a + b);
        let bn = (a * b).sqrt();
        if (an - bn).abs() <= 1e-15 * an {
            a = an;
            break;
        }
        a = an;
        b = bn;
    }
    let k = FRAC_PI_2 / a;
    if !k.is_finite() {
        return Err(CpwError::NonFiniteElliptic(modulus));
    }
    Ok(k)
}

/// Per-unit-length line parameters of the bare CPW.
pub fn compute_line_params(geometry: &CpwGeometry) -> Result<TransmissionLineModel, CpwError> {
    geometry.validate()?;
    let k = geometry.modulus();
    if !(k > 0.0 && k < 1.0) {
        return Err(CpwError::InvalidModulus(k));
    }
    let kp = (1.0 - k * k).sqrt();
    let big_k = complete_elliptic_k(k)?;
    let big_kp = complete_elliptic_k(kp)?;
    let eps_eff = 0.5 * (1.0 + geometry.substrate_rel_permittivity);
    let l_per_m = 0.25 * MU0 * big_kp / big_k;
    let c_per_m = 4.0 * EPS0 * eps_eff * big_k / big_kp;
    let model = TransmissionLineModel::from_per_length(l_per_m, c_per_m);
    if !model.characteristic_impedance.is_finite() || !model.phase_velocity.is_finite() {
        return Err(CpwError::NonFiniteElliptic(k));
    }
    Ok(model)
}

/// Gap that yields the requested characteristic impedance at fixed width.
///
/// Z0 grows monotonically with the gap, so a bracketed bisection suffices.
pub fn gap_for_impedance(
    center_width: f64,
    substrate_rel_permittivity: f64,
    target_impedance: f64,
) -> Result<f64, CpwError> {
    let z0_of = |gap: f64| -> Result<f64, CpwError> {
        let geom = CpwGeometry::new(center_width, gap, 1e-9, substrate_rel_permittivity, 1.0)?;
        Ok(compute_line_params(&geom)?.characteristic_impedance)
    };
    let mut lo = center_width * 1e-6;
    let mut hi = center_width * 1e6;
    if z0_of(lo)? > target_impedance || z0_of(hi)? < target_impedance {
        return Err(CpwError::InvalidGeometry(format!(
            "target impedance {target_impedance} ohm not reachable at width {center_width} m"
        )));
    }
    for _ in 0..200 {
        let mid = (lo * hi).sqrt();
        if z0_of(mid)? < target_impedance {
            lo = mid;
        } else {
            hi = mid;
        }
        if (hi - lo) <= 1e-12 * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Ginzburg-Landau coherence length at `temperature`.
pub fn coherence_length(params: &NanobridgeParams, temperature: f64) -> Result<f64, CpwError> {
    let tc = params.critical_temperature;
    if !(temperature > 0.0 && temperature < tc) {
        return Err(CpwError::TemperatureOutOfRange {
            temperature,
            critical: tc,
        });
    }
    let num = 1.0 - params.reference_temperature / tc;
    let den = 1.0 - temperature / tc;
    Ok(params.coherence_length_ref * (num / den).sqrt())
}

/// Check the weak-link criterion for a given effective length.
pub fn josephson_regime_ok(
    params: &NanobridgeParams,
    temperature: f64,
    effective_length: f64,
) -> Result<JosephsonMargin, CpwError> {
    let xi = coherence_length(params, temperature)?;
    let threshold = 3.5 * xi;
    Ok(JosephsonMargin {
        ok: effective_length <= threshold,
        margin: threshold - effective_length,
        coherence_length: xi,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constants::C_VACUUM;

    const NB: NanobridgeParams = NanobridgeParams {
        geometric_length: 40e-9,
        coherence_length_ref: 40e-9,
        reference_temperature: 4.2,
        critical_temperature: 9.2,
    };

    #[test]
    fn elliptic_k_at_zero() {
        assert_eq!(complete_elliptic_k(0.0).unwrap(), FRAC_PI_2);
    }

    #[test]
    fn elliptic_k_at_half_sqrt_two() {
        // Independently tabulated: K(1/sqrt(2)) = 1.8540746773013719
        let k = complete_elliptic_k(0.5f64.sqrt()).unwrap();
        assert!((k - 1.854_074_677_301_371_9).abs() < 2e-12, "K = {k}");
    }

    #[test]
    fn elliptic_k_domain_errors() {
        assert_eq!(
            complete_elliptic_k(1.0).unwrap_err(),
            CpwError::InvalidModulus(1.0)
        );
        assert!(complete_elliptic_k(-0.1).is_err());
        assert!(complete_elliptic_k(f64::NAN).is_err());
    }

    #[test]
    fn air_line_runs_at_vacuum_light_speed() {
        let geom = CpwGeometry::new(10e-6, 6e-6, 150e-9, 1.0, 5e-3).unwrap();
        let line = compute_line_params(&geom).unwrap();
        let rel = (line.phase_velocity - C_VACUUM).abs() / C_VACUUM;
        assert!(rel < 1e-9, "v = {} deviates by {rel}", line.phase_velocity);
    }

    #[test]
    fn derived_quantities_consistent() {
        let geom = CpwGeometry::new(10e-6, 6e-6, 150e-9, 11.45, 5e-3).unwrap();
        let line = compute_line_params(&geom).unwrap();
        let v = 1.0 / (line.inductance_per_length * line.capacitance_per_length).sqrt();
        let z0 = (line.inductance_per_length / line.capacitance_per_length).sqrt();
        assert!((v - line.phase_velocity).abs() / v < 1e-12);
        assert!((z0 - line.characteristic_impedance).abs() / z0 < 1e-12);
        assert!(line.phase_velocity > 0.0 && line.phase_velocity <= C_VACUUM);
    }

    #[test]
    fn geometry_validation_rejects_nonphysical_inputs() {
        assert!(CpwGeometry::new(0.0, 6e-6, 150e-9, 11.45, 5e-3).is_err());
        assert!(CpwGeometry::new(10e-6, -1e-6, 150e-9, 11.45, 5e-3).is_err());
        assert!(CpwGeometry::new(10e-6, 6e-6, 150e-9, 0.5, 5e-3).is_err());
        assert!(CpwGeometry::new(10e-6, 6e-6, 150e-9, 11.45, f64::INFINITY).is_err());
    }

    #[test]
    fn impedance_increases_with_gap() {
        let mut prev = 0.0;
        for i in 1..=20 {
            let gap = 1e-6 * i as f64;
            let geom = CpwGeometry::new(10e-6, gap, 150e-9, 11.45, 5e-3).unwrap();
            let z0 = compute_line_params(&geom).unwrap().characteristic_impedance;
            assert!(z0 > prev, "Z0({gap}) = {z0} not above {prev}");
            prev = z0;
        }
    }

    #[test]
    fn line_params_scale_invariant() {
        let a = CpwGeometry::new(10e-6, 6e-6, 150e-9, 11.45, 5e-3).unwrap();
        let b = CpwGeometry::new(10e-3, 6e-3, 150e-9, 11.45, 5e-3).unwrap();
        let za = compute_line_params(&a).unwrap().characteristic_impedance;
        let zb = compute_line_params(&b).unwrap().characteristic_impedance;
        assert!((za - zb).abs() / za < 1e-10);
    }

    #[test]
    fn coherence_length_at_reference_point() {
        let xi = coherence_length(&NB, 4.2).unwrap();
        assert!((xi - 40e-9).abs() < 1e-18);
    }

    #[test]
    fn coherence_length_at_millikelvin() {
        // 40 nm at 4.2 K extrapolates to 29.52 nm at 20 mK
        let xi = coherence_length(&NB, 0.02).unwrap();
        assert!((xi - 29.52e-9).abs() < 0.05e-9, "xi = {} nm", xi * 1e9);
    }

    #[test]
    fn coherence_length_zero_temperature_limit() {
        let expected = 40e-9 * (1.0 - 4.2 / 9.2f64).sqrt();
        let xi = coherence_length(&NB, 1e-9).unwrap();
        assert!((xi - expected).abs() / expected < 1e-9);
        assert!((expected - 29.49e-9).abs() < 0.01e-9);
    }

    #[test]
    fn coherence_length_diverges_at_tc() {
        assert!(matches!(
            coherence_length(&NB, 9.2),
            Err(CpwError::TemperatureOutOfRange { .. })
        ));
        assert!(coherence_length(&NB, 10.0).is_err());
        assert!(coherence_length(&NB, 0.0).is_err());
    }

    #[test]
    fn coherence_length_monotone_in_temperature() {
        let mut prev = 0.0;
        for i in 1..90 {
            let t = 0.1 * i as f64;
            let xi = coherence_length(&NB, t).unwrap();
            assert!(xi > prev);
            prev = xi;
        }
    }

    #[test]
    fn josephson_criterion_near_threshold() {
        // At 20 mK the threshold is 3.5 * 29.52 nm = 103.3 nm
        let m = josephson_regime_ok(&NB, 0.02, 103e-9).unwrap();
        assert!(m.ok);
        assert!(m.margin.abs() < 2e-9, "margin {} nm", m.margin * 1e9);

        let zero = josephson_regime_ok(&NB, 0.02, 0.0).unwrap();
        assert!(zero.ok);

        let long = josephson_regime_ok(&NB, 0.02, 200e-9).unwrap();
        assert!(!long.ok);
        assert!(long.margin < 0.0);
    }
}
