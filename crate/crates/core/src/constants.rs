//! Physical constants (2019 SI / CODATA 2018).

/// Planck constant (J·s, exact).
pub const PLANCK: f64 = 6.626_070_15e-34;

/// Elementary charge (C, exact).
pub const ELEMENTARY_CHARGE: f64 = 1.602_176_634e-19;

/// Magnetic flux quantum h/2e (Wb).
pub const PHI0: f64 = PLANCK / (2.0 * ELEMENTARY_CHARGE);

/// Vacuum permeability (H/m).
pub const MU0: f64 = 1.256_637_062_12e-6;

/// Vacuum permittivity (F/m).
pub const EPS0: f64 = 8.854_187_812_8e-12;

/// Speed of light in vacuum (m/s, exact).
pub const C_VACUUM: f64 = 299_792_458.0;

/// Convert a power from dBm to watts.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    1e-3 * 10f64.powf(dbm / 10.0)
}

/// Convert a power from watts to dBm.
pub fn watts_to_dbm(watts: f64) -> f64 {
    10.0 * (watts / 1e-3).log10()
}
