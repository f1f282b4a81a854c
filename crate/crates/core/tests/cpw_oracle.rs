//! Quadrature cross-checks of the conformal-mapping line parameters.

mod common;

use common::{elliptic_k_quadrature, SplitMix64};
use fluxres::constants::{EPS0, MU0};
use fluxres::cpw::{complete_elliptic_k, compute_line_params, gap_for_impedance, CpwGeometry};
use proptest::prelude::*;

#[test]
fn agm_matches_quadrature_on_random_moduli() {
    let mut rng = SplitMix64(0x5eed_c0de);
    for _ in 0..100 {
        let k = rng.range(0.0, 0.999);
        let agm = complete_elliptic_k(k).unwrap();
        let quad = elliptic_k_quadrature(k);
        let rel = (agm - quad).abs() / quad;
        assert!(rel < 1e-9, "K({k}): AGM {agm} vs quadrature {quad}");
    }
}

proptest! {
    #[test]
    fn agm_matches_quadrature_everywhere(k in 0.0f64..0.999) {
        let agm = complete_elliptic_k(k).unwrap();
        let quad = elliptic_k_quadrature(k);
        prop_assert!((agm - quad).abs() / quad < 1e-9);
    }
}

/// Characteristic impedance via the quadrature oracle only.
fn z0_quadrature(width: f64, gap: f64, eps_r: f64) -> f64 {
    let k = width / (width + 2.0 * gap);
    let kp = (1.0 - k * k).sqrt();
    let ratio = elliptic_k_quadrature(kp) / elliptic_k_quadrature(k);
    0.25 * (MU0 / (EPS0 * 0.5 * (1.0 + eps_r))).sqrt() * ratio
}

#[test]
fn equal_width_and_gap_impedance_in_air() {
    // w = s gives modulus exactly 1/3; in air the formula evaluates to
    // 147.245 ohm (independent quadrature of the elliptic ratio).
    let geom = CpwGeometry::new(20e-6, 20e-6, 150e-9, 1.0, 1.0).unwrap();
    assert!((geom.modulus() - 1.0 / 3.0).abs() < 1e-15);
    let line = compute_line_params(&geom).unwrap();
    let z0 = line.characteristic_impedance;
    let oracle = z0_quadrature(20e-6, 20e-6, 1.0);
    assert!(
        (z0 - oracle).abs() / oracle < 1e-9,
        "Z0 {z0} vs quadrature {oracle}"
    );
    assert!((z0 - 147.245).abs() / 147.245 < 0.005, "Z0 = {z0}");
}

#[test]
fn fifty_ohm_gap_on_silicon_near_six_microns() {
    // The reference device picks the gap for a 50-ohm line at a 10 um width.
    let gap = gap_for_impedance(10e-6, 11.45, 50.0).unwrap();
    assert!(
        (gap - 6e-6).abs() < 1e-6,
        "gap = {} um, expected about 6 um",
        gap * 1e6
    );
    let oracle = z0_quadrature(10e-6, gap, 11.45);
    assert!((oracle - 50.0).abs() < 1e-6, "quadrature Z0 = {oracle}");
}

#[test]
fn impedance_monotone_in_gap_on_geometry_grid() {
    for &width in &[2e-6, 10e-6, 50e-6] {
        let mut prev = 0.0;
        for i in 1..=30 {
            let gap = width * 0.1 * i as f64;
            let geom = CpwGeometry::new(width, gap, 150e-9, 11.45, 1.0).unwrap();
            let z0 = compute_line_params(&geom).unwrap().characteristic_impedance;
            assert!(z0 > prev, "Z0 not increasing at w={width}, s={gap}");
            prev = z0;
        }
    }
}
