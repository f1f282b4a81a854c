//! Shared fixtures and independent oracles for the integration suites.
//!
//! Every oracle here deliberately re-derives its quantity through a
//! different route than the library: quadrature instead of AGM, dense
//! scanning instead of Newton, ABCD cascades instead of the closed input-
//! impedance form, complex network reduction instead of inductance algebra,
//! and an iterated geometric fit instead of the algebraic circle fit.

#![allow(dead_code)]

use num_complex::Complex64;

use fluxres::constants::PHI0;
use fluxres::cpw::{compute_line_params, gap_for_impedance, CpwGeometry, TransmissionLineModel};
use fluxres::resonator::{calibrate_length, ResonatorModel};
use fluxres::squid::{load_inductance, SquidParams};

pub const DEVICE_F0: f64 = 5.6513e9;
pub const DEVICE_LOOP_INDUCTANCE: f64 = 1.55e-12;
pub const DEVICE_CRITICAL_CURRENT: f64 = 320e-6;
pub const DEVICE_QI: f64 = 1.41e5;

/// 50-ohm line of the measured device: 10 um center strip on silicon.
pub fn device_line() -> TransmissionLineModel {
    let gap = gap_for_impedance(10e-6, 11.45, 50.0).expect("gap solvable");
    let geom = CpwGeometry::new(10e-6, gap, 150e-9, 11.45, 5e-3).expect("valid geometry");
    compute_line_params(&geom).expect("line params")
}

/// Device model with the reference loop inductance and critical current, length calibrated so the
/// zero-flux resonance lands at 5.6513 GHz.
pub fn device_model() -> ResonatorModel {
    device_model_with_split(0.5)
}

pub fn device_model_with_split(junction_arm_fraction: f64) -> ResonatorModel {
    let line = device_line();
    let squid = SquidParams::with_split(
        DEVICE_LOOP_INDUCTANCE,
        junction_arm_fraction,
        DEVICE_CRITICAL_CURRENT,
        None,
    )
    .expect("valid squid");
    let length = calibrate_length(&line, load_inductance(&squid, 0.0), DEVICE_F0)
        .expect("length calibration");
    ResonatorModel {
        line,
        physical_length: length,
        squid,
        coupling_q: 1.41e5,
        internal_q: DEVICE_QI,
        mismatch_angle: 0.0,
        coupling_capacitance: 0.7e-15,
    }
}

/// Complete elliptic integral of the first kind by adaptive Simpson
/// quadrature of its defining integral.
pub fn elliptic_k_quadrature(modulus: f64) -> f64 {
    assert!((0.0..1.0).contains(&modulus));
    let m2 = modulus * modulus;
    let f = |t: f64| 1.0 / (1.0 - m2 * t.sin().powi(2)).sqrt();
    adaptive_simpson(&f, 0.0, std::f64::consts::FRAC_PI_2, 1e-13, 40)
}

fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64, depth: usize) -> f64 {
    let m = 0.5 * (a + b);
    let whole = simpson(f, a, b);
    let left = simpson(f, a, m);
    let right = simpson(f, m, b);
    if depth == 0 || (left + right - whole).abs() < 15.0 * tol {
        left + right + (left + right - whole) / 15.0
    } else {
        adaptive_simpson(f, a, m, 0.5 * tol, depth - 1)
            + adaptive_simpson(f, m, b, 0.5 * tol, depth - 1)
    }
}

fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let m = 0.5 * (a + b);
    (b - a) / 6.0 * (f(a) + 4.0 * f(m) + f(b))
}

/// One root of the flux equation found by the scan oracle.
#[derive(Debug, Clone, Copy)]
pub struct OracleRoot {
    pub total_flux: f64,
    pub stable: bool,
}

/// Dense-scan oracle for every root of
/// `phi - phi_ext + (beta/2pi) sin(2pi phi) = 0` inside the window.
///
/// Finer grid and a plain interval-halving refinement, sharing no code with
/// the library solver.
pub fn flux_roots_oracle(beta: f64, applied: f64, window: (f64, f64)) -> Vec<OracleRoot> {
    use std::f64::consts::PI;
    let g = |phi: f64| phi - applied + beta / (2.0 * PI) * (2.0 * PI * phi).sin();
    let steps = ((window.1 - window.0) * 3000.0).ceil() as usize;
    let mut roots = Vec::new();
    let mut prev_x = window.0;
    let mut prev_g = g(prev_x);
    for i in 1..=steps {
        let x = window.0 + (window.1 - window.0) * i as f64 / steps as f64;
        let gx = g(x);
        if prev_g == 0.0 {
            roots.push(prev_x);
        } else if prev_g * gx < 0.0 {
            let mut lo = prev_x;
            let mut hi = x;
            let mut g_lo = prev_g;
            for _ in 0..100 {
                let mid = 0.5 * (lo + hi);
                let gm = g(mid);
                if gm == 0.0 {
                    lo = mid;
                    hi = mid;
                    break;
                }
                if g_lo * gm < 0.0 {
                    hi = mid;
                } else {
                    lo = mid;
                    g_lo = gm;
                }
            }
            roots.push(0.5 * (lo + hi));
        }
        prev_x = x;
        prev_g = gx;
    }
    roots
        .into_iter()
        .map(|r| OracleRoot {
            total_flux: r,
            stable: 1.0 + beta * (2.0 * PI * r).cos() > 0.0,
        })
        .collect()
}

/// Input impedance by cascading ABCD matrices of `segments` line pieces.
pub fn abcd_input_impedance(
    z0: f64,
    phase_velocity: f64,
    length: f64,
    frequency: f64,
    z_load: Complex64,
    segments: usize,
) -> Complex64 {
    use std::f64::consts::PI;
    let seg_len = length / segments as f64;
    let theta = 2.0 * PI * frequency * seg_len / phase_velocity;
    let (s, c) = theta.sin_cos();
    // Lossless segment: [[cos, i Z0 sin], [i sin / Z0, cos]]
    let seg = [
        Complex64::new(c, 0.0),
        Complex64::new(0.0, z0 * s),
        Complex64::new(0.0, s / z0),
        Complex64::new(c, 0.0),
    ];
    let mut total = [
        Complex64::new(1.0, 0.0),
        Complex64::new(0.0, 0.0),
        Complex64::new(0.0, 0.0),
        Complex64::new(1.0, 0.0),
    ];
    for _ in 0..segments {
        total = [
            total[0] * seg[0] + total[1] * seg[2],
            total[0] * seg[1] + total[1] * seg[3],
            total[2] * seg[0] + total[3] * seg[2],
            total[2] * seg[1] + total[3] * seg[3],
        ];
    }
    (total[0] * z_load + total[1]) / (total[2] * z_load + total[3])
}

/// Load inductance by complex reduction of the two-branch network at a test
/// frequency, instead of real-valued inductance algebra.
pub fn network_load_inductance(params: &SquidParams, total_flux: f64, test_freq: f64) -> f64 {
    use std::f64::consts::PI;
    let omega = 2.0 * PI * test_freq;
    let cos_abs = (PI * total_flux).cos().abs();
    let z_shunt = Complex64::new(0.0, omega * params.shunt_arm_inductance);
    if cos_abs == 0.0 {
        return z_shunt.im / omega;
    }
    let z_junction = Complex64::new(
        0.0,
        omega * (params.junction_arm_inductance + params.junction_inductance_zero / cos_abs),
    );
    let z = z_junction * z_shunt / (z_junction + z_shunt);
    z.im / omega
}

/// Geometric circle fit iterated to convergence from a starting guess.
pub fn geometric_circle_fit(
    points: &[Complex64],
    start_center: Complex64,
    start_radius: f64,
) -> (Complex64, f64) {
    let mut cx = start_center.re;
    let mut cy = start_center.im;
    let mut r = start_radius;
    for _ in 0..200 {
        let mut ata = [0.0f64; 9];
        let mut atb = [0.0f64; 3];
        for p in points {
            let dx = p.re - cx;
            let dy = p.im - cy;
            let d = (dx * dx + dy * dy).sqrt().max(1e-300);
            let row = [-dx / d, -dy / d, -1.0];
            let res = d - r;
            for i in 0..3 {
                atb[i] -= row[i] * res;
                for j in 0..3 {
                    ata[i * 3 + j] += row[i] * row[j];
                }
            }
        }
        // Solve the 3x3 normal equations by Cramer's rule.
        let det = |m: &[f64; 9]| {
            m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6])
                + m[2] * (m[3] * m[7] - m[4] * m[6])
        };
        let d0 = det(&ata);
        if d0.abs() < 1e-300 {
            break;
        }
        let mut step = [0.0f64; 3];
        for k in 0..3 {
            let mut m = ata;
            for row in 0..3 {
                m[row * 3 + k] = atb[row];
            }
            step[k] = det(&m) / d0;
        }
        cx += step[0];
        cy += step[1];
        r += step[2];
        if step.iter().map(|s| s.abs()).fold(0.0f64, f64::max) < 1e-14 {
            break;
        }
    }
    (Complex64::new(cx, cy), r)
}

/// Screening parameter helper: loop inductance for a target beta at fixed I0.
pub fn loop_for_beta(beta: f64, critical_current: f64) -> f64 {
    beta * PHI0 / (2.0 * std::f64::consts::PI * critical_current)
}

/// Deterministic pseudo-random stream for oracle scans (SplitMix64).
pub struct SplitMix64(pub u64);

impl SplitMix64 {
    pub fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9E3779B97F4A7C15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
        z ^ (z >> 31)
    }

    /// Uniform draw in [0, 1).
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    /// Uniform draw in [lo, hi).
    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }
}
