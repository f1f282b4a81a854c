//! Algebraic circle fit for resonance loci in the complex plane.
//!
//! A circle is written as `A (x^2 + y^2) + B x + C y + D = 0`. The fit
//! minimizes the algebraic distance subject to the Pratt normalization
//! `B^2 + C^2 - 4 A D = 1`, which reduces to the generalized eigenproblem
//! `M v = eta N v` on the data moment matrix. The eigenvalue of interest is
//! the smallest non-negative root of `det(M - eta N)`, found by Newton from
//! zero; for noiseless data the root is zero and the fit interpolates.
//!
//! One damped Gauss-Newton step on the geometric distances follows to take
//! out the small high-noise bias of the algebraic solution.

use num_complex::Complex64;

use super::least_squares::solve_dense;
use super::FitError;

/// Fitted circle: center, radius and the RMS radial residual.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CircleFit {
    pub center: Complex64,
    pub radius: f64,
    pub rms_residual: f64,
}

/// Least-squares circle through a point cloud.
pub fn algebraic_circle_fit(points: &[Complex64]) -> Result<CircleFit, FitError> {
    if points.len() < 3 {
        return Err(FitError::InsufficientData(format!(
            "circle fit needs at least 3 points, got {}",
            points.len()
        )));
    }
    if points.iter().any(|p| !p.re.is_finite() || !p.im.is_finite()) {
        return Err(FitError::InvalidInput("non-finite point in circle fit".into()));
    }

    // Center and scale for conditioning.
    let n = points.len() as f64;
    let mean = points.iter().sum::<Complex64>() / n;
    let scale = (points.iter().map(|p| (p - mean).norm_sqr()).sum::<f64>() / n)
        .sqrt()
        .max(1e-300);
    let xs: Vec<f64> = points.iter().map(|p| (p.re - mean.re) / scale).collect();
    let ys: Vec<f64> = points.iter().map(|p| (p.im - mean.im) / scale).collect();

    // Moment matrix of (x^2 + y^2, x, y, 1).
    let mut m = [0.0f64; 16];
    for (&x, &y) in xs.iter().zip(&ys) {
        let z = x * x + y * y;
        let row = [z, x, y, 1.0];
        for i in 0..4 {
            for j in 0..4 {
                m[i * 4 + j] += row[i] * row[j];
            }
        }
    }
    for v in m.iter_mut() {
        *v /= n;
    }

    // Pratt constraint matrix.
    let nmat = [
        0.0, 0.0, 0.0, -2.0, //
        0.0, 1.0, 0.0, 0.0, //
        0.0, 0.0, 1.0, 0.0, //
        -2.0, 0.0, 0.0, 0.0,
    ];

    let char_poly = |eta: f64| {
        let mut a = [0.0f64; 16];
        for i in 0..16 {
            a[i] = m[i] - eta * nmat[i];
        }
        det4(&a)
    };

    // Newton from zero toward the smallest non-negative eigenvalue.
    let mut eta = 0.0f64;
    for _ in 0..64 {
        let f = char_poly(eta);
        let h = 1e-9 + eta.abs() * 1e-9;
        let df = (char_poly(eta + h) - char_poly(eta - h)) / (2.0 * h);
        if df.abs() < 1e-300 {
            break;
        }
        let step = f / df;
        eta -= step;
        if step.abs() < 1e-16 * (1.0 + eta.abs()) {
            break;
        }
    }

    // Null vector of (M - eta N) from the largest adjugate column.
    let mut a = [0.0f64; 16];
    for i in 0..16 {
        a[i] = m[i] - eta * nmat[i];
    }
    let adj = adjugate4(&a);
    let mut best_col = 0;
    let mut best_norm = -1.0;
    for col in 0..4 {
        let norm: f64 = (0..4).map(|row| adj[row * 4 + col].powi(2)).sum();
        if norm > best_norm {
            best_norm = norm;
            best_col = col;
        }
    }
    let v: Vec<f64> = (0..4).map(|row| adj[row * 4 + best_col]).collect();
    let vnorm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !(vnorm > 1e-300) {
        return Err(FitError::DegenerateGeometry(
            "circle moment matrix has no usable null space".into(),
        ));
    }
    let (ca, cb, cc, cd) = (v[0] / vnorm, v[1] / vnorm, v[2] / vnorm, v[3] / vnorm);

    // A -> 0 means the best conic is a line: collinear input.
    let disc = cb * cb + cc * cc - 4.0 * ca * cd;
    if ca.abs() < 1e-10 * (cb * cb + cc * cc).sqrt() || disc <= 0.0 {
        return Err(FitError::DegenerateGeometry(
            "points are collinear within precision, no finite circle".into(),
        ));
    }

    let cx = -cb / (2.0 * ca);
    let cy = -cc / (2.0 * ca);
    let radius = disc.sqrt() / (2.0 * ca.abs());

    // Back to data coordinates.
    let mut center = Complex64::new(mean.re + scale * cx, mean.im + scale * cy);
    let mut radius = radius * scale;

    // One Gauss-Newton step on the radial distances, kept only if it helps.
    let rms = radial_rms(points, center, radius);
    if let Some((c2, r2)) = geometric_step(points, center, radius) {
        if r2 > 0.0 && radial_rms(points, c2, r2) < rms {
            center = c2;
            radius = r2;
        }
    }

    Ok(CircleFit {
        center,
        radius,
        rms_residual: radial_rms(points, center, radius),
    })
}

fn radial_rms(points: &[Complex64], center: Complex64, radius: f64) -> f64 {
    let ss: f64 = points
        .iter()
        .map(|p| ((p - center).norm() - radius).powi(2))
        .sum();
    (ss / points.len() as f64).sqrt()
}

fn geometric_step(
    points: &[Complex64],
    center: Complex64,
    radius: f64,
) -> Option<(Complex64, f64)> {
    let mut ata = [0.0f64; 9];
    let mut atr = [0.0f64; 3];
    for p in points {
        let d = p - center;
        let dist = d.norm();
        if dist < 1e-300 {
            continue;
        }
        let jx = -d.re / dist;
        let jy = -d.im / dist;
        let jr = -1.0;
        let res = dist - radius;
        let row = [jx, jy, jr];
        for i in 0..3 {
            atr[i] += row[i] * res;
            for j in 0..3 {
                ata[i * 3 + j] += row[i] * row[j];
            }
        }
    }
    let rhs = [-atr[0], -atr[1], -atr[2]];
    let step = solve_dense(&ata, &rhs, 3)?;
    Some((
        Complex64::new(center.re + step[0], center.im + step[1]),
        radius + step[2],
    ))
}

fn det4(a: &[f64; 16]) -> f64 {
    // Expansion by 2x2 complementary minors (fixed cost, no pivoting noise).
    let s0 = a[0] * a[5] - a[1] * a[4];
    let s1 = a[0] * a[6] - a[2] * a[4];
    let s2 = a[0] * a[7] - a[3] * a[4];
    let s3 = a[1] * a[6] - a[2] * a[5];
    let s4 = a[1] * a[7] - a[3] * a[5];
    let s5 = a[2] * a[7] - a[3] * a[6];
    let c5 = a[10] * a[15] - a[11] * a[14];
    let c4 = a[9] * a[15] - a[11] * a[13];
    let c3 = a[9] * a[14] - a[10] * a[13];
    let c2 = a[8] * a[15] - a[11] * a[12];
    let c1 = a[8] * a[14] - a[10] * a[12];
    let c0 = a[8] * a[13] - a[9] * a[12];
    s0 * c5 - s1 * c4 + s2 * c3 + s3 * c2 - s4 * c1 + s5 * c0
}

fn adjugate4(a: &[f64; 16]) -> [f64; 16] {
    let mut adj = [0.0f64; 16];
    for row in 0..4 {
        for col in 0..4 {
            // Cofactor C_{row,col}; adjugate is its transpose.
            let mut minor = [0.0f64; 9];
            let mut k = 0;
            for i in 0..4 {
                if i == row {
                    continue;
                }
                for j in 0..4 {
                    if j == col {
                        continue;
                    }
                    minor[k] = a[i * 4 + j];
                    k += 1;
                }
            }
            let det3 = minor[0] * (minor[4] * minor[8] - minor[5] * minor[7])
                - minor[1] * (minor[3] * minor[8] - minor[5] * minor[6])
                + minor[2] * (minor[3] * minor[7] - minor[4] * minor[6]);
            let sign = if (row + col) % 2 == 0 { 1.0 } else { -1.0 };
            adj[col * 4 + row] = sign * det3;
        }
    }
    adj
}
