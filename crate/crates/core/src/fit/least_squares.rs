//! Damped least squares with a numerically differentiated Jacobian.
//!
//! Small dense problems only (a handful of parameters, up to a few thousand
//! residuals). Marquardt damping on the normal equations, optional box
//! bounds enforced by clamping, forward-difference Jacobian with
//! caller-supplied absolute steps, and a covariance estimate from the
//! Jacobian at the optimum.

/// Stopping condition reached by the iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum StopReason {
    /// Relative parameter step fell below tolerance.
    SmallStep,
    /// Relative cost change fell below tolerance.
    SmallCostChange,
    /// Damping grew past its ceiling without finding a downhill step.
    Stalled,
    /// Iteration cap reached.
    MaxIterations,
}

#[derive(Debug, Clone)]
pub struct LsOptions {
    pub max_iterations: usize,
    /// Convergence threshold on max_j |step_j| / max(|p_j|, step scale).
    pub relative_step_tol: f64,
    /// Convergence threshold on |cost change| / cost.
    pub relative_cost_tol: f64,
    pub initial_damping: f64,
}

impl Default for LsOptions {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            relative_step_tol: 1e-10,
            relative_cost_tol: 1e-12,
            initial_damping: 1e-3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LsReport {
    pub params: Vec<f64>,
    /// Half the sum of squared residuals at the optimum.
    pub cost: f64,
    /// Root-mean-square residual at the optimum.
    pub rms_residual: f64,
    pub iterations: usize,
    pub converged: bool,
    pub stop: StopReason,
    /// Standard error per parameter from the Jacobian at the optimum, when
    /// the normal matrix is invertible and there are spare degrees of freedom.
    pub stderr: Option<Vec<f64>>,
    /// Covariance matrix (row major) matching `stderr`.
    pub covariance: Option<Vec<f64>>,
    /// Parameters that finished pinned at a bound.
    pub at_bound: Vec<bool>,
}

/// Minimize half the squared norm of `residuals(p)`.
///
/// `fd_steps` are absolute forward-difference steps per parameter and double
/// as the parameter scale in the step-size convergence test. `bounds` are
/// inclusive `(lower, upper)` pairs; use infinities for free parameters.
pub fn levenberg_marquardt<F>(
    mut residuals: F,
    p0: &[f64],
    fd_steps: &[f64],
    bounds: Option<&[(f64, f64)]>,
    opts: &LsOptions,
) -> Result<LsReport, String>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>, String>,
{
    let np = p0.len();
    assert_eq!(fd_steps.len(), np, "one finite-difference step per parameter");
    if let Some(b) = bounds {
        assert_eq!(b.len(), np, "one bound pair per parameter");
    }
    let clamp = |p: &mut [f64]| {
        if let Some(b) = bounds {
            for (v, &(lo, hi)) in p.iter_mut().zip(b) {
                *v = v.clamp(lo, hi);
            }
        }
    };

    let mut p = p0.to_vec();
    clamp(&mut p);
    let mut r = residuals(&p)?;
    let nr = r.len();
    if nr == 0 {
        return Err("residual vector is empty".into());
    }
    let mut cost = 0.5 * dot(&r, &r);
    let mut lambda = opts.initial_damping;
    let mut iterations = 0;
    let mut converged = false;
    let mut stop = StopReason::MaxIterations;
    let mut any_accepted = false;

    while iterations < opts.max_iterations {
        iterations += 1;
        let jac = numeric_jacobian(&mut residuals, &p, &r, fd_steps, bounds)?;
        // Normal equations J^T J and gradient J^T r.
        let mut ata = vec![0.0; np * np];
        let mut atr = vec![0.0; np];
        for i in 0..nr {
            for j in 0..np {
                let jij = jac[i * np + j];
                atr[j] += jij * r[i];
                for k in j..np {
                    ata[j * np + k] += jij * jac[i * np + k];
                }
            }
        }
        for j in 0..np {
            for k in 0..j {
                ata[j * np + k] = ata[k * np + j];
            }
        }

        let mut accepted = false;
        for _ in 0..32 {
            let mut damped = ata.clone();
            for j in 0..np {
                let d = ata[j * np + j];
                damped[j * np + j] += lambda * if d > 0.0 { d } else { 1.0 };
            }
            let rhs: Vec<f64> = atr.iter().map(|v| -v).collect();
            let Some(step) = solve_dense(&damped, &rhs, np) else {
                lambda *= 10.0;
                continue;
            };
            let mut p_new = p.clone();
            for j in 0..np {
                p_new[j] += step[j];
            }
            clamp(&mut p_new);
            let r_new = residuals(&p_new)?;
            let cost_new = 0.5 * dot(&r_new, &r_new);
            if cost_new.is_finite() && cost_new < cost {
                let rel_step = p_new
                    .iter()
                    .zip(&p)
                    .zip(fd_steps)
                    .map(|((a, b), s)| (a - b).abs() / b.abs().max(s.abs().max(1e-300)))
                    .fold(0.0f64, f64::max);
                let rel_cost = (cost - cost_new) / cost.max(1e-300);
                p = p_new;
                r = r_new;
                cost = cost_new;
                lambda = (lambda * 0.3).max(1e-14);
                accepted = true;
                any_accepted = true;
                if rel_step < opts.relative_step_tol {
                    converged = true;
                    stop = StopReason::SmallStep;
                } else if rel_cost < opts.relative_cost_tol {
                    converged = true;
                    stop = StopReason::SmallCostChange;
                }
                break;
            }
            lambda *= 10.0;
            if lambda > 1e14 {
                break;
            }
        }
        if !accepted {
            // No damping regime can lower the cost: the quadratic model has
            // bottomed out. After at least one successful descent (or when
            // the start already sits at a numerically zero cost) this is a
            // minimum within resolution; otherwise it is a genuine stall.
            converged = any_accepted || cost <= nr as f64 * 1e-20;
            stop = StopReason::Stalled;
            break;
        }
        if converged {
            break;
        }
    }

    let at_bound = match bounds {
        Some(b) => p
            .iter()
            .zip(b)
            .map(|(v, &(lo, hi))| *v <= lo || *v >= hi)
            .collect(),
        None => vec![false; np],
    };

    // Covariance from a fresh Jacobian at the optimum.
    let (stderr, covariance) = if nr > np {
        let jac = numeric_jacobian(&mut residuals, &p, &r, fd_steps, bounds)?;
        let mut ata = vec![0.0; np * np];
        for i in 0..nr {
            for j in 0..np {
                for k in 0..np {
                    ata[j * np + k] += jac[i * np + j] * jac[i * np + k];
                }
            }
        }
        match invert_dense(&ata, np) {
            Some(inv) => {
                let sigma2 = 2.0 * cost / (nr - np) as f64;
                let cov: Vec<f64> = inv.iter().map(|v| v * sigma2).collect();
                let se = (0..np).map(|j| cov[j * np + j].max(0.0).sqrt()).collect();
                (Some(se), Some(cov))
            }
            None => (None, None),
        }
    } else {
        (None, None)
    };

    Ok(LsReport {
        rms_residual: (2.0 * cost / nr as f64).sqrt(),
        params: p,
        cost,
        iterations,
        converged,
        stop,
        stderr,
        covariance,
        at_bound,
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn numeric_jacobian<F>(
    residuals: &mut F,
    p: &[f64],
    r0: &[f64],
    fd_steps: &[f64],
    bounds: Option<&[(f64, f64)]>,
) -> Result<Vec<f64>, String>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>, String>,
{
    let np = p.len();
    let nr = r0.len();
    let mut jac = vec![0.0; nr * np];
    let mut probe = p.to_vec();
    for j in 0..np {
        let mut h = fd_steps[j];
        if let Some(b) = bounds {
            // Step backwards when a forward probe would leave the box.
            if p[j] + h > b[j].1 && p[j] - h >= b[j].0 {
                h = -h;
            }
        }
        probe[j] = p[j] + h;
        let r_probe = residuals(&probe)?;
        if r_probe.len() != nr {
            return Err("residual length changed during differentiation".into());
        }
        let inv_h = 1.0 / h;
        for i in 0..nr {
            jac[i * np + j] = (r_probe[i] - r0[i]) * inv_h;
        }
        probe[j] = p[j];
    }
    Ok(jac)
}

/// Solve `a x = b` for a small dense row-major system by Gaussian
/// elimination with partial pivoting. Returns `None` when singular.
pub fn solve_dense(a: &[f64], b: &[f64], n: usize) -> Option<Vec<f64>> {
    let mut m = a.to_vec();
    let mut x = b.to_vec();
    for col in 0..n {
        let mut pivot = col;
        for row in (col + 1)..n {
            if m[row * n + col].abs() > m[pivot * n + col].abs() {
                pivot = row;
            }
        }
        if m[pivot * n + col].abs() < 1e-300 {
            return None;
        }
        if pivot != col {
            for k in 0..n {
                m.swap(col * n + k, pivot * n + k);
            }
            x.swap(col, pivot);
        }
        let inv = 1.0 / m[col * n + col];
        for row in (col + 1)..n {
            let factor = m[row * n + col] * inv;
            if factor == 0.0 {
                continue;
            }
            for k in col..n {
                m[row * n + k] -= factor * m[col * n + k];
            }
            x[row] -= factor * x[col];
        }
    }
    for col in (0..n).rev() {
        let mut v = x[col];
        for k in (col + 1)..n {
            v -= m[col * n + k] * x[k];
        }
        x[col] = v / m[col * n + col];
    }
    Some(x)
}

/// Invert a small dense row-major matrix; `None` when singular.
pub fn invert_dense(a: &[f64], n: usize) -> Option<Vec<f64>> {
    let mut inv = vec![0.0; n * n];
    let mut unit = vec![0.0; n];
    for col in 0..n {
        unit.iter_mut().for_each(|v| *v = 0.0);
        unit[col] = 1.0;
        let x = solve_dense(a, &unit, n)?;
        for row in 0..n {
            inv[row * n + col] = x[row];
        }
    }
    Some(inv)
}
