//! rf-SQUID screening: self-consistent flux states and load inductance.
//!
//! A single-junction superconducting loop threaded by an external flux
//! settles into a total flux satisfying
//!
//! ```text
//! phi_tot = phi_ext - (beta_L / 2 pi) sin(2 pi phi_tot)
//! ```
//!
//! with both fluxes in units of the flux quantum and
//! `beta_L = 2 pi L_loop I0 / Phi0`. For `beta_L > 1` the equation is
//! multivalued and a swept external flux produces hysteretic jumps between
//! branches. A flux state is stable when `1 + beta_L cos(2 pi phi_tot) > 0`.
//!
//! For microwave currents flowing across the loop, the load presented to the
//! resonator is the parallel combination of the junction branch
//! `L1 + LJ(0)/|cos(pi phi_tot)|` and the shunt branch `L2`.

use std::f64::consts::PI;

use thiserror::Error;

use crate::constants::PHI0;

/// Newton convergence target on the flux-equation residual (flux-quantum units).
const NEWTON_TOL: f64 = 1e-13;
/// Iteration cap for the Newton solve.
const NEWTON_MAX_ITER: usize = 100;
/// Dense-scan step used by the branch enumerator (flux-quantum units).
pub const GRID_STEP: f64 = 1.0 / 2000.0;

#[derive(Debug, Error, PartialEq)]
pub enum SquidError {
    #[error("invalid SQUID parameters: {0}")]
    InvalidParams(String),
    #[error("flux solve lost its branch near phi_ext = {applied_flux} (seed {seed})")]
    BranchLost { applied_flux: f64, seed: f64 },
    #[error("beta_L = {beta_l} <= 1, the flux state is single-valued and never jumps")]
    NoHysteresis { beta_l: f64 },
    #[error("no stable flux state found in the search window around phi_ext = {applied_flux}")]
    NoStableRoot { applied_flux: f64 },
}

/// Loop and junction parameters of the rf-SQUID load.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SquidParams {
    /// Total geometric loop inductance L1 + L2 (H).
    pub loop_inductance: f64,
    /// Inductance of the junction-carrying arm (H).
    pub junction_arm_inductance: f64,
    /// Inductance of the shunt arm (H).
    pub shunt_arm_inductance: f64,
    /// Critical current of the weak link (A).
    pub critical_current: f64,
    /// Josephson inductance at zero flux (H).
    pub junction_inductance_zero: f64,
}

impl SquidParams {
    /// Symmetric arm split with the standard Josephson inductance
    /// `LJ(0) = Phi0 / (2 pi I0)`.
    pub fn symmetric(loop_inductance: f64, critical_current: f64) -> Result<Self, SquidError> {
        Self::with_split(loop_inductance, 0.5, critical_current, None)
    }

    /// Arm split given as the junction-arm fraction `L1 / L_loop` in (0, 1).
    /// `junction_inductance_zero` overrides the default `Phi0/(2 pi I0)`.
    pub fn with_split(
        loop_inductance: f64,
        junction_arm_fraction: f64,
        critical_current: f64,
        junction_inductance_zero: Option<f64>,
    ) -> Result<Self, SquidError> {
        if !(junction_arm_fraction > 0.0 && junction_arm_fraction < 1.0) {
            return Err(SquidError::InvalidParams(format!(
                "junction arm fraction must lie in (0, 1), got {junction_arm_fraction}"
            )));
        }
        let lj0 = junction_inductance_zero
            .unwrap_or_else(|| PHI0 / (2.0 * PI * critical_current));
        let params = Self {
            loop_inductance,
            junction_arm_inductance: junction_arm_fraction * loop_inductance,
            shunt_arm_inductance: (1.0 - junction_arm_fraction) * loop_inductance,
            critical_current,
            junction_inductance_zero: lj0,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<(), SquidError> {
        for (name, v) in [
            ("loop_inductance", self.loop_inductance),
            ("junction_arm_inductance", self.junction_arm_inductance),
            ("shunt_arm_inductance", self.shunt_arm_inductance),
            ("critical_current", self.critical_current),
            ("junction_inductance_zero", self.junction_inductance_zero),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(SquidError::InvalidParams(format!(
                    "{name} must be strictly positive, got {v}"
                )));
            }
        }
        let sum = self.junction_arm_inductance + self.shunt_arm_inductance;
        if (sum - self.loop_inductance).abs() > 1e-9 * self.loop_inductance {
            return Err(SquidError::InvalidParams(format!(
                "L1 + L2 = {sum} does not match loop inductance {}",
                self.loop_inductance
            )));
        }
        Ok(())
    }

    /// Junction-arm fraction L1 / L_loop.
    pub fn junction_arm_fraction(&self) -> f64 {
        self.junction_arm_inductance / self.loop_inductance
    }
}

/// One self-consistent solution of the flux equation.
///
/// Both fluxes are in units of the flux quantum. `branch_index` is the
/// winding number of the branch (nearest integer to the total flux).
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FluxState {
    pub applied_flux: f64,
    pub total_flux: f64,
    pub branch_index: i32,
    pub stable: bool,
}

/// Inductive screening parameter `2 pi L_loop I0 / Phi0`.
pub fn beta_l(params: &SquidParams) -> f64 {
    2.0 * PI * params.loop_inductance * params.critical_current / PHI0
}

/// Residual of the flux equation, `g(phi) = phi - phi_ext + (b/2pi) sin(2pi phi)`.
#[inline]
fn residual(beta: f64, applied: f64, total: f64) -> f64 {
    total - applied + beta / (2.0 * PI) * (2.0 * PI * total).sin()
}

/// Derivative of the residual, `g'(phi) = 1 + b cos(2pi phi)`.
#[inline]
fn residual_slope(beta: f64, total: f64) -> f64 {
    1.0 + beta * (2.0 * PI * total).cos()
}

fn state_from_root(beta: f64, applied: f64, root: f64) -> FluxState {
    FluxState {
        applied_flux: applied,
        total_flux: root,
        branch_index: root.round() as i32,
        stable: residual_slope(beta, root) > 0.0,
    }
}

/// Newton solve of the flux equation from a caller-supplied seed.
///
/// Converges to whichever root the seed's basin selects; the returned state
/// carries the stability flag. Fails with [`SquidError::BranchLost`] when the
/// iteration does not settle, which during a sweep marks a hysteretic jump.
pub fn solve_total_flux(
    params: &SquidParams,
    applied_flux: f64,
    seed_total_flux: f64,
) -> Result<FluxState, SquidError> {
    params.validate()?;
    if !seed_total_flux.is_finite() || !applied_flux.is_finite() {
        return Err(SquidError::InvalidParams(
            "applied flux and seed must be finite".into(),
        ));
    }
    let beta = beta_l(params);
    let mut x = seed_total_flux;
    for _ in 0..NEWTON_MAX_ITER {
        let g = residual(beta, applied_flux, x);
        if g.abs() < NEWTON_TOL {
            return Ok(state_from_root(beta, applied_flux, x));
        }
        let slope = residual_slope(beta, x);
        if slope.abs() < 1e-12 {
            break;
        }
        let step = g / slope;
        // Keep the iteration inside the seed's neighbourhood; a runaway step
        // means the branch has folded away.
        if step.abs() > 1.0 {
            break;
        }
        x -= step;
    }
    // Final residual check: Newton may have landed within tolerance on the
    // last update without re-testing.
    if residual(beta, applied_flux, x).abs() < NEWTON_TOL {
        return Ok(state_from_root(beta, applied_flux, x));
    }
    Err(SquidError::BranchLost {
        applied_flux,
        seed: seed_total_flux,
    })
}

/// Every root of the flux equation with total flux inside `window`.
///
/// Dense sign-change scan with step [`GRID_STEP`], each bracket refined by
/// bisection. Roots are returned in increasing total flux, tagged
/// stable/unstable.
pub fn all_flux_branches(
    params: &SquidParams,
    applied_flux: f64,
    window: (f64, f64),
) -> Result<Vec<FluxState>, SquidError> {
    params.validate()?;
    let (lo, hi) = window;
    if !lo.is_finite() || !hi.is_finite() || hi - lo < 1.0 {
        return Err(SquidError::InvalidParams(format!(
            "window ({lo}, {hi}) must be finite and at least one flux quantum wide"
        )));
    }
    let beta = beta_l(params);
    let steps = ((hi - lo) / GRID_STEP).ceil() as usize;
    let mut roots: Vec<f64> = Vec::new();
    let mut x_prev = lo;
    let mut g_prev = residual(beta, applied_flux, x_prev);
    for i in 1..=steps {
        let x = lo + (hi - lo) * i as f64 / steps as f64;
        let g = residual(beta, applied_flux, x);
        if g_prev == 0.0 {
            roots.push(x_prev);
        } else if g_prev * g < 0.0 {
            roots.push(bisect_root(beta, applied_flux, x_prev, x));
        }
        x_prev = x;
        g_prev = g;
    }
    if g_prev == 0.0 {
        roots.push(x_prev);
    }
    // Polish with a Newton step or two; bisection already puts us well inside
    // the convergence basin.
    let states = roots
        .into_iter()
        .map(|r| {
            let mut x = r;
            for _ in 0..4 {
                let slope = residual_slope(beta, x);
                if slope.abs() < 1e-12 {
                    break;
                }
                x -= residual(beta, applied_flux, x) / slope;
            }
            state_from_root(beta, applied_flux, x)
        })
        .collect();
    Ok(states)
}

fn bisect_root(beta: f64, applied: f64, mut lo: f64, mut hi: f64) -> f64 {
    let mut g_lo = residual(beta, applied, lo);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let g_mid = residual(beta, applied, mid);
        if g_mid == 0.0 || (hi - lo) < 1e-15 {
            return mid;
        }
        if g_lo * g_mid < 0.0 {
            hi = mid;
        } else {
            lo = mid;
            g_lo = g_mid;
        }
    }
    0.5 * (lo + hi)
}

/// Applied flux at which an upward sweep loses its branch and jumps.
///
/// The fold sits where the residual slope vanishes:
/// `phi_tot_c = arccos(-1/beta)/2pi`, mapped through the flux equation.
/// Only defined for `beta_L > 1`.
pub fn critical_applied_flux(params: &SquidParams) -> Result<f64, SquidError> {
    params.validate()?;
    let beta = beta_l(params);
    critical_applied_flux_of_beta(beta)
}

/// Same as [`critical_applied_flux`] but directly from the screening parameter.
pub fn critical_applied_flux_of_beta(beta: f64) -> Result<f64, SquidError> {
    if beta <= 1.0 {
        return Err(SquidError::NoHysteresis { beta_l: beta });
    }
    let phi_tot_c = (-1.0 / beta).acos() / (2.0 * PI);
    Ok(phi_tot_c + beta / (2.0 * PI) * (2.0 * PI * phi_tot_c).sin())
}

/// Screening parameter that places the upward jump at `critical_flux`.
///
/// Inverse of [`critical_applied_flux_of_beta`]; the map is monotone on
/// beta in (1, inf) with range (0.5, inf).
pub fn beta_for_critical_flux(critical_flux: f64) -> Result<f64, SquidError> {
    if !(critical_flux > 0.5) || !critical_flux.is_finite() {
        return Err(SquidError::InvalidParams(format!(
            "upward jump flux must exceed 0.5 flux quanta, got {critical_flux}"
        )));
    }
    let mut lo = 1.0 + 1e-12;
    let mut hi = 1.0 + 1e-6;
    while critical_applied_flux_of_beta(hi)? < critical_flux {
        hi *= 2.0;
        if hi > 1e9 {
            return Err(SquidError::InvalidParams(format!(
                "jump flux {critical_flux} out of reach"
            )));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if critical_applied_flux_of_beta(mid)? < critical_flux {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-14 * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Microwave load inductance of the loop at a given total flux.
///
/// Parallel combination of the junction branch `L1 + LJ(0)/|cos(pi phi)|`
/// and the shunt branch `L2`. At half-integer flux the junction branch is
/// open and the load is exactly `L2`.
pub fn load_inductance(params: &SquidParams, total_flux: f64) -> f64 {
    let l1 = params.junction_arm_inductance;
    let l2 = params.shunt_arm_inductance;
    let cos_abs = (PI * total_flux).cos().abs();
    if cos_abs == 0.0 {
        return l2;
    }
    let junction_branch = l1 + params.junction_inductance_zero / cos_abs;
    junction_branch * l2 / (junction_branch + l2)
}

/// A hysteretic jump recorded during a flux sweep.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct JumpEvent {
    /// Index into the ramp at which the jump happened.
    pub ramp_index: usize,
    /// Applied flux at the jump (flux-quantum units).
    pub applied_flux: f64,
    /// Total flux immediately before the jump.
    pub from_total_flux: f64,
    /// Total flux on the branch landed on.
    pub to_total_flux: f64,
}

/// Result of a branch-continued flux sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct FluxSweep {
    pub states: Vec<FluxState>,
    pub jumps: Vec<JumpEvent>,
}

/// Branch continuation along an applied-flux ramp.
///
/// Each point is solved by Newton seeded from the previous total flux. When
/// the branch folds away the sweep re-seeds on the nearest stable root in
/// the direction of travel and records the jump. The output is fully
/// deterministic for identical ramps and initial states.
pub fn sweep_flux(
    params: &SquidParams,
    flux_ramp: &[f64],
    initial_state: FluxState,
) -> Result<FluxSweep, SquidError> {
    params.validate()?;
    let beta = beta_l(params);
    let mut states = Vec::with_capacity(flux_ramp.len());
    let mut jumps = Vec::new();
    let mut seed = initial_state.total_flux;
    let mut prev_applied = initial_state.applied_flux;
    for (i, &applied) in flux_ramp.iter().enumerate() {
        let direction = if applied >= prev_applied { 1.0 } else { -1.0 };
        let continued = solve_total_flux(params, applied, seed).ok().filter(|s| {
            // Continuation must stay on the same branch: a stable root in the
            // same winding band. For beta <= 1 the solution is unique.
            s.stable && (beta <= 1.0 || s.total_flux.round() == seed.round())
        });
        let state = match continued {
            Some(s) => s,
            None => {
                let window = (seed - 2.0, seed + 2.0);
                let branches = all_flux_branches(params, applied, window)?;
                let target = branches
                    .iter()
                    .filter(|s| s.stable && (s.total_flux - seed) * direction > 0.0)
                    .min_by(|a, b| {
                        let da = (a.total_flux - seed).abs();
                        let db = (b.total_flux - seed).abs();
                        da.partial_cmp(&db).expect("finite distances")
                    })
                    .copied()
                    .ok_or(SquidError::NoStableRoot {
                        applied_flux: applied,
                    })?;
                jumps.push(JumpEvent {
                    ramp_index: i,
                    applied_flux: applied,
                    from_total_flux: seed,
                    to_total_flux: target.total_flux,
                });
                target
            }
        };
        seed = state.total_flux;
        prev_applied = applied;
        states.push(state);
    }
    Ok(FluxSweep { states, jumps })
}
