//! SPICE Level-3 drain-current model for power MOSFETs.
//!
//! The intrinsic model covers cutoff, linear, and saturation operation with
//! mobility degradation (`theta`) and a body-effect correction (`gamma`,
//! `phi`). Terminal currents additionally account for the ohmic drops across
//! the drain and source access resistances: the drain current and the
//! internal gate/drain voltages are coupled, so the terminal solve is a
//! damped fixed-point iteration with a bisection fallback.
//!
//! Conventions: voltages in volts, currents in amperes, geometry in meters.
//! The source is tied to the body, so the source-body voltage is zero
//! everywhere.

use serde::{Deserialize, Serialize};

/// Floor applied to the surface potential when the body effect is active (V).
/// Keeps the square root away from zero for degenerate `phi` inputs.
const PHI_FLOOR: f64 = 1e-3;

/// Damping factor for the terminal fixed-point iteration.
const FP_DAMPING: f64 = 0.5;

/// Iteration cap for the damped fixed-point phase.
const FP_MAX_ITERS: usize = 200;

/// Iteration cap for the bisection fallback. Generous: the bracket collapses
/// to adjacent floats in well under 120 halvings for any representable start.
const BISECT_MAX_ITERS: usize = 200;

/// Relative residual tolerance for the terminal solve: converged when
/// `|I - f(I)| <= FP_TOL * I`.
const FP_TOL: f64 = 1e-13;

/// Static device parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviceParams {
    /// Channel length (m).
    pub l: f64,
    /// Channel width (m).
    pub w: f64,
    /// Drain access resistance (ohm).
    pub r_d: f64,
    /// Source access resistance (ohm).
    pub r_s: f64,
    /// Threshold voltage (V).
    pub v_t: f64,
    /// Transconductance parameter (A/V^2).
    pub kp: f64,
    /// Body-effect coefficient (V^0.5).
    pub gamma: f64,
    /// Surface potential (V).
    pub phi: f64,
    /// Mobility-degradation coefficient (1/V).
    pub theta: f64,
    /// Ambient temperature (degrees C). Stored for provenance; the model
    /// carries no temperature dependence.
    pub temp_c: f64,
}

/// One (v_gs, v_ds) operating point at the device terminals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BiasPoint {
    /// Gate-source voltage (V).
    pub v_gs: f64,
    /// Drain-source voltage (V). Must be >= 0.
    pub v_ds: f64,
}

/// Uniform v_ds sweep. Point `i` is `start + i * step`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VdsGrid {
    /// First drain voltage (V).
    pub start: f64,
    /// Last drain voltage (V).
    pub stop: f64,
    /// Spacing between points (V).
    pub step: f64,
}

impl Default for VdsGrid {
    fn default() -> Self {
        VdsGrid { start: 0.1, stop: 10.0, step: 0.1 }
    }
}

impl VdsGrid {
    /// Number of sweep points: `round((stop - start) / step) + 1`.
    pub fn len(&self) -> usize {
        ((self.stop - self.start) / self.step).round() as usize + 1
    }

    pub fn is_empty(&self) -> bool {
        false // a valid grid always holds at least its start point
    }

    /// Materializes the sweep points.
    pub fn points(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.start + i as f64 * self.step).collect()
    }

    /// Checks the grid is finite, strictly increasing, and non-negative.
    pub fn validate(&self) -> Result<(), String> {
        if !(self.start.is_finite() && self.stop.is_finite() && self.step.is_finite()) {
            return Err("grid values must be finite".into());
        }
        if self.start < 0.0 {
            return Err("grid must start at v_ds >= 0".into());
        }
        if self.step <= 0.0 {
            return Err("grid step must be positive".into());
        }
        if self.stop <= self.start {
            return Err("grid stop must exceed start".into());
        }
        Ok(())
    }
}

/// Bias-dependent quantities derived from [`DeviceParams`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EffectiveParams {
    /// Transconductance parameter after mobility degradation (A/V^2).
    pub kp_eff: f64,
    /// Gain factor `kp_eff * w / l` (A/V^2).
    pub beta: f64,
    /// Body-effect correction, dimensionless.
    pub f_b: f64,
    /// Saturation drain voltage (V). Zero at or below threshold.
    pub v_dssat: f64,
}

/// Terminal-solve failures.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SolveError {
    /// The damped iteration and the bisection fallback both exhausted their
    /// iteration caps. Signals a pathological parameter combination.
    #[error("terminal current solve did not converge at v_gs={v_gs} V, v_ds={v_ds} V")]
    NonConvergence { v_gs: f64, v_ds: f64 },
}

/// Body-effect correction `f_b = gamma / (4 * sqrt(phi))`.
///
/// Exactly zero when `gamma` is zero; otherwise `phi` is floored at
/// `PHI_FLOOR` so the correction stays finite.
pub fn body_factor(params: &DeviceParams) -> f64 {
    if params.gamma == 0.0 {
        return 0.0;
    }
    params.gamma / (4.0 * params.phi.max(PHI_FLOOR).sqrt())
}

/// Derives the bias-dependent gain and saturation voltage at a given gate
/// drive. Below threshold `kp_eff == kp` and `v_dssat == 0`.
pub fn effective_params(params: &DeviceParams, v_gs: f64) -> EffectiveParams {
    let f_b = body_factor(params);
    let v_ov = (v_gs - params.v_t).max(0.0);
    let kp_eff = params.kp / (1.0 + params.theta * v_ov);
    let beta = kp_eff * params.w / params.l;
    let v_dssat = v_ov / (1.0 + f_b);
    EffectiveParams { kp_eff, beta, f_b, v_dssat }
}

/// Drain current of the intrinsic device (no access resistance), in amperes.
///
/// Cutoff (`v_gs <= v_t`) returns exactly zero. The linear expression
/// `beta * ((v_gs - v_t) * v_ds - (1 + f_b) * v_ds^2 / 2)` applies up to
/// `v_dssat`; beyond it the current saturates at
/// `beta / (2 * (1 + f_b)) * (v_gs - v_t)^2`. The two branches meet at
/// `v_dssat` by construction.
pub fn intrinsic_ids(params: &DeviceParams, v_gs: f64, v_ds: f64) -> f64 {
    debug_assert!(v_ds >= 0.0, "drain bias must be non-negative");
    if v_gs <= params.v_t {
        return 0.0;
    }
    let eff = effective_params(params, v_gs);
    let v_ov = v_gs - params.v_t;
    if v_ds >= eff.v_dssat {
        eff.beta / (2.0 * (1.0 + eff.f_b)) * v_ov * v_ov
    } else {
        eff.beta * (v_ov * v_ds - (1.0 + eff.f_b) * v_ds * v_ds / 2.0)
    }
}

/// Drain current at the device terminals, in amperes.
///
/// Solves the self-consistency `I = f(I)` where
/// `f(I) = intrinsic_ids(v_gs - I * r_s, max(0, v_ds - I * (r_s + r_d)))`:
/// a damped fixed-point iteration starting from the intrinsic current at the
/// terminal bias, falling back to bisection of `g(I) = I - f(I)` on
/// `[0, I_0]` when the iteration does not settle. `g` is continuous and
/// strictly increasing on that bracket, so the fallback always locates the
/// unique root; the result either meets the relative residual tolerance or
/// is resolved to adjacent floats.
pub fn terminal_ids(params: &DeviceParams, bias: BiasPoint) -> Result<f64, SolveError> {
    let r_total = params.r_s + params.r_d;
    let f = |i: f64| {
        let v_gs_int = bias.v_gs - i * params.r_s;
        let v_ds_int = (bias.v_ds - i * r_total).max(0.0);
        intrinsic_ids(params, v_gs_int, v_ds_int)
    };

    // i0 == intrinsic current at the terminal bias; also the fixed point when
    // the device is off or both resistances are zero.
    let i0 = f(0.0);
    if i0 == 0.0 {
        return Ok(0.0);
    }

    let mut i_cur = i0;
    for _ in 0..FP_MAX_ITERS {
        let fi = f(i_cur);
        if (i_cur - fi).abs() <= FP_TOL * i_cur {
            return Ok(i_cur);
        }
        i_cur = (1.0 - FP_DAMPING) * i_cur + FP_DAMPING * fi;
    }

    // Bisection fallback. f is non-increasing in I, so g(0) = -i0 < 0 and
    // g(i0) = i0 - f(i0) >= 0: the bracket is valid.
    let (mut lo, mut hi) = (0.0_f64, i0);
    for _ in 0..BISECT_MAX_ITERS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            // bracket collapsed to adjacent floats; mid is the root to
            // machine precision
            return Ok(mid);
        }
        let res = mid - f(mid);
        if res.abs() <= FP_TOL * mid {
            return Ok(mid);
        }
        if res < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(SolveError::NonConvergence { v_gs: bias.v_gs, v_ds: bias.v_ds })
}

/// Terminal drain current swept over a v_ds grid at fixed `v_gs`.
pub fn transfer_curve(
    params: &DeviceParams,
    v_gs: f64,
    grid: &VdsGrid,
) -> Result<Vec<f64>, SolveError> {
    grid.points()
        .into_iter()
        .map(|v_ds| terminal_ids(params, BiasPoint { v_gs, v_ds }))
        .collect()
}

/// One transfer curve per `v_gs` value, in list order.
pub fn curve_set(
    params: &DeviceParams,
    v_gs_list: &[f64],
    grid: &VdsGrid,
) -> Result<Vec<Vec<f64>>, SolveError> {
    v_gs_list.iter().map(|&v_gs| transfer_curve(params, v_gs, grid)).collect()
}
