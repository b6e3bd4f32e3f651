//! Robust control barrier functions for the keep-out constraint.
//!
//! Three constructions share one output type, [`RcbfEvaluation`], which carries
//! the barrier value `H`, its partials, the disturbance margin `W`, and the
//! induced half-space `{u : row·u <= bound}` on the control.

use nalgebra::Vector6;
use serde::{Deserialize, Serialize};

use crate::constraints::KeepOutConstraint;
use crate::dynamics::{
    gravity_accel, ControlBounds, DisturbanceBounds, GravityModel, SimState, Vec3,
};
use crate::error::{Error, Result};
use crate::switching::ClassK;

pub mod constant;
pub mod maneuver;
pub mod predictive;
pub mod variable;

pub use constant::{
    compute_a_max0, compute_a_max0_general, constant_authority_value, eval_constant_authority,
    keep_out_boundary_samples, AuthoritySample,
};
pub use maneuver::{u_star, Maneuver};
pub use predictive::{
    eval_predictive, find_maximizer, propagate_chi, PredictiveSpec, PropagationResult,
};
pub use variable::{eval_variable_authority, gravity_phi, Potential};

/// Which barrier construction to use for a constraint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum RcbfSpec {
    ConstantAuthority { a_max: f64 },
    VariableAuthority { potential: Potential },
    Predictive(PredictiveSpec),
}

impl RcbfSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            RcbfSpec::ConstantAuthority { a_max } => {
                if !(*a_max > 0.0 && a_max.is_finite()) {
                    return Err(Error::InvalidParameter(format!(
                        "a_max must be positive, got {a_max}"
                    )));
                }
                Ok(())
            }
            RcbfSpec::VariableAuthority { potential } => potential.validate(),
            RcbfSpec::Predictive(p) => p.validate(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            RcbfSpec::ConstantAuthority { .. } => "constant-authority",
            RcbfSpec::VariableAuthority { .. } => "variable-authority",
            RcbfSpec::Predictive(_) => "predictive",
        }
    }
}

/// Barrier value, partials, disturbance margin and induced control half-space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RcbfEvaluation {
    /// Underlying constraint value `h(t, x)`.
    pub h: f64,
    /// Barrier value `H(t, x)`, m.
    pub value: f64,
    /// Explicit time partial of `H`, m/s.
    pub d_dt: f64,
    /// State gradient of `H` with respect to `[r; v]`.
    pub grad: Vector6<f64>,
    /// Worst-case disturbance effect on the barrier rate, m/s.
    pub w: f64,
    pub constraint_row: Vec3,
    pub constraint_bound: f64,
    /// The row vanishes, so the condition cannot be enforced through `u`.
    pub control_independent: bool,
    /// Maximizer time for the predictive construction.
    pub beta_c: Option<f64>,
}

impl RcbfEvaluation {
    /// Whether `u` satisfies the half-space within `tol`.
    pub fn admits(&self, u: &Vec3, tol: f64) -> bool {
        self.constraint_row.dot(u) <= self.constraint_bound + tol
    }

    /// Position part of the gradient (the channel the unmatched disturbance enters).
    pub fn grad_r(&self) -> Vec3 {
        self.grad.fixed_rows::<3>(0).into_owned()
    }
}

/// `|grad_H g| w_u_max + |grad_H (unmatched channel)| w_x_max`.
pub fn disturbance_margin_w(
    control_row: &Vec3,
    unmatched_grad: &Vec3,
    bounds: &DisturbanceBounds,
) -> f64 {
    control_row.norm() * bounds.w_u_max + unmatched_grad.norm() * bounds.w_x_max
}

/// Builds the half-space for `x' = [v; f] + [0; I](u + w_u) + [w_x; 0]`.
pub(crate) fn assemble(
    h: f64,
    value: f64,
    d_dt: f64,
    grad: Vector6<f64>,
    s: &SimState,
    f: &Vec3,
    bounds: &DisturbanceBounds,
    alpha: &ClassK,
) -> Result<RcbfEvaluation> {
    let grad_r: Vec3 = grad.fixed_rows::<3>(0).into_owned();
    let row: Vec3 = grad.fixed_rows::<3>(3).into_owned();
    let w = disturbance_margin_w(&row, &grad_r, bounds);
    let drift = grad_r.dot(&s.v) + row.dot(f);
    let bound = alpha.eval(-value, w)? - w - d_dt - drift;
    Ok(RcbfEvaluation {
        h,
        value,
        d_dt,
        grad,
        w,
        constraint_row: row,
        constraint_bound: bound,
        control_independent: row == Vec3::zeros(),
        beta_c: None,
    })
}

/// Evaluates any construction on a keep-out constraint.
pub fn evaluate(
    spec: &RcbfSpec,
    c: &KeepOutConstraint,
    s: &SimState,
    gravity: &GravityModel,
    control: &ControlBounds,
    bounds: &DisturbanceBounds,
    alpha: &ClassK,
) -> Result<RcbfEvaluation> {
    match spec {
        RcbfSpec::ConstantAuthority { a_max } => {
            eval_constant_authority(c, *a_max, s, gravity, bounds, alpha)
        }
        RcbfSpec::VariableAuthority { potential } => {
            eval_variable_authority(c, potential, s, gravity, bounds, alpha)
        }
        RcbfSpec::Predictive(p) => eval_predictive(c, p, s, gravity, control, bounds, alpha),
    }
}

/// Membership in the restricted safe set: both `H <= 0` and `h <= 0`.
pub fn in_restricted_safe_set(eval: &RcbfEvaluation) -> bool {
    eval.value <= 0.0 && eval.h <= 0.0
}

pub(crate) fn drift_accel(gravity: &GravityModel, s: &SimState) -> Result<Vec3> {
    gravity_accel(gravity, s.t, &s.r)
}
