//! Evading maneuvers used to propagate candidate trajectories.
//!
//! Each maneuver minimizes a linear form `c·u` over the margin box
//! `U_w = { |u|_inf <= u_max - w_u_max }`, whose minimizer is `-u_bar sign(c)`.

use serde::{Deserialize, Serialize};

use crate::constraints::KeepOutConstraint;
use crate::dynamics::{ControlBounds, DisturbanceBounds, Vec3};
use crate::error::{Error, Result};

/// Tangential speeds below this make the orthogonal maneuver undefined, m/s.
pub const ORTH_SPEED_GUARD: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Maneuver {
    /// Minimizes the control term of the robust second derivative; equal to `Rad` for keep-out.
    Opt,
    /// Thrusts directly away from the center.
    Rad,
    /// Thrusts along the tangential relative velocity, raising angular momentum about the center.
    Orth,
    /// `argmin v_orth·u`: thrusts against the tangential relative velocity.
    OrthRetrograde,
}

/// Margin semi-axis `u_max - w_u_max`.
pub fn margin_semi_axis(control: &ControlBounds, bounds: &DisturbanceBounds) -> Result<f64> {
    let ub = control.u_max - bounds.w_u_max;
    if !(ub > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "margin box is empty: u_max = {} <= w_u_max = {}",
            control.u_max, bounds.w_u_max
        )));
    }
    Ok(ub)
}

/// `argmin_{u in U_w} c·u`, with zero components of `c` left at zero.
pub fn box_argmin(c: &Vec3, ub: f64) -> Vec3 {
    c.map(|x| {
        if x > 0.0 {
            -ub
        } else if x < 0.0 {
            ub
        } else {
            0.0
        }
    })
}

/// Tangential component of the relative velocity.
pub fn v_orth(d: &Vec3, e: &Vec3) -> Vec3 {
    e - d * (d.dot(e) / d.norm_squared())
}

/// Maneuver from relative position `d = r - r_c` and velocity `e = v - v_c`.
pub fn maneuver_from_relative(m: Maneuver, d: &Vec3, e: &Vec3, ub: f64) -> Result<Vec3> {
    match m {
        Maneuver::Opt | Maneuver::Rad => Ok(box_argmin(&(-d), ub)),
        Maneuver::Orth | Maneuver::OrthRetrograde => {
            let vo = v_orth(d, e);
            let speed = vo.norm();
            if !(speed >= ORTH_SPEED_GUARD) {
                return Err(Error::ManeuverSingularity { speed });
            }
            Ok(if m == Maneuver::Orth {
                box_argmin(&(-vo), ub)
            } else {
                box_argmin(&vo, ub)
            })
        }
    }
}

pub fn u_star(
    m: Maneuver,
    t: f64,
    r: &Vec3,
    v: &Vec3,
    c: &KeepOutConstraint,
    control: &ControlBounds,
    bounds: &DisturbanceBounds,
) -> Result<Vec3> {
    let ub = margin_semi_axis(control, bounds)?;
    let rel = c.relative(t, r, v)?;
    maneuver_from_relative(m, &rel.d, &rel.e, ub)
}
