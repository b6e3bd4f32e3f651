//! Constant-authority barrier `H = h + |hdot_w| hdot_w / (2 a_max)` and the
//! offline computation of an admissible `a_max`.

use crate::constraints::{fibonacci_directions, KeepOutConstraint};
use crate::dynamics::{
    gravity_accel, ControlBounds, DisturbanceBounds, GravityModel, SimState, Vec3,
};
use crate::error::{Error, Result};
use crate::switching::ClassK;

use super::{assemble, drift_accel, RcbfEvaluation};

/// Scalar form of the barrier, for any `h` with robust rate `hdot_w`.
pub fn constant_authority_value(h: f64, hdot_w: f64, a_max: f64) -> f64 {
    h + hdot_w.abs() * hdot_w / (2.0 * a_max)
}

pub fn eval_constant_authority(
    c: &KeepOutConstraint,
    a_max: f64,
    s: &SimState,
    gravity: &GravityModel,
    bounds: &DisturbanceBounds,
    alpha: &ClassK,
) -> Result<RcbfEvaluation> {
    if !(a_max > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "a_max must be positive, got {a_max}"
        )));
    }
    let j = c.jet(s.t, &s.r, &s.v)?;
    let k = j.hdot_w.abs() / a_max;
    let value = constant_authority_value(j.h, j.hdot_w, a_max);
    let grad = j.grad_h + j.grad_hdot * k;
    let d_dt = j.dh_dt + j.dhdot_dt * k;
    let f = drift_accel(gravity, s)?;
    assemble(j.h, value, d_dt, grad, s, &f, bounds, alpha)
}

/// A point `(t, r)` of the safe set used to bound the gravity term.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AuthoritySample {
    pub t: f64,
    pub r: Vec3,
}

/// Points on the keep-out sphere of `c` at each of `times`.
pub fn keep_out_boundary_samples(
    c: &KeepOutConstraint,
    times: &[f64],
    n_dirs: usize,
) -> Vec<AuthoritySample> {
    let dirs = fibonacci_directions(n_dirs);
    let mut out = Vec::with_capacity(times.len() * dirs.len());
    for &t in times {
        let rc = c.center.state(t).r_c;
        out.extend(dirs.iter().map(|d| AuthoritySample {
            t,
            r: rc + d * c.rho,
        }));
    }
    out
}

/// `u_max - w_u_max - sup |f_mu - u_c|` over the samples.
///
/// Returns [`Error::NoAuthority`] carrying the value when it is not positive.
pub fn compute_a_max0(
    c: &KeepOutConstraint,
    gravity: &GravityModel,
    control: &ControlBounds,
    bounds: &DisturbanceBounds,
    samples: &[AuthoritySample],
) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::EmptySampleSet);
    }
    let mut sup = 0.0_f64;
    for p in samples {
        let f = gravity_accel(gravity, p.t, &p.r)?;
        let uc = c.center.state(p.t).u_c;
        sup = sup.max((f - uc).norm());
    }
    let a = control.u_max - bounds.w_u_max - sup;
    if a > 0.0 {
        Ok(a)
    } else {
        Err(Error::NoAuthority(a))
    }
}

/// Largest admissible `a_max` from the full robust second derivative over
/// sampled states, with the worst admissible control `u_min` minimizing the
/// control term over the box. The unmatched term uses the full state gradient
/// of `hdot_w`.
pub fn compute_a_max0_general(
    c: &KeepOutConstraint,
    gravity: &GravityModel,
    control: &ControlBounds,
    bounds: &DisturbanceBounds,
    states: &[SimState],
) -> Result<f64> {
    if states.is_empty() {
        return Err(Error::EmptySampleSet);
    }
    let mut worst = f64::NEG_INFINITY;
    for s in states {
        let j = c.jet(s.t, &s.r, &s.v)?;
        let f = gravity_accel(gravity, s.t, &s.r)?;
        let gr: Vec3 = j.grad_hdot.fixed_rows::<3>(0).into_owned();
        let gv: Vec3 = j.grad_hdot.fixed_rows::<3>(3).into_owned();
        let control_term = -control.u_max * gv.lp_norm(1);
        let val = j.dhdot_dt
            + gr.dot(&s.v)
            + gv.dot(&f)
            + control_term
            + j.grad_hdot.norm() * bounds.w_x_max
            + gv.norm() * bounds.w_u_max;
        worst = worst.max(val);
    }
    let a = -worst;
    if a > 0.0 {
        Ok(a)
    } else {
        Err(Error::NoAuthority(a))
    }
}
