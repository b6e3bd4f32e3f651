//! Variable-authority barrier `H = Phi^-1(Phi(h) - hdot_w |hdot_w| / 2)`.

use serde::{Deserialize, Serialize};

use crate::constraints::KeepOutConstraint;
use crate::dynamics::{DisturbanceBounds, GravityModel, SimState};
use crate::error::{Error, Result};
use crate::switching::ClassK;

use super::{assemble, drift_accel, RcbfEvaluation};

/// Strictly decreasing potential `Phi` with slope `phi = Phi'`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Potential {
    /// `Phi(l) = -a_max l`.
    Linear { a_max: f64 },
    /// `Phi(l) = mu / (rho - l) + (w_u_max - u_max) l`, defined for `l < rho`.
    Gravity {
        mu: f64,
        rho: f64,
        u_max: f64,
        w_u_max: f64,
    },
}

/// Builds the gravity potential, checking that its slope is nonpositive on the safe set.
pub fn gravity_phi(mu: f64, rho: f64, u_max: f64, w_u_max: f64) -> Result<Potential> {
    if !(mu > 0.0 && rho > 0.0 && u_max > w_u_max && w_u_max >= 0.0) {
        return Err(Error::NoValidPotential(format!(
            "need mu > 0, rho > 0, u_max > w_u_max >= 0; got mu={mu}, rho={rho}, u_max={u_max}, w_u_max={w_u_max}"
        )));
    }
    let phi0 = mu / (rho * rho) - u_max + w_u_max;
    if phi0 > 0.0 {
        return Err(Error::NoValidPotential(format!(
            "slope at the boundary is {phi0:.4e} > 0: gravity exceeds the available authority at rho = {rho}"
        )));
    }
    Ok(Potential::Gravity {
        mu,
        rho,
        u_max,
        w_u_max,
    })
}

impl Potential {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Potential::Linear { a_max } if a_max > 0.0 => Ok(()),
            Potential::Linear { a_max } => Err(Error::NoValidPotential(format!(
                "a_max must be positive, got {a_max}"
            ))),
            Potential::Gravity {
                mu,
                rho,
                u_max,
                w_u_max,
            } => gravity_phi(mu, rho, u_max, w_u_max).map(|_| ()),
        }
    }

    pub fn value(&self, l: f64) -> Result<f64> {
        match *self {
            Potential::Linear { a_max } => Ok(-a_max * l),
            Potential::Gravity {
                mu,
                rho,
                u_max,
                w_u_max,
            } => {
                let s = rho - l;
                if !(s > 0.0) {
                    return Err(Error::PotentialDomain { value: l });
                }
                Ok(mu / s + (w_u_max - u_max) * l)
            }
        }
    }

    /// `phi = Phi'`.
    pub fn slope(&self, l: f64) -> Result<f64> {
        match *self {
            Potential::Linear { a_max } => Ok(-a_max),
            Potential::Gravity {
                mu,
                rho,
                u_max,
                w_u_max,
            } => {
                let s = rho - l;
                if !(s > 0.0) {
                    return Err(Error::PotentialDomain { value: l });
                }
                Ok(mu / (s * s) + w_u_max - u_max)
            }
        }
    }

    /// Inverse on the decreasing branch.
    pub fn inverse(&self, y: f64) -> Result<f64> {
        match *self {
            Potential::Linear { a_max } => Ok(-y / a_max),
            Potential::Gravity {
                mu,
                rho,
                u_max,
                w_u_max,
            } => {
                // with s = rho - l: |c| s^2 - b s + mu = 0, larger root is the decreasing branch
                let ac = u_max - w_u_max;
                let b = y + ac * rho;
                let disc = b * b - 4.0 * ac * mu;
                let l = if disc >= 0.0 && b > 0.0 {
                    rho - (b + disc.sqrt()) / (2.0 * ac)
                } else {
                    self.inverse_bisect(y)?
                };
                let l = self.polish(l, y)?;
                debug_assert!(
                    (self.value(l)? - y).abs() <= 1e-8 * y.abs().max(mu / rho),
                    "inverse round trip failed at y = {y}"
                );
                Ok(l)
            }
        }
    }

    fn branch_limit(&self) -> f64 {
        match *self {
            Potential::Linear { .. } => f64::INFINITY,
            Potential::Gravity {
                mu,
                rho,
                u_max,
                w_u_max,
            } => rho - (mu / (u_max - w_u_max)).sqrt(),
        }
    }

    fn polish(&self, l: f64, y: f64) -> Result<f64> {
        let slope = self.slope(l)?;
        if slope >= 0.0 {
            return Ok(l);
        }
        let next = l - (self.value(l)? - y) / slope;
        if next.is_finite()
            && next <= self.branch_limit()
            && (self.value(next)? - y).abs() <= (self.value(l)? - y).abs()
        {
            Ok(next)
        } else {
            Ok(l)
        }
    }

    fn inverse_bisect(&self, y: f64) -> Result<f64> {
        let hi_l = self.branch_limit();
        if self.value(hi_l)? > y {
            return Err(Error::PotentialDomain { value: y });
        }
        let mut lo = hi_l - 1.0;
        let mut step = 1.0;
        while self.value(lo)? < y {
            step *= 2.0;
            lo = hi_l - step;
            if !lo.is_finite() || step > 1e300 {
                return Err(Error::PotentialDomain { value: y });
            }
        }
        let mut hi = hi_l;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid == lo || mid == hi {
                break;
            }
            if self.value(mid)? > y {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }
}

pub fn eval_variable_authority(
    c: &KeepOutConstraint,
    potential: &Potential,
    s: &SimState,
    gravity: &GravityModel,
    bounds: &DisturbanceBounds,
    alpha: &ClassK,
) -> Result<RcbfEvaluation> {
    let j = c.jet(s.t, &s.r, &s.v)?;
    let target = potential.value(j.h)? - 0.5 * j.hdot_w * j.hdot_w.abs();
    let value = if j.hdot_w == 0.0 {
        j.h
    } else {
        potential.inverse(target)?
    };
    let slope_h = potential.slope(j.h)?;
    let slope_big = potential.slope(value)?;
    if slope_big == 0.0 {
        return Err(Error::DegenerateSlope { h: value });
    }
    let k = j.hdot_w.abs();
    let grad = (j.grad_h * slope_h - j.grad_hdot * k) / slope_big;
    let d_dt = (j.dh_dt * slope_h - j.dhdot_dt * k) / slope_big;
    let f = drift_accel(gravity, s)?;
    assemble(j.h, value, d_dt, grad, s, &f, bounds, alpha)
}
