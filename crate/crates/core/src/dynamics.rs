//! Control-affine translational spacecraft model.
//!
//! The state is `x = [r; v]` with
//!
//! ```text
//! r' = v + w_x
//! v' = f_mu(t, r) + u + w_u
//! ```
//!
//! Control and disturbances are held constant over an integration step
//! (zero-order hold), and the step itself is classical RK4.

use nalgebra::{Matrix3, Vector3, Vector6};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;
pub type State6 = Vector6<f64>;

/// Time plus inertial position and velocity of the spacecraft.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimState {
    /// Seconds.
    pub t: f64,
    /// Position, m.
    pub r: Vec3,
    /// Velocity, m/s.
    pub v: Vec3,
}

impl SimState {
    pub fn new(t: f64, r: Vec3, v: Vec3) -> Self {
        Self { t, r, v }
    }

    /// Builds a state from the stacked `[r; v]` vector.
    pub fn from_x(t: f64, x: &State6) -> Self {
        Self {
            t,
            r: x.fixed_rows::<3>(0).into_owned(),
            v: x.fixed_rows::<3>(3).into_owned(),
        }
    }

    pub fn x(&self) -> State6 {
        stack(&self.r, &self.v)
    }

    pub fn is_finite(&self) -> bool {
        self.t.is_finite()
            && self.r.iter().all(|c| c.is_finite())
            && self.v.iter().all(|c| c.is_finite())
    }
}

pub(crate) fn stack(top: &Vec3, bottom: &Vec3) -> State6 {
    Vector6::new(top.x, top.y, top.z, bottom.x, bottom.y, bottom.z)
}

/// Per-axis thrust acceleration limit: `U = { u : |u|_inf <= u_max }`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlBounds {
    /// m/s².
    pub u_max: f64,
}

impl ControlBounds {
    pub fn new(u_max: f64) -> Result<Self> {
        if !(u_max > 0.0 && u_max.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "u_max must be positive, got {u_max}"
            )));
        }
        Ok(Self { u_max })
    }

    pub fn contains(&self, u: &Vec3, tol: f64) -> bool {
        u.amax() <= self.u_max + tol
    }

    pub fn clip(&self, u: &Vec3) -> Vec3 {
        u.map(|c| c.clamp(-self.u_max, self.u_max))
    }
}

/// Norm bounds on the matched (`w_u`, m/s²) and unmatched (`w_x`, m/s) disturbances.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DisturbanceBounds {
    pub w_u_max: f64,
    pub w_x_max: f64,
}

impl DisturbanceBounds {
    pub fn new(w_u_max: f64, w_x_max: f64) -> Result<Self> {
        if !(w_u_max >= 0.0 && w_x_max >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "disturbance bounds must be nonnegative, got ({w_u_max}, {w_x_max})"
            )));
        }
        Ok(Self { w_u_max, w_x_max })
    }

    pub fn zero() -> Self {
        Self::default()
    }
}

/// Gravitational acceleration model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum GravityModel {
    Zero,
    PointMass {
        /// Gravitational parameter, m³/s².
        mu: f64,
        /// Attracting center, m (inertially fixed).
        center: [f64; 3],
    },
}

impl GravityModel {
    pub fn point_mass(mu: f64, center: Vec3) -> Result<Self> {
        if !(mu > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "mu must be positive, got {mu}"
            )));
        }
        Ok(GravityModel::PointMass {
            mu,
            center: center.into(),
        })
    }

    pub fn mu(&self) -> f64 {
        match self {
            GravityModel::Zero => 0.0,
            GravityModel::PointMass { mu, .. } => *mu,
        }
    }

    pub fn center(&self) -> Vec3 {
        match self {
            GravityModel::Zero => Vec3::zeros(),
            GravityModel::PointMass { center, .. } => Vec3::from(*center),
        }
    }
}

/// Acceleration `f_mu(t, r)`; the point-mass field is `-mu (r - c) / |r - c|^3`.
pub fn gravity_accel(model: &GravityModel, _t: f64, r: &Vec3) -> Result<Vec3> {
    match model {
        GravityModel::Zero => Ok(Vec3::zeros()),
        GravityModel::PointMass { mu, center } => {
            let d = r - Vec3::from(*center);
            let n2 = d.norm_squared();
            if n2 == 0.0 {
                return Err(Error::GravitySingularity);
            }
            let n = n2.sqrt();
            Ok(d * (-mu / (n2 * n)))
        }
    }
}

/// Jacobian of `f_mu` with respect to position.
pub fn gravity_jacobian(model: &GravityModel, r: &Vec3) -> Result<Matrix3<f64>> {
    match model {
        GravityModel::Zero => Ok(Matrix3::zeros()),
        GravityModel::PointMass { mu, center } => {
            let d = r - Vec3::from(*center);
            let n2 = d.norm_squared();
            if n2 == 0.0 {
                return Err(Error::GravitySingularity);
            }
            let n = n2.sqrt();
            let n3 = n2 * n;
            Ok((Matrix3::identity() - d * d.transpose() * (3.0 / n2)) * (-mu / n3))
        }
    }
}

/// Returns `(r', v')` for the disturbed closed loop.
pub fn state_derivative(
    s: &SimState,
    u: &Vec3,
    w_u: &Vec3,
    w_x: &Vec3,
    gravity: &GravityModel,
) -> Result<(Vec3, Vec3)> {
    let g = gravity_accel(gravity, s.t, &s.r)?;
    Ok((s.v + w_x, g + u + w_u))
}

/// One classical RK4 step with `u`, `w_u`, `w_x` held over `[t, t + dt]`.
pub fn rk4_step(
    s: &SimState,
    dt: f64,
    u: &Vec3,
    w_u: &Vec3,
    w_x: &Vec3,
    gravity: &GravityModel,
) -> Result<SimState> {
    if !(dt > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "dt must be positive, got {dt}"
        )));
    }
    let eval =
        |t: f64, r: Vec3, v: Vec3| state_derivative(&SimState::new(t, r, v), u, w_u, w_x, gravity);
    let h2 = 0.5 * dt;
    let (k1r, k1v) = eval(s.t, s.r, s.v)?;
    let (k2r, k2v) = eval(s.t + h2, s.r + k1r * h2, s.v + k1v * h2)?;
    let (k3r, k3v) = eval(s.t + h2, s.r + k2r * h2, s.v + k2v * h2)?;
    let (k4r, k4v) = eval(s.t + dt, s.r + k3r * dt, s.v + k3v * dt)?;
    let next = SimState {
        t: s.t + dt,
        r: s.r + (k1r + k2r * 2.0 + k3r * 2.0 + k4r) * (dt / 6.0),
        v: s.v + (k1v + k2v * 2.0 + k3v * 2.0 + k4v) * (dt / 6.0),
    };
    if !next.is_finite() {
        return Err(Error::NonFiniteState { t: next.t });
    }
    Ok(next)
}

/// How disturbances are realized during a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DisturbanceMode {
    Zero,
    /// Uniform in the norm balls, drawn once per step.
    RandomBounded,
    /// Aligned with the most critical barrier's sensitivities.
    WorstCase,
}

/// Directions along which a worst-case disturbance pushes a barrier upward:
/// `w_u` along `grad_H g`, `w_x` along the position part of `grad_H`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WorstCaseDirection {
    pub matched: Vec3,
    pub unmatched: Vec3,
}

/// Seeded disturbance generator. Draws always satisfy the configured bounds.
#[derive(Debug, Clone)]
pub struct DisturbanceProcess {
    mode: DisturbanceMode,
    bounds: DisturbanceBounds,
    rng: ChaCha8Rng,
}

impl DisturbanceProcess {
    pub fn new(mode: DisturbanceMode, bounds: DisturbanceBounds, seed: u64) -> Self {
        Self {
            mode,
            bounds,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn mode(&self) -> DisturbanceMode {
        self.mode
    }

    /// Returns `(w_u, w_x)` for the next step.
    pub fn sample(&mut self, worst: Option<&WorstCaseDirection>) -> (Vec3, Vec3) {
        match self.mode {
            DisturbanceMode::Zero => (Vec3::zeros(), Vec3::zeros()),
            DisturbanceMode::RandomBounded => {
                let wu = uniform_in_ball(&mut self.rng, self.bounds.w_u_max);
                let wx = uniform_in_ball(&mut self.rng, self.bounds.w_x_max);
                (wu, wx)
            }
            DisturbanceMode::WorstCase => match worst {
                Some(dir) => (
                    scaled_unit(&dir.matched, self.bounds.w_u_max),
                    scaled_unit(&dir.unmatched, self.bounds.w_x_max),
                ),
                None => (Vec3::zeros(), Vec3::zeros()),
            },
        }
    }
}

fn scaled_unit(d: &Vec3, radius: f64) -> Vec3 {
    let n = d.norm();
    if n > 0.0 && radius > 0.0 {
        d * (radius / n)
    } else {
        Vec3::zeros()
    }
}

fn uniform_in_ball<R: Rng>(rng: &mut R, radius: f64) -> Vec3 {
    if radius <= 0.0 {
        return Vec3::zeros();
    }
    loop {
        let g = Vec3::new(
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
        );
        let n = g.norm();
        if n > 1e-12 {
            let scale: f64 = rng.gen::<f64>().cbrt() * radius / n;
            // cbrt of a value in [0, 1) times radius stays strictly inside the ball
            return g * scale;
        }
    }
}
