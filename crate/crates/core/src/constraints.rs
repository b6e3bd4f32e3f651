//! Point keep-out constraints `h = rho - |r - r_c(t)|` and their robust derivatives.

use std::path::Path;

use nalgebra::{Rotation3, Vector6};
use serde::{Deserialize, Serialize};

use crate::dynamics::{gravity_accel, GravityModel, SimState, Vec3};
use crate::error::{Error, Result};

/// Distances below this are treated as coincident with the keep-out center.
pub const SINGULARITY_GUARD: f64 = 1e-6;

/// Motion of a keep-out center.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum CenterTrajectory {
    Fixed {
        r_c: [f64; 3],
    },
    /// Rigid rotation about the origin at constant rate.
    Rotating {
        r_c0: [f64; 3],
        omega: [f64; 3],
        t0: f64,
    },
}

/// Position, velocity and acceleration of a center at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CenterState {
    pub r_c: Vec3,
    pub v_c: Vec3,
    pub u_c: Vec3,
}

impl CenterTrajectory {
    pub fn fixed(r_c: Vec3) -> Self {
        CenterTrajectory::Fixed { r_c: r_c.into() }
    }

    pub fn rotating(r_c0: Vec3, omega: Vec3, t0: f64) -> Self {
        CenterTrajectory::Rotating {
            r_c0: r_c0.into(),
            omega: omega.into(),
            t0,
        }
    }

    pub fn state(&self, t: f64) -> CenterState {
        match self {
            CenterTrajectory::Fixed { r_c } => CenterState {
                r_c: Vec3::from(*r_c),
                v_c: Vec3::zeros(),
                u_c: Vec3::zeros(),
            },
            CenterTrajectory::Rotating { r_c0, omega, t0 } => {
                let w = Vec3::from(*omega);
                let r_c = Rotation3::new(w * (t - t0)) * Vec3::from(*r_c0);
                let v_c = w.cross(&r_c);
                CenterState {
                    r_c,
                    v_c,
                    u_c: w.cross(&v_c),
                }
            }
        }
    }
}

/// Returns `(r_c, v_c, u_c)` at time `t`.
pub fn center_state(c: &CenterTrajectory, t: f64) -> (Vec3, Vec3, Vec3) {
    let s = c.state(t);
    (s.r_c, s.v_c, s.u_c)
}

/// Sphere-avoidance constraint around a possibly moving point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KeepOutConstraint {
    /// Keep-out radius, m.
    pub rho: f64,
    pub center: CenterTrajectory,
    /// Unmatched disturbance bound, m/s.
    pub w_x_max: f64,
}

/// Relative geometry shared by every derivative evaluation.
#[derive(Debug, Clone, Copy)]
pub struct Relative {
    pub center: CenterState,
    /// `r - r_c`
    pub d: Vec3,
    /// `v - v_c`
    pub e: Vec3,
    pub dist: f64,
    pub unit: Vec3,
}

/// `(h, hdot_w)` with their partials in `t` and `x = [r; v]`.
#[derive(Debug, Clone, Copy)]
pub struct ConstraintJet {
    pub h: f64,
    pub dh_dt: f64,
    pub grad_h: Vector6<f64>,
    pub hdot_w: f64,
    pub dhdot_dt: f64,
    pub grad_hdot: Vector6<f64>,
}

impl KeepOutConstraint {
    pub fn new(rho: f64, center: CenterTrajectory, w_x_max: f64) -> Result<Self> {
        if !(rho > 0.0 && rho.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "rho must be positive, got {rho}"
            )));
        }
        if !(w_x_max >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "w_x_max must be nonnegative, got {w_x_max}"
            )));
        }
        Ok(Self {
            rho,
            center,
            w_x_max,
        })
    }

    pub fn relative(&self, t: f64, r: &Vec3, v: &Vec3) -> Result<Relative> {
        let center = self.center.state(t);
        let d = r - center.r_c;
        let dist = d.norm();
        if !(dist >= SINGULARITY_GUARD) {
            return Err(Error::ConstraintSingularity { distance: dist });
        }
        Ok(Relative {
            center,
            d,
            e: v - center.v_c,
            dist,
            unit: d / dist,
        })
    }

    /// `rho - |r - r_c(t)|`; positive means inside the keep-out sphere.
    pub fn h(&self, t: f64, s_r: &Vec3) -> f64 {
        let c = self.center.state(t);
        self.rho - (s_r - c.r_c).norm()
    }

    pub fn h_state(&self, s: &SimState) -> f64 {
        self.h(s.t, &s.r)
    }

    /// `-(r - r_c)·(v - v_c)/|r - r_c| + w_x_max`.
    pub fn hdot_w(&self, t: f64, r: &Vec3, v: &Vec3) -> Result<f64> {
        let rel = self.relative(t, r, v)?;
        Ok(-rel.unit.dot(&rel.e) + self.w_x_max)
    }

    /// Splits the robust second derivative into `drift + control_row·(u + w_u)`.
    pub fn hddot_w_terms(
        &self,
        t: f64,
        r: &Vec3,
        v: &Vec3,
        gravity: &GravityModel,
    ) -> Result<(f64, Vec3)> {
        let rel = self.relative(t, r, v)?;
        let f = gravity_accel(gravity, t, r)?;
        Ok(hddot_from_relative(&rel, &f))
    }

    /// Value and first partials of `h` and `hdot_w`.
    pub fn jet(&self, t: f64, r: &Vec3, v: &Vec3) -> Result<ConstraintJet> {
        let rel = self.relative(t, r, v)?;
        let Relative {
            center,
            e,
            dist,
            unit,
            ..
        } = rel;
        let e_perp = e - unit * unit.dot(&e);

        let grad_h = stack6(&(-unit), &Vec3::zeros());
        let dh_dt = unit.dot(&center.v_c);

        let grad_hdot = stack6(&(-e_perp / dist), &(-unit));
        let dhdot_dt = e_perp.dot(&center.v_c) / dist + unit.dot(&center.u_c);

        Ok(ConstraintJet {
            h: self.rho - dist,
            dh_dt,
            grad_h,
            hdot_w: -unit.dot(&e) + self.w_x_max,
            dhdot_dt,
            grad_hdot,
        })
    }
}

pub(crate) fn hddot_from_relative(rel: &Relative, f: &Vec3) -> (f64, Vec3) {
    let cross = rel.d.cross(&rel.e);
    let drift = -rel.unit.dot(&(f - rel.center.u_c)) - cross.norm_squared() / rel.dist.powi(3);
    (drift, -rel.unit)
}

fn stack6(a: &Vec3, b: &Vec3) -> Vector6<f64> {
    Vector6::new(a.x, a.y, a.z, b.x, b.y, b.z)
}

/// `n` near-uniform unit vectors on the golden-angle spiral.
pub fn fibonacci_directions(n: usize) -> Vec<Vec3> {
    let golden = std::f64::consts::PI * (3.0 - 5.0_f64.sqrt());
    (0..n)
        .map(|i| {
            let z = 1.0 - (2.0 * i as f64 + 1.0) / n as f64;
            let rxy = (1.0 - z * z).max(0.0).sqrt();
            let phi = golden * i as f64;
            Vec3::new(rxy * phi.cos(), rxy * phi.sin(), z)
        })
        .collect()
}

/// Parses a vertex list: one vertex per line, three whitespace-separated floats.
/// Blank lines and lines starting with `#` are skipped.
pub fn parse_mesh(text: &str) -> Result<Vec<Vec3>> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(|tok| tok.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Mesh(format!("line {}: {e}", lineno + 1)))?;
        if vals.len() != 3 || vals.iter().any(|v| !v.is_finite()) {
            return Err(Error::Mesh(format!(
                "line {}: expected three finite floats",
                lineno + 1
            )));
        }
        out.push(Vec3::new(vals[0], vals[1], vals[2]));
    }
    Ok(out)
}

pub fn load_mesh(path: &Path) -> Result<Vec<Vec3>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Mesh(format!("{}: {e}", path.display())))?;
    parse_mesh(&text)
}

/// One rotating keep-out constraint per body-frame vertex.
pub fn mesh_constraints(
    vertices: &[Vec3],
    rho: f64,
    omega: Vec3,
    t0: f64,
    w_x_max: f64,
) -> Result<Vec<KeepOutConstraint>> {
    vertices
        .iter()
        .map(|p| KeepOutConstraint::new(rho, CenterTrajectory::rotating(*p, omega, t0), w_x_max))
        .collect()
}
