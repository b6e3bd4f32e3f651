//! Scenario description and its TOML form.
//!
//! A scenario file may name a `preset`; every other field it sets overrides the
//! preset's value, recursively through nested tables.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::constraints::{load_mesh, mesh_constraints, CenterTrajectory, KeepOutConstraint};
use crate::dynamics::{
    ControlBounds, DisturbanceBounds, DisturbanceMode, GravityModel, SimState, Vec3,
};
use crate::error::{Error, Result};
use crate::rcbf::RcbfSpec;
use crate::switching::{ClassK, HysteresisParams};

use super::mesh::generate_ellipsoid_mesh;

pub const SCHEMA_VERSION: u32 = 1;

/// Where the vertices of a mesh constraint set come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum MeshSource {
    File {
        path: PathBuf,
    },
    Synthetic {
        n_points: usize,
        semi_axes: [f64; 3],
    },
}

impl MeshSource {
    pub fn vertices(&self) -> Result<Vec<Vec3>> {
        match self {
            MeshSource::File { path } => load_mesh(path),
            MeshSource::Synthetic {
                n_points,
                semi_axes,
            } => generate_ellipsoid_mesh(Vec3::from(*semi_axes), *n_points),
        }
    }
}

/// One keep-out sphere before the unmatched bound is attached.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstraintEntry {
    pub rho: f64,
    pub center: CenterTrajectory,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ConstraintSet {
    List {
        items: Vec<ConstraintEntry>,
    },
    /// One rotating constraint per body-frame vertex.
    Mesh {
        source: MeshSource,
        rho: f64,
        omega: [f64; 3],
        t0: f64,
    },
}

/// Nominal (performance) controller.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum NominalLaw {
    Zero,
    Flyby {
        mu: f64,
        k_p: f64,
        k_d: f64,
    },
    Prox {
        r_t: [f64; 3],
        k_p: f64,
        k_d: f64,
    },
    /// Constant command, mostly for toy problems.
    Constant {
        u: [f64; 3],
    },
}

impl NominalLaw {
    pub fn eval(&self, s: &SimState) -> Vec3 {
        use crate::qpfilter::{nominal_flyby_with_gains, nominal_prox};
        match *self {
            NominalLaw::Zero => Vec3::zeros(),
            NominalLaw::Flyby { mu, k_p, k_d } => {
                nominal_flyby_with_gains(&s.r, &s.v, mu, k_p, k_d)
            }
            NominalLaw::Prox { r_t, k_p, k_d } => {
                nominal_prox(&s.r, &s.v, &Vec3::from(r_t), k_p, k_d)
            }
            NominalLaw::Constant { u } => Vec3::from(u),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub schema: u32,
    pub name: String,
    pub gravity: GravityModel,
    pub control: ControlBounds,
    pub disturbance: DisturbanceBounds,
    pub disturbance_mode: DisturbanceMode,
    pub seed: u64,
    pub constraints: ConstraintSet,
    /// Barrier construction shared by every constraint.
    pub rcbf: RcbfSpec,
    pub hysteresis: HysteresisParams,
    /// With switching off, every constraint is enforced at every step.
    #[serde(default = "default_true")]
    pub switching: bool,
    pub alpha: ClassK,
    pub nominal: NominalLaw,
    pub x0: [f64; 6],
    pub t0: f64,
    /// Simulated seconds.
    pub duration: f64,
    pub dt: f64,
    /// Turn a safety violation into a hard error instead of a logged flag.
    #[serde(default)]
    pub strict_safety: bool,
    /// Keep every constraint's barrier value in the log when there are at most this many.
    #[serde(default = "default_per_constraint")]
    pub per_constraint_log_limit: usize,
}

fn default_true() -> bool {
    true
}

fn default_per_constraint() -> usize {
    16
}

impl ScenarioConfig {
    pub fn initial_state(&self) -> SimState {
        let x = self.x0;
        SimState::new(
            self.t0,
            Vec3::new(x[0], x[1], x[2]),
            Vec3::new(x[3], x[4], x[5]),
        )
    }

    pub fn n_steps(&self) -> Result<usize> {
        let n = self.duration / self.dt;
        let rounded = n.round();
        if (n - rounded).abs() > 1e-6 * n.max(1.0) {
            return Err(Error::Config(format!(
                "duration {} is not a multiple of dt {}",
                self.duration, self.dt
            )));
        }
        Ok(rounded as usize)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "unsupported schema {} (expected {SCHEMA_VERSION})",
                self.schema
            )));
        }
        if !(self.duration > 0.0 && self.dt > 0.0) {
            return Err(Error::Config(format!(
                "duration and dt must be positive, got {} and {}",
                self.duration, self.dt
            )));
        }
        if self.x0.iter().any(|c| !c.is_finite()) {
            return Err(Error::Config("x0 must be finite".into()));
        }
        ControlBounds::new(self.control.u_max)?;
        DisturbanceBounds::new(self.disturbance.w_u_max, self.disturbance.w_x_max)?;
        HysteresisParams::new(self.hysteresis.eps1, self.hysteresis.eps2)?;
        self.rcbf.validate()?;
        if matches!(self.rcbf, RcbfSpec::Predictive(_)) && self.disturbance.w_x_max > 0.0 {
            return Err(Error::UnmatchedDisturbance(self.disturbance.w_x_max));
        }
        self.n_steps()?;
        match &self.constraints {
            ConstraintSet::List { items } if items.is_empty() => {
                Err(Error::Config("constraint list is empty".into()))
            }
            _ => Ok(()),
        }
    }

    /// Materializes the constraint set, attaching the unmatched bound to each constraint.
    pub fn build_constraints(&self) -> Result<Vec<KeepOutConstraint>> {
        let w_x = self.disturbance.w_x_max;
        let cs = match &self.constraints {
            ConstraintSet::List { items } => items
                .iter()
                .map(|e| KeepOutConstraint::new(e.rho, e.center, w_x))
                .collect::<Result<Vec<_>>>()?,
            ConstraintSet::Mesh {
                source,
                rho,
                omega,
                t0,
            } => {
                let v = source.vertices()?;
                if v.len() < 4 {
                    return Err(Error::Mesh(format!(
                        "mesh has {} vertices, need at least 4",
                        v.len()
                    )));
                }
                mesh_constraints(&v, *rho, Vec3::from(*omega), *t0, w_x)?
            }
        };
        if cs.is_empty() {
            return Err(Error::Config("constraint set is empty".into()));
        }
        Ok(cs)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }
}

fn merge(base: &mut toml::Value, over: toml::Value) {
    match (base, over) {
        (toml::Value::Table(b), toml::Value::Table(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    // a changed variant tag replaces the whole table
                    Some(existing) if compatible(existing, &v) => merge(existing, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, o) => *b = o,
    }
}

fn compatible(a: &toml::Value, b: &toml::Value) -> bool {
    match (a, b) {
        (toml::Value::Table(x), toml::Value::Table(y)) => match (x.get("kind"), y.get("kind")) {
            (Some(p), Some(q)) => p == q,
            _ => true,
        },
        _ => false,
    }
}

/// Parses a scenario file, resolving an optional `preset = "<id>"` base.
pub fn load_scenario_str(
    text: &str,
    resolve_preset: impl Fn(&str) -> Result<ScenarioConfig>,
) -> Result<ScenarioConfig> {
    let mut over: toml::Value = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    let preset = over.as_table_mut().and_then(|t| t.remove("preset"));
    let mut value = match preset {
        Some(toml::Value::String(id)) => {
            let base = resolve_preset(&id)?;
            toml::Value::try_from(&base).map_err(|e| Error::Config(e.to_string()))?
        }
        Some(other) => {
            return Err(Error::Config(format!(
                "preset must be a string, got {other}"
            )))
        }
        None => toml::Value::Table(Default::default()),
    };
    merge(&mut value, over);
    let cfg: ScenarioConfig = value
        .try_into()
        .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_scenario(
    path: &Path,
    resolve_preset: impl Fn(&str) -> Result<ScenarioConfig>,
) -> Result<ScenarioConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    load_scenario_str(&text, resolve_preset)
}
