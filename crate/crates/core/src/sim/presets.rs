//! Built-in mission scenarios: a Ceres flyby (four barrier variants) and Eros
//! proximity operations over a rotating vertex mesh.

use crate::constraints::{mesh_constraints, CenterTrajectory, KeepOutConstraint};
use crate::dynamics::{
    ControlBounds, DisturbanceBounds, DisturbanceMode, GravityModel, SimState, Vec3,
};
use crate::error::{Error, Result};
use crate::qpfilter::{FLYBY_KD, FLYBY_KP, PROX_KD, PROX_KP};
use crate::rcbf::predictive::PropagationSettings;
use crate::rcbf::{
    compute_a_max0, compute_a_max0_general, gravity_phi, keep_out_boundary_samples,
    AuthoritySample, Maneuver, PredictiveSpec, RcbfSpec,
};
use crate::switching::{ClassK, HysteresisParams};

use super::config::{
    ConstraintEntry, ConstraintSet, MeshSource, NominalLaw, ScenarioConfig, SCHEMA_VERSION,
};
use super::mesh::ellipsoid_volume;

pub const PRESET_IDS: [&str; 5] = [
    "mission-a-1",
    "mission-a-2",
    "mission-a-3",
    "mission-a-4",
    "mission-b",
];

pub const DAY: f64 = 86_400.0;

pub const CERES_MU: f64 = 6.26325e10;
pub const MISSION_A_RHO: [f64; 4] = [3.63e7, 3.21e7, 2.5e7, 4.76e5];
pub const MISSION_A_X0: [f64; 6] = [-6e7, -1e6, 0.0, 20.0, -2.0, 0.0];
pub const MISSION_A_DAYS: f64 = 10.0;
pub const MISSION_A_FULL_DAYS: f64 = 69.0;

pub const EROS_OMEGA: [f64; 3] = [3.101e-4, 6.232e-5, 9.810e-5];
pub const EROS_DENSITY: f64 = 2670.0;
pub const EROS_SEMI_AXES: [f64; 3] = [16e3, 8e3, 8e3];
pub const EROS_MESH_POINTS: usize = 2000;
pub const MISSION_B_RHO: f64 = 500.0;
pub const MISSION_B_X0: [f64; 6] = [-2e4, -4e3, 0.0, 1.0, 1.0, 0.0];
pub const MISSION_B_TARGET: [f64; 3] = [2e4, 0.0, 0.0];
pub const MISSION_B_SECONDS: f64 = 7200.0;

const G: f64 = 6.674e-11;
const A_MAX_DIRECTIONS: usize = 32;

pub fn preset_by_id(id: &str) -> Result<ScenarioConfig> {
    match id {
        "mission-a-1" => mission_a_preset(1),
        "mission-a-2" => mission_a_preset(2),
        "mission-a-3" => mission_a_preset(3),
        "mission-a-4" => mission_a_preset(4),
        "mission-b" => mission_b_preset(MeshSource::Synthetic {
            n_points: EROS_MESH_POINTS,
            semi_axes: EROS_SEMI_AXES,
        }),
        other => Err(Error::Config(format!(
            "unknown preset {other:?}; known: {}",
            PRESET_IDS.join(", ")
        ))),
    }
}

pub fn mission_a_control() -> ControlBounds {
    ControlBounds { u_max: 1e-4 }
}

pub fn mission_a_disturbance(variant: u8) -> DisturbanceBounds {
    DisturbanceBounds {
        w_u_max: 5e-6,
        w_x_max: if variant <= 2 { 2e-6 } else { 0.0 },
    }
}

pub fn mission_a_gravity() -> GravityModel {
    GravityModel::PointMass {
        mu: CERES_MU,
        center: [0.0; 3],
    }
}

/// Predictive settings for the flyby: the chunked horizon reaches past closest approach.
pub fn mission_a_propagation() -> PropagationSettings {
    PropagationSettings {
        horizon: 4e6,
        ode_dt: 2e4,
        refine_tol: 1e-4,
        max_horizon: 4e7,
        ambiguity_tol: 1e-6,
    }
}

pub const MISSION_A_KEPLER_KAPPA: f64 = 0.02;

/// Admissible `a_max` on the keep-out sphere of `c` at time `t`: the smaller of the
/// gravity-only bound and the full second-derivative bound at zero relative velocity.
/// The sample set adds the six axis points, where the box control has the least
/// authority along the normal.
pub fn sphere_a_max(
    c: &KeepOutConstraint,
    gravity: &GravityModel,
    control: &ControlBounds,
    bounds: &DisturbanceBounds,
    t: f64,
) -> Result<f64> {
    let mut samples = keep_out_boundary_samples(c, &[t], A_MAX_DIRECTIONS);
    let center = c.center.state(t);
    for i in 0..3 {
        for sgn in [1.0, -1.0] {
            samples.push(AuthoritySample {
                t,
                r: center.r_c + Vec3::ith(i, sgn * c.rho),
            });
        }
    }
    let simple = compute_a_max0(c, gravity, control, bounds, &samples)?;
    let states: Vec<SimState> = samples
        .iter()
        .map(|p| SimState::new(p.t, p.r, center.v_c))
        .collect();
    let general = compute_a_max0_general(c, gravity, control, bounds, &states)?;
    Ok(simple.min(general))
}

/// Constant-authority bound for the Ceres keep-out sphere of radius `rho`.
pub fn mission_a_a_max(rho: f64, variant: u8) -> Result<f64> {
    let c = KeepOutConstraint::new(
        rho,
        CenterTrajectory::fixed(Vec3::zeros()),
        mission_a_disturbance(variant).w_x_max,
    )?;
    sphere_a_max(
        &c,
        &mission_a_gravity(),
        &mission_a_control(),
        &mission_a_disturbance(variant),
        0.0,
    )
}

pub fn mission_a_preset(variant: u8) -> Result<ScenarioConfig> {
    if !(1..=4).contains(&variant) {
        return Err(Error::Config(format!(
            "mission A variant must be 1..=4, got {variant}"
        )));
    }
    let rho = MISSION_A_RHO[variant as usize - 1];
    let control = mission_a_control();
    let disturbance = mission_a_disturbance(variant);
    let predictive = |maneuver| {
        RcbfSpec::Predictive(PredictiveSpec {
            maneuver,
            settings: mission_a_propagation(),
            kepler_kappa: Some(MISSION_A_KEPLER_KAPPA),
        })
    };
    let rcbf = match variant {
        1 => RcbfSpec::ConstantAuthority {
            a_max: mission_a_a_max(rho, variant)?,
        },
        2 => RcbfSpec::VariableAuthority {
            potential: gravity_phi(CERES_MU, rho, control.u_max, disturbance.w_u_max)?,
        },
        3 => predictive(Maneuver::Rad),
        _ => predictive(Maneuver::Orth),
    };
    let eps1 = 5e4;
    Ok(ScenarioConfig {
        schema: SCHEMA_VERSION,
        name: format!("mission-a-{variant}"),
        gravity: mission_a_gravity(),
        control,
        disturbance,
        disturbance_mode: DisturbanceMode::RandomBounded,
        seed: 0,
        constraints: ConstraintSet::List {
            items: vec![ConstraintEntry {
                rho,
                center: CenterTrajectory::fixed(Vec3::zeros()),
            }],
        },
        rcbf,
        hysteresis: HysteresisParams { eps1, eps2: 1.5e5 },
        switching: true,
        alpha: ClassK::AlphaR { eps1 },
        nominal: NominalLaw::Flyby {
            mu: CERES_MU,
            k_p: FLYBY_KP,
            k_d: FLYBY_KD,
        },
        x0: MISSION_A_X0,
        t0: 0.0,
        duration: MISSION_A_DAYS * DAY,
        dt: 60.0,
        strict_safety: false,
        per_constraint_log_limit: 16,
    })
}

/// Point-mass parameter of a uniform body filling the ellipsoid at Eros' bulk density.
pub fn eros_surrogate_mu(semi_axes: Vec3) -> f64 {
    G * EROS_DENSITY * ellipsoid_volume(semi_axes)
}

fn bounding_semi_axes(vertices: &[Vec3]) -> Vec3 {
    let mut s = Vec3::zeros();
    for v in vertices {
        s = s.sup(&v.abs());
    }
    s
}

pub fn mission_b_control() -> ControlBounds {
    ControlBounds { u_max: 0.1 }
}

pub fn mission_b_disturbance() -> DisturbanceBounds {
    DisturbanceBounds {
        w_u_max: 0.005,
        w_x_max: 0.001,
    }
}

/// Shared bound: the smallest per-vertex value, each over 32 directions on its sphere.
pub fn mission_b_a_max(vertices: &[Vec3], gravity: &GravityModel) -> Result<f64> {
    let cs = mesh_constraints(
        vertices,
        MISSION_B_RHO,
        Vec3::from(EROS_OMEGA),
        0.0,
        mission_b_disturbance().w_x_max,
    )?;
    let mut a = f64::INFINITY;
    for c in &cs {
        a = a.min(sphere_a_max(
            c,
            gravity,
            &mission_b_control(),
            &mission_b_disturbance(),
            0.0,
        )?);
    }
    Ok(a)
}

pub fn mission_b_preset(mesh_source: MeshSource) -> Result<ScenarioConfig> {
    let vertices = mesh_source.vertices()?;
    if vertices.len() < 4 {
        return Err(Error::Mesh(format!(
            "mesh has {} vertices, need at least 4",
            vertices.len()
        )));
    }
    let semi_axes = match &mesh_source {
        MeshSource::Synthetic { semi_axes, .. } => Vec3::from(*semi_axes),
        MeshSource::File { .. } => bounding_semi_axes(&vertices),
    };
    let gravity = GravityModel::PointMass {
        mu: eros_surrogate_mu(semi_axes),
        center: [0.0; 3],
    };
    let a_max = mission_b_a_max(&vertices, &gravity)?;
    let eps1 = 100.0;
    Ok(ScenarioConfig {
        schema: SCHEMA_VERSION,
        name: "mission-b".into(),
        gravity,
        control: mission_b_control(),
        disturbance: mission_b_disturbance(),
        disturbance_mode: DisturbanceMode::RandomBounded,
        seed: 0,
        constraints: ConstraintSet::Mesh {
            source: mesh_source,
            rho: MISSION_B_RHO,
            omega: EROS_OMEGA,
            t0: 0.0,
        },
        rcbf: RcbfSpec::ConstantAuthority { a_max },
        hysteresis: HysteresisParams { eps1, eps2: 300.0 },
        switching: true,
        alpha: ClassK::AlphaR { eps1 },
        nominal: NominalLaw::Prox {
            r_t: MISSION_B_TARGET,
            k_p: PROX_KP,
            k_d: PROX_KD,
        },
        x0: MISSION_B_X0,
        t0: 0.0,
        duration: MISSION_B_SECONDS,
        dt: 0.5,
        strict_safety: false,
        per_constraint_log_limit: 16,
    })
}

/// Barrier construction selectable from the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RcbfVariant {
    Constant,
    Variable,
    PredictiveRad,
    PredictiveOrth,
}

impl std::str::FromStr for RcbfVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "constant" | "1" => Ok(RcbfVariant::Constant),
            "variable" | "2" => Ok(RcbfVariant::Variable),
            "predictive-rad" | "3" => Ok(RcbfVariant::PredictiveRad),
            "predictive-orth" | "4" => Ok(RcbfVariant::PredictiveOrth),
            other => Err(Error::Config(format!(
                "unknown rcbf variant {other:?}; use constant, variable, predictive-rad or predictive-orth"
            ))),
        }
    }
}

/// Propagation settings scaled to the scenario: the horizon is three times the
/// braking time of the initial speed under the margin authority.
pub fn default_propagation(config: &ScenarioConfig) -> PropagationSettings {
    let a = (config.control.u_max - config.disturbance.w_u_max).max(f64::MIN_POSITIVE);
    let speed = Vec3::new(config.x0[3], config.x0[4], config.x0[5])
        .norm()
        .max(a * config.dt);
    let horizon = 3.0 * speed / a;
    PropagationSettings {
        horizon,
        ode_dt: horizon / 200.0,
        refine_tol: horizon * 1e-10,
        max_horizon: 50.0 * horizon,
        ambiguity_tol: 1e-6,
    }
}

/// Replaces the barrier construction of `config`, deriving its parameters from the scenario.
pub fn with_rcbf_variant(config: &ScenarioConfig, variant: RcbfVariant) -> Result<ScenarioConfig> {
    let mut out = config.clone();
    let predictive = |maneuver| {
        let (settings, kepler_kappa) = match config.rcbf {
            RcbfSpec::Predictive(p) => (p.settings, p.kepler_kappa),
            _ => (
                default_propagation(config),
                matches!(config.gravity, GravityModel::PointMass { .. })
                    .then_some(MISSION_A_KEPLER_KAPPA),
            ),
        };
        RcbfSpec::Predictive(PredictiveSpec {
            maneuver,
            settings,
            kepler_kappa,
        })
    };
    out.rcbf = match variant {
        RcbfVariant::Constant => {
            let cs = config.build_constraints()?;
            let mut a = f64::INFINITY;
            for c in &cs {
                a = a.min(sphere_a_max(
                    c,
                    &config.gravity,
                    &config.control,
                    &config.disturbance,
                    config.t0,
                )?);
            }
            RcbfSpec::ConstantAuthority { a_max: a }
        }
        RcbfVariant::Variable => {
            let cs = config.build_constraints()?;
            let rho = cs[0].rho;
            let centered = cs.iter().all(|c| {
                c.rho == rho && matches!(c.center, CenterTrajectory::Fixed { r_c } if Vec3::from(r_c) == config.gravity.center())
            });
            if !matches!(config.gravity, GravityModel::PointMass { .. }) || !centered {
                return Err(Error::NoValidPotential(
                    "the gravity potential needs point-mass gravity and keep-out spheres of one radius at its center".into(),
                ));
            }
            RcbfSpec::VariableAuthority {
                potential: gravity_phi(
                    config.gravity.mu(),
                    rho,
                    config.control.u_max,
                    config.disturbance.w_u_max,
                )?,
            }
        }
        RcbfVariant::PredictiveRad => predictive(Maneuver::Rad),
        RcbfVariant::PredictiveOrth => predictive(Maneuver::Orth),
    };
    out.validate()?;
    Ok(out)
}
