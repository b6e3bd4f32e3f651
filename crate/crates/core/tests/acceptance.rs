use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rcbf::constraints::{CenterTrajectory, KeepOutConstraint};
use rcbf::dynamics::{ControlBounds, DisturbanceBounds, DisturbanceMode, Vec3};
use rcbf::nalgebra::{Matrix3, Rotation3, SMatrix, Vector2, Vector3, Vector6};
use rcbf::qpfilter::{solve, QpProblem, QpStatus};
use rcbf::rcbf::predictive::{
    eval_barrier, propagate_chi, ClosedLoop, DoubleIntegrator, PropagationSettings,
};
use rcbf::rcbf::{compute_a_max0, disturbance_margin_w, keep_out_boundary_samples, RcbfSpec};
use rcbf::sim::presets::{self, CERES_MU, MISSION_A_RHO};
use rcbf::sim::{mission_a_preset, mission_b_preset, run, run_sweep, MeshSource, SAFETY_SLACK};
use rcbf::switching::{alpha_r, HysteresisBank, HysteresisParams};

struct Outcome {
    pass: bool,
    detail: String,
}

fn report(id: u32, title: &str, limit_s: f64, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let out = f();
    let secs = start.elapsed().as_secs_f64();
    let pass = out.pass && secs < limit_s;
    println!(
        "criterion {id} {:<4} {title}: {} [{secs:.2} s, limit {limit_s} s]",
        if pass { "PASS" } else { "FAIL" },
        out.detail
    );
    pass
}

fn oracle_equivalence() -> Outcome {
    let sys = DoubleIntegrator { u: -1.0 };
    let settings = PropagationSettings {
        horizon: 12.0,
        ode_dt: 0.05,
        refine_tol: 1e-9,
        max_horizon: 12.0,
        ambiguity_tol: 1e-9,
    };
    let mut worst = 0.0_f64;
    for i in 0..21 {
        for j in 0..21 {
            let p = -20.0 + i as f64;
            let v = -5.0 + 0.5 * j as f64;
            let closed = if v > 0.0 { p + v * v / 2.0 } else { p };
            match eval_barrier(&sys, 0.0, &Vector2::new(p, v), &settings) {
                Ok(bp) => worst = worst.max((bp.value - closed).abs()),
                Err(e) => {
                    return Outcome {
                        pass: false,
                        detail: format!("({p}, {v}): {e}"),
                    }
                }
            }
        }
    }
    Outcome {
        pass: worst < 1e-4,
        detail: format!("max |dH| = {worst:.3e} (tol 1e-4)"),
    }
}

/// Two-body motion about a center drifting at constant velocity.
struct DriftingTwoBody {
    mu: f64,
    drift: Vector3<f64>,
}

impl DriftingTwoBody {
    fn rel(&self, t: f64, y: &Vector6<f64>) -> Vector3<f64> {
        Vector3::new(y[0], y[1], y[2]) - self.drift * t
    }

    fn accel(&self, d: &Vector3<f64>) -> Vector3<f64> {
        -d * (self.mu / d.norm().powi(3))
    }

    fn accel_jacobian(&self, d: &Vector3<f64>) -> Matrix3<f64> {
        let n = d.norm();
        (d * d.transpose() * (3.0 / (n * n)) - Matrix3::identity()) * (self.mu / n.powi(3))
    }
}

impl ClosedLoop<6> for DriftingTwoBody {
    fn field(&self, t: f64, y: &Vector6<f64>) -> rcbf::Result<Vector6<f64>> {
        let a = self.accel(&self.rel(t, y));
        Ok(Vector6::new(y[3], y[4], y[5], a.x, a.y, a.z))
    }

    fn jacobians(
        &self,
        t: f64,
        y: &Vector6<f64>,
    ) -> rcbf::Result<(SMatrix<f64, 6, 6>, Vector6<f64>)> {
        let j = self.accel_jacobian(&self.rel(t, y));
        let mut m = SMatrix::<f64, 6, 6>::zeros();
        m.fixed_view_mut::<3, 3>(0, 3)
            .copy_from(&Matrix3::identity());
        m.fixed_view_mut::<3, 3>(3, 0).copy_from(&j);
        let at = -(j * self.drift);
        Ok((m, Vector6::new(0.0, 0.0, 0.0, at.x, at.y, at.z)))
    }

    fn h(&self, t: f64, y: &Vector6<f64>) -> rcbf::Result<f64> {
        Ok(-self.rel(t, y).norm())
    }

    fn h_partials(&self, t: f64, y: &Vector6<f64>) -> rcbf::Result<(f64, Vector6<f64>)> {
        let d = self.rel(t, y);
        let u = d / d.norm();
        Ok((
            u.dot(&self.drift),
            Vector6::new(-u.x, -u.y, -u.z, 0.0, 0.0, 0.0),
        ))
    }
}

fn reference_flow(
    sys: &DriftingTwoBody,
    t0: f64,
    x0: &Vector6<f64>,
    span: f64,
    steps: usize,
) -> Vector6<f64> {
    let f = |t: f64, y: &Vector6<f64>| {
        let a = sys.accel(&sys.rel(t, y));
        Vector6::new(y[3], y[4], y[5], a.x, a.y, a.z)
    };
    let h = span / steps as f64;
    let mut y = *x0;
    for k in 0..steps {
        let t = t0 + k as f64 * h;
        let k1 = f(t, &y);
        let k2 = f(t + h / 2.0, &(y + k1 * (h / 2.0)));
        let k3 = f(t + h / 2.0, &(y + k2 * (h / 2.0)));
        let k4 = f(t + h, &(y + k3 * h));
        y += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
    }
    y
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn sensitivity_correctness() -> Outcome {
    let mu: f64 = 1.0;
    let (sma, ecc): (f64, f64) = (1.0, 0.3);
    let rp = sma * (1.0 - ecc);
    let vp = (mu * (1.0 + ecc) / rp).sqrt();
    let tilt = Rotation3::from_euler_angles(0.7, 40f64.to_radians(), 0.3);
    let r0 = tilt * Vector3::new(rp, 0.0, 0.0);
    let v0 = tilt * Vector3::new(0.0, vp, 0.0);
    let x0 = Vector6::new(r0.x, r0.y, r0.z, v0.x, v0.y, v0.z);
    let quarter = 0.5 * std::f64::consts::PI * sma.powf(1.5) / mu.sqrt();
    let steps = 4000;
    let settings = PropagationSettings {
        horizon: quarter,
        ode_dt: quarter / steps as f64,
        refine_tol: 1e-9,
        max_horizon: quarter,
        ambiguity_tol: 1e-12,
    };
    let mut worst_big = 0.0_f64;
    let mut worst_theta = 0.0_f64;
    let mut theta_static = 0.0_f64;
    for drift in [Vector3::zeros(), Vector3::new(0.05, -0.02, 0.03)] {
        let sys = DriftingTwoBody { mu, drift };
        let t0 = 0.4;
        let pr = match propagate_chi(&sys, t0, &x0, &settings) {
            Ok(pr) => pr,
            Err(e) => {
                return Outcome {
                    pass: false,
                    detail: e.to_string(),
                }
            }
        };
        if (pr.betas.last().unwrap() - quarter).abs() > 1e-12 {
            return Outcome {
                pass: false,
                detail: "grid missed the quarter period".into(),
            };
        }
        let big = pr.big_theta.last().unwrap();
        let theta = pr.theta.last().unwrap();
        let d = 1e-6;
        for j in 0..6 {
            let mut xp = x0;
            let mut xm = x0;
            xp[j] += d;
            xm[j] -= d;
            let col = (reference_flow(&sys, t0, &xp, quarter, steps)
                - reference_flow(&sys, t0, &xm, quarter, steps))
                / (2.0 * d);
            for i in 0..6 {
                worst_big = worst_big.max(rel_err(big[(i, j)], col[i]));
            }
        }
        let fd_t = (reference_flow(&sys, t0 + d, &x0, quarter, steps)
            - reference_flow(&sys, t0 - d, &x0, quarter, steps))
            / (2.0 * d);
        if drift == Vector3::zeros() {
            theta_static = theta.norm().max(fd_t.norm());
        } else {
            for i in 0..6 {
                worst_theta = worst_theta.max(rel_err(theta[i], fd_t[i]));
            }
        }
    }
    Outcome {
        pass: worst_big < 1e-4 && worst_theta < 1e-4 && theta_static < 1e-8,
        detail: format!(
            "max rel err Theta {worst_big:.2e}, theta {worst_theta:.2e} (tol 1e-4); autonomous |theta| {theta_static:.1e}"
        ),
    }
}

fn mission_a_safety() -> Outcome {
    let seeds: Vec<u64> = (0..10).collect();
    let mut ok = true;
    let mut closest = [f64::INFINITY; 4];
    let mut lines = Vec::new();
    for variant in 1..=4u8 {
        let rho = MISSION_A_RHO[variant as usize - 1];
        let cfg = match mission_a_preset(variant) {
            Ok(c) => c,
            Err(e) => {
                return Outcome {
                    pass: false,
                    detail: e.to_string(),
                }
            }
        };
        let (mut max_barrier, mut min_dist) = (f64::NEG_INFINITY, f64::INFINITY);
        for result in run_sweep(&cfg, &seeds) {
            let out = match result {
                Ok(o) => o,
                Err(e) => {
                    return Outcome {
                        pass: false,
                        detail: format!("variant {variant}: {e}"),
                    }
                }
            };
            for r in &out.log.records {
                let dist = Vector3::from(r.r).norm();
                min_dist = min_dist.min(dist);
                max_barrier = max_barrier.max(r.max_barrier);
            }
        }
        ok &= min_dist >= rho && max_barrier <= SAFETY_SLACK * rho;
        closest[variant as usize - 1] = min_dist;
        lines.push(format!(
            "A-{variant} min|r| {min_dist:.4e} (rho {rho:.3e}) max H {max_barrier:.3e}"
        ));
    }
    let ordered = closest[3] < closest[0];
    Outcome {
        pass: ok && ordered,
        detail: format!("{}; A-4 closer than A-1: {ordered}", lines.join(", ")),
    }
}

/// `x' = u + w` kept at `x <= 0` with `H = h = x`, the filter at equality.
fn steady_band(disturbance: f64, w_max: f64, eps1: f64) -> f64 {
    let bounds = ControlBounds::new(1.0).unwrap();
    let params = HysteresisParams::new(eps1, 3.0 * eps1).unwrap();
    let mut bank = HysteresisBank::new(1, params);
    let row = Vec3::x();
    let w = disturbance_margin_w(
        &row,
        &Vec3::zeros(),
        &DisturbanceBounds::new(w_max, 0.0).unwrap(),
    );
    let (dt, steps) = (0.01, 40_000);
    let mut x = -5.0 * eps1;
    let mut tail = Vec::new();
    for k in 0..steps {
        bank.update(&[x]);
        let halfspaces = if bank.sigma[0] {
            vec![(row, alpha_r(-x, w, eps1).unwrap() - w)]
        } else {
            vec![]
        };
        let sol = solve(&QpProblem {
            u_nom: Vec3::new(0.8, 0.0, 0.0),
            bounds,
            halfspaces,
        });
        x += dt * (sol.u.x + disturbance);
        if k >= steps - 2000 {
            tail.push(x);
        }
    }
    tail.iter().sum::<f64>() / tail.len() as f64
}

fn disturbance_band() -> Outcome {
    let (w_max, eps1) = (0.1, 1.0);
    let cases = [(w_max, 0.0), (0.0, -eps1), (-w_max, -2.0 * eps1)];
    let mut ok = true;
    let mut parts = Vec::new();
    for (d, target) in cases {
        let h = steady_band(d, w_max, eps1);
        ok &= (h - target).abs() <= 0.05 * eps1;
        parts.push(format!("w = {d:+}: H {h:.4} (target {target})"));
    }
    Outcome {
        pass: ok,
        detail: parts.join(", "),
    }
}

fn mission_b_safety() -> Outcome {
    let source = MeshSource::Synthetic {
        n_points: presets::EROS_MESH_POINTS,
        semi_axes: presets::EROS_SEMI_AXES,
    };
    let cfg = match mission_b_preset(source) {
        Ok(c) => c,
        Err(e) => {
            return Outcome {
                pass: false,
                detail: e.to_string(),
            }
        }
    };
    let seeds: Vec<u64> = (0..5).collect();
    let (mut violations, mut max_active, mut closest) = (0, 0, f64::INFINITY);
    let mut hist: Vec<usize> = Vec::new();
    for result in run_sweep(&cfg, &seeds) {
        let out = match result {
            Ok(o) => o,
            Err(e) => {
                return Outcome {
                    pass: false,
                    detail: e.to_string(),
                }
            }
        };
        violations += out.log.records.iter().filter(|r| r.max_h > 0.0).count();
        max_active = max_active.max(out.summary.max_active);
        closest = closest.min(out.summary.min_distance);
        if hist.len() < out.summary.active_histogram.len() {
            hist.resize(out.summary.active_histogram.len(), 0);
        }
        for (k, c) in out.summary.active_histogram.iter().enumerate() {
            hist[k] += c;
        }
    }
    let hist: Vec<String> = hist
        .iter()
        .enumerate()
        .filter(|(_, c)| **c > 0)
        .map(|(k, c)| format!("{k}:{c}"))
        .collect();
    Outcome {
        pass: violations == 0 && max_active <= 10,
        detail: format!(
            "{} vertices, steps with h > 0: {violations}, max simultaneously active {max_active} (limit 10), histogram [{}], closest vertex distance {closest:.1} m",
            presets::EROS_MESH_POINTS,
            hist.join(" ")
        ),
    }
}

fn a_max_values() -> Outcome {
    let eros = match mission_b_preset(MeshSource::Synthetic {
        n_points: presets::EROS_MESH_POINTS,
        semi_axes: presets::EROS_SEMI_AXES,
    }) {
        Ok(c) => c,
        Err(e) => {
            return Outcome {
                pass: false,
                detail: e.to_string(),
            }
        }
    };
    let RcbfSpec::ConstantAuthority { a_max: eros_a } = eros.rcbf else {
        return Outcome {
            pass: false,
            detail: "mission B is not constant-authority".into(),
        };
    };
    let ceres = KeepOutConstraint::new(
        MISSION_A_RHO[0],
        CenterTrajectory::fixed(Vec3::zeros()),
        2e-6,
    )
    .unwrap();
    let samples = keep_out_boundary_samples(&ceres, &[0.0], 32);
    let ceres_a = compute_a_max0(
        &ceres,
        &presets::mission_a_gravity(),
        &presets::mission_a_control(),
        &presets::mission_a_disturbance(1),
        &samples,
    );
    let oracle = 1e-4 - 5e-6 - CERES_MU / (MISSION_A_RHO[0] * MISSION_A_RHO[0]);
    let preset_a = match mission_a_preset(1).map(|c| c.rcbf) {
        Ok(RcbfSpec::ConstantAuthority { a_max }) => a_max,
        _ => f64::NAN,
    };
    let eros_ok = rel_err(eros_a, 0.0523) <= 0.10;
    let (ceres_ok, ceres_txt) = match ceres_a {
        Ok(a) => (a > 0.0 && rel_err(a, oracle) < 1e-12, format!("{a:.4e}")),
        Err(e) => (false, e.to_string()),
    };
    Outcome {
        pass: eros_ok && ceres_ok,
        detail: format!(
            "eros surrogate {eros_a:.4e} vs 0.0523 +-10% ({}), ceres {ceres_txt} (oracle {oracle:.4e}, preset bound {preset_a:.4e}, reported 4.55e-5)",
            if eros_ok { "within" } else { "outside" }
        ),
    }
}

fn qp_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let u_max = 1.0;
    let bounds = ControlBounds::new(u_max).unwrap();
    let n = 40;
    let step = 2.0 * u_max / n as f64;
    let grid: Vec<f64> = (0..=n).map(|i| -u_max + i as f64 * step).collect();
    let (mut worst_gap, mut worst_kkt, mut no_grid) = (f64::NEG_INFINITY, 0.0_f64, 0);
    let mut ok = true;
    for _ in 0..1000 {
        let u_nom = Vec3::from_fn(|_, _| rng.gen_range(-2.0..2.0));
        let anchor = Vec3::from_fn(|_, _| rng.gen_range(-0.9..0.9));
        let halfspaces: Vec<(Vec3, f64)> = (0..rng.gen_range(0..=4))
            .map(|_| {
                let a = Vec3::from_fn(|_, _| rng.gen_range(-1.0..1.0));
                (a, a.dot(&anchor) + rng.gen_range(0.0..0.3))
            })
            .collect();
        let sol = solve(&QpProblem {
            u_nom,
            bounds,
            halfspaces: halfspaces.clone(),
        });
        if sol.status != QpStatus::Optimal {
            ok = false;
            continue;
        }
        let obj = |u: &Vec3| 0.5 * (u - u_nom).norm_squared();
        let mut best = f64::INFINITY;
        for &x in &grid {
            for &y in &grid {
                for &z in &grid {
                    let u = Vec3::new(x, y, z);
                    if halfspaces.iter().all(|(a, b)| a.dot(&u) <= *b) {
                        best = best.min(obj(&u));
                    }
                }
            }
        }
        if best.is_infinite() {
            no_grid += 1;
            continue;
        }
        let lipschitz = (u_nom.norm() + 3f64.sqrt() * u_max) * 3f64.sqrt();
        let allowance = 2.0 * step * lipschitz;
        worst_gap = worst_gap.max(sol.objective - best);
        ok &= sol.objective <= best + allowance && sol.kkt_residual < 1e-8;
        worst_kkt = worst_kkt.max(sol.kkt_residual);
    }
    Outcome {
        pass: ok,
        detail: format!(
            "max (active-set - grid) objective {worst_gap:.3e}, max KKT residual {worst_kkt:.2e} (tol 1e-8), {no_grid} problems without a feasible grid point"
        ),
    }
}

fn predictive_step_cost() -> Outcome {
    let mut cfg = match mission_a_preset(3) {
        Ok(c) => c,
        Err(e) => {
            return Outcome {
                pass: false,
                detail: e.to_string(),
            }
        }
    };
    cfg.disturbance_mode = DisturbanceMode::RandomBounded;
    match run(&cfg) {
        Ok(out) => {
            let q = out.summary.step_ms;
            Outcome {
                pass: q.max <= 1000.0,
                detail: format!(
                    "A-3 step ms p50 {:.3} p90 {:.3} p99 {:.3} max {:.3} (limit 1000)",
                    q.p50, q.p90, q.p99, q.max
                ),
            }
        }
        Err(e) => Outcome {
            pass: false,
            detail: e.to_string(),
        },
    }
}

fn main() {
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let results = [
        report(1, "oracle equivalence", 10.0, oracle_equivalence),
        report(2, "sensitivity correctness", 5.0, sensitivity_correctness),
        report(3, "mission A safety", 300.0, mission_a_safety),
        report(4, "disturbance band", 10.0, disturbance_band),
        report(5, "mission B safety and activity", 600.0, mission_b_safety),
        report(6, "a_max values", 60.0, a_max_values),
        report(7, "QP oracle", 30.0, qp_oracle),
        report(8, "predictive step cost", 120.0, predictive_step_cost),
    ];
    let passed = results.iter().filter(|p| **p).count();
    println!("acceptance: {passed}/{} criteria passed", results.len());
    if passed != results.len() {
        std::process::exit(1);
    }
}
