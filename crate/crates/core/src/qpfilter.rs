//! Safety-filter QP `min ½|u - u_nom|²` over the input box intersected with
//! barrier half-spaces, solved exactly by enumerating active sets.

use nalgebra::{Matrix3, Vector3, Vector4};
use serde::{Deserialize, Serialize};

use crate::dynamics::{ControlBounds, Vec3};

/// Absolute primal feasibility tolerance on normalized rows.
pub const FEAS_TOL: f64 = 1e-9;
const DUAL_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem {
    pub u_nom: Vec3,
    pub bounds: ControlBounds,
    /// `row·u <= bound`.
    pub halfspaces: Vec<(Vec3, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QpStatus {
    Optimal,
    Infeasible,
}

impl QpStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            QpStatus::Optimal => "optimal",
            QpStatus::Infeasible => "infeasible",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QpSolution {
    pub u: Vec3,
    pub status: QpStatus,
    /// Max of stationarity, primal, dual and complementarity residuals.
    pub kkt_residual: f64,
    pub objective: f64,
}

/// Linear constraint `a·u <= b` with unit-norm `a`.
#[derive(Debug, Clone, Copy)]
struct Row {
    a: Vec3,
    b: f64,
}

fn rows_of(p: &QpProblem) -> (Vec<Row>, bool) {
    let m = p.bounds.u_max;
    let mut rows = Vec::with_capacity(6 + p.halfspaces.len());
    for i in 0..3 {
        let mut e = Vec3::zeros();
        e[i] = 1.0;
        rows.push(Row { a: e, b: m });
        rows.push(Row { a: -e, b: m });
    }
    let mut trivially_infeasible = false;
    for (a, b) in &p.halfspaces {
        let n = a.norm();
        if n > 0.0 {
            rows.push(Row { a: a / n, b: b / n });
        } else if *b < -FEAS_TOL {
            trivially_infeasible = true;
        }
    }
    (rows, trivially_infeasible)
}

fn objective(u: &Vec3, u_nom: &Vec3) -> f64 {
    0.5 * (u - u_nom).norm_squared()
}

/// Projects `u0` onto `{u : A u = b}` for the selected rows; `None` if dependent.
fn project(u0: &Vec3, rows: &[Row], idx: &[usize]) -> Option<(Vec3, Vec<f64>)> {
    let k = idx.len();
    let mut g = Matrix3::<f64>::zeros();
    let mut r = Vector3::<f64>::zeros();
    for (i, &ii) in idx.iter().enumerate() {
        for (j, &jj) in idx.iter().enumerate() {
            g[(i, j)] = rows[ii].a.dot(&rows[jj].a);
        }
        r[i] = rows[ii].a.dot(u0) - rows[ii].b;
    }
    let lam: Vec<f64> = match k {
        0 => Vec::new(),
        1 => vec![r[0] / g[(0, 0)]],
        _ => {
            let sub = g.view((0, 0), (k, k)).into_owned();
            let det = sub.determinant();
            if det.abs() < 1e-12 {
                return None;
            }
            let inv = sub.try_inverse()?;
            let rr = r.rows(0, k).into_owned();
            (inv * rr).iter().cloned().collect()
        }
    };
    let mut u = *u0;
    for (i, &ii) in idx.iter().enumerate() {
        u -= rows[ii].a * lam[i];
    }
    Some((u, lam))
}

fn max_violation(u: &Vec3, rows: &[Row]) -> f64 {
    rows.iter()
        .map(|r| r.a.dot(u) - r.b)
        .fold(f64::NEG_INFINITY, f64::max)
}

fn kkt_residual(u: &Vec3, u_nom: &Vec3, rows: &[Row], idx: &[usize], lam: &[f64]) -> f64 {
    let mut stat = u - u_nom;
    for (i, &ii) in idx.iter().enumerate() {
        stat += rows[ii].a * lam[i];
    }
    let primal = max_violation(u, rows).max(0.0);
    let dual = lam.iter().map(|l| (-l).max(0.0)).fold(0.0, f64::max);
    let comp = idx
        .iter()
        .zip(lam)
        .map(|(&ii, l)| (l * (rows[ii].a.dot(u) - rows[ii].b)).abs())
        .fold(0.0, f64::max);
    stat.amax().max(primal).max(dual).max(comp)
}

fn subsets(n: usize) -> impl Iterator<Item = Vec<usize>> {
    let singles = (0..n).map(|i| vec![i]);
    let pairs = (0..n).flat_map(move |i| (i + 1..n).map(move |j| vec![i, j]));
    let triples = (0..n)
        .flat_map(move |i| (i + 1..n).flat_map(move |j| (j + 1..n).map(move |k| vec![i, j, k])));
    std::iter::once(Vec::new())
        .chain(singles)
        .chain(pairs)
        .chain(triples)
}

/// Exact minimizer via enumeration of active sets of size at most three.
pub fn solve(p: &QpProblem) -> QpSolution {
    let (rows, trivially_infeasible) = rows_of(p);
    let infeasible = QpSolution {
        u: p.bounds.clip(&p.u_nom),
        status: QpStatus::Infeasible,
        kkt_residual: f64::INFINITY,
        objective: f64::INFINITY,
    };
    if trivially_infeasible {
        return infeasible;
    }
    let mut best: Option<(f64, Vec3, f64)> = None;
    for idx in subsets(rows.len()) {
        // opposite faces of one box axis are never simultaneously active
        if idx.len() >= 2 && idx.windows(2).any(|w| w[1] < 6 && w[0] / 2 == w[1] / 2) {
            continue;
        }
        let Some((u, lam)) = project(&p.u_nom, &rows, &idx) else {
            continue;
        };
        if lam.iter().any(|l| *l < -DUAL_TOL) {
            continue;
        }
        if max_violation(&u, &rows) > FEAS_TOL {
            continue;
        }
        let obj = objective(&u, &p.u_nom);
        let res = kkt_residual(&u, &p.u_nom, &rows, &idx, &lam);
        if best.is_none_or(|(o, _, _)| obj < o) {
            best = Some((obj, u, res));
        }
        if idx.is_empty() {
            break;
        }
    }
    match best {
        Some((objective, u, kkt_residual)) => QpSolution {
            u,
            status: QpStatus::Optimal,
            kkt_residual,
            objective,
        },
        None => infeasible,
    }
}

/// Smallest uniform relaxation `t >= 0` such that every half-space with bound
/// `b + t |row|` meets the box, found by enumerating vertices of the 4-D LP.
pub fn min_max_violation(bounds: &ControlBounds, halfspaces: &[(Vec3, f64)]) -> f64 {
    let m = bounds.u_max;
    // variables z = (u, t); constraints G z <= c
    let mut g: Vec<Vector4<f64>> = Vec::new();
    let mut c: Vec<f64> = Vec::new();
    for i in 0..3 {
        let mut e = Vector4::zeros();
        e[i] = 1.0;
        g.push(e);
        c.push(m);
        g.push(-e);
        c.push(m);
    }
    for (a, b) in halfspaces {
        let n = a.norm();
        if n == 0.0 {
            continue;
        }
        g.push(Vector4::new(a.x / n, a.y / n, a.z / n, -1.0));
        c.push(b / n);
    }
    g.push(Vector4::new(0.0, 0.0, 0.0, -1.0));
    c.push(0.0);

    let violation_at = |u: &Vec3| -> f64 {
        halfspaces
            .iter()
            .filter(|(a, _)| a.norm() > 0.0)
            .map(|(a, b)| (a.dot(u) - b) / a.norm())
            .fold(0.0, f64::max)
    };
    let mut best = violation_at(&Vec3::zeros());
    let n = g.len();
    for i in 0..n {
        for j in i + 1..n {
            for k in j + 1..n {
                for l in k + 1..n {
                    let mat = nalgebra::Matrix4::from_rows(&[
                        g[i].transpose(),
                        g[j].transpose(),
                        g[k].transpose(),
                        g[l].transpose(),
                    ]);
                    let Some(inv) = mat.try_inverse() else {
                        continue;
                    };
                    let z = inv * Vector4::new(c[i], c[j], c[k], c[l]);
                    if g.iter().zip(&c).all(|(gi, ci)| gi.dot(&z) <= ci + 1e-12) && z[3] < best {
                        best = z[3].max(0.0);
                    }
                }
            }
        }
    }
    best
}

/// Solves with the half-spaces relaxed by the minimal violation when the
/// problem is infeasible, returning the relaxation that was applied.
pub fn solve_with_fallback(p: &QpProblem) -> (QpSolution, Option<f64>) {
    let sol = solve(p);
    if sol.status == QpStatus::Optimal {
        return (sol, None);
    }
    let t = min_max_violation(&p.bounds, &p.halfspaces);
    let relaxed = QpProblem {
        u_nom: p.u_nom,
        bounds: p.bounds,
        halfspaces: p
            .halfspaces
            .iter()
            .map(|(a, b)| (*a, b + t * a.norm() + FEAS_TOL))
            .collect(),
    };
    let mut sol = solve(&relaxed);
    if sol.status == QpStatus::Optimal {
        sol.status = QpStatus::Infeasible;
    }
    (sol, Some(t))
}

/// Drives the spacecraft onto the x-axis at the parabolic-plus speed.
pub const FLYBY_KP: f64 = 1.2e-11;
pub const FLYBY_KD: f64 = 6e-5;

/// `-k_p (r - (r·x)x) - k_d (v - sqrt(2 mu / |r| + 1e4) x)`.
pub fn nominal_flyby(r: &Vec3, v: &Vec3, mu: f64) -> Vec3 {
    nominal_flyby_with_gains(r, v, mu, FLYBY_KP, FLYBY_KD)
}

pub fn nominal_flyby_with_gains(r: &Vec3, v: &Vec3, mu: f64, k_p: f64, k_d: f64) -> Vec3 {
    let x = Vec3::x();
    let lateral = r - x * r.dot(&x);
    let speed = (2.0 * mu / r.norm() + 1e4).sqrt();
    -lateral * k_p - (v - x * speed) * k_d
}

pub const PROX_KP: f64 = 3e-5;
pub const PROX_KD: f64 = 0.03;

/// PD law toward a fixed target `r_t`.
pub fn nominal_prox(r: &Vec3, v: &Vec3, r_t: &Vec3, k_p: f64, k_d: f64) -> Vec3 {
    -(r - r_t) * k_p - v * k_d
}
