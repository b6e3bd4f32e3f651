//! Predictive barrier `H(t, x) = max_{beta >= 0} h(t + beta, chi(beta, t, x))`.
//!
//! `chi` is the closed-loop trajectory under an evading maneuver. Along it we
//! integrate the sensitivities
//!
//! ```text
//! theta' = dY/dt + dY/dy theta,   theta(0) = 0
//! Theta' = dY/dy Theta,           Theta(0) = I
//! ```
//!
//! so the gradient of `H` comes from the chain rule at the maximizer `beta_c`.

use nalgebra::{Matrix3, SMatrix, SVector, Vector2, Vector6};
use serde::{Deserialize, Serialize};

use crate::constraints::KeepOutConstraint;
use crate::dynamics::{
    gravity_accel, gravity_jacobian, stack, ControlBounds, DisturbanceBounds, GravityModel,
    SimState, Vec3,
};
use crate::error::{Error, Result};
use crate::switching::ClassK;

use super::maneuver::{maneuver_from_relative, margin_semi_axis, Maneuver};
use super::{assemble, RcbfEvaluation};

/// Closed-loop vector field `Y(t, y)` together with the constraint `h` it is scored on.
pub trait ClosedLoop<const N: usize> {
    fn field(&self, t: f64, y: &SVector<f64, N>) -> Result<SVector<f64, N>>;
    /// Field with any discontinuous input frozen at its value at `(ta, ya)`, the
    /// start of the current integration step, so that no step straddles a switch.
    fn field_held(
        &self,
        t: f64,
        y: &SVector<f64, N>,
        _ta: f64,
        _ya: &SVector<f64, N>,
    ) -> Result<SVector<f64, N>> {
        self.field(t, y)
    }
    /// `(dY/dy, dY/dt)`.
    fn jacobians(
        &self,
        t: f64,
        y: &SVector<f64, N>,
    ) -> Result<(SMatrix<f64, N, N>, SVector<f64, N>)>;
    fn h(&self, t: f64, y: &SVector<f64, N>) -> Result<f64>;
    /// `(dh/dt, dh/dy)`.
    fn h_partials(&self, t: f64, y: &SVector<f64, N>) -> Result<(f64, SVector<f64, N>)>;
    /// Upper bound on the next integration step.
    fn max_step(&self, _t: f64, _y: &SVector<f64, N>) -> f64 {
        f64::INFINITY
    }
    /// Stops propagation, e.g. once the trajectory is deep inside the keep-out set.
    fn terminal(&self, _t: f64, _y: &SVector<f64, N>) -> bool {
        false
    }
}

/// Horizon and tolerances for propagation and maximization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PropagationSettings {
    /// Initial horizon, s.
    pub horizon: f64,
    /// Nominal integration step, s.
    pub ode_dt: f64,
    /// Golden-section tolerance on `beta`, s.
    pub refine_tol: f64,
    /// The horizon grows in chunks of `horizon` up to this limit while `h` still rises at the end.
    pub max_horizon: f64,
    /// Separate local maxima within this of the global max are ambiguous, m.
    pub ambiguity_tol: f64,
}

impl PropagationSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.horizon > 0.0 && self.ode_dt > 0.0 && self.refine_tol > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "predictive horizon, ode_dt and refine_tol must be positive: {self:?}"
            )));
        }
        if !(self.max_horizon >= self.horizon) {
            return Err(Error::InvalidParameter(format!(
                "max_horizon {} below horizon {}",
                self.max_horizon, self.horizon
            )));
        }
        if !(self.ambiguity_tol >= 0.0) {
            return Err(Error::InvalidParameter(
                "ambiguity_tol must be nonnegative".into(),
            ));
        }
        Ok(())
    }
}

/// Predictive barrier configuration for a keep-out constraint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictiveSpec {
    pub maneuver: Maneuver,
    pub settings: PropagationSettings,
    /// When set, steps are also capped at `kappa sqrt(|r|^3 / mu)` about the attracting center.
    #[serde(default)]
    pub kepler_kappa: Option<f64>,
}

impl PredictiveSpec {
    pub fn validate(&self) -> Result<()> {
        self.settings.validate()?;
        if let Some(k) = self.kepler_kappa {
            if !(k > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "kepler_kappa must be positive, got {k}"
                )));
            }
        }
        Ok(())
    }
}

/// Samples of one propagation from `(t0, x0)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PropagationResult<const N: usize> {
    pub t0: f64,
    pub betas: Vec<f64>,
    pub y: Vec<SVector<f64, N>>,
    /// Empty when only the trajectory was integrated.
    pub theta: Vec<SVector<f64, N>>,
    pub big_theta: Vec<SMatrix<f64, N, N>>,
    pub h: Vec<f64>,
    pub beta_c: f64,
    /// `h` at the maximizer.
    pub value: f64,
    /// Propagation stopped early on the system's terminal condition.
    pub terminated: bool,
}

impl<const N: usize> PropagationResult<N> {
    fn empty(t0: f64, x0: SVector<f64, N>, h0: f64, with_sens: bool) -> Self {
        Self {
            t0,
            betas: vec![0.0],
            y: vec![x0],
            theta: if with_sens {
                vec![SVector::zeros()]
            } else {
                Vec::new()
            },
            big_theta: if with_sens {
                vec![SMatrix::identity()]
            } else {
                Vec::new()
            },
            h: vec![h0],
            beta_c: 0.0,
            value: h0,
            terminated: false,
        }
    }

    pub fn horizon(&self) -> f64 {
        *self.betas.last().unwrap_or(&0.0)
    }
}

/// Barrier value, partials and maximizer from a predictive evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BarrierPoint<const N: usize> {
    pub value: f64,
    pub d_dt: f64,
    pub grad: SVector<f64, N>,
    pub beta_c: f64,
    /// Number of coarse samples used.
    pub samples: usize,
}

fn rk4_y<const N: usize, S: ClosedLoop<N>>(
    sys: &S,
    t: f64,
    y: &SVector<f64, N>,
    dt: f64,
) -> Result<SVector<f64, N>> {
    let h2 = 0.5 * dt;
    let k1 = sys.field_held(t, y, t, y)?;
    let k2 = sys.field_held(t + h2, &(y + k1 * h2), t, y)?;
    let k3 = sys.field_held(t + h2, &(y + k2 * h2), t, y)?;
    let k4 = sys.field_held(t + dt, &(y + k3 * dt), t, y)?;
    let next = y + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
    if next.iter().any(|c| !c.is_finite()) {
        return Err(Error::NonFiniteState { t: t + dt });
    }
    Ok(next)
}

type Joint<const N: usize> = (SVector<f64, N>, SVector<f64, N>, SMatrix<f64, N, N>);

fn joint_rates<const N: usize, S: ClosedLoop<N>>(
    sys: &S,
    t: f64,
    y: &SVector<f64, N>,
    th: &SVector<f64, N>,
    big: &SMatrix<f64, N, N>,
    anchor: (f64, &SVector<f64, N>),
) -> Result<Joint<N>> {
    let yd = sys.field_held(t, y, anchor.0, anchor.1)?;
    let (jy, jt) = sys.jacobians(t, y)?;
    Ok((yd, jt + jy * th, jy * big))
}

fn rk4_joint<const N: usize, S: ClosedLoop<N>>(
    sys: &S,
    t: f64,
    s: &Joint<N>,
    dt: f64,
) -> Result<Joint<N>> {
    let h2 = 0.5 * dt;
    let (y, th, big) = s;
    let a = (t, y);
    let k1 = joint_rates(sys, t, y, th, big, a)?;
    let k2 = joint_rates(
        sys,
        t + h2,
        &(y + k1.0 * h2),
        &(th + k1.1 * h2),
        &(big + k1.2 * h2),
        a,
    )?;
    let k3 = joint_rates(
        sys,
        t + h2,
        &(y + k2.0 * h2),
        &(th + k2.1 * h2),
        &(big + k2.2 * h2),
        a,
    )?;
    let k4 = joint_rates(
        sys,
        t + dt,
        &(y + k3.0 * dt),
        &(th + k3.1 * dt),
        &(big + k3.2 * dt),
        a,
    )?;
    let w = dt / 6.0;
    let next = (
        y + (k1.0 + k2.0 * 2.0 + k3.0 * 2.0 + k4.0) * w,
        th + (k1.1 + k2.1 * 2.0 + k3.1 * 2.0 + k4.1) * w,
        big + (k1.2 + k2.2 * 2.0 + k3.2 * 2.0 + k4.2) * w,
    );
    if next
        .0
        .iter()
        .chain(next.1.iter())
        .chain(next.2.iter())
        .any(|c| !c.is_finite())
    {
        return Err(Error::NonFiniteState { t: t + dt });
    }
    Ok(next)
}

fn next_step<const N: usize, S: ClosedLoop<N>>(
    sys: &S,
    t: f64,
    y: &SVector<f64, N>,
    ode_dt: f64,
    remaining: f64,
) -> f64 {
    ode_dt.min(sys.max_step(t, y)).min(remaining)
}

/// Extends the samples of `pr` out to `horizon`.
fn extend<const N: usize, S: ClosedLoop<N>>(
    sys: &S,
    pr: &mut PropagationResult<N>,
    horizon: f64,
    ode_dt: f64,
) -> Result<()> {
    let with_sens = !pr.theta.is_empty();
    let min_step = 1e-12 * horizon.max(1.0);
    while !pr.terminated {
        let beta = pr.horizon();
        let remaining = horizon - beta;
        if remaining <= min_step {
            break;
        }
        let y = *pr.y.last().unwrap();
        let t = pr.t0 + beta;
        let dt = next_step(sys, t, &y, ode_dt, remaining);
        let ny = if with_sens {
            let s = (y, *pr.theta.last().unwrap(), *pr.big_theta.last().unwrap());
            let n = rk4_joint(sys, t, &s, dt)?;
            pr.theta.push(n.1);
            pr.big_theta.push(n.2);
            n.0
        } else {
            rk4_y(sys, t, &y, dt)?
        };
        let nb = beta + dt;
        pr.betas.push(nb);
        pr.h.push(sys.h(pr.t0 + nb, &ny)?);
        pr.y.push(ny);
        if sys.terminal(pr.t0 + nb, &ny) {
            pr.terminated = true;
        }
    }
    Ok(())
}

/// Jointly integrates the trajectory and its sensitivities over `settings.horizon`
/// and locates the maximizer of `h` along it.
pub fn propagate_chi<const N: usize, S: ClosedLoop<N>>(
    sys: &S,
    t0: f64,
    x0: &SVector<f64, N>,
    settings: &PropagationSettings,
) -> Result<PropagationResult<N>> {
    settings.validate()?;
    let mut pr = PropagationResult::empty(t0, *x0, sys.h(t0, x0)?, true);
    extend(sys, &mut pr, settings.horizon, settings.ode_dt)?;
    let (beta_c, value) = find_maximizer(sys, &pr, settings)?;
    pr.beta_c = beta_c;
    pr.value = value;
    Ok(pr)
}

/// Result of the coarse scan.
enum Scan {
    /// The largest sample is the last one of a trajectory that has not terminated.
    AtEnd,
    Peak(usize),
}

fn scan<const N: usize>(pr: &PropagationResult<N>, tol: f64) -> Result<Scan> {
    let hs = &pr.h;
    let m = hs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    // runs of samples within tol of the max, separated by dips below it
    let mut runs: Vec<(usize, usize)> = Vec::new();
    let mut start: Option<usize> = None;
    for (i, &h) in hs.iter().enumerate() {
        let near = h >= m - tol;
        match (near, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                runs.push((s, i - 1));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        runs.push((s, hs.len() - 1));
    }
    let argmax_in =
        |(a, b): (usize, usize)| (a..=b).fold(a, |best, i| if hs[i] > hs[best] { i } else { best });
    let nonzero: Vec<(usize, usize)> = runs.iter().cloned().filter(|r| r.0 > 0).collect();
    if nonzero.len() >= 2 {
        let (a, b) = (argmax_in(nonzero[0]), argmax_in(nonzero[1]));
        return Err(Error::AmbiguousMaximizer {
            first: pr.betas[a],
            second: pr.betas[b],
        });
    }
    let run = nonzero.first().cloned().unwrap_or(runs[0]);
    let k = argmax_in(run);
    if k == hs.len() - 1 && k > 0 && !pr.terminated {
        return Ok(Scan::AtEnd);
    }
    Ok(Scan::Peak(k))
}

/// Index of the last sample at or before `beta`.
fn base_index<const N: usize>(pr: &PropagationResult<N>, beta: f64) -> usize {
    match pr.betas.binary_search_by(|b| b.partial_cmp(&beta).unwrap()) {
        Ok(i) => i,
        Err(i) => i.saturating_sub(1),
    }
}

fn h_at<const N: usize, S: ClosedLoop<N>>(
    sys: &S,
    pr: &PropagationResult<N>,
    beta: f64,
) -> Result<f64> {
    let i = base_index(pr, beta);
    let delta = beta - pr.betas[i];
    if delta <= 0.0 {
        return Ok(pr.h[i]);
    }
    let y = rk4_y(sys, pr.t0 + pr.betas[i], &pr.y[i], delta)?;
    sys.h(pr.t0 + beta, &y)
}

fn golden_max<const N: usize, S: ClosedLoop<N>>(
    sys: &S,
    pr: &PropagationResult<N>,
    lo: f64,
    hi: f64,
    tol: f64,
) -> Result<(f64, f64)> {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = h_at(sys, pr, c)?;
    let mut fd = h_at(sys, pr, d)?;
    while b - a > tol {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = h_at(sys, pr, c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = h_at(sys, pr, d)?;
        }
    }
    let mid = 0.5 * (a + b);
    Ok((mid, h_at(sys, pr, mid)?))
}

fn slope_at<const N: usize, S: ClosedLoop<N>>(
    sys: &S,
    pr: &PropagationResult<N>,
    beta: f64,
) -> Result<f64> {
    let i = base_index(pr, beta);
    let delta = beta - pr.betas[i];
    let ta = pr.t0 + pr.betas[i];
    let y = if delta > 0.0 {
        rk4_y(sys, ta, &pr.y[i], delta)?
    } else {
        pr.y[i]
    };
    let t = pr.t0 + beta;
    let (dt, grad) = sys.h_partials(t, &y)?;
    Ok(dt + grad.dot(&sys.field_held(t, &y, ta, &pr.y[i])?))
}

/// Root of `dh/dbeta` on `[lo, hi]` by the Illinois method, when the slope
/// falls from positive to negative across the bracket. Locating the peak
/// through its slope avoids the cancellation that flattens `h` near its maximum.
fn slope_root<const N: usize, S: ClosedLoop<N>>(
    sys: &S,
    pr: &PropagationResult<N>,
    lo: f64,
    hi: f64,
    tol: f64,
) -> Result<Option<f64>> {
    let (mut a, mut b) = (lo, hi);
    let (mut fa, mut fb) = (slope_at(sys, pr, a)?, slope_at(sys, pr, b)?);
    if !(fa > 0.0 && fb < 0.0) {
        return Ok(None);
    }
    let mut side = 0i8;
    for _ in 0..200 {
        let width = b - a;
        if width <= tol {
            break;
        }
        let mut c = (a * fb - b * fa) / (fb - fa);
        if !(c > a && c < b) {
            c = 0.5 * (a + b);
        }
        let fc = slope_at(sys, pr, c)?;
        if fc == 0.0 {
            return Ok(Some(c));
        }
        if fc > 0.0 {
            (a, fa) = (c, fc);
            if side == 1 {
                fb *= 0.5;
            }
            side = 1;
        } else {
            (b, fb) = (c, fc);
            if side == -1 {
                fa *= 0.5;
            }
            side = -1;
        }
        if b - a > 0.5 * width {
            let m = 0.5 * (a + b);
            let fm = slope_at(sys, pr, m)?;
            if fm > 0.0 {
                (a, fa) = (m, fm);
            } else {
                (b, fb) = (m, fm);
            }
            side = 0;
        }
    }
    Ok(Some(if fa.abs() < fb.abs() { a } else { b }))
}

fn refine_peak<const N: usize, S: ClosedLoop<N>>(
    sys: &S,
    pr: &PropagationResult<N>,
    k: usize,
    refine_tol: f64,
) -> Result<(f64, f64)> {
    let last = pr.betas.len() - 1;
    let (lo, hi) = if k == 0 {
        if last == 0 {
            return Ok((0.0, pr.h[0]));
        }
        let (dt, grad) = sys.h_partials(pr.t0, &pr.y[0])?;
        let rate = dt + grad.dot(&sys.field(pr.t0, &pr.y[0])?);
        if rate <= 0.0 {
            return Ok((0.0, pr.h[0]));
        }
        (0.0, pr.betas[1])
    } else if k == last {
        return Ok((pr.betas[k], pr.h[k]));
    } else {
        (pr.betas[k - 1], pr.betas[k + 1])
    };
    let (beta, value) = match slope_root(sys, pr, lo, hi, refine_tol)? {
        Some(beta) => (beta, h_at(sys, pr, beta)?),
        None => golden_max(sys, pr, lo, hi, refine_tol)?,
    };
    if value >= pr.h[k] {
        Ok((beta, value))
    } else {
        Ok((pr.betas[k], pr.h[k]))
    }
}

/// Maximizer `(beta_c, h(beta_c))` of the sampled trajectory, refined by golden section.
///
/// Fails when two separate nonzero local maxima lie within `ambiguity_tol` of the
/// global maximum, or when the maximum sits at the end of an unterminated horizon.
pub fn find_maximizer<const N: usize, S: ClosedLoop<N>>(
    sys: &S,
    pr: &PropagationResult<N>,
    settings: &PropagationSettings,
) -> Result<(f64, f64)> {
    match scan(pr, settings.ambiguity_tol)? {
        Scan::AtEnd => Err(Error::NoMaximizerInHorizon {
            horizon: pr.horizon(),
        }),
        Scan::Peak(k) => refine_peak(sys, pr, k, settings.refine_tol),
    }
}

/// Trajectory and sensitivities at `beta` by re-integrating along the stored grid.
fn sensitivities_at<const N: usize, S: ClosedLoop<N>>(
    sys: &S,
    pr: &PropagationResult<N>,
    beta: f64,
) -> Result<Joint<N>> {
    let i = base_index(pr, beta);
    let mut s: Joint<N> = (pr.y[0], SVector::zeros(), SMatrix::identity());
    for j in 0..i {
        s = rk4_joint(sys, pr.t0 + pr.betas[j], &s, pr.betas[j + 1] - pr.betas[j])?;
    }
    let delta = beta - pr.betas[i];
    if delta > 0.0 {
        s = rk4_joint(sys, pr.t0 + pr.betas[i], &s, delta)?;
    }
    Ok(s)
}

/// Evaluates the predictive barrier and its partials at `(t0, x0)`.
///
/// The trajectory is integrated first on its own; sensitivities are integrated
/// only up to the maximizer.
pub fn eval_barrier<const N: usize, S: ClosedLoop<N>>(
    sys: &S,
    t0: f64,
    x0: &SVector<f64, N>,
    settings: &PropagationSettings,
) -> Result<BarrierPoint<N>> {
    let mut pr = PropagationResult::empty(t0, *x0, sys.h(t0, x0)?, false);
    let mut horizon = settings.horizon;
    extend(sys, &mut pr, horizon, settings.ode_dt)?;
    let k = loop {
        match scan(&pr, settings.ambiguity_tol)? {
            Scan::Peak(k) => break k,
            Scan::AtEnd => {
                if horizon >= settings.max_horizon {
                    return Err(Error::NoMaximizerInHorizon { horizon });
                }
                horizon = (horizon + settings.horizon).min(settings.max_horizon);
                extend(sys, &mut pr, horizon, settings.ode_dt)?;
            }
        }
    };
    let (beta_c, value) = refine_peak(sys, &pr, k, settings.refine_tol)?;
    let (grad, d_dt) = if beta_c == 0.0 {
        let (ht, hg) = sys.h_partials(t0, x0)?;
        (hg, ht)
    } else {
        let (y, th, big) = sensitivities_at(sys, &pr, beta_c)?;
        let (ht, hg) = sys.h_partials(t0 + beta_c, &y)?;
        (big.transpose() * hg, ht + hg.dot(&th))
    };
    Ok(BarrierPoint {
        value,
        d_dt,
        grad,
        beta_c,
        samples: pr.betas.len(),
    })
}

/// Double integrator `p' = v, v' = u` under constant `u`, scored on `h = p`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DoubleIntegrator {
    pub u: f64,
}

impl ClosedLoop<2> for DoubleIntegrator {
    fn field(&self, _t: f64, y: &Vector2<f64>) -> Result<Vector2<f64>> {
        Ok(Vector2::new(y[1], self.u))
    }

    fn jacobians(&self, _t: f64, _y: &Vector2<f64>) -> Result<(SMatrix<f64, 2, 2>, Vector2<f64>)> {
        Ok((
            SMatrix::<f64, 2, 2>::new(0.0, 1.0, 0.0, 0.0),
            Vector2::zeros(),
        ))
    }

    fn h(&self, _t: f64, y: &Vector2<f64>) -> Result<f64> {
        Ok(y[0])
    }

    fn h_partials(&self, _t: f64, _y: &Vector2<f64>) -> Result<(f64, Vector2<f64>)> {
        Ok((0.0, Vector2::new(1.0, 0.0)))
    }
}

/// Closed form of the double-integrator barrier with braking authority `a`:
/// `p` while receding, `p + v^2 / (2a)` otherwise.
pub fn double_integrator_closed_form(p: f64, v: f64, a: f64) -> f64 {
    if v < 0.0 {
        p
    } else {
        p + v * v / (2.0 * a)
    }
}

/// Spacecraft under an evading maneuver, scored on one keep-out constraint.
#[derive(Debug, Clone, Copy)]
pub struct SpacecraftLoop<'a> {
    pub constraint: &'a KeepOutConstraint,
    pub gravity: &'a GravityModel,
    pub maneuver: Maneuver,
    /// Margin-box semi-axis.
    pub u_bar: f64,
    pub kepler_kappa: Option<f64>,
}

/// Propagation stops once the trajectory is within this fraction of `rho` of the center.
const TERMINAL_FRACTION: f64 = 1e-2;

impl<'a> SpacecraftLoop<'a> {
    fn split(y: &Vector6<f64>) -> (Vec3, Vec3) {
        (
            y.fixed_rows::<3>(0).into_owned(),
            y.fixed_rows::<3>(3).into_owned(),
        )
    }
}

impl<'a> ClosedLoop<6> for SpacecraftLoop<'a> {
    fn field(&self, t: f64, y: &Vector6<f64>) -> Result<Vector6<f64>> {
        self.field_held(t, y, t, y)
    }

    fn field_held(
        &self,
        t: f64,
        y: &Vector6<f64>,
        ta: f64,
        ya: &Vector6<f64>,
    ) -> Result<Vector6<f64>> {
        let (r, v) = Self::split(y);
        let (ra, va) = Self::split(ya);
        let rel = self.constraint.relative(ta, &ra, &va)?;
        let u = maneuver_from_relative(self.maneuver, &rel.d, &rel.e, self.u_bar)?;
        let f = gravity_accel(self.gravity, t, &r)?;
        Ok(stack(&v, &(f + u)))
    }

    fn jacobians(&self, _t: f64, y: &Vector6<f64>) -> Result<(SMatrix<f64, 6, 6>, Vector6<f64>)> {
        // the maneuver is piecewise constant, so only gravity contributes
        let (r, _) = Self::split(y);
        let g = gravity_jacobian(self.gravity, &r)?;
        let mut j = SMatrix::<f64, 6, 6>::zeros();
        j.fixed_view_mut::<3, 3>(0, 3)
            .copy_from(&Matrix3::identity());
        j.fixed_view_mut::<3, 3>(3, 0).copy_from(&g);
        Ok((j, Vector6::zeros()))
    }

    fn h(&self, t: f64, y: &Vector6<f64>) -> Result<f64> {
        let (r, _) = Self::split(y);
        Ok(self.constraint.h(t, &r))
    }

    fn h_partials(&self, t: f64, y: &Vector6<f64>) -> Result<(f64, Vector6<f64>)> {
        let (r, v) = Self::split(y);
        let j = self.constraint.jet(t, &r, &v)?;
        Ok((j.dh_dt, j.grad_h))
    }

    fn max_step(&self, _t: f64, y: &Vector6<f64>) -> f64 {
        match (self.kepler_kappa, self.gravity) {
            (Some(k), GravityModel::PointMass { mu, .. }) => {
                let (r, _) = Self::split(y);
                let d = (r - self.gravity.center()).norm();
                k * (d * d * d / mu).sqrt()
            }
            _ => f64::INFINITY,
        }
    }

    fn terminal(&self, t: f64, y: &Vector6<f64>) -> bool {
        let (r, _) = Self::split(y);
        let dist = (r - self.constraint.center.state(t).r_c).norm();
        let grav = match self.gravity {
            GravityModel::PointMass { .. } => (r - self.gravity.center()).norm(),
            GravityModel::Zero => f64::INFINITY,
        };
        dist.min(grav) < TERMINAL_FRACTION * self.constraint.rho
    }
}

pub fn eval_predictive(
    c: &KeepOutConstraint,
    spec: &PredictiveSpec,
    s: &SimState,
    gravity: &GravityModel,
    control: &ControlBounds,
    bounds: &DisturbanceBounds,
    alpha: &ClassK,
) -> Result<RcbfEvaluation> {
    let w_x = c.w_x_max.max(bounds.w_x_max);
    if w_x > 0.0 {
        return Err(Error::UnmatchedDisturbance(w_x));
    }
    let sys = SpacecraftLoop {
        constraint: c,
        gravity,
        maneuver: spec.maneuver,
        u_bar: margin_semi_axis(control, bounds)?,
        kepler_kappa: spec.kepler_kappa,
    };
    let bp = eval_barrier(&sys, s.t, &s.x(), &spec.settings)?;
    let f = gravity_accel(gravity, s.t, &s.r)?;
    let mut e = assemble(
        c.h(s.t, &s.r),
        bp.value,
        bp.d_dt,
        bp.grad,
        s,
        &f,
        bounds,
        alpha,
    )?;
    e.beta_c = Some(bp.beta_c);
    if bp.beta_c == 0.0 {
        e.control_independent = true;
    }
    Ok(e)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn settings(horizon: f64, dt: f64) -> PropagationSettings {
        PropagationSettings {
            horizon,
            ode_dt: dt,
            refine_tol: 1e-7,
            max_horizon: 8.0 * horizon,
            ambiguity_tol: 1e-9,
        }
    }

    #[test]
    fn double_integrator_propagation_is_analytic() {
        let sys = DoubleIntegrator { u: -1.0 };
        let pr = propagate_chi(&sys, 0.0, &Vector2::new(-10.0, 2.0), &settings(6.0, 0.25)).unwrap();
        assert_eq!(pr.y[0], Vector2::new(-10.0, 2.0));
        assert_eq!(pr.big_theta[0], SMatrix::<f64, 2, 2>::identity());
        assert_eq!(pr.theta[0], Vector2::zeros());
        for (i, &b) in pr.betas.iter().enumerate() {
            assert_relative_eq!(
                pr.y[i],
                Vector2::new(-10.0 + 2.0 * b - b * b / 2.0, 2.0 - b),
                epsilon = 1e-12
            );
            assert_relative_eq!(
                pr.big_theta[i],
                SMatrix::<f64, 2, 2>::new(1.0, b, 0.0, 1.0),
                epsilon = 1e-12
            );
            assert_eq!(pr.theta[i], Vector2::zeros());
        }
        assert!((pr.beta_c - 2.0).abs() <= 1e-7);
        assert_relative_eq!(pr.value, -8.0, epsilon = 1e-12);
    }

    #[test]
    fn decreasing_samples_give_zero() {
        let sys = DoubleIntegrator { u: -1.0 };
        let pr = propagate_chi(&sys, 0.0, &Vector2::new(-10.0, -1.0), &settings(4.0, 0.5)).unwrap();
        assert_eq!(pr.beta_c, 0.0);
        assert_eq!(pr.value, -10.0);
    }

    #[test]
    fn refines_peak_between_samples() {
        let sys = DoubleIntegrator { u: -1.0 };
        let pr = propagate_chi(&sys, 0.0, &Vector2::new(0.0, 3.6), &settings(10.0, 1.0)).unwrap();
        assert!((pr.beta_c - 3.6).abs() <= 1e-7, "{}", pr.beta_c);
        assert_relative_eq!(pr.value, 3.6 * 3.6 / 2.0, epsilon = 1e-12);
    }

    #[test]
    fn rising_at_horizon_is_an_error() {
        let sys = DoubleIntegrator { u: -1.0 };
        let r = propagate_chi(&sys, 0.0, &Vector2::new(0.0, 5.0), &settings(2.0, 0.5));
        assert!(matches!(r, Err(Error::NoMaximizerInHorizon { .. })));
        let s = PropagationSettings {
            max_horizon: 4.0,
            ..settings(2.0, 0.5)
        };
        assert!(matches!(
            eval_barrier(&sys, 0.0, &Vector2::new(0.0, 5.0), &s),
            Err(Error::NoMaximizerInHorizon { .. })
        ));
        // extension finds it with a larger limit
        let bp = eval_barrier(&sys, 0.0, &Vector2::new(0.0, 5.0), &settings(2.0, 0.5)).unwrap();
        assert!((bp.beta_c - 5.0).abs() < 1e-6);
    }

    #[test]
    fn barrier_gradient_matches_closed_form() {
        let sys = DoubleIntegrator { u: -2.0 };
        let bp = eval_barrier(&sys, 0.0, &Vector2::new(-3.0, 1.5), &settings(3.0, 0.1)).unwrap();
        assert_relative_eq!(
            bp.value,
            double_integrator_closed_form(-3.0, 1.5, 2.0),
            epsilon = 1e-10
        );
        assert_relative_eq!(bp.grad, Vector2::new(1.0, 1.5 / 2.0), epsilon = 1e-6);
        assert_eq!(bp.d_dt, 0.0);
        let bp = eval_barrier(&sys, 0.0, &Vector2::new(-3.0, -1.5), &settings(3.0, 0.1)).unwrap();
        assert_eq!(bp.beta_c, 0.0);
        assert_eq!(bp.grad, Vector2::new(1.0, 0.0));
    }

    /// `h = -cos(beta)` style trajectory with two equal nonzero maxima.
    struct Oscillator;

    impl ClosedLoop<2> for Oscillator {
        fn field(&self, _t: f64, y: &Vector2<f64>) -> Result<Vector2<f64>> {
            Ok(Vector2::new(y[1], -y[0]))
        }
        fn jacobians(
            &self,
            _t: f64,
            _y: &Vector2<f64>,
        ) -> Result<(SMatrix<f64, 2, 2>, Vector2<f64>)> {
            Ok((
                SMatrix::<f64, 2, 2>::new(0.0, 1.0, -1.0, 0.0),
                Vector2::zeros(),
            ))
        }
        fn h(&self, _t: f64, y: &Vector2<f64>) -> Result<f64> {
            Ok(y[0])
        }
        fn h_partials(&self, _t: f64, _y: &Vector2<f64>) -> Result<(f64, Vector2<f64>)> {
            Ok((0.0, Vector2::new(1.0, 0.0)))
        }
    }

    #[test]
    fn periodic_trajectory_is_ambiguous() {
        let s = PropagationSettings {
            ambiguity_tol: 1e-3,
            ..settings(15.0, 0.01)
        };
        let r = eval_barrier(&Oscillator, 0.0, &Vector2::new(0.0, 1.0), &s);
        assert!(matches!(r, Err(Error::AmbiguousMaximizer { .. })), "{r:?}");
    }
}
