//! Hysteresis activation of barrier conditions and the rate function used in
//! the barrier half-space.

use serde::{Deserialize, Serialize};

use crate::dynamics::Vec3;
use crate::error::{Error, Result};
use crate::rcbf::RcbfEvaluation;

/// Switching thresholds, meters. Requires `eps2 > eps1 >= 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HysteresisParams {
    pub eps1: f64,
    pub eps2: f64,
}

impl HysteresisParams {
    pub fn new(eps1: f64, eps2: f64) -> Result<Self> {
        if !(eps1 >= 0.0 && eps2 > eps1) {
            return Err(Error::InvalidParameter(format!(
                "hysteresis thresholds need eps2 > eps1 >= 0, got ({eps1}, {eps2})"
            )));
        }
        Ok(Self { eps1, eps2 })
    }

    /// Whether a purely disturbance-driven swing can trigger a deactivation.
    pub fn separates_disturbance_band(&self) -> bool {
        self.eps2 > 2.0 * self.eps1
    }
}

/// Next discrete state. The lower threshold is checked first, so `H = -eps2` forces 0.
pub fn update_sigma(h: f64, sigma_prev: bool, params: &HysteresisParams) -> bool {
    if h <= -params.eps2 {
        false
    } else if h >= -params.eps1 {
        true
    } else {
        sigma_prev
    }
}

/// `W lambda / eps1`.
pub fn alpha_r(lambda: f64, w: f64, eps1: f64) -> Result<f64> {
    if eps1 == 0.0 {
        return Err(Error::InvalidParameter(
            "alpha_r needs eps1 > 0; use a linear class-K gain".into(),
        ));
    }
    Ok(w * lambda / eps1)
}

/// Rate function `alpha(-H)` used in the barrier half-space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ClassK {
    /// Disturbance-scaled `W lambda / eps1`.
    AlphaR { eps1: f64 },
    /// `k lambda`.
    Linear { k: f64 },
}

impl ClassK {
    pub fn eval(&self, lambda: f64, w: f64) -> Result<f64> {
        match *self {
            ClassK::AlphaR { eps1 } => alpha_r(lambda, w, eps1),
            ClassK::Linear { k } => {
                if !(k > 0.0) {
                    return Err(Error::InvalidParameter(format!(
                        "class-K gain must be positive, got {k}"
                    )));
                }
                Ok(k * lambda)
            }
        }
    }
}

/// Per-constraint activation states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HysteresisBank {
    pub sigma: Vec<bool>,
    pub params: HysteresisParams,
    /// Counts of 0→1 and 1→0 transitions since construction.
    pub activations: usize,
    pub deactivations: usize,
}

/// Indices that changed state in one update.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SwitchEvents {
    pub activated: Vec<usize>,
    pub deactivated: Vec<usize>,
}

impl HysteresisBank {
    pub fn new(n: usize, params: HysteresisParams) -> Self {
        Self {
            sigma: vec![false; n],
            params,
            activations: 0,
            deactivations: 0,
        }
    }

    /// Sets every state to 1, for runs without switching.
    pub fn always_on(n: usize, params: HysteresisParams) -> Self {
        Self {
            sigma: vec![true; n],
            params,
            activations: 0,
            deactivations: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.sigma.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sigma.is_empty()
    }

    pub fn update(&mut self, h_values: &[f64]) -> SwitchEvents {
        assert_eq!(
            h_values.len(),
            self.sigma.len(),
            "barrier values and bank must align"
        );
        let mut ev = SwitchEvents::default();
        for (i, (s, &h)) in self.sigma.iter_mut().zip(h_values).enumerate() {
            let next = update_sigma(h, *s, &self.params);
            if next != *s {
                if next {
                    ev.activated.push(i);
                } else {
                    ev.deactivated.push(i);
                }
                *s = next;
            }
        }
        self.activations += ev.activated.len();
        self.deactivations += ev.deactivated.len();
        ev
    }

    pub fn active_indices(&self) -> Vec<usize> {
        self.sigma
            .iter()
            .enumerate()
            .filter(|(_, s)| **s)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn active_count(&self) -> usize {
        self.sigma.iter().filter(|s| **s).count()
    }
}

/// Half-spaces `row·u <= bound` of the active constraints, in index order.
/// Control-independent evaluations carry no half-space.
pub fn active_halfspaces(bank: &HysteresisBank, evals: &[RcbfEvaluation]) -> Vec<(Vec3, f64)> {
    assert_eq!(
        bank.len(),
        evals.len(),
        "barrier evaluations and bank must align"
    );
    bank.sigma
        .iter()
        .zip(evals)
        .filter(|(s, e)| **s && !e.control_independent)
        .map(|(_, e)| (e.constraint_row, e.constraint_bound))
        .collect()
}
