//! Closed-loop runner: evaluate barriers, update switching, filter the nominal
//! control, then integrate one step.

use std::time::Instant;

use crate::dynamics::{rk4_step, DisturbanceProcess, WorstCaseDirection};
use crate::error::{Error, Result};
use crate::qpfilter::{solve_with_fallback, QpProblem};
use crate::rcbf::{evaluate, RcbfEvaluation};
use crate::switching::{active_halfspaces, HysteresisBank};

pub mod config;
pub mod log;
pub mod mesh;
pub mod presets;

pub use config::{
    load_scenario, load_scenario_str, ConstraintEntry, ConstraintSet, MeshSource, NominalLaw,
    ScenarioConfig,
};
pub use log::{write_outputs, Quantiles, RunSummary, StepRecord, TrajectoryLog, CSV_HEADER};
pub use mesh::{generate_ellipsoid_mesh, nearest_neighbor_spacing};
pub use presets::{
    mission_a_preset, mission_b_preset, preset_by_id, with_rcbf_variant, RcbfVariant, PRESET_IDS,
};

/// Relative slack on `h <= 0` allowed for integration error.
pub const SAFETY_SLACK: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub log: TrajectoryLog,
    pub summary: RunSummary,
}

pub fn run(config: &ScenarioConfig) -> Result<RunOutput> {
    config.validate()?;
    let started = Instant::now();
    let constraints = config.build_constraints()?;
    let n = constraints.len();
    let n_steps = config.n_steps()?;
    let min_rho = constraints
        .iter()
        .map(|c| c.rho)
        .fold(f64::INFINITY, f64::min);
    let slack = SAFETY_SLACK * min_rho;

    let mut bank = if config.switching {
        HysteresisBank::new(n, config.hysteresis)
    } else {
        HysteresisBank::always_on(n, config.hysteresis)
    };
    let mut disturbance =
        DisturbanceProcess::new(config.disturbance_mode, config.disturbance, config.seed);
    let mut state = config.initial_state();
    let mut log = TrajectoryLog {
        records: Vec::with_capacity(n_steps + 1),
    };
    let mut evals: Vec<RcbfEvaluation> = Vec::with_capacity(n);
    let mut values: Vec<f64> = vec![0.0; n];

    let mut violations = 0usize;
    let mut activations_outside = 0usize;
    let mut relaxed_steps = 0usize;
    let mut max_relaxation = 0.0_f64;
    let mut histogram: Vec<usize> = Vec::new();
    let mut step_ms: Vec<f64> = Vec::with_capacity(n_steps + 1);
    let (mut min_distance, mut min_distance_t) = (f64::INFINITY, config.t0);
    let (mut max_barrier, mut max_h) = (f64::NEG_INFINITY, f64::NEG_INFINITY);

    for step in 0..=n_steps {
        let tick = Instant::now();
        evals.clear();
        for (i, c) in constraints.iter().enumerate() {
            let e = evaluate(
                &config.rcbf,
                c,
                &state,
                &config.gravity,
                &config.control,
                &config.disturbance,
                &config.alpha,
            )
            .map_err(|source| Error::Step {
                step,
                t: state.t,
                index: i,
                source: Box::new(source),
            })?;
            values[i] = e.value;
            evals.push(e);
        }
        let (critical, step_max_barrier) =
            values
                .iter()
                .enumerate()
                .fold(
                    (0, f64::NEG_INFINITY),
                    |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc },
                );
        let (step_max_h, step_min_dist) = constraints
            .iter()
            .zip(&evals)
            .fold((f64::NEG_INFINITY, f64::INFINITY), |(mh, md), (c, e)| {
                (mh.max(e.h), md.min(c.rho - e.h))
            });

        if step_max_h > slack {
            violations += 1;
            if config.strict_safety {
                return Err(Error::SafetyViolation {
                    step,
                    t: state.t,
                    max_h: step_max_h,
                });
            }
        }
        if step_min_dist < min_distance {
            min_distance = step_min_dist;
            min_distance_t = state.t;
        }
        max_barrier = max_barrier.max(step_max_barrier);
        max_h = max_h.max(step_max_h);

        if config.switching {
            let ev = bank.update(&values);
            activations_outside += ev.activated.iter().filter(|&&i| values[i] > 0.0).count();
        }
        let halfspaces = active_halfspaces(&bank, &evals);
        let u_nom = config.nominal.eval(&state);
        let (sol, relaxation) = solve_with_fallback(&QpProblem {
            u_nom,
            bounds: config.control,
            halfspaces,
        });
        let relaxed = relaxation.is_some();
        if let Some(t) = relaxation {
            relaxed_steps += 1;
            max_relaxation = max_relaxation.max(t);
        }
        let u = config.control.clip(&sol.u);

        let active = bank.active_indices();
        let count = active.len();
        if histogram.len() <= count {
            histogram.resize(count + 1, 0);
        }
        histogram[count] += 1;

        let worst = WorstCaseDirection {
            matched: evals[critical].constraint_row,
            unmatched: evals[critical].grad_r(),
        };
        let (w_u, w_x) = disturbance.sample(Some(&worst));

        let record = StepRecord {
            t: state.t,
            r: state.r.into(),
            v: state.v.into(),
            u: u.into(),
            max_barrier: step_max_barrier,
            max_h: step_max_h,
            min_distance: step_min_dist,
            active_count: count,
            active,
            solver_status: sol.status,
            relaxed,
            step_ms: 0.0,
            barriers: (n <= config.per_constraint_log_limit).then(|| values.clone()),
        };
        if step < n_steps {
            state =
                rk4_step(&state, config.dt, &u, &w_u, &w_x, &config.gravity).map_err(|source| {
                    Error::Step {
                        step,
                        t: state.t,
                        index: critical,
                        source: Box::new(source),
                    }
                })?;
        }
        let ms = tick.elapsed().as_secs_f64() * 1e3;
        step_ms.push(ms);
        log.records.push(StepRecord {
            step_ms: ms,
            ..record
        });
    }

    let summary = RunSummary {
        name: config.name.clone(),
        seed: config.seed,
        steps: n_steps,
        constraints: n,
        min_distance,
        min_distance_t,
        max_barrier,
        max_h,
        safety_violations: violations,
        safety_slack: slack,
        activations: bank.activations,
        deactivations: bank.deactivations,
        activations_outside,
        max_active: histogram.len().saturating_sub(1),
        active_histogram: histogram,
        relaxed_steps,
        max_relaxation,
        step_ms: Quantiles::of(&step_ms),
        wall_s: started.elapsed().as_secs_f64(),
    };
    Ok(RunOutput { log, summary })
}

/// Runs one scenario per seed, spread over the available cores. Results keep seed order.
pub fn run_sweep(config: &ScenarioConfig, seeds: &[u64]) -> Vec<Result<RunOutput>> {
    let workers = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
        .min(seeds.len().max(1));
    let mut results: Vec<Option<Result<RunOutput>>> = (0..seeds.len()).map(|_| None).collect();
    std::thread::scope(|scope| {
        let chunks: Vec<_> = results
            .chunks_mut(seeds.len().div_ceil(workers).max(1))
            .zip(seeds.chunks(seeds.len().div_ceil(workers).max(1)))
            .map(|(slots, chunk)| {
                scope.spawn(move || {
                    for (slot, &seed) in slots.iter_mut().zip(chunk) {
                        let cfg = ScenarioConfig {
                            seed,
                            ..config.clone()
                        };
                        *slot = Some(run(&cfg));
                    }
                })
            })
            .collect();
        for h in chunks {
            let _ = h.join();
        }
    });
    results
        .into_iter()
        .map(|r| r.unwrap_or_else(|| Err(Error::Config("sweep worker panicked".into()))))
        .collect()
}
