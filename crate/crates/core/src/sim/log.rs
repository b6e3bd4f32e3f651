//! Per-step trajectory records and run summaries.

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::qpfilter::QpStatus;

use super::config::ScenarioConfig;

pub const CSV_HEADER: &str = "t,rx,ry,rz,vx,vy,vz,ux,uy,uz,maxH,active_count,solver_status,step_ms";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: f64,
    pub r: [f64; 3],
    pub v: [f64; 3],
    pub u: [f64; 3],
    /// Largest barrier value over all constraints.
    pub max_barrier: f64,
    /// Largest constraint value `h` over all constraints.
    pub max_h: f64,
    /// Smallest distance to any keep-out center, m.
    pub min_distance: f64,
    pub active_count: usize,
    /// Indices with `sigma = 1`.
    pub active: Vec<usize>,
    pub solver_status: QpStatus,
    /// The half-spaces had to be relaxed to find a control.
    pub relaxed: bool,
    pub step_ms: f64,
    /// Every constraint's barrier value, kept only for small constraint sets.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub barriers: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryLog {
    pub records: Vec<StepRecord>,
}

impl TrajectoryLog {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(self.records.len() * 160);
        out.push_str(CSV_HEADER);
        out.push('\n');
        for r in &self.records {
            let _ = writeln!(
                out,
                "{},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{},{},{:.4}",
                r.t,
                r.r[0],
                r.r[1],
                r.r[2],
                r.v[0],
                r.v[1],
                r.v[2],
                r.u[0],
                r.u[1],
                r.u[2],
                r.max_barrier,
                r.active_count,
                if r.relaxed {
                    "relaxed"
                } else {
                    r.solver_status.as_str()
                },
                r.step_ms
            );
        }
        out
    }
}

/// Wall-time quantiles of the per-step cost, ms.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Quantiles {
    pub p50: f64,
    pub p90: f64,
    pub p99: f64,
    pub max: f64,
    pub mean: f64,
}

impl Quantiles {
    pub fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return Self::default();
        }
        let mut v = values.to_vec();
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let q = |p: f64| v[((v.len() - 1) as f64 * p).round() as usize];
        Self {
            p50: q(0.5),
            p90: q(0.9),
            p99: q(0.99),
            max: v[v.len() - 1],
            mean: v.iter().sum::<f64>() / v.len() as f64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub name: String,
    pub seed: u64,
    pub steps: usize,
    pub constraints: usize,
    pub min_distance: f64,
    /// Time of the closest approach, s.
    pub min_distance_t: f64,
    pub max_barrier: f64,
    pub max_h: f64,
    /// Steps whose largest `h` exceeded the numerical slack.
    pub safety_violations: usize,
    pub safety_slack: f64,
    pub activations: usize,
    pub deactivations: usize,
    /// Activations with the barrier already positive.
    pub activations_outside: usize,
    /// `histogram[k]` counts steps with exactly `k` active constraints.
    pub active_histogram: Vec<usize>,
    pub max_active: usize,
    pub relaxed_steps: usize,
    /// Largest half-space relaxation applied, in acceleration units along the unit row.
    pub max_relaxation: f64,
    pub step_ms: Quantiles,
    pub wall_s: f64,
}

impl RunSummary {
    pub fn safe(&self) -> bool {
        self.safety_violations == 0
    }

    pub fn report(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "scenario        {}", self.name);
        let _ = writeln!(s, "seed            {}", self.seed);
        let _ = writeln!(s, "steps           {}", self.steps);
        let _ = writeln!(s, "constraints     {}", self.constraints);
        let _ = writeln!(
            s,
            "closest approach {:.6e} m at t = {:.1} s",
            self.min_distance, self.min_distance_t
        );
        let _ = writeln!(s, "max H           {:.6e} m", self.max_barrier);
        let _ = writeln!(
            s,
            "max h           {:.6e} m (slack {:.3e})",
            self.max_h, self.safety_slack
        );
        let _ = writeln!(s, "violations      {}", self.safety_violations);
        let _ = writeln!(
            s,
            "switches        {} on / {} off ({} with H > 0)",
            self.activations, self.deactivations, self.activations_outside
        );
        let _ = writeln!(s, "max active      {}", self.max_active);
        let hist: Vec<String> = self
            .active_histogram
            .iter()
            .enumerate()
            .filter(|(_, c)| **c > 0)
            .map(|(k, c)| format!("{k}:{c}"))
            .collect();
        let _ = writeln!(s, "active hist     {}", hist.join(" "));
        let _ = writeln!(
            s,
            "relaxed steps   {} (max relaxation {:.3e} m/s^2)",
            self.relaxed_steps, self.max_relaxation
        );
        let _ = writeln!(
            s,
            "step ms         p50 {:.3} p90 {:.3} p99 {:.3} max {:.3}",
            self.step_ms.p50, self.step_ms.p90, self.step_ms.p99, self.step_ms.max
        );
        let _ = writeln!(s, "wall time       {:.2} s", self.wall_s);
        let _ = writeln!(
            s,
            "status          {}",
            if self.safe() { "SAFE" } else { "VIOLATED" }
        );
        s
    }
}

#[derive(Debug, Clone, Serialize)]
struct SummaryFile<'a> {
    config: &'a ScenarioConfig,
    summary: &'a RunSummary,
}

/// Writes `trajectory.csv`, `summary.json` and `report.txt` into `dir`.
pub fn write_outputs(
    dir: &Path,
    config: &ScenarioConfig,
    log: &TrajectoryLog,
    summary: &RunSummary,
) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::File::create(dir.join("trajectory.csv"))?.write_all(log.to_csv().as_bytes())?;
    let json = serde_json::to_string_pretty(&SummaryFile { config, summary })
        .map_err(|e| crate::error::Error::Io(e.to_string()))?;
    std::fs::write(dir.join("summary.json"), json)?;
    std::fs::write(dir.join("report.txt"), summary.report())?;
    Ok(())
}
