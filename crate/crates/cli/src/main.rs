use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use rcbf::constraints::{CenterTrajectory, KeepOutConstraint};
use rcbf::dynamics::{DisturbanceMode, Vec3};
use rcbf::rcbf::predictive::{
    double_integrator_closed_form, eval_barrier, DoubleIntegrator, PropagationSettings,
};
use rcbf::rcbf::{compute_a_max0, compute_a_max0_general, keep_out_boundary_samples};
use rcbf::sim::presets::{self, DAY, MISSION_A_FULL_DAYS};
use rcbf::sim::{
    generate_ellipsoid_mesh, load_scenario, nearest_neighbor_spacing, preset_by_id, run_sweep,
    with_rcbf_variant, write_outputs, RcbfVariant, ScenarioConfig,
};

#[derive(Parser)]
#[command(
    name = "rcbf-sim",
    version,
    about = "Closed-loop RCBF safety-filter simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write trajectory.csv, summary.json and report.txt.
    Run(RunArgs),
    /// Print the resolved scenario as TOML.
    Preset(PresetArgs),
    /// Write a synthetic ellipsoid vertex file.
    Mesh(MeshArgs),
    /// Run a built-in numerical cross-check.
    Oracle {
        #[arg(value_enum)]
        which: Oracle,
    },
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum Oracle {
    /// Predictive barrier against the closed form on a double-integrator grid.
    DoubleIntegrator,
    /// Constant-authority bounds for the mission presets.
    AMax,
}

#[derive(Args)]
struct Source {
    /// Built-in preset id (mission-a-1..4, mission-b).
    #[arg(long, conflicts_with = "scenario", required_unless_present_any = ["scenario", "list"])]
    preset: Option<String>,
    /// Scenario TOML file; may name a `preset` and override its fields.
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Disturbance RNG seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Simulated duration in days.
    #[arg(long, conflicts_with = "full_duration")]
    duration_days: Option<f64>,
    /// Use the full 69-day flyby for mission A scenarios.
    #[arg(long)]
    full_duration: bool,
    /// Integration step, s.
    #[arg(long)]
    dt: Option<f64>,
    /// constant, variable, predictive-rad or predictive-orth.
    #[arg(long)]
    rcbf_variant: Option<String>,
    /// zero, random-bounded or worst-case.
    #[arg(long)]
    disturbance_mode: Option<String>,
    /// Abort on the first safety violation.
    #[arg(long)]
    strict: bool,
    #[arg(long, hide = true)]
    list: bool,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    source: Source,
    #[arg(long, env = "RCBF_OUT_DIR", default_value = "out")]
    out: PathBuf,
    /// Parallel runs over a seed range, e.g. `seeds=0..10` (end exclusive).
    #[arg(long)]
    sweep: Option<String>,
}

#[derive(Args)]
struct PresetArgs {
    #[command(flatten)]
    source: Source,
}

#[derive(Args)]
struct MeshArgs {
    /// Semi-axes in meters, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = [16e3, 8e3, 8e3])]
    semi_axes: Vec<f64>,
    /// Number of vertices.
    #[arg(long, default_value_t = 2000)]
    n_points: usize,
    #[arg(long)]
    out: PathBuf,
}

fn resolve(src: &Source) -> anyhow::Result<ScenarioConfig> {
    let mut cfg = match (&src.preset, &src.scenario) {
        (Some(id), None) => preset_by_id(id)?,
        (None, Some(path)) => load_scenario(path, preset_by_id)?,
        _ => bail!("give exactly one of --preset or --scenario"),
    };
    if let Some(seed) = src.seed {
        cfg.seed = seed;
    }
    if let Some(days) = src.duration_days {
        cfg.duration = days * DAY;
    }
    if src.full_duration {
        if !cfg.name.starts_with("mission-a") {
            bail!("--full-duration applies to mission A scenarios only");
        }
        cfg.duration = MISSION_A_FULL_DAYS * DAY;
    }
    if let Some(dt) = src.dt {
        cfg.dt = dt;
    }
    if let Some(mode) = &src.disturbance_mode {
        cfg.disturbance_mode = match mode.as_str() {
            "zero" => DisturbanceMode::Zero,
            "random-bounded" => DisturbanceMode::RandomBounded,
            "worst-case" => DisturbanceMode::WorstCase,
            other => bail!("unknown disturbance mode {other:?}"),
        };
    }
    if src.strict {
        cfg.strict_safety = true;
    }
    if let Some(v) = &src.rcbf_variant {
        cfg = with_rcbf_variant(&cfg, v.parse::<RcbfVariant>()?)?;
    }
    if (cfg.duration / cfg.dt).fract() != 0.0 {
        // duration overrides in days rarely divide dt exactly
        cfg.duration = (cfg.duration / cfg.dt).round().max(1.0) * cfg.dt;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn parse_sweep(s: &str) -> anyhow::Result<Vec<u64>> {
    let range = s
        .strip_prefix("seeds=")
        .context("sweep must look like seeds=a..b")?;
    let (a, b) = range
        .split_once("..")
        .context("sweep must look like seeds=a..b")?;
    let (a, b): (u64, u64) = (a.trim().parse()?, b.trim().parse()?);
    if b <= a {
        bail!("empty seed range {a}..{b}");
    }
    Ok((a..b).collect())
}

fn cmd_run(args: &RunArgs) -> anyhow::Result<bool> {
    let cfg = resolve(&args.source)?;
    let seeds = match &args.sweep {
        Some(s) => parse_sweep(s)?,
        None => vec![cfg.seed],
    };
    let sweep = args.sweep.is_some();
    let mut all_safe = true;
    for (seed, result) in seeds.iter().zip(run_sweep(&cfg, &seeds)) {
        let out = result.with_context(|| format!("seed {seed}"))?;
        let dir = if sweep {
            args.out.join(format!("seed-{seed}"))
        } else {
            args.out.clone()
        };
        let run_cfg = ScenarioConfig {
            seed: *seed,
            ..cfg.clone()
        };
        write_outputs(&dir, &run_cfg, &out.log, &out.summary)
            .with_context(|| format!("writing {}", dir.display()))?;
        print!("{}", out.summary.report());
        println!("output          {}", dir.display());
        all_safe &= out.summary.safe();
    }
    Ok(all_safe)
}

fn cmd_preset(args: &PresetArgs) -> anyhow::Result<()> {
    if args.source.list {
        for id in presets::PRESET_IDS {
            println!("{id}");
        }
        return Ok(());
    }
    print!("{}", resolve(&args.source)?.to_toml()?);
    Ok(())
}

fn cmd_mesh(args: &MeshArgs) -> anyhow::Result<()> {
    if args.semi_axes.len() != 3 {
        bail!(
            "--semi-axes takes three comma-separated values, got {}",
            args.semi_axes.len()
        );
    }
    let axes = Vec3::new(args.semi_axes[0], args.semi_axes[1], args.semi_axes[2]);
    let pts = generate_ellipsoid_mesh(axes, args.n_points)?;
    write_mesh(&args.out, &pts)?;
    let (lo, hi) = nearest_neighbor_spacing(&pts);
    println!("{} vertices written to {}", pts.len(), args.out.display());
    println!("nearest-neighbor spacing {lo:.1} .. {hi:.1} m");
    Ok(())
}

fn write_mesh(path: &Path, pts: &[Vec3]) -> anyhow::Result<()> {
    let mut text = String::from("# x y z [m]\n");
    for p in pts {
        text.push_str(&format!("{:.6} {:.6} {:.6}\n", p.x, p.y, p.z));
    }
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn cmd_oracle(which: Oracle) -> anyhow::Result<()> {
    match which {
        Oracle::DoubleIntegrator => {
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
                    let (p, v) = (-20.0 + i as f64, -5.0 + 0.5 * j as f64);
                    let bp = eval_barrier(&sys, 0.0, &nalgebra_vec2(p, v), &settings)?;
                    worst = worst.max((bp.value - double_integrator_closed_form(p, v, 1.0)).abs());
                }
            }
            println!("double integrator, 21x21 grid, u* = -1: max |dH| = {worst:.3e}");
        }
        Oracle::AMax => {
            for (variant, rho) in [(1u8, 3.63e7), (2, 3.21e7)] {
                let c = KeepOutConstraint::new(
                    rho,
                    CenterTrajectory::fixed(Vec3::zeros()),
                    presets::mission_a_disturbance(variant).w_x_max,
                )?;
                let g = presets::mission_a_gravity();
                let samples = keep_out_boundary_samples(&c, &[0.0], 32);
                let simple = compute_a_max0(
                    &c,
                    &g,
                    &presets::mission_a_control(),
                    &presets::mission_a_disturbance(variant),
                    &samples,
                );
                // axis points are where the box leaves the least authority along the normal
                let states: Vec<_> = samples
                    .iter()
                    .map(|s| s.r)
                    .chain((0..3).flat_map(|i| [1.0, -1.0].map(|sgn| Vec3::ith(i, sgn * rho))))
                    .map(|r| rcbf::dynamics::SimState::new(0.0, r, Vec3::zeros()))
                    .collect();
                let general = compute_a_max0_general(
                    &c,
                    &g,
                    &presets::mission_a_control(),
                    &presets::mission_a_disturbance(variant),
                    &states,
                );
                println!(
                    "ceres rho = {rho:.3e}: a_max {} (with full unmatched term {})",
                    fmt_a(simple),
                    fmt_a(general)
                );
            }
            println!("ceres reference value 4.55e-5");
            let b = preset_by_id("mission-b")?;
            match b.rcbf {
                rcbf::rcbf::RcbfSpec::ConstantAuthority { a_max } => {
                    println!(
                        "eros surrogate (mu = {:.4e}): a_max {a_max:.4e}; reference value 0.0523",
                        b.gravity.mu()
                    )
                }
                _ => unreachable!(),
            }
        }
    }
    Ok(())
}

fn fmt_a(a: rcbf::Result<f64>) -> String {
    match a {
        Ok(a) => format!("{a:.4e}"),
        Err(e) => format!("none ({e})"),
    }
}

fn nalgebra_vec2(p: f64, v: f64) -> rcbf::nalgebra::Vector2<f64> {
    rcbf::nalgebra::Vector2::new(p, v)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let result = match &cli.command {
        Command::Run(a) => cmd_run(a).map(|safe| if safe { 0 } else { 2 }),
        Command::Preset(a) => cmd_preset(a).map(|_| 0),
        Command::Mesh(a) => cmd_mesh(a).map(|_| 0),
        Command::Oracle { which } => cmd_oracle(*which).map(|_| 0),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
