use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use crm_core::control::{audit_schedule, GainSchedule};
use crm_core::export::{fmt_e, write_audit_csv, write_json, write_ledger, OptimizationReport, RolloutWriter};
use crm_core::optimize::{ga_run, Evaluator};
use crm_core::{CrmError, ExecMode, RolloutSummary, ScenarioConfig};

const EXIT_CONFIG: u8 = 2;
const EXIT_DIVERGED: u8 = 3;
const EXIT_INFEASIBLE: u8 = 4;
const EXIT_NOT_PASSIVE: u8 = 5;
const EXIT_IO: u8 = 1;

#[derive(Parser)]
#[command(name = "crm", version, about = "Cooperative manipulators with regenerative joints")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one rollout and write its time series, energy ledger and Sankey data.
    Sim {
        config: PathBuf,
        #[command(flatten)]
        common: Common,
        /// Override the integrator step (s).
        #[arg(long)]
        dt: Option<f64>,
    },
    /// Search damping and stiffness offsets that maximize regenerated energy.
    Opt {
        config: PathBuf,
        #[command(flatten)]
        common: Common,
        /// Override the integrator step (s) of every rollout.
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long)]
        population: Option<usize>,
        #[arg(long)]
        generations: Option<usize>,
        /// Evaluate candidates on the calling thread only.
        #[arg(long)]
        sequential: bool,
    },
    /// Check a gain schedule against the passivity condition.
    Audit {
        /// CSV with columns t, B̄_1..B̄_n, K̄_1..K̄_n.
        schedule: PathBuf,
        /// Scenario config supplying M, B_c and K_c.
        #[arg(long)]
        gains: PathBuf,
        /// Per-sample report CSV.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Sample spacing (s); defaults to the config's step.
        #[arg(long)]
        sample_dt: Option<f64>,
        /// Accepted for uniformity; the audit is deterministic.
        #[arg(long)]
        seed: Option<u64>,
    },
}

#[derive(Args)]
struct Common {
    #[arg(short, long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
}

struct Failure {
    code: u8,
    message: String,
}

impl From<CrmError> for Failure {
    fn from(e: CrmError) -> Self {
        let code = match e {
            CrmError::Diverged { .. }
            | CrmError::SingularJacobian { .. }
            | CrmError::SingularConstraintSystem
            | CrmError::StorageDepleted(_) => EXIT_DIVERGED,
            CrmError::Io(_) => EXIT_IO,
            _ => EXIT_CONFIG,
        };
        Failure { code, message: e.to_string() }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure { code: EXIT_IO, message: e.to_string() }
    }
}

type Outcome = std::result::Result<(), Failure>;

fn load(path: &Path, seed: Option<u64>, dt: Option<f64>) -> std::result::Result<ScenarioConfig, Failure> {
    let mut sc = ScenarioConfig::load(path).map_err(|e| Failure { code: EXIT_CONFIG, message: format!("{}: {e}", path.display()) })?;
    if let Some(s) = seed {
        sc.seed = s;
        if let Some(o) = sc.optimizer.as_mut() {
            o.seed = s;
        }
    }
    if let Some(dt) = dt {
        sc.sim.dt = dt;
        if let Some(o) = sc.optimizer.as_mut() {
            o.rollout_dt = None;
        }
    }
    sc.validate()?;
    Ok(sc)
}

/// Runs `sc` while streaming its plot files into `dir`; rows written before a
/// failure stay on disk.
fn rollout_to(sc: &ScenarioConfig, dir: &Path) -> std::result::Result<RolloutSummary, Failure> {
    let sim = sc.simulation()?;
    let mut writer = RolloutWriter::create(dir, sc.arms(), sc.sim.output_stride, sc.load_trajectory())?;
    let result = sim.run(|rec| writer.observe(rec));
    let flushed = writer.finish();
    let summary = result?;
    flushed?;
    write_ledger(dir, &summary.ledger)?;
    Ok(summary)
}

fn print_summary(s: &RolloutSummary) {
    let l = &s.ledger;
    let eps = l.effectiveness().map(|e| format!("{e}")).unwrap_or_else(|_| "undefined".into());
    let rows = [
        ("final tracking error (m)", fmt_e(s.final_position_error)),
        ("max joint error (rad)", fmt_e(s.max_tracking_error)),
        ("ΔE_s (J)", fmt_e(l.de_s)),
        ("ΔE_NR (J)", fmt_e(l.de_nr)),
        ("ε", eps),
        ("W_ext (J)", fmt_e(l.w_ext)),
        ("Joule loss (J)", fmt_e(l.sigma_e)),
        ("closure residual (J)", fmt_e(l.closure_residual)),
        ("max constraint drift (m)", fmt_e(s.max_constraint_drift)),
        ("saturation duty", fmt_e(s.saturation_duty)),
    ];
    for (k, v) in rows {
        println!("{k:<26} {v}");
    }
}

fn simulate(config: &Path, common: &Common, dt: Option<f64>) -> Outcome {
    let sc = load(config, common.seed, dt)?;
    std::fs::create_dir_all(&common.out)?;
    write_json(&common.out.join("scenario.json"), &sc)?;
    let s = rollout_to(&sc, &common.out)?;
    print_summary(&s);
    Ok(())
}

fn optimize(
    config: &Path,
    common: &Common,
    dt: Option<f64>,
    population: Option<usize>,
    generations: Option<usize>,
    mode: ExecMode,
) -> Outcome {
    let mut sc = load(config, common.seed, dt)?;
    let Some(cfg) = sc.optimizer.as_mut() else {
        return Err(Failure { code: EXIT_CONFIG, message: format!("{}: no optimizer section", config.display()) });
    };
    if let Some(p) = population {
        cfg.population = p;
        cfg.elitism = cfg.elitism.min(p.saturating_sub(1));
    }
    if let Some(g) = generations {
        cfg.max_generations = g;
    }
    let cfg = cfg.clone();
    cfg.validate(3 * sc.arms())?;
    std::fs::create_dir_all(&common.out)?;
    write_json(&common.out.join("scenario.json"), &sc)?;

    let ev = Evaluator::new(&sc, &cfg);
    let result = ga_run(&cfg, &ev, mode);
    for g in &result.history {
        eprintln!(
            "generation {:>3}: best {} mean {} feasible {}",
            g.generation,
            fmt_e(g.best_fitness),
            fmt_e(g.mean_fitness),
            g.feasible
        );
    }

    let joints = 3 * sc.arms();
    let baseline = sc.with_offsets(&vec![0.0; joints], &vec![0.0; joints]).simulation()?.run(|_| {});
    if !result.feasible_found {
        // The unmodified gains may diverge as well; report what is known.
        let base = baseline.map(|b| b.ledger).unwrap_or_default();
        let g = &sc.gains.gains;
        let report = OptimizationReport::new(&cfg, &result, &g.damping, &g.stiffness, &base, &base);
        write_json(&common.out.join("optimization_report.json"), &report)?;
        return Err(Failure {
            code: EXIT_INFEASIBLE,
            message: format!(
                "no feasible candidate in {} evaluations (least violation {})",
                result.evaluations,
                fmt_e(result.best.violation)
            ),
        });
    }
    let baseline = baseline?;
    let best_sc = sc.with_offsets(&result.best.damping_offset, &result.best.stiffness_offset);
    let best = rollout_to(&best_sc, &common.out)?;
    let g = &sc.gains.gains;
    let report = OptimizationReport::new(&cfg, &result, &g.damping, &g.stiffness, &best.ledger, &baseline.ledger);
    write_json(&common.out.join("optimization_report.json"), &report)?;

    print_summary(&best);
    println!("{:<26} {}", "baseline ΔE_s (J)", fmt_e(baseline.ledger.de_s));
    println!("{:<26} {}", "improvement (J)", fmt_e(report.improvement));
    println!("{:<26} {:?}", "damping offsets", result.best.damping_offset);
    println!("{:<26} {:?}", "stiffness offsets", result.best.stiffness_offset);
    Ok(())
}

fn audit(schedule: &Path, gains: &Path, out: Option<&Path>, sample_dt: Option<f64>) -> Outcome {
    let sc = load(gains, None, None)?;
    let sched = GainSchedule::from_csv_path(schedule)
        .map_err(|e| Failure { code: EXIT_CONFIG, message: format!("{}: {e}", schedule.display()) })?;
    let mut g = sc.gains.gains.clone();
    g.schedule = Some(sched.clone());
    g.validate()?;
    let report = audit_schedule(&g, &sched, sample_dt.unwrap_or(sc.sim.dt))?;
    if let Some(path) = out {
        write_audit_csv(path, &report)?;
    }
    let worst = report.rows.iter().map(|r| r.report.margin).fold(f64::INFINITY, f64::min);
    println!("{:<26} {}", "samples", report.rows.len());
    let constant = report.rows.iter().filter(|r| r.report.constant).count();
    println!("{:<26} {}", "smallest margin", fmt_e(worst));
    println!("{:<26} {constant} (passive for positive definite B, K)", "constant-gain samples");
    match report.first_violation {
        None => {
            println!("CERTIFIED");
            Ok(())
        }
        Some(t) => {
            println!("NOT CERTIFIED: first violation at t = {}", fmt_e(t));
            Err(Failure { code: EXIT_NOT_PASSIVE, message: format!("passivity condition violated at t = {t}") })
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Sim { config, common, dt } => simulate(config, common, *dt),
        Command::Opt { config, common, dt, population, generations, sequential } => {
            let mode = if *sequential { ExecMode::Sequential } else { ExecMode::Parallel };
            optimize(config, common, *dt, *population, *generations, mode)
        }
        Command::Audit { schedule, gains, out, sample_dt, seed: _ } => {
            audit(schedule, gains, out.as_deref(), *sample_dt)
        }
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
