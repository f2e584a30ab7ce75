use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use uav_insar::benchmarks::{self, SchemeId};
use uav_insar::comm::PowerMode;
use uav_insar::experiment::{self, ExperimentConfig, ExperimentSpec, ResultTable, SweepSpec};
use uav_insar::metrics;
use uav_insar::validation::{self, FusedMonteCarlo, FusionSpec, GridResult, MonteCarloSpec, PairSpec};

#[derive(Parser)]
#[command(name = "uav-insar", version, about = "Dual-baseline UAV-InSAR formation and power optimizer")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Optimize once at the configured point.
    Run(RunArgs),
    /// Sweep one configuration key and write plot data.
    Sweep {
        #[command(flatten)]
        common: RunArgs,
        /// KEY=START:STOP:STEP, both ends included.
        #[arg(long)]
        sweep: String,
    },
    /// Monte Carlo and grid-search oracle suites.
    Validate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also run the brute-force formation search at this step, meters.
        #[arg(long, value_name = "STEP")]
        grid_oracle: Option<f64>,
    },
    /// Re-check a saved result directory against every constraint.
    Audit {
        /// Directory holding results.json and metadata.json.
        dir: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated subset of proposed,bench1,bench2,bench3.
    #[arg(long, value_delimiter = ',', default_value = "proposed,bench1,bench2,bench3")]
    schemes: Vec<SchemeId>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn load_config(path: &Option<PathBuf>) -> Result<ExperimentConfig> {
    Ok(match path {
        Some(p) => ExperimentConfig::from_path(p)?,
        None => ExperimentConfig::table_i(),
    })
}

fn spec_from(args: &RunArgs, sweep: Option<SweepSpec>) -> Result<ExperimentSpec> {
    let mut spec = ExperimentSpec::new(load_config(&args.config)?);
    spec.config_path = args.config.clone();
    spec.sweep = sweep;
    spec.schemes = args.schemes.clone();
    spec.out_dir = args.out.clone();
    spec.seed = args.seed;
    Ok(spec)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |x| format!("{x:.6}"))
}

fn print_table(table: &ResultTable) {
    let key = table.key.as_deref().unwrap_or("point");
    println!("{key:>16} {:>9} {:>8} {:>12} {:>12} {:>5}", "scheme", "feasible", "sigma_h_m", "bound_m", "iter");
    for r in &table.rows {
        let v = r.sweep_value.map_or_else(|| "-".into(), |v| format!("{v}"));
        println!(
            "{v:>16} {:>9} {:>8} {:>12} {:>12} {:>5}",
            r.scheme.name(),
            r.feasible,
            fmt_opt(r.sigma_h),
            fmt_opt(r.sigma_h_bound),
            r.iterations
        );
        if let Some(e) = &r.error {
            println!("{:>16} error: {e}", "");
        }
    }
}

fn run(spec: &ExperimentSpec) -> Result<ExitCode> {
    let table = experiment::run_sweep(spec)?;
    print_table(&table);
    if let Some(dir) = &spec.out_dir {
        for p in experiment::write_outputs(spec, &table, dir)? {
            log::info!("wrote {}", p.display());
        }
        for r in &table.rows {
            if let Some(res) = &r.result {
                if !res.trace.is_empty() {
                    let name = match r.sweep_value {
                        Some(v) => format!("trace_{}_{v}.jsonl", r.scheme),
                        None => format!("trace_{}.jsonl", r.scheme),
                    };
                    let lines: Vec<String> =
                        res.trace.iter().map(serde_json::to_string).collect::<Result<_, _>>()?;
                    let path = dir.join(name);
                    std::fs::write(&path, lines.join("\n") + "\n")
                        .with_context(|| format!("writing {}", path.display()))?;
                }
            }
        }
    }
    Ok(if table.any_feasible() { ExitCode::SUCCESS } else { ExitCode::from(2) })
}

#[derive(Serialize)]
struct PhaseCheck {
    coherence: f64,
    looks: u32,
    simulated_std: f64,
    crb_std: f64,
    ratio: f64,
}

#[derive(Serialize)]
struct ValidationReport {
    seed: u64,
    samples: usize,
    rng: &'static str,
    phase: Vec<PhaseCheck>,
    fused_at_optimum: Option<FusedMonteCarlo>,
    grid: Option<GridResult>,
    optimizer_bound: Option<f64>,
}

fn validate(config: &Option<PathBuf>, seed: u64, out: &Option<PathBuf>, grid_step: Option<f64>) -> Result<ExitCode> {
    let cfg = load_config(config)?;
    let scenario = cfg.scenario()?;
    let samples = cfg.mc_samples;
    let mut phase = Vec::new();
    for looks in [4, 16] {
        for coherence in [0.95, 0.99] {
            let simulated_std = validation::simulate_phase_std(&MonteCarloSpec { coherence, looks, samples, seed })?;
            let crb_std = metrics::crb_phase_std(coherence, looks)?;
            println!("phase  gamma={coherence} looks={looks}: simulated {simulated_std:.6} rad, bound {crb_std:.6} rad, ratio {:.4}", simulated_std / crb_std);
            phase.push(PhaseCheck { coherence, looks, simulated_std, crb_std, ratio: simulated_std / crb_std });
        }
    }
    let proposed = benchmarks::run_proposed(&scenario, &cfg.settings())?;
    let fused_at_optimum = match proposed.formation_array().filter(|_| proposed.feasible) {
        Some(q) => {
            let spec = FusionSpec::from_formation(&scenario, &q, samples, seed)?;
            let f = validation::simulate_fused_height_error(&spec)?;
            println!(
                "fused  at optimum: simulated {:.6} m, weighted-average prediction {:.6} m, model {:.6} m",
                f.fused_std, f.predicted_from_pairs, f.predicted_model
            );
            Some(f)
        }
        None => None,
    };
    let equal = PairSpec { coherence: 0.97, hoa: 10.0 };
    let eq = validation::simulate_fused_height_error(&FusionSpec { pairs: [equal; 2], looks: scenario.radar.looks, samples, seed })?;
    println!("fused  equal pairs: fused/single = {:.4}", eq.fused_std / eq.pair_std[0]);
    let grid = match grid_step {
        Some(step) => {
            let g = validation::grid_search_formation(&scenario, PowerMode::Optimize, step)?;
            match g.bound() {
                Some(b) => println!("grid   step {step} m: best bound {b:.6} m (optimizer {})", fmt_opt(proposed.sigma_h_bound)),
                None => println!("grid   step {step} m: no feasible formation"),
            }
            Some(g)
        }
        None => None,
    };
    if let Some(dir) = out {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let report = ValidationReport {
            seed,
            samples,
            rng: validation::RNG_ALGORITHM,
            phase,
            fused_at_optimum,
            grid,
            optimizer_bound: proposed.sigma_h_bound,
        };
        let path = dir.join("validation.json");
        std::fs::write(&path, serde_json::to_string_pretty(&report)? + "\n")
            .with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(ExitCode::SUCCESS)
}

fn audit(dir: &Path) -> Result<ExitCode> {
    let audits = experiment::audit_saved(dir)?;
    let mut consistent = true;
    for a in &audits {
        let v = a.sweep_value.map_or_else(|| "-".into(), |v| v.to_string());
        let verdict = match a.passes {
            Some(true) => "pass".to_string(),
            Some(false) => format!("FAIL (max violation {:e})", a.max_violation.unwrap_or(f64::NAN)),
            None => "no formation".into(),
        };
        println!("{v:>12} {:>9} claimed_feasible={} audit={verdict}", a.scheme.name(), a.claimed_feasible);
        for c in &a.violations {
            println!("{:>12} {:?} uav {} slack {:e}", "", c.id, c.uav, c.slack);
        }
        consistent &= a.consistent();
    }
    if !consistent {
        bail!("a result marked feasible fails the audit");
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Run(args) => spec_from(args, None).and_then(|s| run(&s)),
        Command::Sweep { common, sweep } => sweep
            .parse::<SweepSpec>()
            .map_err(anyhow::Error::from)
            .and_then(|sw| spec_from(common, Some(sw)))
            .and_then(|s| run(&s)),
        Command::Validate { config, seed, out, grid_oracle } => validate(config, *seed, out, *grid_oracle),
        Command::Audit { dir } => audit(dir),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
