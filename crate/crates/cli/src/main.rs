use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ssil_core::envs::{write_demos, EnvKind, EnvSpec};
use ssil_core::harness::{
    emit_curves, evaluate_agent, load_labeled_reports, run_suite, run_training, AgentCheckpoint, ExperimentConfig, SuiteName,
};

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Core(#[from] ssil_core::Error),
    #[error("{0}")]
    Failed(String),
}

#[derive(Parser)]
#[command(name = "ssil", version, about = "Actor-critic learning from state-only demonstrations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one configuration over its seeds.
    Train(TrainArgs),
    /// Record scripted-expert demonstrations.
    GenDemos(GenDemosArgs),
    /// Evaluate a saved agent with the greedy policy.
    Eval(EvalArgs),
    /// Run a named experiment suite, resuming finished cells.
    Suite(SuiteArgs),
    /// Collect learning curves from reports under a directory.
    Curves(CurvesArgs),
}

#[derive(Args)]
struct ConfigArgs {
    /// Config file of `section.key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Extra `key=value` override; repeatable. Applied after the file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    #[arg(long)]
    env: Option<EnvKind>,
    #[arg(long)]
    variant: Option<String>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    k: Option<usize>,
    /// Demo file; used for both the state-only buffer and, if it has actions, behaviour cloning.
    #[arg(long)]
    demos: Option<PathBuf>,
    #[arg(long)]
    steps: Option<u64>,
    /// First seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Number of seeds.
    #[arg(long)]
    seeds: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GenDemosArgs {
    #[arg(long)]
    env: EnvKind,
    #[arg(long, default_value_t = 100)]
    episodes: usize,
    #[arg(long)]
    with_actions: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long, default_value_t = 20)]
    episodes: usize,
    /// Seed of the first evaluation episode.
    #[arg(long, default_value_t = 1_000_000)]
    seed: u64,
}

#[derive(Args)]
struct SuiteArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    #[arg(long)]
    name: SuiteName,
    #[arg(long, default_value_t = 10)]
    seeds: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CurvesArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

fn read_config(cfg: &ConfigArgs) -> Result<Option<String>, CliError> {
    cfg.config
        .as_ref()
        .map(|p| std::fs::read_to_string(p).map_err(|e| CliError::Failed(format!("reading {}: {e}", p.display()))))
        .transpose()
}

fn train(args: TrainArgs) -> Result<(), CliError> {
    let demos = args.demos.as_ref().map(|p| p.display().to_string());
    let flags = vec![
        args.env.map(|e| format!("env={e}")),
        args.variant.map(|v| format!("agent.variant={v}")),
        args.alpha.map(|a| format!("agent.alpha={a:?}")),
        args.k.map(|k| format!("agent.k={k}")),
        demos.as_ref().map(|p| format!("demos.path={p:?}")),
        demos.as_ref().map(|p| format!("demos.labeled_path={p:?}")),
        args.steps.map(|s| format!("run.steps={s}")),
        args.seed.map(|s| format!("run.seed={s}")),
        args.seeds.map(|n| format!("run.n_seeds={n}")),
    ];
    // File keys, then `--set`, then the dedicated flags.
    let text = read_config(&args.cfg)?;
    let mut keys = args.cfg.set.clone();
    keys.extend(flags.into_iter().flatten());
    let config = ExperimentConfig::resolve(text.as_deref(), &keys, EnvKind::Reach2d)?;
    let report = run_training(&config, &args.out)?;
    let a = &report.aggregate;
    println!(
        "{} {}: final success {:.3} +- {:.3}, return {:.2} +- {:.2} over {} seeds",
        config.env, config.agent.variant, a.success_mean, a.success_std, a.return_mean, a.return_std, a.completed
    );
    println!("report: {}", args.out.join("report.json").display());
    if !a.missing_seeds.is_empty() {
        for s in &report.seeds {
            if let ssil_core::harness::SeedOutcome::Failed { error } = &s.outcome {
                eprintln!("seed {} failed: {error}", s.seed);
            }
        }
        return Err(CliError::Failed(format!("{} of {} seeds failed", a.missing_seeds.len(), report.seeds.len())));
    }
    Ok(())
}

fn gen_demos(args: GenDemosArgs) -> Result<(), CliError> {
    if let Some(dir) = args.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Failed(format!("creating {}: {e}", dir.display())))?;
    }
    let file = write_demos(&EnvSpec::new(args.env), args.episodes, args.seed, args.with_actions, &args.out)?;
    println!("wrote {} episodes ({} transitions) to {}", file.episodes.len(), file.pair_count(), args.out.display());
    Ok(())
}

fn eval(args: EvalArgs) -> Result<(), CliError> {
    let ckpt = AgentCheckpoint::load(&args.checkpoint)?;
    let r = evaluate_agent(&ckpt.agent, &EnvSpec::new(ckpt.env), args.episodes, args.seed)?;
    println!("env {} episodes {} success_rate {} mean_return {}", ckpt.env, args.episodes, r.success_rate, r.mean_return);
    Ok(())
}

fn suite(args: SuiteArgs) -> Result<(), CliError> {
    let text = read_config(&args.cfg)?;
    let report = run_suite(args.name, args.seeds, text.as_deref(), &args.cfg.set, &args.out)?;
    for r in &report.rows {
        println!(
            "{:<24} success {:.3} +- {:.3}  return {:>7.2} +- {:.2}  ({} seeds{})",
            r.cell,
            r.success_mean,
            r.success_std,
            r.return_mean,
            r.return_std,
            r.completed,
            if r.reused { ", reused" } else { "" }
        );
    }
    let failed = report.failed_cells();
    if !failed.is_empty() {
        return Err(CliError::Failed(format!("failed cells: {}", failed.join(", "))));
    }
    Ok(())
}

fn curves(args: CurvesArgs) -> Result<(), CliError> {
    let reports = load_labeled_reports(&args.input)?;
    if reports.is_empty() {
        return Err(CliError::Failed(format!("no report.json under {}", args.input.display())));
    }
    let files = emit_curves(&reports, &args.out)?;
    println!("{}\n{}", files.long.display(), files.aggregate.display());
    if let Some(w) = files.warnings {
        eprintln!("some seeds were resampled; see {}", w.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(a) => train(a),
        Command::GenDemos(a) => gen_demos(a),
        Command::Eval(a) => eval(a),
        Command::Suite(a) => suite(a),
        Command::Curves(a) => curves(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
