use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use mals_core::harness::{
    aggregate_dir, brute_force_allocation_oracle, run_experiment, ExperimentSpec, HarnessError, Manifest, RunStatus,
    SweepAxis, SweepSummary,
};
use mals_core::nn::Checkpoint;
use mals_core::reward::RewardWeights;
use mals_core::rl::{evaluate, train_env, write_metrics_csv, Algorithm, MetricsRecord};
use mals_core::ConfigSet;

const OUT_DIR_VAR: &str = "MALS_OUT_DIR";

#[derive(Parser)]
#[command(name = "mals", version, about = "Play-to-earn MEC simulator and multi-agent PPO trainers")]
#[command(arg_required_else_help = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one algorithm on one seed.
    Train(TrainArgs),
    /// Train across seeds and a q or h weight sweep.
    Sweep(SweepArgs),
    /// Greedy rollouts of a saved checkpoint.
    Eval(EvalArgs),
    /// Exhaustive allocation search on one small world.
    Oracle(OracleArgs),
    /// Summarize an experiment directory.
    Aggregate(AggregateArgs),
}

#[derive(Args)]
struct ScenarioArgs {
    /// Flat key = value configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Number of MBSs.
    #[arg(long)]
    mbs: Option<usize>,
    /// Number of UEs.
    #[arg(long)]
    ues: Option<usize>,
    /// Override one key, e.g. --set beta0=2.5. Applied last; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, default_value = "mals")]
    algo: Algorithm,
    /// Environment iterations per run.
    #[arg(long)]
    steps: Option<usize>,
    /// Experiment directory (default: $MALS_OUT_DIR/<name>, else runs/<name>).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write per-phase environment traces.
    #[arg(long)]
    trace: bool,
    #[command(flatten)]
    scenario: ScenarioArgs,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    axis: SweepAxis,
    #[arg(long, value_delimiter = ',', default_value = "0,0.25,0.5,0.75,1")]
    values: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "0,1,2")]
    seeds: Vec<u64>,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long, default_value_t = 10)]
    episodes: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write per-episode metrics CSV here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Uplink power of every UE in W (default: middle of the allowed range).
    #[arg(long)]
    ul_power: Option<f64>,
    #[command(flatten)]
    scenario: ScenarioArgs,
}

#[derive(Args)]
struct AggregateArgs {
    #[arg(long)]
    dir: PathBuf,
    /// Fraction of each run's final episodes to average.
    #[arg(long)]
    tail: Option<f64>,
    /// Summary CSV path (default: <dir>/summary.csv).
    #[arg(long)]
    out: Option<PathBuf>,
}

enum Failure {
    Usage(String),
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Self::Runtime(e)
    }
}

fn usage(e: impl std::fmt::Display) -> Failure {
    Failure::Usage(e.to_string())
}

fn resolve_config(s: &ScenarioArgs, defaults: ConfigSet) -> Result<ConfigSet, Failure> {
    let mut set = defaults;
    if let Some(path) = &s.config {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading {}", path.display()))
            .map_err(Failure::Runtime)?;
        set.merge_document(&text).map_err(usage)?;
    }
    if let Some(m) = s.mbs {
        set.apply_override(&format!("m_mbs={m}")).map_err(usage)?;
    }
    if let Some(n) = s.ues {
        set.apply_override(&format!("n_ues={n}")).map_err(usage)?;
    }
    for a in &s.set {
        set.apply_override(a).map_err(usage)?;
    }
    Ok(set)
}

fn out_dir(given: &Option<PathBuf>, name: &str) -> PathBuf {
    given.clone().unwrap_or_else(|| {
        let base = std::env::var_os(OUT_DIR_VAR).map(PathBuf::from).unwrap_or_else(|| "runs".into());
        base.join(name)
    })
}

fn run_spec(run: &RunArgs, seeds: Vec<u64>, name: &str) -> Result<ExperimentSpec, Failure> {
    let mut config = resolve_config(&run.scenario, ConfigSet::default())?;
    if let Some(steps) = run.steps {
        config.apply_override(&format!("total_steps={steps}")).map_err(usage)?;
    }
    let mut spec = ExperimentSpec::new(run.algo, config, seeds, out_dir(&run.out, name));
    spec.trace = run.trace;
    Ok(spec)
}

fn report(spec: &ExperimentSpec, manifest: &Manifest) {
    for r in &manifest.runs {
        let status = match (&r.status, &r.abort_reason) {
            (RunStatus::Aborted, Some(reason)) => format!("aborted: {reason}"),
            _ => "completed".to_string(),
        };
        println!("{} episodes={} config={} {status}", r.id, r.episodes, &r.config_hash[..12]);
    }
    println!("wrote {}", spec.out_dir.display());
}

fn execute(spec: ExperimentSpec) -> Result<(), Failure> {
    spec.validate().map_err(usage)?;
    let manifest = run_experiment(&spec).context("experiment failed")?;
    report(&spec, &manifest);
    Ok(())
}

fn mean_of(records: &[MetricsRecord], f: impl Fn(&MetricsRecord) -> f64) -> f64 {
    records.iter().map(f).sum::<f64>() / records.len().max(1) as f64
}

fn cmd_eval(a: &EvalArgs) -> Result<(), Failure> {
    let ck = Checkpoint::load(&a.checkpoint).with_context(|| format!("loading {}", a.checkpoint.display()))?;
    let records = evaluate(&ck, a.episodes, a.seed).context("evaluation failed")?;
    if let Some(path) = &a.out {
        let f = std::fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
        write_metrics_csv(&records, std::io::BufWriter::new(f)).context("writing metrics")?;
    }
    let summary = serde_json::json!({
        "episodes": records.len(),
        "dl_delay_mean": mean_of(&records, |r| r.dl_delay_mean),
        "ul_delay_mean": mean_of(&records, |r| r.ul_delay_mean),
        "earning_min": mean_of(&records, |r| r.earning_min),
        "battery_pct_max": mean_of(&records, |r| r.battery_pct_max),
        "reward_sum": mean_of(&records, MetricsRecord::reward_sum),
        "depleted": mean_of(&records, |r| f64::from(u8::from(r.depleted))),
    });
    println!("{summary:#}");
    Ok(())
}

fn cmd_oracle(a: &OracleArgs) -> Result<(), Failure> {
    let mut defaults = ConfigSet::default();
    defaults.net.n_ues = 3;
    defaults.net.m_mbs = 2;
    let set = resolve_config(&a.scenario, defaults)?;
    let net = &set.net;
    let power = a.ul_power.unwrap_or((net.p_ul_min + net.p_ul_max) / 2.0);
    let env = train_env(net, a.seed);
    let result = brute_force_allocation_oracle(env.world(), net, &RewardWeights::from(net), &vec![power; net.n_ues])
        .map_err(|e| match e {
            HarnessError::OracleTooLarge { .. } => usage(e),
            other => Failure::Runtime(other.into()),
        })?;
    println!("alloc,dl_latency_mean,earning_min,dl_utility,ul_latency_mean,ul_utility");
    for r in &result.table {
        let alloc: Vec<String> = r.alloc.iter().map(usize::to_string).collect();
        println!(
            "{},{},{},{},{},{}",
            alloc.join("-"),
            r.dl_latency_mean,
            r.earning_min,
            r.dl_utility,
            r.ul_latency_mean,
            r.ul_utility
        );
    }
    let best: Vec<String> = result.best_row().alloc.iter().map(usize::to_string).collect();
    eprintln!("best allocation {} (dl utility {})", best.join("-"), result.best_row().dl_utility);
    Ok(())
}

fn cmd_aggregate(a: &AggregateArgs) -> Result<(), Failure> {
    let summary = aggregate_dir(&a.dir, a.tail).map_err(|e| match e {
        HarnessError::Spec(_) => usage(e),
        other => Failure::Runtime(other.into()),
    })?;
    let path = a.out.clone().unwrap_or_else(|| a.dir.join("summary.csv"));
    write_summary(&summary, &path)?;
    if summary.partial {
        eprintln!("partial aggregation, missing runs: {}", summary.missing.join(", "));
    }
    println!(
        "aggregated {} sweep point(s), tail fraction {}, wrote {}",
        summary.rows.len(),
        summary.tail_fraction,
        path.display()
    );
    Ok(())
}

fn write_summary(summary: &SweepSummary, path: &Path) -> Result<(), Failure> {
    let f = std::fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    summary
        .write_csv(std::io::BufWriter::new(f))
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Train(a) => {
            let name = format!("{}_seed{}", a.run.algo, a.seed);
            execute(run_spec(&a.run, vec![a.seed], &name)?)
        }
        Command::Sweep(a) => {
            let name = format!("{}_sweep_{}", a.run.algo, a.axis);
            let spec = run_spec(&a.run, a.seeds.clone(), &name)?.with_sweep(a.axis, a.values.clone());
            execute(spec)
        }
        Command::Eval(a) => cmd_eval(&a),
        Command::Oracle(a) => cmd_oracle(&a),
        Command::Aggregate(a) => cmd_aggregate(&a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
