use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use deepcq::experiment::{self, Batch, Cell, SweepAxes};
use deepcq::{envserver, RunLogs, SimConfig};

#[derive(Parser)]
#[command(
    name = "deepcq",
    version,
    about = "Confidence-based MANET routing simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a batch of episodes and write one CSV row per episode plus a mean row.
    Run(RunArgs),
    /// Run every combination of the swept axes and policies, one mean row each.
    Sweep(SweepArgs),
    /// Serve the reset/step environment over TCP or stdio.
    Serve(ServeArgs),
}

#[derive(Args)]
struct Common {
    /// JSON config; omitted fields take the benchmark defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Policy weight file, required by the neural policy.
    #[arg(long)]
    weights: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    episodes: usize,
    /// Base seed; overrides the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// CSV destination (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
    /// cq+, hard-cq+ or neural.
    #[arg(long, default_value = "cq+")]
    policy: String,
    #[arg(long)]
    nodes: Option<usize>,
    #[arg(long)]
    flows: Option<usize>,
    /// Multiplier on the mean speed.
    #[arg(long)]
    dynamic: Option<f64>,
    /// Write per-decision transitions as JSON lines.
    #[arg(long)]
    log_transitions: Option<PathBuf>,
    /// Write per-slot node positions as CSV.
    #[arg(long)]
    log_trajectory: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    /// Comma-separated policy names.
    #[arg(long, value_delimiter = ',', default_value = "cq+")]
    policy: Vec<String>,
    #[arg(long, value_delimiter = ',', num_args = 0..)]
    sweep_nodes: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',', num_args = 0..)]
    sweep_flows: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',', num_args = 0..)]
    sweep_dynamic: Option<Vec<f64>>,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    weights: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Address to listen on.
    #[arg(long, default_value = "127.0.0.1:5555", conflicts_with = "stdio")]
    addr: String,
    /// Serve a single session on stdin/stdout instead of TCP.
    #[arg(long)]
    stdio: bool,
}

fn load_config(path: Option<&Path>, seed: Option<u64>) -> Result<SimConfig> {
    let mut cfg = match path {
        Some(p) => SimConfig::load(p).with_context(|| format!("config {}", p.display()))?,
        None => SimConfig::benchmark(),
    };
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let file = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(BufWriter::new(file))
}

fn emit(rows: &[experiment::Row], out: Option<&Path>) -> Result<()> {
    match out {
        Some(path) => {
            let mut w = create(path)?;
            experiment::write_csv(rows, &mut w)?;
            w.flush()?;
        }
        None => experiment::write_csv(rows, io::stdout().lock())?,
    }
    Ok(())
}

fn cmd_run(args: RunArgs) -> Result<()> {
    let c = &args.common;
    let base = load_config(c.config.as_deref(), c.seed)?;
    let policy =
        experiment::policy_from_name(&args.policy, base.policy.epsilon, c.weights.as_deref())?;
    let mut cell = Cell::of(&base);
    if let Some(n) = args.nodes {
        cell.nodes = n;
    }
    if let Some(f) = args.flows {
        cell.flows = f;
    }
    if let Some(s) = args.dynamic {
        cell.dynamic_scale = s;
    }
    let batch = Batch {
        base,
        cell,
        policy_name: args.policy.clone(),
        policy,
        episodes: c.episodes,
    };
    let mut transitions = args.log_transitions.as_deref().map(create).transpose()?;
    let mut trajectory = args.log_trajectory.as_deref().map(create).transpose()?;
    if let Some(t) = trajectory.as_mut() {
        writeln!(t, "slot,node,x,y,speed")?;
    }
    let rows = experiment::run(
        &batch,
        RunLogs {
            transitions: transitions.as_mut().map(|w| w as &mut dyn Write),
            trajectory: trajectory.as_mut().map(|w| w as &mut dyn Write),
        },
    )?;
    for w in transitions.iter_mut().chain(trajectory.iter_mut()) {
        w.flush()?;
    }
    emit(&rows, c.out.as_deref())
}

fn cmd_sweep(args: SweepArgs) -> Result<()> {
    let c = &args.common;
    let base = load_config(c.config.as_deref(), c.seed)?;
    if args.policy.is_empty() {
        bail!("no policies given");
    }
    let policies = args
        .policy
        .iter()
        .map(|name| {
            let spec =
                experiment::policy_from_name(name, base.policy.epsilon, c.weights.as_deref())?;
            Ok((name.clone(), spec))
        })
        .collect::<Result<Vec<_>>>()?;
    let axes = SweepAxes {
        nodes: args.sweep_nodes,
        flows: args.sweep_flows,
        dynamic_scale: args.sweep_dynamic,
    };
    let rows = experiment::sweep(&base, &axes, &policies, c.episodes)?;
    emit(&rows, c.out.as_deref())
}

fn cmd_serve(args: ServeArgs) -> Result<()> {
    let mut base = load_config(args.config.as_deref(), args.seed)?;
    if let Some(path) = args.weights.as_deref() {
        base.policy = experiment::policy_from_name("neural", base.policy.epsilon, Some(path))?;
    }
    if args.stdio {
        envserver::serve(io::stdin().lock(), io::stdout().lock(), base)?;
    } else {
        eprintln!("listening on {}", args.addr);
        envserver::serve_tcp(&args.addr, base)
            .with_context(|| format!("serving on {}", args.addr))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Serve(a) => cmd_serve(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
