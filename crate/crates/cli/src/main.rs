use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod config;

use config::{ConfigError, RunConfig};

/// Data-driven GPU frequency scaling: synthesize traces, train energy/time
/// models, simulate scheduling policies and serve predictions.
#[derive(Debug, Parser)]
#[command(name = "freqsched", version)]
struct Cli {
    /// JSON run configuration
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Root seed (required here or in the config)
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Override any config field, e.g. `--set workload.n_jobs=50`
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic trace and its ground-truth oracle
    Synth(SynthArgs),
    /// Fit energy and time models plus the application knowledge base
    Train(TrainArgs),
    /// Score saved models and cross-validate each kind
    Evaluate(TrainArgs),
    /// Replay a generated workload under each policy
    Simulate(SimArgs),
    /// Serve saved models over HTTP
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long)]
    n_apps: Option<usize>,
    #[arg(long)]
    noise_sigma: Option<f64>,
    #[arg(long)]
    device: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Comma-separated model kinds
    #[arg(long, value_delimiter = ',')]
    kinds: Option<Vec<String>>,
    #[arg(long)]
    device: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SimArgs {
    /// Comma-separated policy names
    #[arg(long, value_delimiter = ',')]
    policies: Option<Vec<String>>,
    #[arg(long)]
    model_kind: Option<String>,
    #[arg(long)]
    n_jobs: Option<usize>,
    #[arg(long)]
    devices: Option<usize>,
    #[arg(long)]
    device: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ServeArgs {
    #[arg(long)]
    addr: Option<String>,
    #[arg(long)]
    model_kind: Option<String>,
}

fn json_str(s: &str) -> String {
    serde_json::Value::String(s.to_string()).to_string()
}

fn path_str(p: &std::path::Path) -> String {
    json_str(&p.to_string_lossy())
}

/// Flag values become `--set` style overrides applied after the file.
fn overrides(cli: &Cli) -> Vec<String> {
    let mut o = Vec::new();
    if let Some(s) = cli.seed {
        o.push(format!("seed={s}"));
    }
    if let Some(p) = &cli.out {
        o.push(format!("out_dir={}", path_str(p)));
    }
    match &cli.command {
        Command::Synth(a) => {
            if let Some(n) = a.n_apps {
                o.push(format!("synth.n_apps={n}"));
            }
            if let Some(s) = a.noise_sigma {
                o.push(format!("synth.ranges.noise_sigma={s}"));
            }
            if let Some(d) = &a.device {
                o.push(format!("device={}", path_str(d)));
            }
        }
        Command::Train(a) | Command::Evaluate(a) => {
            if let Some(p) = &a.dataset {
                o.push(format!("dataset={}", path_str(p)));
            }
            if let Some(k) = &a.kinds {
                o.push(format!("train.kinds={}", serde_json::to_string(k).unwrap()));
            }
            if let Some(d) = &a.device {
                o.push(format!("device={}", path_str(d)));
            }
        }
        Command::Simulate(a) => {
            if let Some(p) = &a.policies {
                o.push(format!(
                    "simulate.policies={}",
                    serde_json::to_string(p).unwrap()
                ));
            }
            if let Some(k) = &a.model_kind {
                o.push(format!("simulate.model_kind={}", json_str(k)));
            }
            if let Some(n) = a.n_jobs {
                o.push(format!("workload.n_jobs={n}"));
            }
            if let Some(n) = a.devices {
                o.push(format!("simulate.n_devices={n}"));
            }
            if let Some(d) = &a.device {
                o.push(format!("device={}", path_str(d)));
            }
        }
        Command::Serve(a) => {
            if let Some(addr) = &a.addr {
                o.push(format!("serve.addr={}", json_str(addr)));
            }
            if let Some(k) = &a.model_kind {
                o.push(format!("serve.model_kind={}", json_str(k)));
            }
        }
    }
    o.extend(cli.overrides.iter().cloned());
    o
}

fn run(cli: &Cli) -> anyhow::Result<()> {
    let cfg = RunConfig::load(cli.config.as_deref(), &overrides(cli))?;
    match cli.command {
        Command::Synth(_) => commands::synth(&cfg),
        Command::Train(_) => commands::train(&cfg),
        Command::Evaluate(_) => commands::evaluate(&cfg),
        Command::Simulate(_) => commands::simulate(&cfg),
        Command::Serve(_) => commands::serve(&cfg),
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<ConfigError>().is_some() {
        return 2;
    }
    match err.downcast_ref::<freqsched::Error>() {
        Some(e) if e.is_validation() => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_target(false)
        .init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
