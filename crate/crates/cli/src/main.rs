//! `dtnet`: distill a boosted tree ensemble into a depth-constrained
//! polynomial network and run it through the leveled-HE simulator.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};
use serde_json::{json, Value};

use config::{parse_override, PipelineConfig};

#[derive(Parser)]
#[command(name = "dtnet", version, about)]
struct Cli {
    /// Pipeline configuration (JSON). Defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set train.epochs=50`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
    /// Global seed (overrides `seed`).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (overrides `output_dir`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Preprocess the raw CSV into train/test/seed CSVs and a preprocessor.
    Prep {
        /// Raw input CSV (overrides `data.input_csv`).
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Cross-validate the AdaBoost grid and train the teacher.
    TrainTeacher,
    /// Write a synthetic transfer set generated from the seed rows.
    Munge,
    /// Search depth-feasible students and keep the best one.
    Distill {
        /// Multiplicative depth budget (overrides `search.depth_budget`).
        #[arg(long)]
        depth_budget: Option<usize>,
    },
    /// Report multiplicative depths.
    AnalyzeDepth {
        /// Hidden widths such as `32|32`.
        #[arg(long, requires = "activation")]
        arch: Option<String>,
        #[arg(long)]
        activation: Option<String>,
        /// A trained DTNet JSON instead of an explicit skeleton.
        #[arg(long, conflicts_with = "arch")]
        model: Option<PathBuf>,
    },
    /// Classify the test split in plaintext or under simulated encryption.
    Infer {
        #[arg(long)]
        encrypted: bool,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        he_slots: Option<usize>,
        #[arg(long)]
        he_depth_budget: Option<usize>,
        #[arg(long)]
        encrypt_weights: Option<bool>,
    },
    /// Soft-comparator cost estimate and the DTNet comparison ratio.
    CostModel {
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Teacher vs DTNet vs baseline accuracy table.
    Report,
}

fn overrides(cli: &Cli) -> Result<Vec<(String, Value)>> {
    let mut ov: Vec<(String, Value)> = cli.set.iter().map(|s| parse_override(s)).collect::<Result<_>>()?;
    let mut push = |k: &str, v: Value| ov.push((k.to_string(), v));
    if let Some(s) = cli.seed {
        push("seed", json!(s));
    }
    if let Some(o) = &cli.out {
        push("output_dir", json!(o));
    }
    match &cli.command {
        Command::Prep { input: Some(p) } => push("data.input_csv", json!(p)),
        Command::Distill { depth_budget: Some(b) } => push("search.depth_budget", json!(b)),
        Command::Infer {
            he_slots,
            he_depth_budget,
            encrypt_weights,
            ..
        } => {
            if let Some(v) = he_slots {
                push("he.slots", json!(v));
            }
            if let Some(v) = he_depth_budget {
                push("he.depth_budget", json!(v));
            }
            if let Some(v) = encrypt_weights {
                push("he.encrypt_weights", json!(v));
            }
        }
        _ => {}
    }
    Ok(ov)
}

fn run(cli: Cli) -> Result<()> {
    let cfg = PipelineConfig::load(cli.config.as_deref(), &overrides(&cli)?)?;
    match cli.command {
        Command::Prep { .. } => commands::prep(&cfg),
        Command::TrainTeacher => commands::train_teacher(&cfg),
        Command::Munge => commands::munge(&cfg),
        Command::Distill { .. } => commands::distill(&cfg),
        Command::AnalyzeDepth {
            arch,
            activation,
            model,
        } => {
            let model = model.or_else(|| {
                let p = cfg.out(commands::DTNET);
                (arch.is_none() && p.is_file()).then_some(p)
            });
            let explicit = arch.as_deref().zip(activation.as_deref());
            commands::analyze_depth(&cfg, explicit, model)
        }
        Command::Infer { encrypted, model, .. } => commands::infer(&cfg, encrypted, model),
        Command::CostModel { model } => commands::cost_model(&cfg, model),
        Command::Report => commands::report(&cfg),
    }
}

/// 2: bad input, 3: depth budget exceeded, 4: numeric failure.
fn exit_code(err: &anyhow::Error) -> u8 {
    match err.chain().find_map(|e| e.downcast_ref::<dtnet_core::Error>()) {
        Some(dtnet_core::Error::DepthExceeded { .. }) => 3,
        Some(e) if e.is_numeric() => 4,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
