//! Command-line front end: each subcommand maps onto one pipeline stage of
//! [`gsvd_core::runner::RunContext`]. Successful stages print a short
//! human-readable summary; failures print a machine-readable JSON envelope
//! to stderr and exit nonzero.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use gsvd_core::error::{Error, Result};
use gsvd_core::runner::RunContext;

#[derive(Parser)]
#[command(
    name = "gsvd",
    version,
    about = "Factorize black-box maps, train norm-structured networks, and probe them"
)]
struct Cli {
    /// Path to the run configuration JSON.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override the configuration's seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory for artifacts.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train the norm-structured network on the construction block.
    TrainSvdnet,
    /// Factorize the checkpointed network as a black box.
    BuildGsvd,
    /// Measure the factorization on the held-out block.
    Validate,
    /// Run the directional misclassification search on held-out samples.
    Attack,
    /// Retrain across undersampling ratios and report head spectra.
    BiasSweep,
    /// Render logit interpolation and null-space variation strips.
    Traverse,
}

fn run(cli: &Cli) -> Result<String> {
    let config = cli
        .config
        .as_deref()
        .ok_or_else(|| Error::InvalidConfig("--config is required".into()))?;
    let ctx = RunContext::new(config, cli.seed, cli.out.clone())?;
    match cli.cmd {
        Cmd::TrainSvdnet => ctx.train_svdnet(),
        Cmd::BuildGsvd => ctx.build_gsvd(),
        Cmd::Validate => ctx.validate(),
        Cmd::Attack => ctx.attack(),
        Cmd::BiasSweep => ctx.bias_sweep(),
        Cmd::Traverse => ctx.traverse(),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(summary) => {
            print!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            let envelope = serde_json::json!({
                "error": { "kind": e.kind(), "message": e.to_string() }
            });
            eprintln!("{envelope}");
            ExitCode::FAILURE
        }
    }
}
