use std::path::PathBuf;
use std::process::ExitCode;

use cgo_calderon::{run, Command, OUT_ENV};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "cgo-calderon", version, about = "CGO solutions and pointwise recovery for the 2D Calderon problem")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(clap::Args)]
struct Common {
    /// Run configuration (key = value, `#` comments).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; a fresh run-* subdirectory is made if it is not empty.
    #[arg(long, env = OUT_ENV, default_value = "out")]
    out: PathBuf,
    /// Worker threads, overriding `run.threads`.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Assemble DtN maps for q and 0.
    Forward(Common),
    /// Build CGO series and report term ratios and residuals.
    Cgo(Common),
    /// Decay-rate study for one quantity.
    Decay(Common),
    /// Stationary-phase constant.
    Phase(Common),
    /// Boundary pairing against the volume integral.
    Pair(Common),
    /// Pointwise recovery of q from its DtN map.
    Recover(Common),
    /// Quick internal consistency checks.
    Selftest(Common),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (cmd, common) = match cli.cmd {
        Cmd::Forward(c) => (Command::Forward, c),
        Cmd::Cgo(c) => (Command::Cgo, c),
        Cmd::Decay(c) => (Command::Decay, c),
        Cmd::Phase(c) => (Command::Phase, c),
        Cmd::Pair(c) => (Command::Pair, c),
        Cmd::Recover(c) => (Command::Recover, c),
        Cmd::Selftest(c) => (Command::Selftest, c),
    };
    match run(cmd, &common.config, &common.out, common.threads) {
        Ok(report) => {
            print!("{}", report.summary);
            println!("output: {}", report.dir.display());
            ExitCode::from(report.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
