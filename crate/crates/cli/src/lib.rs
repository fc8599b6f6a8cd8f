//! Config-driven runner for the `cgo-core` experiments.

pub mod commands;
pub mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use commands::Outcome;
use config::{ConfigError, RunConfig};

pub const OUT_ENV: &str = "CGO_CALDERON_OUT";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Forward,
    Cgo,
    Decay,
    Phase,
    Pair,
    Recover,
    Selftest,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Forward => "forward",
            Command::Cgo => "cgo",
            Command::Decay => "decay",
            Command::Phase => "phase",
            Command::Pair => "pair",
            Command::Recover => "recover",
            Command::Selftest => "selftest",
        }
    }

    pub fn execute(self, cfg: &RunConfig) -> commands::CmdResult {
        match self {
            Command::Forward => commands::forward(cfg),
            Command::Cgo => commands::cgo(cfg),
            Command::Decay => commands::decay(cfg),
            Command::Phase => commands::phase(cfg),
            Command::Pair => commands::pair(cfg),
            Command::Recover => commands::recover(cfg),
            Command::Selftest => commands::selftest(cfg),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Numeric(#[from] cgo_core::Error),
    #[error("output: {0}")]
    Io(#[from] std::io::Error),
    #[error("thread pool: {0}")]
    Pool(#[from] rayon::ThreadPoolBuildError),
}

impl RunError {
    /// Process exit code: 2 for configuration problems, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            _ => 1,
        }
    }
}

#[derive(Debug)]
pub struct RunReport {
    pub dir: PathBuf,
    pub outcome: Outcome,
    pub summary: String,
}

impl RunReport {
    pub fn exit_code(&self) -> i32 {
        if self.outcome.passed() { 0 } else { 1 }
    }
}

/// `base` itself when it is missing or empty, otherwise a fresh
/// `run-<secs>-<nanos>` directory inside it.
pub fn output_dir(base: &Path) -> std::io::Result<PathBuf> {
    let empty = match fs::read_dir(base) {
        Ok(mut it) => it.next().is_none(),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => true,
        Err(e) => return Err(e),
    };
    if empty {
        fs::create_dir_all(base)?;
        return Ok(base.to_path_buf());
    }
    let now = SystemTime::now().duration_since(UNIX_EPOCH).unwrap_or_default();
    let (secs, mut nanos) = (now.as_secs(), now.subsec_nanos());
    loop {
        let dir = base.join(format!("run-{secs}-{nanos:09}"));
        match fs::create_dir(&dir) {
            Ok(()) => return Ok(dir),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => nanos = nanos.wrapping_add(1),
            Err(e) => return Err(e),
        }
    }
}

/// Loads the config, runs `cmd` on a pool of `threads` workers (the config
/// value when `None`) and writes artifacts plus `summary.txt` under `out`.
pub fn run(cmd: Command, config: &Path, out: &Path, threads: Option<usize>) -> Result<RunReport, RunError> {
    let cfg = RunConfig::load(config)?;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads.unwrap_or(cfg.threads).max(1)).build()?;
    let outcome = pool.install(|| cmd.execute(&cfg))?;
    let dir = output_dir(out)?;
    for (name, body) in &outcome.artifacts {
        fs::write(dir.join(name), body)?;
    }
    let summary = outcome.summary(cmd.name());
    fs::write(dir.join("summary.txt"), &summary)?;
    Ok(RunReport { dir, outcome, summary })
}
