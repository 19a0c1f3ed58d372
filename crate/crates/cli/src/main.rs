mod commands;
mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicBool, Ordering};
use std::time::Instant;

use clap::Parser;
use rmflab_core::batch::resolve_workers;
use rmflab_core::io::Manifest;
use rmflab_core::RmfError;
use thiserror::Error;

use crate::commands::{Ctx, Record};
use crate::config::{Cli, Command};

pub const EXIT_VALIDATION: u8 = 2;
pub const EXIT_NUMERIC: u8 = 3;
pub const EXIT_CANCELLED: u8 = 130;

static CANCEL: AtomicBool = AtomicBool::new(false);

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] RmfError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("{0} report(s) failed")]
    Failed(usize),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(e) if e.is_validation() => EXIT_VALIDATION,
            CliError::Core(RmfError::Cancelled { .. }) => EXIT_CANCELLED,
            _ => EXIT_NUMERIC,
        }
    }
}

extern "C" fn on_interrupt(_: libc::c_int) {
    CANCEL.store(true, Ordering::Relaxed);
}

fn install_interrupt_handler() {
    let handler = on_interrupt as extern "C" fn(libc::c_int);
    // SAFETY: the handler only stores to an atomic.
    unsafe {
        libc::signal(libc::SIGINT, handler as libc::sighandler_t);
    }
}

fn git_describe() -> String {
    let from_git = std::process::Command::new("git")
        .args(["describe", "--always", "--dirty", "--tags"])
        .current_dir(env!("CARGO_MANIFEST_DIR"))
        .output()
        .ok()
        .filter(|o| o.status.success())
        .and_then(|o| String::from_utf8(o.stdout).ok())
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty());
    from_git.unwrap_or_else(|| format!("rmflab-{}", env!("CARGO_PKG_VERSION")))
}

fn fresh_run_dir(parent: &Path) -> PathBuf {
    let stamp = chrono::Utc::now().format("%Y%m%dT%H%M%S%.6fZ").to_string();
    let mut dir = parent.join(&stamp);
    let mut k = 1;
    while dir.exists() {
        dir = parent.join(format!("{stamp}-{k}"));
        k += 1;
    }
    dir
}

fn resolve_command(command: Command) -> Result<Command, CliError> {
    let Command::Replay(r) = command else {
        return Ok(command);
    };
    let text = std::fs::read_to_string(&r.manifest)
        .map_err(|e| RmfError::InvalidArgument(format!("{}: {e}", r.manifest.display())))?;
    let manifest = Manifest::from_json(&text)?;
    serde_json::from_value(manifest.config)
        .map_err(|e| RmfError::InvalidArgument(format!("manifest config: {e}")).into())
}

fn load_tables(command: &mut Command) -> Result<(), CliError> {
    match command {
        Command::Simulate(a) => a.sim.family.load()?,
        Command::Compare(a) => a.family.load()?,
        Command::Moments(a) => a.sim.family.load()?,
        Command::Variance(a) => a.family.load()?,
        Command::Wirsing(a) => a.family.load()?,
        Command::Smooth(a) => a.family.load()?,
        _ => {}
    }
    Ok(())
}

fn manifest(command: &Command, rec: &Record, started: Instant) -> Manifest {
    Manifest {
        command: command.name().to_string(),
        master_seed: rec.master_seed,
        x: rec.x,
        n: rec.n,
        epsilon: rec.epsilon,
        model: rec.model.clone(),
        family: rec.spec.as_ref().map(|s| s.family_name().to_string()),
        family_params: rec.spec.as_ref().map_or(serde_json::Value::Null, |s| s.family_params()),
        theta: rec.spec.as_ref().map(|s| s.theta),
        git_describe: git_describe(),
        wall_seconds: started.elapsed().as_secs_f64(),
        status: rec.status(),
        completed: rec.completed,
        config: serde_json::to_value(command).expect("config serializes"),
    }
}

fn execute(cli: Cli) -> Result<(), CliError> {
    let started = Instant::now();
    let mut command = resolve_command(cli.command)?;
    load_tables(&mut command)?;
    let workers = resolve_workers(cli.workers)?;
    let dir = cli.run_dir.unwrap_or_else(|| fresh_run_dir(&cli.out_dir));
    commands::ensure_dir(&dir)?;
    let ctx = Ctx {
        workers,
        dir: dir.clone(),
        cancel: &CANCEL,
    };
    log::info!("{} -> {} ({workers} workers)", command.name(), dir.display());
    let rec = commands::run(&command, &ctx)?;
    let m = manifest(&command, &rec, started);
    std::fs::write(dir.join("manifest.json"), m.to_pretty_json() + "\n")?;
    println!("{}", dir.display());
    if rec.cancelled {
        return Err(RmfError::Cancelled {
            completed: rec.completed.unwrap_or(0) as usize,
            requested: rec.n.unwrap_or(0) as usize,
        }
        .into());
    }
    if rec.failures > 0 {
        return Err(CliError::Failed(rec.failures));
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_VALIDATION } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    install_interrupt_handler();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
