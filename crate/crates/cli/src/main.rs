use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use rydgate::params::GateKind;
use rydgate_cli::{execute, CliError, Mode, RunConfig};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Switch {
    On,
    Off,
}

#[derive(Debug, Parser)]
#[command(name = "rydgate", version, about = "Simulate Rydberg-blockade Toffoli and C3NOT gates")]
struct Args {
    /// JSON run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// toffoli-linear, toffoli-planar or c3not.
    #[arg(long)]
    gate: Option<String>,
    /// trajectory, sweep, fidelity or validate.
    #[arg(long)]
    mode: Option<String>,
    /// Override a config entry, e.g. `--set delta_mhz=3000` or `--set sweep.points=40`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    decay: Option<Switch>,
    /// Worker threads (falls back to RYDGATE_THREADS).
    #[arg(long)]
    threads: Option<usize>,
}

fn build_config(args: &Args) -> Result<RunConfig, CliError> {
    let gate = args
        .gate
        .as_deref()
        .map(|g| GateKind::parse(g).ok_or_else(|| CliError::Config(format!("unknown gate {g:?}"))))
        .transpose()?;
    let mode = args
        .mode
        .as_deref()
        .map(|m| Mode::parse(m).ok_or_else(|| CliError::Config(format!("unknown mode {m:?}"))))
        .transpose()?;
    let mut cfg = match &args.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::new(
            gate.ok_or_else(|| CliError::Config("--gate is required without --config".into()))?,
            mode.unwrap_or(Mode::Validate),
        ),
    };
    if let Some(g) = gate {
        cfg.gate = g;
    }
    if let Some(m) = mode {
        cfg.mode = m;
    }
    if let Some(d) = args.decay {
        cfg.decay = matches!(d, Switch::On);
    }
    if let Some(out) = &args.out {
        cfg.output.dir = out.clone();
    }
    for s in &args.sets {
        cfg.apply_set(s)?;
    }
    cfg.check_complete()?;
    Ok(cfg)
}

fn threads(args: &Args) -> Result<Option<usize>, CliError> {
    if let Some(n) = args.threads {
        return Ok(Some(n));
    }
    match std::env::var("RYDGATE_THREADS") {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| CliError::Config(format!("RYDGATE_THREADS: not a thread count: {v:?}"))),
        Err(_) => Ok(None),
    }
}

fn run(args: &Args) -> Result<bool, CliError> {
    if let Some(n) = threads(args)? {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("threads: {e}")))?;
    }
    let cfg = build_config(args)?;
    let artifacts = execute(&cfg)?;
    print!("{}", artifacts.stdout);
    for path in artifacts.write(&cfg.output.dir)? {
        eprintln!("wrote {}", path.display());
    }
    Ok(!artifacts.regime_failed)
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(&args) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(3),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
