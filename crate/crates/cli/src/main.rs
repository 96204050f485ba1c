use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, Args};
use mobius_mono::commands::{self, Command, CommandError, Exit, CSV_FILE, REPORT_FILE};
use mobius_mono::config::Config;

/// Möbius geometry and monotonicity-identity verification for minimal
/// surfaces.
#[derive(Parser)]
#[command(name = "mobius-mono", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Isometric-sphere decomposition of the configured Möbius word.
    Decompose(Common),
    /// Images of the origin-centered balls of the sweep radii.
    BallImage(Common),
    /// Monotone quantities and identity residuals over the radius grid.
    Sweep(Common),
    /// Runs the checks enabled in the config.
    Verify(Common),
    /// Built-in regression scenarios with pinned budgets.
    Selftest(SelftestArgs),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Args)]
struct SelftestArgs {
    /// Accepted for symmetry with other commands; ignored.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Args)]
struct RunArgs {
    /// Output directory for sweep.csv and report.json.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Absolute quadrature tolerance.
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_depth: Option<u32>,
}

fn init_threads() -> Result<(), CommandError> {
    let Ok(raw) = std::env::var("MOBIUS_MONO_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CommandError::config(format!("MOBIUS_MONO_THREADS must be a positive integer, got `{raw}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CommandError::config(format!("cannot size the worker pool: {e}")))
}

fn load(path: &Path, run: &RunArgs) -> Result<Config, CommandError> {
    let src = std::fs::read_to_string(path)
        .map_err(|e| CommandError::config(format!("cannot read {}: {e}", path.display())))?;
    let cfg = Config::parse(&src).map_err(|e| CommandError::config(format!("{}: {e}", path.display())))?;
    Ok(cfg.with_overrides(run.tol, run.max_depth)?)
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<(), CommandError> {
    std::fs::create_dir_all(dir).map_err(|e| CommandError::config(format!("cannot create {}: {e}", dir.display())))?;
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(|e| CommandError::config(format!("cannot write {}: {e}", path.display())))
}

fn main_inner(cli: Cli) -> Result<Exit, CommandError> {
    init_threads()?;
    let (cmd, config, run) = match &cli.command {
        Cmd::Decompose(c) => (Command::Decompose, Some(&c.config), &c.run),
        Cmd::BallImage(c) => (Command::BallImage, Some(&c.config), &c.run),
        Cmd::Sweep(c) => (Command::Sweep, Some(&c.config), &c.run),
        Cmd::Verify(c) => (Command::Verify, Some(&c.config), &c.run),
        Cmd::Selftest(c) => (Command::Selftest, None, &c.run),
    };
    let cfg = config.map(|p| load(p, run)).transpose()?;
    let mut out = commands::run(cmd, cfg)?;
    for line in &out.summary {
        println!("{line}");
    }
    if let Some(csv) = &out.csv {
        write(&run.out, CSV_FILE, csv)?;
    }
    write(&run.out, REPORT_FILE, &out.report.to_json())?;
    let exit = out.exit();
    println!("{}", if exit == Exit::Pass { "all checks pass" } else { "some checks FAILED" });
    Ok(exit)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match main_inner(cli) {
        Ok(exit) => ExitCode::from(exit as u8),
        Err(e) => {
            eprintln!("mobius-mono: {e}");
            ExitCode::from(e.exit as u8)
        }
    }
}
