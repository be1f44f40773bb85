//! Command-line experiment driver.
//!
//! Usage: `glb <study> --config <path> [--out <dir>] [--seed <u64>]`
//!
//! Exits 0 iff the run completed and every named check passed, 1 when a
//! check failed, and 2 on configuration or runtime errors.

use clap::Parser;
use glb::harness::{parse_config, run_experiment, Study};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "glb", version, about = "Ginzburg-Landau lattice experiment driver")]
struct Cli {
    /// Study to run: minimize | sweep | probe-monotonicity | probe-clearing |
    /// probe-appendix | report
    study: String,

    /// Path to a `key = value` configuration file
    #[arg(long)]
    config: PathBuf,

    /// Output directory (defaults to the config `out` key, else
    /// glb-out-<study>)
    #[arg(long)]
    out: Option<PathBuf>,

    /// Override the configured RNG seed
    #[arg(long)]
    seed: Option<u64>,
}

fn run() -> Result<bool, String> {
    let cli = Cli::parse();
    let study = Study::parse(&cli.study)
        .ok_or_else(|| format!("unknown study `{}`", cli.study))?;
    let text = std::fs::read_to_string(&cli.config)
        .map_err(|e| format!("cannot read config {}: {e}", cli.config.display()))?;
    let mut cfg = parse_config(&text).map_err(|e| e.to_string())?;
    if cfg.study != study {
        return Err(format!(
            "config declares study `{}` but `{}` was requested",
            cfg.study.name(),
            study.name()
        ));
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
        cfg.echo.insert("seed".into(), seed.to_string());
    }
    let out = cli
        .out
        .or_else(|| cfg.out.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(format!("glb-out-{}", study.name())));

    let report = run_experiment(&cfg, &out).map_err(|e| e.to_string())?;
    for (name, pass) in &report.checks {
        println!("check {name}: {}", if *pass { "pass" } else { "FAIL" });
    }
    println!(
        "{}: {} artifacts in {}",
        if report.all_pass { "ok" } else { "failed" },
        report.artifacts.len(),
        report.out_dir.display()
    );
    Ok(report.all_pass)
}

fn main() -> ExitCode {
    match run() {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
