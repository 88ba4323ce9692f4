//! Command-line entry point: `sweep` runs a Monte Carlo NMSE/BER sweep,
//! `surface` samples the closed-form SINR-loss surface, `orthogonality`
//! runs the pilot-template orthogonality sweep. Log verbosity comes from
//! `RUST_LOG` (e.g. `RUST_LOG=info`).

use std::path::PathBuf;

use afdm_chanest::config::ExperimentConfig;
use afdm_chanest::sweep::{
    orthogonality_rows, parse_snr_spec, run_sweep, sinr_loss_rows, write_csv,
    write_sweep_artifacts,
};
use anyhow::{bail, Result};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "afdm-chanest", version, about = "AFDM channel-estimation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Monte Carlo NMSE/BER sweep over SNR for one estimation scheme.
    Sweep(SweepArgs),
    /// Closed-form analysis surfaces on a parameter grid.
    Surface(SurfaceArgs),
    /// Median pilot-orthogonality error versus guard factor and frame size.
    Orthogonality(OrthogonalityArgs),
}

#[derive(Args)]
struct SweepArgs {
    /// TOML experiment configuration; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Estimation scheme: mf_grid | mf_gfs | ls_baseline | perfect_csi.
    #[arg(long)]
    scheme: Option<String>,
    /// Channel regime: idd | idfd | fdfd.
    #[arg(long)]
    regime: Option<String>,
    /// SNR points, `start:step:stop` or a comma list, in dB.
    #[arg(long)]
    snr: Option<String>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output CSV path; the config sidecar lands next to it.
    #[arg(long, default_value = "results.csv")]
    out: PathBuf,
}

#[derive(Args)]
struct SurfaceArgs {
    /// Emit the SINR-loss surface over the fractional (ι, κ) square.
    #[arg(long)]
    sinr_loss: bool,
    /// Number of chirp carriers.
    #[arg(long, default_value_t = 64)]
    n: usize,
    /// Grid intervals per axis.
    #[arg(long, default_value_t = 100)]
    steps: usize,
    #[arg(long, default_value = "surface.csv")]
    out: PathBuf,
}

#[derive(Args)]
struct OrthogonalityArgs {
    /// Random channels per sweep point.
    #[arg(long, default_value_t = 100)]
    channels: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value = "orthogonality.csv")]
    out: PathBuf,
}

fn main() -> Result<()> {
    env_logger::init();
    match Cli::parse().command {
        Command::Sweep(args) => sweep(args),
        Command::Surface(args) => surface(args),
        Command::Orthogonality(args) => orthogonality(args),
    }
}

fn sweep(args: SweepArgs) -> Result<()> {
    let mut config = match &args.config {
        Some(path) => ExperimentConfig::from_toml_path(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(scheme) = args.scheme {
        config.scheme = scheme;
    }
    if let Some(regime) = args.regime {
        config.regime = regime;
    }
    if let Some(snr) = args.snr {
        config.snr_db_list = parse_snr_spec(&snr)?;
    }
    if let Some(trials) = args.trials {
        config.trials = trials;
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    config.validate()?;
    let rows = run_sweep(&config)?;
    let sidecar = write_sweep_artifacts(&config, &rows, &args.out)?;
    println!(
        "wrote {} ({} rows) and {}",
        args.out.display(),
        rows.len(),
        sidecar.display()
    );
    Ok(())
}

fn surface(args: SurfaceArgs) -> Result<()> {
    if !args.sinr_loss {
        bail!("surface: nothing selected (pass --sinr-loss)");
    }
    let rows = sinr_loss_rows(args.n, args.steps)?;
    write_csv(&rows, &args.out)?;
    println!("wrote {} ({} rows)", args.out.display(), rows.len());
    Ok(())
}

fn orthogonality(args: OrthogonalityArgs) -> Result<()> {
    let rows = orthogonality_rows(args.channels, args.seed)?;
    write_csv(&rows, &args.out)?;
    println!("wrote {} ({} rows)", args.out.display(), rows.len());
    Ok(())
}
