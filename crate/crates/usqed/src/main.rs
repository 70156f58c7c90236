use clap::{Parser, Subcommand};
use std::path::PathBuf;

use usqed::cli::{main_entry, OutputFormat};

#[derive(Parser)]
#[command(name = "usqed", version, about = "USC cavity-QED batch toolkit")]
struct Args {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output path (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    /// csv or json.
    #[arg(long, default_value = "csv")]
    format: OutputFormat,
    /// Rayon worker threads.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Energy spectra by method (exact|jc|bs|grwa|braak|variational).
    Spectrum(Common),
    /// Per-method max error vs exact over a g x splitting grid.
    ValidityMap(Common),
    /// Dressed vs phenomenological steady-state photon numbers.
    Steady(Common),
    /// g2(tau) and emission spectrum of a driven system.
    G2(Common),
    /// Floquet zone eigenvalues and period-averaged observables.
    Floquet(Common),
    /// Gauge-deviation table vs coupling and Taylor order.
    GaugeScan(Common),
}

fn main() {
    env_logger::init();
    let args = Args::parse();
    let (name, common) = match &args.command {
        Command::Spectrum(c) => ("spectrum", c),
        Command::ValidityMap(c) => ("validity-map", c),
        Command::Steady(c) => ("steady", c),
        Command::G2(c) => ("g2", c),
        Command::Floquet(c) => ("floquet", c),
        Command::GaugeScan(c) => ("gauge-scan", c),
    };
    std::process::exit(main_entry(
        name,
        &common.config,
        common.out.as_deref(),
        common.format,
        common.threads,
    ));
}
