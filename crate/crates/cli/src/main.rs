use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand as ClapSubcommand};

use linewidth_cli::{parse_entries, parse_override, run, validate, RunConfig, Subcommand};

/// Line widths of dipole-coupled frozen Rydberg gases.
///
/// Settings come from an optional flat `key = value` file; `--set` and the
/// named flags override it. Every run writes `config.txt`, which reproduces it.
#[derive(Parser)]
#[command(name = "linewidth", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(ClapSubcommand)]
enum Command {
    /// Survival probability of one excitation hopping among ground-state atoms
    ToyDecay(Args),
    /// Pooled eigen-energy histogram of the hopping model
    ToyBand(Args),
    /// Homogeneous excitation spectrum and its width
    Spectrum(Args),
    /// Spectrum averaged over a Gaussian cloud
    Convolve(Args),
    /// Nearest-neighbour interaction statistics
    Pairdist(Args),
    /// Case II width against the initial s/s' population ratio
    WidthVsNu(Args),
    /// Widths at several atom numbers and their 1/N extrapolation
    FiniteSize(Args),
    /// Frozen against moving atoms
    Motion(Args),
}

#[derive(clap::Args)]
struct Args {
    /// Run configuration file
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Override a configuration key (repeatable)
    #[arg(short = 's', long = "set", value_name = "KEY=VALUE", value_parser = parse_override)]
    set: Vec<(String, String)>,
    /// Master seed
    #[arg(long)]
    seed: Option<u64>,
    /// Number of random configurations
    #[arg(long)]
    configs: Option<usize>,
    /// Number of atoms
    #[arg(short = 'n', long)]
    atoms: Option<usize>,
    /// Worker threads
    #[arg(short, long)]
    workers: Option<usize>,
    /// Output directory
    #[arg(short, long)]
    out: Option<PathBuf>,
    /// Print the resolved configuration and any violations without running
    #[arg(long)]
    check: bool,
    /// More log output (-v info, -vv debug)
    #[arg(short, long, action = clap::ArgAction::Count)]
    verbose: u8,
}

impl Command {
    fn split(self) -> (Subcommand, Args) {
        match self {
            Command::ToyDecay(a) => (Subcommand::ToyDecay, a),
            Command::ToyBand(a) => (Subcommand::ToyBand, a),
            Command::Spectrum(a) => (Subcommand::Spectrum, a),
            Command::Convolve(a) => (Subcommand::Convolve, a),
            Command::Pairdist(a) => (Subcommand::Pairdist, a),
            Command::WidthVsNu(a) => (Subcommand::WidthVsNu, a),
            Command::FiniteSize(a) => (Subcommand::FiniteSize, a),
            Command::Motion(a) => (Subcommand::Motion, a),
        }
    }
}

fn load(sub: Subcommand, args: &Args) -> Result<RunConfig, Vec<String>> {
    let file_entries = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| vec![format!("{}: {e}", path.display())])?;
            parse_entries(&text).map_err(|v| v.iter().map(|x| format!("{}: {x}", path.display())).collect::<Vec<_>>())?
        }
        None => Vec::new(),
    };
    let mut overrides = args.set.clone();
    let named = [
        ("master_seed", args.seed.map(|x| x.to_string())),
        ("n_configs", args.configs.map(|x| x.to_string())),
        ("n_atoms", args.atoms.map(|x| x.to_string())),
        ("worker_count", args.workers.map(|x| x.to_string())),
        ("output_dir", args.out.as_ref().map(|p| p.display().to_string())),
    ];
    overrides.extend(named.into_iter().filter_map(|(k, v)| v.map(|v| (k.to_string(), v))));
    let config = RunConfig::from_sources(sub, &file_entries, &overrides)
        .map_err(|v| v.iter().map(ToString::to_string).collect::<Vec<_>>())?;
    let violations = validate(&config);
    if violations.is_empty() {
        Ok(config)
    } else {
        Err(violations.iter().map(ToString::to_string).collect())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (sub, args) = cli.command.split();
    let level = match args.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        2 => log::LevelFilter::Debug,
        _ => log::LevelFilter::Trace,
    };
    env_logger::Builder::new().filter_level(level).init();

    let config = match load(sub, &args) {
        Ok(c) => c,
        Err(errors) => {
            for e in errors {
                eprintln!("error: {e}");
            }
            return ExitCode::from(2);
        }
    };
    if args.check {
        print!("{}", config.to_text());
        return ExitCode::SUCCESS;
    }
    match run(&config) {
        Ok(outcome) => {
            println!("{}", serde_json::to_string_pretty(&outcome.summary).unwrap_or_default());
            eprintln!("wrote {} files to {}", outcome.artifacts.len(), outcome.output_dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
