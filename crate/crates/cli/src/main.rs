use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use deadtime_cli::artifact::{emit, Timing, TOOL, VERSION};
use deadtime_cli::{commands, CliError, Format, RunConfig};

#[derive(Parser)]
#[command(
    name = "deadtime",
    version,
    about = "Dead-time distorted photon timestamp distributions"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Stationary timestamp distribution from the fast transition matrix.
    Predict(Common),
    /// Monte Carlo histogram, or prediction error over a sweep.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Also write the relative timestamps of run 0, one per line.
        #[arg(long, value_name = "PATH")]
        timestamps: Option<PathBuf>,
    },
    /// Spectral gap, phase of the second eigenvalue and mixing steps.
    Spectrum(Common),
    /// Baseline and fast construction times across matrix sizes.
    Bench(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, env = deadtime_cli::THREADS_ENV)]
    threads: Option<usize>,
}

fn load(common: &Common) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.mc.seed = seed;
    }
    if let Some(format) = common.format {
        cfg.output.format = format;
    }
    if let Some(out) = &common.out {
        cfg.output.path = Some(out.clone());
    }
    cfg.validate()?;
    if let Some(n) = common.threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), CliError> {
    let start = Instant::now();
    let (command, common, timestamps) = match &cli.command {
        Command::Predict(c) => ("predict", c, None),
        Command::Simulate { common, timestamps } => ("simulate", common, timestamps.as_deref()),
        Command::Spectrum(c) => ("spectrum", c, None),
        Command::Bench(c) => ("bench", c, None),
    };
    let cfg = load(common)?;
    let (artifact, phases) = match command {
        "predict" => commands::predict(&cfg)?,
        "simulate" => commands::simulate(&cfg, timestamps)?,
        "spectrum" => commands::spectrum(&cfg)?,
        _ => (commands::bench(&cfg)?.0, Vec::new()),
    };
    for w in &artifact.warnings {
        eprintln!("warning: {w}");
    }
    let timing = Timing {
        tool: TOOL,
        version: VERSION,
        command,
        threads: rayon::current_num_threads(),
        wall_ms: start.elapsed().as_secs_f64() * 1e3,
        phases,
    };
    emit(
        &artifact,
        cfg.output.format,
        cfg.output.path.as_deref().map(Path::new),
        &timing,
    )
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
