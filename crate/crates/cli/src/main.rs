use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use hmc_lq::experiment::{preset, run_experiment, ExperimentConfig, PRESETS, TARGET_NAMES};
use hmc_lq::{Direction, TransferOperator};

/// Transfer-operator experiments for Hamiltonian Monte Carlo.
#[derive(Parser)]
#[command(name = "hmc-lq", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write its traces, checks and manifest.
    Run(RunArgs),
    /// List built-in presets, targets, momentum profiles and flows.
    ListPresets,
    /// Parse and validate a config without running it.
    ValidateConfig {
        config: PathBuf,
    },
    /// Assemble the dense operator matrix and write it to a file.
    DumpMatrix(DumpArgs),
}

#[derive(Args)]
struct Source {
    /// Experiment config (TOML).
    #[arg(required_unless_present = "preset", conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Use a built-in preset instead of a file.
    #[arg(long)]
    preset: Option<String>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    source: Source,
    #[arg(long, env = "HMCLQ_SEED")]
    seed: Option<u64>,
    /// Output directory; defaults to the config's `output_dir` or `runs/<name>`.
    #[arg(long, short)]
    output: Option<PathBuf>,
    #[arg(long)]
    iterations: Option<usize>,
    /// Particle count for the sampler cross-check.
    #[arg(long)]
    particles: Option<usize>,
    /// Exit with status 3 when any check fails.
    #[arg(long)]
    strict: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Binary,
}

#[derive(Clone, Copy, ValueEnum)]
enum DirectionArg {
    Forward,
    Adjoint,
}

#[derive(Args)]
struct DumpArgs {
    #[command(flatten)]
    source: Source,
    #[arg(long, short)]
    output: PathBuf,
    #[arg(long, value_enum, default_value = "text")]
    format: Format,
    #[arg(long, value_enum, default_value = "forward")]
    direction: DirectionArg,
}

fn load(source: &Source) -> hmc_lq::Result<ExperimentConfig> {
    match (&source.config, &source.preset) {
        (_, Some(name)) => preset(name),
        (Some(path), None) => ExperimentConfig::from_toml(&fs::read_to_string(path)?),
        (None, None) => Err(hmc_lq::Error::Usage("a config path or --preset is required".into())),
    }
}

fn run(args: RunArgs) -> hmc_lq::Result<ExitCode> {
    let mut cfg = load(&args.source)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(n) = args.iterations {
        cfg.diagnostics.iterations = n;
    }
    if let Some(m) = args.particles {
        match cfg.sampler.as_mut() {
            Some(s) => s.particles = m,
            None => eprintln!("warning: --particles ignored, the config has no [sampler] section"),
        }
    }
    let dir = args
        .output
        .or_else(|| cfg.output_dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| Path::new("runs").join(&cfg.name));
    let report = run_experiment(&cfg, &dir)?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    println!(
        "{}: {} passed, {} failed, {} not applicable -> {}",
        cfg.name,
        report.counts.pass,
        report.counts.fail,
        report.counts.not_applicable,
        dir.display()
    );
    for s in &report.spectral {
        println!("  q={}: rho={:.6} gap={:.6} ({:?})", s.q, s.rho, s.gap, s.method);
    }
    if args.strict && report.counts.fail > 0 {
        return Ok(ExitCode::from(3));
    }
    Ok(ExitCode::SUCCESS)
}

fn list_presets() {
    println!("presets:");
    for p in PRESETS {
        println!("  {:<26} {}", p.name, p.summary);
    }
    println!("targets: {}", TARGET_NAMES.join(", "));
    println!("momentum profiles: standard-gaussian, hyperbolic-secant, skew-normal (shape)");
    println!("flows: exact-rotation (standard Gaussian target and momentum), leapfrog (steps)");
}

fn validate(path: &Path) -> hmc_lq::Result<()> {
    let cfg = ExperimentConfig::from_toml(&fs::read_to_string(path)?)?;
    let resolved = cfg.resolve()?;
    for w in &resolved.warnings {
        eprintln!("warning: {w}");
    }
    println!(
        "{}: ok ({} nodes, {} exponents, {} iterations)",
        cfg.name,
        resolved.grid.len(),
        resolved.exponents.len(),
        cfg.diagnostics.iterations
    );
    Ok(())
}

fn dump(args: DumpArgs) -> hmc_lq::Result<()> {
    let cfg = load(&args.source)?;
    let r = cfg.resolve()?;
    let op = TransferOperator::new(r.flow, r.grid, r.options)?;
    let direction = match args.direction {
        DirectionArg::Forward => Direction::Forward,
        DirectionArg::Adjoint => Direction::Adjoint,
    };
    let m = op.assemble_matrix(direction)?;
    let out = BufWriter::new(fs::File::create(&args.output)?);
    match args.format {
        Format::Text => m.write_text(out)?,
        Format::Binary => m.write_binary(out)?,
    }
    println!("{} x {} matrix -> {}", m.n(), m.n(), args.output.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => run(args),
        Command::ListPresets => {
            list_presets();
            Ok(ExitCode::SUCCESS)
        }
        Command::ValidateConfig { config } => validate(&config).map(|_| ExitCode::SUCCESS),
        Command::DumpMatrix(args) => dump(args).map(|_| ExitCode::SUCCESS),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
