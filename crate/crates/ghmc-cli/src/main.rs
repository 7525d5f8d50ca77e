use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use ghmc_cli::{config, experiments};

/// Verification experiments for the exact Gaussian dynamics library. Each
/// subcommand runs one experiment kind from a TOML config and writes a result
/// record; the exit code is 0 exactly when every assertion passed.
#[derive(Parser)]
#[command(name = "ghmc", version, about)]
struct Cli {
    #[command(subcommand)]
    kind: Kind,
}

#[derive(Subcommand)]
enum Kind {
    /// Energy conservation, volume preservation, reversibility, and the
    /// fourth-order decay of the integrator oracle.
    FlowCheck(RunArgs),
    /// One-step moment map: fixed point, quadrature oracle, or Monte Carlo.
    StepCheck(RunArgs),
    /// Quadratic-form split identity and the determinant identity.
    LemmaCheck(RunArgs),
    /// Fixed-target chain contraction.
    Chain(RunArgs),
    /// Random-target chain transient moments.
    RandomChain(RunArgs),
    /// Univariate limit law: closed-form moments or characteristic-function
    /// convergence.
    LimitLaw(RunArgs),
    /// Hull-distance contraction along random-target trajectories.
    HullTrack(RunArgs),
    /// Lyapunov exponents of the random multiplier products.
    Lyapunov(RunArgs),
    /// Half-plane metric properties.
    Metrics(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Experiment configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the seed from the config file.
    #[arg(long)]
    seed: Option<u64>,
    /// Output path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Embed raw sample draws in the record (large!).
    #[arg(long)]
    dump_samples: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
}

impl Kind {
    fn name(&self) -> &'static str {
        match self {
            Kind::FlowCheck(_) => "flow-check",
            Kind::StepCheck(_) => "step-check",
            Kind::LemmaCheck(_) => "lemma-check",
            Kind::Chain(_) => "chain",
            Kind::RandomChain(_) => "random-chain",
            Kind::LimitLaw(_) => "limit-law",
            Kind::HullTrack(_) => "hull-track",
            Kind::Lyapunov(_) => "lyapunov",
            Kind::Metrics(_) => "metrics",
        }
    }

    fn args(&self) -> &RunArgs {
        match self {
            Kind::FlowCheck(a)
            | Kind::StepCheck(a)
            | Kind::LemmaCheck(a)
            | Kind::Chain(a)
            | Kind::RandomChain(a)
            | Kind::LimitLaw(a)
            | Kind::HullTrack(a)
            | Kind::Lyapunov(a)
            | Kind::Metrics(a) => a,
        }
    }
}

fn run(cli: &Cli) -> Result<bool> {
    let args = cli.kind.args();
    let mut config = config::load(&args.config)?;
    if config.kind != cli.kind.name() {
        bail!(
            "config kind `{}` does not match subcommand `{}`",
            config.kind,
            cli.kind.name()
        );
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
    }

    let record = experiments::run(&config, args.dump_samples);
    let serialized = match args.format {
        Format::Json => record.to_json(),
        Format::Csv => record.to_csv(),
    };
    match &args.out {
        Some(path) => std::fs::write(path, serialized)
            .with_context(|| format!("cannot write {}", path.display()))?,
        None => print!("{serialized}"),
    }

    for check in &record.checks {
        eprintln!(
            "{}: {} ({})",
            check.name,
            if check.passed { "pass" } else { "FAIL" },
            check.detail
        );
    }
    Ok(record.passed)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}
