use bimcalc::io::{self, CommandOptions, ReportFormat};
use clap::{Parser, Subcommand, ValueEnum};
use std::path::PathBuf;
use std::process::ExitCode;

/// Numerical engine for bimodules over multi-matrix tracial *-algebras.
#[derive(Parser)]
#[command(name = "bimcalc", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Tolerance for residual checks (default: BIMCALC_TOL or 1e-9).
    #[arg(long, global = true)]
    tol: Option<f64>,

    /// Seed for the deterministic randomized steps.
    #[arg(long, global = true, default_value_t = 42)]
    seed: u64,

    /// Fusion closure depth for presentations.
    #[arg(long, global = true, default_value_t = 3)]
    depth: usize,

    /// Report format.
    #[arg(long, global = true, value_enum, default_value_t = ReportArg::Text)]
    report: ReportArg,
}

#[derive(Copy, Clone, ValueEnum)]
enum ReportArg {
    Text,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Run the verification suite named by the manifest kind.
    Verify { manifest: PathBuf },
    /// Specialize a C*-Frobenius algebra (mm* = 1 after the move).
    Specialize {
        manifest: PathBuf,
        #[arg(short, long, default_value = "out")]
        out: PathBuf,
    },
    /// Standardize a solution of the conjugate equations or a special algebra.
    Standardize {
        manifest: PathBuf,
        #[arg(short, long, default_value = "out")]
        out: PathBuf,
    },
    /// Fuse two bimodules and cross-check against the Gram-quotient oracle.
    Fuse {
        manifest: PathBuf,
        #[arg(short, long, default_value = "out")]
        out: PathBuf,
    },
    /// Build the extension algebra of a C*-Frobenius algebra.
    Realize {
        manifest: PathBuf,
        #[arg(short, long, default_value = "out")]
        out: PathBuf,
    },
    /// Decompose a presented bicategory and realize it over tracial algebras.
    Decompose {
        manifest: PathBuf,
        #[arg(short, long, default_value = "out")]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let tol = cli
        .tol
        .or_else(|| {
            std::env::var("BIMCALC_TOL")
                .ok()
                .and_then(|s| s.parse::<f64>().ok())
        })
        .unwrap_or(bimcalc::DEFAULT_TOL);
    let opts = CommandOptions {
        tol,
        seed: cli.seed,
        depth: cli.depth,
        format: match cli.report {
            ReportArg::Text => ReportFormat::Text,
            ReportArg::Json => ReportFormat::Json,
        },
    };
    let result = match &cli.command {
        Command::Verify { manifest } => io::cmd_verify(manifest, &opts),
        Command::Specialize { manifest, out } => io::cmd_specialize(manifest, out, &opts),
        Command::Standardize { manifest, out } => io::cmd_standardize(manifest, out, &opts),
        Command::Fuse { manifest, out } => io::cmd_fuse(manifest, out, &opts),
        Command::Realize { manifest, out } => io::cmd_realize(manifest, out, &opts),
        Command::Decompose { manifest, out } => io::cmd_decompose(manifest, out, &opts),
    };
    match result {
        Ok(outcome) => {
            println!("{}", outcome.render(opts.format));
            ExitCode::from(outcome.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
