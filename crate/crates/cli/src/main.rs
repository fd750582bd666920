use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pencil_cli::{
    cmd_analyze, cmd_gen, cmd_infimum, cmd_minimize, cmd_verify, cmd_witness, Settings,
    VerifyOptions,
};
use pencil_core::Tolerances;

/// Trace minimization over Hermitian matrix pencils.
#[derive(Parser)]
#[command(name = "pencil-tracemin", version, about)]
struct Cli {
    #[command(flatten)]
    tol: TolArgs,
    /// Print only the JSON report on stdout.
    #[arg(long, global = true)]
    json: bool,
    /// Seed for every random choice (sampling).
    #[arg(long, global = true, env = "PENCIL_TRACEMIN_SEED", default_value_t = 0)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct TolArgs {
    /// Hermiticity tolerance.
    #[arg(long = "tol-herm", global = true, default_value_t = 1e-10)]
    herm: f64,
    /// Relative rank cut.
    #[arg(long = "tol-rank", global = true, default_value_t = 1e-10)]
    rank: f64,
    /// Semidefiniteness tolerance.
    #[arg(long = "tol-psd", global = true, default_value_t = 1e-8)]
    psd: f64,
    /// Eigenvector type tolerance.
    #[arg(long = "tol-type", global = true, default_value_t = 1e-7)]
    typ: f64,
    /// Feasibility tolerance.
    #[arg(long = "tol-feas", global = true, default_value_t = 1e-8)]
    feas: f64,
}

#[derive(Subcommand)]
enum Command {
    /// Inertia, definiteness interval and typed spectrum of a pair.
    Analyze { pair: PathBuf },
    /// Decide and evaluate the infimum of a problem.
    Infimum { problem: PathBuf },
    /// Write a minimizer when the infimum is attained.
    Minimize {
        problem: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Build and certify a divergent feasible family.
    Witness {
        problem: PathBuf,
        #[arg(long, default_value_t = -1e6, allow_hyphen_values = true)]
        threshold: f64,
        #[arg(long, default_value_t = 1e4)]
        tmax: f64,
    },
    /// Check the infimum against random feasible points.
    Verify {
        problem: PathBuf,
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        #[arg(long, default_value_t = 1.0)]
        spread: f64,
    },
    /// Assemble a pair from canonical blocks and write its ground truth.
    Gen {
        spec: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let t = &cli.tol;
    for (name, v) in [
        ("herm", t.herm),
        ("rank", t.rank),
        ("psd", t.psd),
        ("type", t.typ),
        ("feas", t.feas),
    ] {
        if !(v.is_finite() && v > 0.0) {
            eprintln!("error: --tol-{name} must be positive and finite, got {v}");
            return ExitCode::from(2);
        }
    }
    let settings = Settings {
        tol: Tolerances {
            herm: t.herm,
            rank: t.rank,
            psd: t.psd,
            typ: t.typ,
            feas: t.feas,
        },
        seed: cli.seed,
    };
    let outcome = match &cli.command {
        Command::Analyze { pair } => cmd_analyze(pair, &settings),
        Command::Infimum { problem } => cmd_infimum(problem, &settings),
        Command::Minimize { problem, out } => cmd_minimize(problem, out, &settings),
        Command::Witness {
            problem,
            threshold,
            tmax,
        } => cmd_witness(problem, *threshold, *tmax, &settings),
        Command::Verify {
            problem,
            samples,
            spread,
        } => cmd_verify(
            problem,
            VerifyOptions {
                samples: *samples,
                spread: *spread,
            },
            &settings,
        ),
        Command::Gen { spec, out } => cmd_gen(spec, out, &settings),
    };
    // Write errors (a closed pipe) are not worth a panic.
    let mut out = std::io::stdout().lock();
    if cli.json {
        let _ = writeln!(out, "{}", outcome.report.to_json());
    } else {
        for line in &outcome.text {
            if line.starts_with("error: ") {
                eprintln!("{line}");
            } else {
                let _ = writeln!(out, "{line}");
            }
        }
    }
    ExitCode::from(outcome.exit_code() as u8)
}
