use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand, ValueEnum};
use hecke::pseries::C;
use hecke::suites::{run, Command, Curve, RunConfig};

#[derive(Parser, Debug)]
#[command(name = "hecke-lab", about = "Run verification suites for Hecke modifications and write a JSON report")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,

    /// Lattice parameter tau as `RE,IM`.
    #[arg(long, global = true, value_parser = parse_tau, default_value = "0.21,1.3")]
    tau: C,

    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Overrides the number of samples drawn by the suite.
    #[arg(long, global = true)]
    samples: Option<usize>,

    /// Overrides the tolerance of every numeric check.
    #[arg(long, global = true)]
    tol: Option<f64>,

    /// Report path; the report goes to stdout when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    VerifyTheta,
    VerifyEta,
    VerifyRationalTables,
    VerifyEllipticTables,
    VerifyDoubleTable,
    /// Membership in the space of Hecke modifications of length n.
    ComputeSpace {
        #[arg(value_enum)]
        curve: CurveArg,
        n: usize,
    },
    CheckConjecture {
        m: usize,
    },
    EmbedCheck,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum CurveArg {
    #[value(name = "S2")]
    S2,
    #[value(name = "T2")]
    T2,
}

fn parse_tau(s: &str) -> anyhow::Result<C> {
    let Some((re, im)) = s.split_once(',') else {
        bail!("expected RE,IM");
    };
    let tau = C::new(re.trim().parse()?, im.trim().parse()?);
    if !(tau.im > 0.0) {
        bail!("Im tau must be positive");
    }
    Ok(tau)
}

fn main() -> anyhow::Result<ExitCode> {
    let cli = Cli::parse();
    let command = match cli.command {
        Cmd::VerifyTheta => Command::VerifyTheta,
        Cmd::VerifyEta => Command::VerifyEta,
        Cmd::VerifyRationalTables => Command::VerifyRationalTables,
        Cmd::VerifyEllipticTables => Command::VerifyEllipticTables,
        Cmd::VerifyDoubleTable => Command::VerifyDoubleTable,
        Cmd::ComputeSpace { curve: CurveArg::S2, n } => Command::ComputeSpace { curve: Curve::S2, n },
        Cmd::ComputeSpace { curve: CurveArg::T2, n } => Command::ComputeSpace { curve: Curve::T2, n },
        Cmd::CheckConjecture { m } => Command::CheckConjecture { m },
        Cmd::EmbedCheck => Command::EmbedCheck,
    };
    let cfg = RunConfig { tau: cli.tau, seed: cli.seed, samples: cli.samples, tol: cli.tol };
    let report = run(&command, &cfg).with_context(|| format!("invalid configuration for {command}"))?;
    let text = report.to_json();
    match &cli.out {
        Some(path) => std::fs::write(path, &text).with_context(|| format!("writing {}", path.display()))?,
        None => print!("{text}"),
    }
    eprintln!(
        "{command}: {} of {} checks passed over {} samples",
        report.summary.passed, report.summary.checks, report.summary.samples
    );
    Ok(if report.passed() { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}
