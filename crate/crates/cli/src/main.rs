//! `levyou`: spectral analysis of Lévy-driven Ornstein-Uhlenbeck models from
//! a JSON model description.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::{Failure, Format};

#[derive(Parser)]
#[command(name = "levyou", version, about = "Spectral analysis of Levy-driven Ornstein-Uhlenbeck semigroups")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Io {
    /// Model configuration (strict JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output file.
    #[arg(long)]
    out: PathBuf,
    /// Output format; inferred from the `--out` extension when omitted.
    #[arg(long, value_enum)]
    format: Option<Format>,
}

impl Io {
    fn format(&self) -> Format {
        self.format.unwrap_or(match self.out.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("csv") => Format::Csv,
            _ => Format::Json,
        })
    }
}

#[derive(Subcommand)]
enum Command {
    /// Eigenvalue lattice with drift and generator multiplicities.
    Spectrum {
        #[command(flatten)]
        io: Io,
    },
    /// Eigenfunctions H_n, co-eigenfunctions G_n and constants c_n.
    Eigen {
        #[command(flatten)]
        io: Io,
        /// Multi-indices such as `2,0`; repeat the flag or separate with `;`.
        #[arg(long = "n", required = true)]
        n: Vec<String>,
    },
    /// Invariant density or one of its partial derivatives.
    Density {
        #[command(flatten)]
        io: Io,
        /// Derivative multi-index such as `1,0`.
        #[arg(long)]
        deriv: Option<String>,
    },
    /// Transition density of X_t started at x.
    Transition {
        #[command(flatten)]
        io: Io,
        #[arg(long)]
        t: f64,
        #[arg(long, allow_hyphen_values = true)]
        x: String,
    },
    /// Truncated Mehler series and closed form at (x, y).
    Mehler {
        #[command(flatten)]
        io: Io,
        #[arg(long)]
        t: f64,
        #[arg(long, allow_hyphen_values = true)]
        x: String,
        #[arg(long, allow_hyphen_values = true)]
        y: String,
        #[arg(long = "N", default_value_t = 20)]
        cutoff: usize,
    },
    /// Samples of X_t started at x.
    Simulate {
        #[command(flatten)]
        io: Io,
        #[arg(long)]
        t: f64,
        #[arg(long, allow_hyphen_values = true)]
        x: String,
        #[arg(long = "N")]
        count: usize,
    },
    /// Runs the invariant suite and writes a pass/fail table.
    Verify {
        #[command(flatten)]
        io: Io,
    },
    /// Assumption and compactness report.
    Diagnose {
        #[command(flatten)]
        io: Io,
    },
}

impl Command {
    fn io(&self) -> &Io {
        match self {
            Command::Spectrum { io }
            | Command::Eigen { io, .. }
            | Command::Density { io, .. }
            | Command::Transition { io, .. }
            | Command::Mehler { io, .. }
            | Command::Simulate { io, .. }
            | Command::Verify { io }
            | Command::Diagnose { io } => io,
        }
    }
}

fn configure_threads() {
    if let Some(n) = std::env::var("LEVYOU_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        if n > 0 {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
}

fn run(cmd: &Command) -> Result<(), Failure> {
    let io = cmd.io();
    let loaded = config::load(&io.config)?;
    let (out, format) = (io.out.as_path(), io.format());
    match cmd {
        Command::Spectrum { .. } => commands::spectrum(&loaded, out, format),
        Command::Eigen { n, .. } => commands::eigen(&loaded, n, out, format),
        Command::Density { deriv, .. } => commands::density(&loaded, deriv.as_deref(), out, format),
        Command::Transition { t, x, .. } => commands::transition(&loaded, *t, x, out, format),
        Command::Mehler { t, x, y, cutoff, .. } => commands::mehler(&loaded, *t, x, y, *cutoff, out, format),
        Command::Simulate { t, x, count, .. } => commands::simulate(&loaded, *t, x, *count, out, format),
        Command::Verify { .. } => commands::verify(&loaded, out, format),
        Command::Diagnose { .. } => commands::diagnose(&loaded, out, format),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    configure_threads();
    match run(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("levyou: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
