use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use parabolic_sv_cli::{exit_code, run, Command};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Cmd {
    Price,
    Simulate,
    Calibrate,
    Diagnose,
}

/// First-order option pricing under a two-factor stochastic volatility model
/// with a parabolic slow factor.
#[derive(Debug, Parser)]
#[command(name = "psv", version)]
struct Args {
    #[arg(value_enum)]
    command: Cmd,
    /// Flat `key = value` configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Also write the report as comma-delimited text.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write simulated paths (path,time,x,y,z); `simulate` only.
    #[arg(long)]
    paths_dump: Option<PathBuf>,
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let command = match args.command {
        Cmd::Price => Command::Price,
        Cmd::Simulate => Command::Simulate,
        Cmd::Calibrate => Command::Calibrate,
        Cmd::Diagnose => Command::Diagnose,
    };
    match run(command, &args.config, args.out.as_deref(), args.paths_dump.as_deref()) {
        Ok(report) => {
            print!("{report}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
