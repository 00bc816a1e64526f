use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use islnet::cli::{self, CliError, Verdict};

#[derive(Parser)]
#[command(name = "islnet", version, about = "Run and inspect ISL network scenarios")]
struct Args {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a scenario file into a fresh workspace.
    Run {
        file: PathBuf,
        #[arg(long)]
        workspace: PathBuf,
    },
    /// Print registry, balances, provenance <addr> or graph <node>.
    Inspect {
        dir: PathBuf,
        #[arg(required = true, num_args = 1..=2)]
        what: Vec<String>,
    },
    /// Replay the ledger log and compare with the stored state.
    Replay { dir: PathBuf },
}

fn fail(e: &CliError) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(e.exit_code() as u8)
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match args.command {
        Cmd::Run { file, workspace } => {
            let outcome = cli::run(&file, &workspace);
            print!("{}", outcome.output);
            match outcome.error {
                None => ExitCode::SUCCESS,
                Some(e) => fail(&e),
            }
        }
        Cmd::Inspect { dir, what } => match cli::inspect(&dir, &what) {
            Ok(report) => {
                print!("{report}");
                ExitCode::SUCCESS
            }
            Err(e) => fail(&e),
        },
        Cmd::Replay { dir } => match cli::replay(&dir) {
            Ok(v) => {
                println!("{v}");
                if v == Verdict::Match {
                    ExitCode::SUCCESS
                } else {
                    ExitCode::from(1)
                }
            }
            Err(e) => fail(&e),
        },
    }
}
