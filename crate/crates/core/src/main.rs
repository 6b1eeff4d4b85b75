use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use dualflow::cli::{self, Mode, EXIT_ABORT};

#[derive(Parser)]
#[command(name = "dualflow", version, about = "Contracting curvature flows in hyperbolic space and their de Sitter duals")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the flow described by a configuration file.
    Run { config: PathBuf },
    /// Run the static duality and curvature-function checks for a configuration.
    Verify { config: PathBuf },
    /// Print the closed-form spherical solution.
    Spherical {
        #[arg(long, allow_hyphen_values = true)]
        r0: f64,
        #[arg(long, default_value_t = 20)]
        points: usize,
    },
    /// Run every *.cfg file in a directory (pool size from DUALFLOW_THREADS).
    Sweep { dir: PathBuf },
}

fn run_file(path: &Path, force_verify: bool) -> u8 {
    let mut manifest = match cli::load_manifest(path) {
        Ok(m) => m,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_ABORT as u8;
        }
    };
    if force_verify {
        manifest.mode = Mode::Verify;
    }
    match cli::execute(&manifest) {
        Ok(report) => {
            if let Some(f) = &report.failure {
                eprintln!("{}: {}", f.kind, f.message);
            }
            println!(
                "{} records written to {} (exit {})",
                report.records.len(),
                manifest.out.display(),
                report.exit_code
            );
            report.exit_code as u8
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_ABORT as u8
        }
    }
}

fn main() -> ExitCode {
    let args = Cli::parse();
    let code = match args.command {
        Command::Run { config } => run_file(&config, false),
        Command::Verify { config } => run_file(&config, true),
        Command::Spherical { r0, points } => match cli::spherical_table(r0, points) {
            Ok(table) => {
                print!("{table}");
                0
            }
            Err(e) => {
                eprintln!("error: {e}");
                EXIT_ABORT as u8
            }
        },
        Command::Sweep { dir } => match cli::sweep(&dir) {
            Ok(results) => {
                for (path, code) in &results {
                    println!("{} {}", code, path.display());
                }
                results.iter().map(|(_, c)| *c).max().unwrap_or(0) as u8
            }
            Err(e) => {
                eprintln!("error: {e}");
                EXIT_ABORT as u8
            }
        },
    };
    ExitCode::from(code)
}
