use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use yamabe_cli::config::Overrides;
use yamabe_cli::{plots, run_batch, run_file, RunSummary};

#[derive(Parser)]
#[command(name = "yamabe", version, about = "Prescribed scalar curvature scenarios on slab grids")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario config and write its report.
    Run {
        config: PathBuf,
        /// Report path; defaults to the config's output.report or `<name>.report.json`.
        #[arg(long)]
        report: Option<PathBuf>,
        #[command(flatten)]
        flags: Flags,
    },
    /// Run every config in a directory.
    Batch {
        dir: PathBuf,
        /// Directory for the reports; defaults to `<dir>/reports`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Scenarios run concurrently.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[command(flatten)]
        flags: Flags,
    },
    /// Write mid-plane CSV slices of the fields dumped by a run.
    Plots {
        report: PathBuf,
        /// Output directory; defaults to the report's directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Node index along the last axis; defaults to the middle layer.
        #[arg(long)]
        index: Option<usize>,
    },
}

#[derive(Args)]
struct Flags {
    #[arg(long)]
    tol_residual: Option<f64>,
    #[arg(long)]
    max_steps: Option<usize>,
    /// Write the solution and related fields next to the report.
    #[arg(long)]
    dump_fields: bool,
    #[arg(long)]
    eps_sign: Option<f64>,
}

impl From<Flags> for Overrides {
    fn from(f: Flags) -> Self {
        Overrides {
            tol_residual: f.tol_residual,
            max_steps: f.max_steps,
            eps_sign: f.eps_sign,
            dump_fields: f.dump_fields,
        }
    }
}

fn print_summary(s: &RunSummary) {
    let status = match s.exit_code {
        0 => "passed",
        2 => "config error",
        3 => "no recipe",
        _ => "failed",
    };
    match &s.report_path {
        Some(p) => println!("{}: {status} (exit {}), report {}", s.name, s.exit_code, p.display()),
        None => println!("{}: {status} (exit {})", s.name, s.exit_code),
    }
    if let Some(m) = &s.message {
        eprintln!("{}: {m}", s.name);
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Run { config, report, flags } => {
            let summary = run_file(&config, report.as_deref(), &flags.into());
            print_summary(&summary);
            summary.exit_code
        }
        Command::Batch { dir, out, jobs, flags } => {
            let out = out.unwrap_or_else(|| dir.join("reports"));
            match run_batch(&dir, &out, &flags.into(), jobs) {
                Ok(list) => {
                    list.iter().for_each(print_summary);
                    list.iter().map(|s| s.exit_code).max().unwrap_or(0)
                }
                Err(e) => {
                    eprintln!("cannot read {}: {e}", dir.display());
                    2
                }
            }
        }
        Command::Plots { report, out, index } => {
            let out = out.unwrap_or_else(|| report.parent().map(PathBuf::from).unwrap_or_default());
            match plots::emit_plots(&report, &out, index) {
                Ok(files) => {
                    for f in files {
                        println!("{}", f.display());
                    }
                    0
                }
                Err(e) => {
                    eprintln!("plots: {e}");
                    2
                }
            }
        }
    };
    ExitCode::from(code as u8)
}
