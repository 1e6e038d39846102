use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use dvrf_lab::run::{run_path, RunOptions};
use dvrf_lab::svg::emit_svg;
use dvrf_lab::LabError;

#[derive(Parser)]
#[command(name = "dvrf", version, about = "Delta-velocity editing experiments on closed-form fields")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment config.
    Run {
        config: PathBuf,
        /// Output root (default: config `out_dir`, then $DVRF_OUT, then ./runs).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Plot two CSV columns as an SVG line chart.
    Plot {
        csv: PathBuf,
        #[arg(long)]
        x: String,
        #[arg(long)]
        y: String,
        /// One polyline per distinct value of this column.
        #[arg(long)]
        group: Option<String>,
        #[arg(long, short)]
        output: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result: Result<(), LabError> = match cli.command {
        Command::Run {
            config,
            out,
            seed,
            threads,
        } => run_path(
            &config,
            &RunOptions {
                out_root: out,
                seed,
                threads,
            },
        )
        .map(|o| println!("{}", o.dir.display())),
        Command::Plot {
            csv,
            x,
            y,
            group,
            output,
        } => emit_svg(&csv, &x, &y, group.as_deref(), &output),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
