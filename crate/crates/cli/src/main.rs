use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;
mod plotdata;

/// Online metric-depth calibration: trials, benchmark suites, regressor fits.
#[derive(Debug, Parser)]
#[command(name = "depthcal", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one trial and write its CSV report and manifest.
    Run {
        /// Scene config (.toml or .json).
        scene: PathBuf,
        #[arg(long, default_value = "hybrid")]
        method: String,
        /// Overrides the scene's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Drive the end effector toward the scene's goal pixel.
        #[arg(long)]
        control: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run every (scene, method, seed) cell of a suite and write aggregate tables.
    Suite {
        suite: PathBuf,
        /// Concurrent cells; 0 uses every core, 1 runs sequentially.
        #[arg(long, default_value_t = 0)]
        jobs: usize,
        /// Exit 1 unless hybrid <= kf <= static_scale in every scene.
        #[arg(long)]
        assert_ordering: bool,
        #[arg(long, default_value = "results")]
        out: PathBuf,
    },
    /// Fit regressor families to `r,z` pairs and rank them by fit percentage.
    Fitbench {
        pairs: PathBuf,
        /// Comma-separated family names; all families by default.
        #[arg(long, value_delimiter = ',')]
        families: Vec<String>,
        /// Also write the report as CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sample `r,z` pairs over a scene's task mask.
    Pairs {
        scene: PathBuf,
        /// Single frame to sample; every frame when omitted.
        #[arg(long)]
        frame: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Collect trial reports into one long-format CSV for plotting.
    Plotdata {
        /// Report directories, or directories containing them.
        #[arg(required = true)]
        reports: Vec<PathBuf>,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(commands::EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Run { scene, method, seed, control, out } => commands::run(&scene, &method, seed, control, &out),
        Command::Suite { suite, jobs, assert_ordering, out } => commands::suite(&suite, jobs, assert_ordering, &out),
        Command::Fitbench { pairs, families, out } => commands::fitbench(&pairs, &families, out.as_deref()),
        Command::Pairs { scene, frame, out } => commands::pairs(&scene, frame, &out),
        Command::Plotdata { reports, out } => plotdata::run(&reports, out.as_deref()),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
