use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use log::error;

/// Principal spectrum points and weighted roots for nonlocal dispersal with
/// time-periodic weights.
#[derive(Parser, Debug)]
#[command(name = "perispec", version)]
struct Args {
    /// Experiment config file.
    config: PathBuf,

    /// Directory for CSV, summary.json and report.txt.
    #[arg(long)]
    output_dir: Option<PathBuf>,

    /// Worker threads for independent λ evaluations and period-map columns.
    #[arg(long, env = "PERISPEC_THREADS")]
    threads: Option<usize>,

    /// Increase log detail (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count)]
    verbose: u8,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let level = match args.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .parse_default_env()
        .init();

    if let Some(n) = args.threads {
        if n == 0 {
            error!("--threads must be positive");
            return ExitCode::from(perispec_cli::EXIT_CONFIG as u8);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            error!("cannot configure thread pool: {e}");
        }
    }

    match perispec_cli::run(&args.config, args.output_dir.as_deref()) {
        Ok(report) => {
            print!("{}", report.text());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("perispec: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
