use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::Parser;
use log::error;

use weightforge::problem::{run, Command, Overrides, ProblemFile, INPUT_ERROR};

/// Certified weights for operators on finite measure spaces.
#[derive(Parser, Debug)]
#[command(name = "weightforge", version)]
struct Cli {
    /// Problem file (JSON).
    #[arg(long)]
    input: PathBuf,
    /// Report destination; stdout when omitted.
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    budget: Option<usize>,
    /// One of rho, lambda, dominate, endo, conjugate, kernel, counterexample, verify.
    #[arg(long)]
    command: Option<Command>,
}

fn write_atomic(path: &Path, text: &str) -> std::io::Result<()> {
    let dir = path
        .parent()
        .filter(|d| !d.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let tmp = dir.join(format!(".{name}.{}.tmp", std::process::id()));
    let mut f = fs::File::create(&tmp)?;
    f.write_all(text.as_bytes())?;
    f.sync_all()?;
    fs::rename(&tmp, path)
}

fn configure_threads() {
    if let Some(n) = std::env::var("WEIGHTFORGE_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
    {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
        {
            error!("could not size the thread pool: {e}");
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    configure_threads();
    let text = match fs::read_to_string(&cli.input) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", cli.input.display());
            return ExitCode::from(INPUT_ERROR as u8);
        }
    };
    let overrides = Overrides {
        command: cli.command,
        seed: cli.seed,
        tol: cli.tol,
        budget: cli.budget,
    };
    let report = match ProblemFile::parse(&text).and_then(|p| run(&p, overrides)) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(INPUT_ERROR as u8);
        }
    };
    let json = report.to_json();
    match &cli.output {
        Some(path) => {
            if let Err(e) = write_atomic(path, &json) {
                eprintln!("error: cannot write {}: {e}", path.display());
                return ExitCode::from(INPUT_ERROR as u8);
            }
        }
        None => print!("{json}"),
    }
    ExitCode::from(report.status.exit_code() as u8)
}
