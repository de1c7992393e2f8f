use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use serde_json::json;
use slmod_cli::{parse_config, run, write_artifacts, RunError};

#[derive(Debug, Parser)]
#[command(name = "slmod", version, about = "Spectral diagnostics for modulated Sturm-Liouville operators")]
struct Args {
    /// Run configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `out` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; overrides `jobs` in the config.
    #[arg(long)]
    jobs: Option<usize>,
    /// Also write an SVG chart of the primary series.
    #[arg(long)]
    plot: bool,
}

fn fail(code: u8, kind: &str, message: String, line: Option<usize>) -> ExitCode {
    let record = json!({ "error": kind, "message": message, "line": line });
    eprintln!("{record}");
    ExitCode::from(code)
}

fn main() -> ExitCode {
    let args = Args::parse();
    let text = match std::fs::read_to_string(&args.config) {
        Ok(t) => t,
        Err(e) => return fail(2, "config", format!("cannot read {}: {e}", args.config.display()), None),
    };
    let mut cfg = match parse_config(&text) {
        Ok(c) => c,
        Err(e) => return fail(2, "config", e.message, e.line),
    };
    if let Some(out) = args.out {
        cfg.out = out;
    }
    if let Some(jobs) = args.jobs {
        cfg.jobs = jobs;
    }
    cfg.plot |= args.plot;

    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cfg.jobs).build() {
        Ok(p) => p,
        Err(e) => return fail(3, "numeric", format!("cannot start worker pool: {e}"), None),
    };
    let result = pool.install(|| run(&cfg)).and_then(|art| {
        let paths = write_artifacts(&cfg.out, &art)?;
        Ok((art, paths))
    });
    match result {
        Ok((art, paths)) => {
            for line in &art.summary {
                println!("{line}");
            }
            for p in paths {
                println!("wrote {}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(RunError::Numeric(e)) => fail(3, "numeric", e.to_string(), None),
        Err(e @ RunError::Io { .. }) => fail(3, "io", e.to_string(), None),
    }
}
