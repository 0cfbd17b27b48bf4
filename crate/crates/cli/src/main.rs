use std::io::{Read, Write};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, ValueEnum};
use germlab::json::canonical_string;
use germlab_cli::run::render_schema_text;
use germlab_cli::*;

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Format {
    Json,
    Text,
}

/// Runs a germlab manifest and writes a report.
#[derive(Parser, Debug)]
#[command(name = "germlab", version)]
struct Args {
    /// Manifest file; stdin when omitted.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Report destination; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
    /// Worker threads.
    #[arg(long, env = "GERMLAB_THREADS")]
    threads: Option<usize>,
    /// Overrides the manifest's degree budget.
    #[arg(long)]
    budget_degree: Option<u32>,
    /// Re-check every reported witness against the input.
    #[arg(long)]
    verify_witness: bool,
}

fn write_out(args: &Args, text: &str) -> std::io::Result<()> {
    match &args.out {
        Some(p) => std::fs::write(p, text),
        None => std::io::stdout().write_all(text.as_bytes()),
    }
}

fn main() -> ExitCode {
    let args = Args::parse();
    if let Some(k) = args.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build_global()
        {
            eprintln!("germlab: cannot set up {k} threads: {e}");
            return ExitCode::from(2);
        }
    }
    let bytes = match &args.manifest {
        Some(p) => std::fs::read(p),
        None => {
            let mut buf = Vec::new();
            std::io::stdin().read_to_end(&mut buf).map(|_| buf)
        }
    };
    let bytes = match bytes {
        Ok(b) => b,
        Err(e) => {
            eprintln!("germlab: cannot read manifest: {e}");
            return ExitCode::from(2);
        }
    };
    let start = Instant::now();
    let (text, code) = match parse_manifest(&bytes) {
        Err(errors) => {
            let text = match args.format {
                Format::Json => canonical_string(&schema_report(&errors, &digest(&bytes))),
                Format::Text => render_schema_text(&errors),
            };
            (text, 2)
        }
        Ok(mut m) => {
            if let Some(d) = args.budget_degree {
                m.budgets.degree = d;
            }
            let outcome = run(&m, args.verify_witness);
            let elapsed = start.elapsed().as_secs_f64() * 1e3;
            let text = match args.format {
                Format::Json => canonical_string(&report_json(&m, &outcome, Some(elapsed))),
                Format::Text => render_text(&m, &outcome),
            };
            (text, outcome.exit_code)
        }
    };
    if let Err(e) = write_out(&args, &text) {
        eprintln!("germlab: cannot write report: {e}");
        return ExitCode::from(2);
    }
    ExitCode::from(code as u8)
}
