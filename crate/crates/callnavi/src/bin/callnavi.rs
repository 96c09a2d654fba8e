//! Thin command-line front end over the library: dataset validation,
//! benchmark runs, and log-level reporting.
//!
//! Exit codes: 0 on success, 1 when the work itself surfaced problems
//! (validation diagnostics, failed questions), 2 on configuration or I/O
//! errors.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use callnavi::dataset;
use callnavi::runner::{self, RunConfig};
use callnavi::scoring;

#[derive(Parser)]
#[command(name = "callnavi", about = "Function-calling benchmark harness", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a question file against an API catalog.
    Validate {
        #[arg(long)]
        catalog: PathBuf,
        #[arg(long)]
        questions: PathBuf,
        /// Treat any diagnostic as an error.
        #[arg(long)]
        strict: bool,
    },
    /// Execute a benchmark run described by a JSON config file.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
    /// Score one or more run logs and print the metrics table.
    Score {
        #[arg(long, required = true, num_args = 1..)]
        log: Vec<PathBuf>,
    },
    /// Election and Levenshtein stability over a log's repetitions.
    Stability {
        #[arg(long)]
        log: PathBuf,
    },
    /// Full report over one or more logs, optionally correlating two
    /// metrics (routing, syntax, post_repair, structural, ast, judge).
    Report {
        #[arg(long, required = true, num_args = 1..)]
        log: Vec<PathBuf>,
        #[arg(long, num_args = 2, value_names = ["METRIC_A", "METRIC_B"])]
        correlate: Option<Vec<String>>,
    },
}

fn main() -> ExitCode {
    match dispatch(Cli::parse().command) {
        Ok(code) => code,
        Err(message) => {
            eprintln!("error: {message}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(command: Command) -> Result<ExitCode, String> {
    match command {
        Command::Validate { catalog, questions, strict } => {
            let catalog = dataset::load_catalog(&catalog).map_err(|e| e.to_string())?;
            let pairs = dataset::load_questions(&questions).map_err(|e| e.to_string())?;
            let mut total = 0;
            for (q, gt) in &pairs {
                let diags = dataset::validate_against_catalog(&q.id, gt, &catalog, strict)
                    .map_err(|e| e.to_string())?;
                for d in &diags {
                    println!("{d}");
                }
                total += diags.len();
            }
            println!(
                "validated {} questions against {} APIs: {total} diagnostic(s)",
                pairs.len(),
                catalog.specs.len()
            );
            Ok(if total == 0 { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
        Command::Run { config } => {
            let config = RunConfig::load(&config).map_err(|e| e.to_string())?;
            let outcome = runner::run(&config).map_err(|e| e.to_string())?;
            println!(
                "run complete: {} record(s), {} resumed, {} failure(s); log at {}",
                outcome.records.len(),
                outcome.resumed,
                outcome.failures,
                config.log_path().display()
            );
            Ok(if outcome.failures == 0 { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
        Command::Score { log } => {
            let records = load_logs(&log)?;
            let report = runner::score_log(&records).map_err(|e| e.to_string())?;
            print!("{}", scoring::render_table(&report));
            for d in &report.diagnostics {
                println!("note: {d}");
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Stability { log } => {
            let records = runner::load_log(&log).map_err(|e| e.to_string())?;
            let report = runner::stability_log(&records).map_err(|e| e.to_string())?;
            println!("{:<12}{:>6}{:>12}{:>14}", "question", "reps", "election", "levenshtein");
            for q in &report.per_question {
                let lev = q
                    .levenshtein
                    .map(|v| format!("{v:>14.4}"))
                    .unwrap_or_else(|| format!("{:>14}", "-"));
                println!("{:<12}{:>6}{:>12.4}{lev}", q.question_id, q.repetitions, q.election);
            }
            print!("mean election: {:.4}", report.election_mean);
            match report.levenshtein_mean {
                Some(v) => println!(", mean levenshtein: {v:.4}"),
                None => println!(),
            }
            for notice in &report.notices {
                println!("note: {notice}");
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Report { log, correlate } => {
            let mut logs = Vec::new();
            for path in &log {
                logs.push(runner::load_log(path).map_err(|e| e.to_string())?);
            }
            for (path, records) in log.iter().zip(&logs) {
                println!("== {}", path.display());
                let report = runner::score_log(records).map_err(|e| e.to_string())?;
                print!("{}", scoring::render_table(&report));
                println!();
            }
            if let Some(metrics) = correlate {
                let corr = runner::correlate(&logs, &metrics[0], &metrics[1])
                    .map_err(|e| e.to_string())?;
                println!(
                    "pearson r({}, {}) = {:.4} over {} pair(s)",
                    corr.metric_a, corr.metric_b, corr.r, corr.pairs
                );
                for notice in &corr.notices {
                    println!("note: {notice}");
                }
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn load_logs(paths: &[PathBuf]) -> Result<Vec<runner::RunRecord>, String> {
    let mut records = Vec::new();
    for path in paths {
        records.extend(runner::load_log(path).map_err(|e| e.to_string())?);
    }
    Ok(records)
}
