//! Run the bundled 12-question fixture end to end with a scripted backend,
//! then print the metrics table, the stability summary, and a metric
//! correlation — everything the CLI does, through the library API.
//!
//! Run with: `cargo run --example full_benchmark`

use std::path::Path;

use callnavi::runner::{self, BackendConfig, RunConfig, Strategy};
use callnavi::scoring::{self, NamePolicy};
use callnavi::strategies::{self, FormatConfig};

fn main() {
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures");
    let out = tempfile::tempdir().unwrap();
    let config = RunConfig {
        catalog: fixtures.join("banking_catalog.json"),
        questions: fixtures.join("questions12.json"),
        strategy: Strategy::Direct,
        primary: BackendConfig::Scripted {
            script: fixtures.join("direct_script.json"),
            // The script holds one response per question; looping lets the
            // three repetitions below replay it.
            loop_responses: true,
            name: None,
        },
        router: None,
        judge: None,
        repair: None,
        formats: FormatConfig::default(),
        repetitions: 3,
        concurrency: 4,
        max_depth: strategies::DEFAULT_MAX_DEPTH,
        policy: NamePolicy::default(),
        strict_validation: false,
        temperature: 0.0,
        output_dir: out.path().to_path_buf(),
    };

    let outcome = runner::run(&config).unwrap();
    println!(
        "executed {} record(s), {} failure(s); log at {}\n",
        outcome.records.len(),
        outcome.failures,
        config.log_path().display()
    );

    let report = runner::score_log(&outcome.records).unwrap();
    print!("{}", scoring::render_table(&report));

    println!();
    let stability = runner::stability_log(&outcome.records).unwrap();
    println!(
        "stability over {} repetitions: election mean {:.4}, levenshtein mean {:.4}",
        config.repetitions,
        stability.election_mean,
        stability.levenshtein_mean.unwrap()
    );

    let corr = runner::correlate(&[outcome.records], "structural", "ast").unwrap();
    println!(
        "pearson r(structural, ast) = {:.4} over {} records",
        corr.r, corr.pairs
    );
}
