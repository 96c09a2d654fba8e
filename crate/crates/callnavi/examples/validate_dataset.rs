//! Load a catalog and question file, cross-check them, and print any
//! diagnostics.
//!
//! Run with: `cargo run --example validate_dataset`

use std::path::Path;

use callnavi::dataset;

fn main() {
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures");
    let catalog = dataset::load_catalog(fixtures.join("banking_catalog.json")).unwrap();
    let pairs = dataset::load_questions(fixtures.join("questions12.json")).unwrap();

    println!("catalog {:?}: {} APIs", catalog.domain, catalog.specs.len());
    let mut total = 0;
    for (question, gt) in &pairs {
        let diags = dataset::validate_against_catalog(&question.id, gt, &catalog, false).unwrap();
        for d in &diags {
            println!("  {d}");
        }
        total += diags.len();
    }
    println!("{} questions checked, {total} diagnostic(s)", pairs.len());

    // A ground truth naming an unknown API is reported, not rejected...
    let bad = dataset::GroundTruth {
        api_sequence: vec!["getImaginaryApi".into()],
        args_sequence: vec![Default::default()],
    };
    let diags = dataset::validate_against_catalog("demo", &bad, &catalog, false).unwrap();
    println!("lenient mode: {}", diags[0]);

    // ...unless strict validation is requested.
    let err = dataset::validate_against_catalog("demo", &bad, &catalog, true).unwrap_err();
    println!("strict mode: {err}");
}
