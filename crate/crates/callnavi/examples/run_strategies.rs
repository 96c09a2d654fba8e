//! Drive one question through all three inference strategies with scripted
//! backends and show the recovered plans.
//!
//! Run with: `cargo run --example run_strategies`

use std::path::Path;

use callnavi::backends::{CompletionOptions, ScriptedBackend};
use callnavi::dataset;
use callnavi::strategies::{self, FormatConfig};

fn main() {
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures");
    let catalog = dataset::load_catalog(fixtures.join("banking_catalog.json")).unwrap();
    let pairs = dataset::load_questions(fixtures.join("questions12.json")).unwrap();
    let (question, gt) = pairs.iter().find(|(q, _)| q.id == "ban081").unwrap();
    let formats = FormatConfig::default();
    let options = CompletionOptions::default();

    println!("question: {}", question.user_content());
    println!("reference sequence: {:?}\n", gt.api_sequence);

    // Direct: one completion with the full catalog.
    let direct = ScriptedBackend::new("direct").with_response(
        "ban081",
        r#"{"API": ["getCustomerCreditCards", "getCreditCardDetails", "getCurrencyExchangeRates"], "parameters": [{"customerID": "123155"}, {"creditCardNumber": "$$$"}, {"currencyPair": "$$$"}]}"#,
    );
    let outcome =
        strategies::run_direct(&direct, &catalog, question, formats, &options).unwrap();
    println!("direct plan: {:?}", outcome.plan.unwrap().api_names());

    // Two-step: a router picks the APIs, a second model fills parameters
    // from a catalog filtered to the routed names.
    let router = ScriptedBackend::new("router").with_response(
        "ban081",
        r#"["getCustomerCreditCards", "getCreditCardDetails", "getCurrencyExchangeRates"]"#,
    );
    let paramgen = ScriptedBackend::new("paramgen").with_response(
        "ban081",
        r#"{"API": ["getCustomerCreditCards", "getCreditCardDetails", "getCurrencyExchangeRates"], "parameters": [{"customerID": "123155"}, {"creditCardNumber": "$$$"}, {"currencyPair": "$$$"}]}"#,
    );
    let outcome =
        strategies::run_two_step(&router, &paramgen, &catalog, question, formats, &options)
            .unwrap();
    println!("two-step route: {:?}", outcome.route);
    println!("two-step plan:  {:?}", outcome.plan.unwrap().api_names());

    // Backward: start from the final call and chase missing parameters to
    // supplier APIs; the discovered chain reverses into execution order.
    let backward = ScriptedBackend::new("backward").with_responses(
        "ban081",
        vec![
            "getCurrencyExchangeRates".into(),
            r#"{"currencyPair": "$$$"}"#.into(),
            "getCreditCardDetails".into(),
            r#"{"creditCardNumber": "$$$"}"#.into(),
            "getCustomerCreditCards".into(),
            r#"{"customerID": "123155"}"#.into(),
        ],
    );
    let outcome = strategies::run_backward(
        &backward,
        &catalog,
        question,
        formats,
        &options,
        strategies::DEFAULT_MAX_DEPTH,
    )
    .unwrap();
    println!("backward plan:  {:?}", outcome.plan.api_names());
    println!("backward turns:");
    for turn in &outcome.trace {
        println!("  {:<40} -> {}", turn.tag, turn.response.replace('\n', " "));
    }
}
