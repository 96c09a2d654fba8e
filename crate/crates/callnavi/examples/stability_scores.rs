//! Election and Levenshtein stability over repeated outputs for the same
//! question.
//!
//! Run with: `cargo run --example stability_scores`

use callnavi::stability::{self, StabilityRun};

fn main() {
    let runs = [
        ("unanimous", vec!["plan-A"; 5]),
        ("tied", vec!["plan-A", "plan-A", "plan-B", "plan-B", "plan-C"]),
        ("mostly-stable", vec!["plan-A", "plan-A", "plan-A", "plan-A", "plan-B"]),
        ("near-identical", vec!["abcd", "abce", "abcd", "abcd", "abcd"]),
    ];

    for (label, outputs) in runs {
        let owned: Vec<String> = outputs.iter().map(|s| s.to_string()).collect();
        let run = StabilityRun::from_raw(label, &owned);
        let election = stability::election_score(&run).unwrap();
        let levenshtein = stability::levenshtein_stability(&run).unwrap();
        println!("{label:<16} election = {election:.4}  levenshtein = {levenshtein:.4}");
    }

    // Normalization makes cosmetic differences (case, fences, spacing)
    // count as the same output.
    let cosmetic = [
        "```json\n{\"API\": [\"getAccountBalance\"]}\n```".to_string(),
        "{\"api\":  [\"getaccountbalance\"]}".to_string(),
    ];
    let run = StabilityRun::from_raw("cosmetic", &cosmetic);
    println!(
        "cosmetic variants normalize to the same text: {}",
        run.outputs[0] == run.outputs[1]
    );
}
