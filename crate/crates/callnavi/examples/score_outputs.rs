//! Score raw model outputs against ground truths and print the aggregated
//! metrics table.
//!
//! Run with: `cargo run --example score_outputs`

use indexmap::IndexMap;

use callnavi::codec::RawOutput;
use callnavi::dataset::{Difficulty, GroundTruth};
use callnavi::scoring::{self, NamePolicy};

fn gt(apis: &[&str], args: &[&[(&str, &str)]]) -> GroundTruth {
    GroundTruth {
        api_sequence: apis.iter().map(|s| s.to_string()).collect(),
        args_sequence: args
            .iter()
            .map(|step| {
                step.iter()
                    .map(|(k, v)| (k.to_string(), v.to_string()))
                    .collect::<IndexMap<_, _>>()
            })
            .collect(),
    }
}

fn main() {
    let policy = NamePolicy::default();
    let cases = [
        (
            "perfect",
            Difficulty::Easy,
            r#"{"API": ["getAccountBalance"], "parameters": [{"accountID": "987654"}]}"#.to_string(),
            gt(&["getAccountBalance"], &[&[("accountID", "987654")]]),
        ),
        (
            "fenced",
            Difficulty::Easy,
            "```json\n{\"API\": [\"getAccountBalance\"], \"parameters\": [{\"accountID\": \"987654\"}]}\n```".to_string(),
            gt(&["getAccountBalance"], &[&[("accountID", "987654")]]),
        ),
        (
            "wrong-value",
            Difficulty::Medium,
            r#"{"API": ["getAccountBalance"], "parameters": [{"accountID": "111111"}]}"#.to_string(),
            gt(&["getAccountBalance"], &[&[("accountID", "987654")]]),
        ),
        (
            "refusal",
            Difficulty::Hard,
            "I'd rather not.".to_string(),
            gt(&["getAccountBalance"], &[&[("accountID", "987654")]]),
        ),
    ];

    let mut records = Vec::new();
    for (id, difficulty, text, gt) in cases {
        let raw = RawOutput::json(text);
        let evaluation = scoring::evaluate_one(id, difficulty, &raw, &gt, policy, None);
        let r = &evaluation.record;
        println!(
            "{id:<12} syntax={} repaired={} post_repair={} routing={} structural={} ast={}",
            r.syntax_valid, r.repaired, r.post_repair_valid, r.routing_match, r.structural,
            r.ast_exact
        );
        records.push(evaluation.record);
    }

    println!();
    let report = scoring::aggregate(&records).unwrap();
    print!("{}", scoring::render_table(&report));
}
