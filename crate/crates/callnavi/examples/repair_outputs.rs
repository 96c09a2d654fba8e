//! Walk a few broken model outputs through the deterministic repair
//! pipeline and show which steps fired.
//!
//! Run with: `cargo run --example repair_outputs`

use callnavi::codec::{self, RawOutput};

fn main() {
    let samples = [
        "```json\n{\"API\": [\"getAccountBalance\"], \"parameters\": [{\"accountID\": \"987654\"}]}\n```",
        "Sure! Here is the plan:\n{\"API\": [\"getBranchInfo\"], \"parameters\": [{\"branchID\": \"BR12\"}]}",
        "{\"API\": [\"getCustomerCreditCards\"], \"parameters\": [{\"customerID\": \"123456\"}]}\n#(Assuming credit cards are what you meant)",
        "{\u{201c}API\u{201d}: [\u{201c}getATMCardList\u{201d}], \u{201c}parameters\u{201d}: [{\u{201c}accountID\u{201d}: \u{201c}123456\u{201d}}],}",
    ];

    for (i, text) in samples.iter().enumerate() {
        let raw = RawOutput::json(*text);
        let valid_before = codec::parse_structured(&raw).is_ok();
        let outcome = codec::repair_deterministic(&raw);
        let repaired = RawOutput::json(outcome.repaired_text.clone());
        let valid_after = codec::parse_structured(&repaired).is_ok();
        println!("sample {i}: valid before = {valid_before}, after = {valid_after}");
        println!("  steps applied: {:?}", outcome.steps_applied);
        if valid_after {
            let plan = codec::parse_plan(&repaired).unwrap();
            println!("  recovered APIs: {:?}", plan.api_names());
        }
        println!();
    }
}
