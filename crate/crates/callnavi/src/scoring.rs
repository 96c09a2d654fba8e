//! The four per-question metrics (routing exact match, syntax validity,
//! structural accuracy, AST exact match), the repair-aware evaluation
//! pipeline, and per-difficulty report aggregation.
//!
//! Syntax validity is a property of the raw output, measured before any
//! repair; structural and exact-match scoring run on whichever text first
//! parses (raw, deterministically repaired, or backend-repaired).

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::backends::ModelBackend;
use crate::codec::{
    self, CallPlan, RawOutput, RepairOutcome,
};
use crate::dataset::{Difficulty, GroundTruth};
use crate::PLACEHOLDER;

#[derive(Debug, thiserror::Error)]
pub enum ScoringError {
    #[error("no records to aggregate")]
    EmptyRecords,
    #[error("pearson correlation needs at least 2 paired values, got {0}")]
    TooFewPairs(usize),
    #[error("pearson correlation undefined: {0} input has zero variance")]
    ZeroVariance(&'static str),
    #[error("pearson correlation inputs have different lengths: {0} vs {1}")]
    LengthMismatch(usize, usize),
}

/// How API names and argument keys are compared. The benchmark files use
/// verbatim identifiers, so the default is trimmed and case-sensitive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NamePolicy {
    /// Compare names case-sensitively (default true).
    pub case_sensitive: bool,
    /// Accept predicted argument-key supersets of the reference keys
    /// (default false: key sets must be equal).
    pub allow_key_superset: bool,
}

impl Default for NamePolicy {
    fn default() -> Self {
        NamePolicy { case_sensitive: true, allow_key_superset: false }
    }
}

impl NamePolicy {
    fn names_equal(&self, a: &str, b: &str) -> bool {
        let (a, b) = (a.trim(), b.trim());
        if self.case_sensitive {
            a == b
        } else {
            a.eq_ignore_ascii_case(b)
        }
    }

    fn key(&self, k: &str) -> String {
        let k = k.trim();
        if self.case_sensitive {
            k.to_string()
        } else {
            k.to_ascii_lowercase()
        }
    }
}

/// Per-question metric vector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub question_id: String,
    pub difficulty: Difficulty,
    /// 1 iff predicted API names equal the reference sequence position by position.
    pub routing_match: u8,
    /// 1 iff the raw text parsed in the requested format, before any repair.
    pub syntax_valid: u8,
    /// Whether the repair pipeline was engaged (raw parse failed).
    pub repaired: bool,
    /// 1 iff raw or repaired text parsed in the requested format.
    pub post_repair_valid: u8,
    pub structural: u8,
    pub ast_exact: u8,
    /// Judge verdict, absent when no judge ran or the judge backend failed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub judge: Option<u8>,
}

/// Full outcome of evaluating one raw output, including the recovered plan.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub record: ScoreRecord,
    pub plan: Option<CallPlan>,
    pub repair: Option<RepairOutcome>,
}

fn as_score(b: bool) -> u8 {
    b as u8
}

/// 1 iff the two name sequences have equal length and equal names position
/// by position under the policy.
pub fn routing_exact_match(predicted: &[String], gt: &GroundTruth, policy: NamePolicy) -> u8 {
    as_score(
        predicted.len() == gt.api_sequence.len()
            && predicted
                .iter()
                .zip(&gt.api_sequence)
                .all(|(p, g)| policy.names_equal(p, g)),
    )
}

/// 1 iff the raw text parses in its requested format, pre-repair.
pub fn syntax_validity(raw: &RawOutput) -> u8 {
    as_score(codec::parse_structured(raw).is_ok())
}

/// 1 iff the API sequence matches and each step's argument key set equals
/// the reference key set for that step.
pub fn structural_accuracy(plan: &CallPlan, gt: &GroundTruth, policy: NamePolicy) -> u8 {
    let names = plan.api_names();
    if routing_exact_match(&names, gt, policy) == 0 {
        return 0;
    }
    for (step, gt_args) in plan.calls.iter().zip(&gt.args_sequence) {
        let predicted: HashSet<String> = step.arguments.keys().map(|k| policy.key(k)).collect();
        let expected: HashSet<String> = gt_args.keys().map(|k| policy.key(k)).collect();
        let ok = if policy.allow_key_superset {
            expected.is_subset(&predicted)
        } else {
            predicted == expected
        };
        if !ok {
            return 0;
        }
    }
    1
}

// Scalars are compared as trimmed text, so 987654 and "987654" agree.
fn canon_scalar(s: &str) -> &str {
    s.trim()
}

/// 1 iff structurally accurate and every argument value equals the reference
/// value after scalar canonicalization. Positions whose reference value is
/// the `$$$` placeholder accept any value.
pub fn ast_exact_match(plan: &CallPlan, gt: &GroundTruth, policy: NamePolicy) -> u8 {
    if structural_accuracy(plan, gt, policy) == 0 {
        return 0;
    }
    for (step, gt_args) in plan.calls.iter().zip(&gt.args_sequence) {
        for (key, expected) in gt_args {
            if expected == PLACEHOLDER {
                continue;
            }
            let found = step
                .arguments
                .iter()
                .find(|(k, _)| policy.key(k) == policy.key(key))
                .map(|(_, v)| v);
            match found {
                Some(actual) if canon_scalar(actual) == canon_scalar(expected) => {}
                _ => return 0,
            }
        }
    }
    1
}

/// Recover a plan from raw text: parse as-is, else repair deterministically,
/// else repair through the backend, else convert function-call syntax.
pub fn recover_plan(
    raw: &RawOutput,
    repair_backend: Option<&dyn ModelBackend>,
) -> (Option<CallPlan>, Option<RepairOutcome>, bool) {
    if let Ok(tree) = codec::parse_structured(raw) {
        return (codec::extract_call_plan(&tree).ok(), None, true);
    }

    let mut outcome = codec::repair_deterministic(raw);
    let mut parsed = codec::parse_structured(&RawOutput {
        text: outcome.repaired_text.clone(),
        format_hint: raw.format_hint,
    });

    if parsed.is_err() {
        if let Some(backend) = repair_backend {
            let backend_outcome = codec::repair_with_backend(raw, backend);
            let reparsed = codec::parse_structured(&RawOutput {
                text: backend_outcome.repaired_text.clone(),
                format_hint: raw.format_hint,
            });
            if reparsed.is_ok() {
                outcome = backend_outcome;
                parsed = reparsed;
            }
        }
    }

    match parsed {
        Ok(tree) => (codec::extract_call_plan(&tree).ok(), Some(outcome), true),
        Err(_) => {
            // Last resort: model-native function-call syntax.
            let plan = codec::parse_function_calls(&raw.text)
                .or_else(|| codec::parse_function_calls(&outcome.repaired_text));
            (plan, Some(outcome), false)
        }
    }
}

/// Score one raw output against its ground truth, running the repair
/// pipeline when the raw text does not parse.
pub fn evaluate_one(
    question_id: &str,
    difficulty: Difficulty,
    raw: &RawOutput,
    gt: &GroundTruth,
    policy: NamePolicy,
    repair_backend: Option<&dyn ModelBackend>,
) -> Evaluation {
    let syntax_valid = syntax_validity(raw);
    let (plan, repair, reparsed) = recover_plan(raw, repair_backend);

    let (routing_match, structural, ast_exact) = match &plan {
        Some(plan) => (
            routing_exact_match(&plan.api_names(), gt, policy),
            structural_accuracy(plan, gt, policy),
            ast_exact_match(plan, gt, policy),
        ),
        None => (0, 0, 0),
    };

    let record = ScoreRecord {
        question_id: question_id.to_string(),
        difficulty,
        routing_match,
        syntax_valid,
        repaired: syntax_valid == 0,
        post_repair_valid: as_score(reparsed),
        structural,
        ast_exact,
        judge: None,
    };
    Evaluation { record, plan, repair }
}

// --- aggregation -----------------------------------------------------------

/// One metric summarized per difficulty plus the two averaging conventions:
/// `all_avg` is question-count weighted, `macro_avg` the unweighted mean of
/// the difficulty means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub per_difficulty: BTreeMap<Difficulty, f64>,
    pub all_avg: f64,
    pub macro_avg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub counts: BTreeMap<Difficulty, usize>,
    pub routing: MetricSummary,
    pub syntax_validity: MetricSummary,
    pub post_repair_validity: MetricSummary,
    pub structural: MetricSummary,
    pub ast_exact: MetricSummary,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub judge: Option<MetricSummary>,
    /// Notes such as difficulty classes absent from the macro average.
    pub diagnostics: Vec<String>,
}

impl Report {
    pub fn metric(&self, name: &str) -> Option<&MetricSummary> {
        match name {
            "routing" => Some(&self.routing),
            "syntax" => Some(&self.syntax_validity),
            "post_repair" => Some(&self.post_repair_validity),
            "structural" => Some(&self.structural),
            "ast" => Some(&self.ast_exact),
            "judge" => self.judge.as_ref(),
            _ => None,
        }
    }
}

/// Combine per-difficulty means with their question counts into the two
/// aggregate conventions: (count-weighted all average, unweighted macro).
pub fn combine_difficulty_means(means_and_counts: &[(f64, usize)]) -> (f64, f64) {
    let total: usize = means_and_counts.iter().map(|(_, n)| n).sum();
    let all = if total == 0 {
        0.0
    } else {
        means_and_counts
            .iter()
            .map(|(m, n)| m * *n as f64)
            .sum::<f64>()
            / total as f64
    };
    let macro_avg = if means_and_counts.is_empty() {
        0.0
    } else {
        means_and_counts.iter().map(|(m, _)| m).sum::<f64>() / means_and_counts.len() as f64
    };
    (all, macro_avg)
}

fn summarize<F>(records: &[ScoreRecord], value: F) -> MetricSummary
where
    F: Fn(&ScoreRecord) -> Option<f64>,
{
    let mut sums: BTreeMap<Difficulty, (f64, usize)> = BTreeMap::new();
    for r in records {
        if let Some(v) = value(r) {
            let e = sums.entry(r.difficulty).or_default();
            e.0 += v;
            e.1 += 1;
        }
    }
    let per_difficulty: BTreeMap<Difficulty, f64> = sums
        .iter()
        .map(|(d, (sum, n))| (*d, sum / *n as f64))
        .collect();
    let entries: Vec<(f64, usize)> = sums.values().map(|(sum, n)| (sum / *n as f64, *n)).collect();
    let (all_avg, macro_avg) = combine_difficulty_means(&entries);
    MetricSummary { per_difficulty, all_avg, macro_avg }
}

/// Aggregate score records into a report: per-difficulty means per metric,
/// the count-weighted All average, and the unweighted Macro average over the
/// difficulty classes present.
pub fn aggregate(records: &[ScoreRecord]) -> Result<Report, ScoringError> {
    if records.is_empty() {
        return Err(ScoringError::EmptyRecords);
    }
    let mut counts: BTreeMap<Difficulty, usize> = BTreeMap::new();
    for r in records {
        *counts.entry(r.difficulty).or_default() += 1;
    }
    let mut diagnostics = Vec::new();
    for d in Difficulty::ALL {
        if !counts.contains_key(&d) {
            diagnostics.push(format!(
                "no {d} questions: class excluded from the macro average"
            ));
        }
    }
    let judge_count = records.iter().filter(|r| r.judge.is_some()).count();
    let judge = if judge_count > 0 {
        Some(summarize(records, |r| r.judge.map(f64::from)))
    } else {
        None
    };
    Ok(Report {
        counts,
        routing: summarize(records, |r| Some(f64::from(r.routing_match))),
        syntax_validity: summarize(records, |r| Some(f64::from(r.syntax_valid))),
        post_repair_validity: summarize(records, |r| Some(f64::from(r.post_repair_valid))),
        structural: summarize(records, |r| Some(f64::from(r.structural))),
        ast_exact: summarize(records, |r| Some(f64::from(r.ast_exact))),
        judge,
        diagnostics,
    })
}

/// Sample Pearson correlation coefficient.
pub fn pearson_r(xs: &[f64], ys: &[f64]) -> Result<f64, ScoringError> {
    if xs.len() != ys.len() {
        return Err(ScoringError::LengthMismatch(xs.len(), ys.len()));
    }
    if xs.len() < 2 {
        return Err(ScoringError::TooFewPairs(xs.len()));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(ScoringError::ZeroVariance("x"));
    }
    if syy == 0.0 {
        return Err(ScoringError::ZeroVariance("y"));
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    Ok(sxy / (sxx * syy).sqrt())
}

/// Render a report as an aligned plain-text table, one metric per column
/// block: per-difficulty means, All Avg., Macro Avg.
pub fn render_table(report: &Report) -> String {
    let row = |name: &str, m: &MetricSummary| {
        let cell = |d: Difficulty| {
            m.per_difficulty
                .get(&d)
                .map(|v| format!("{v:>7.3}"))
                .unwrap_or_else(|| format!("{:>7}", "-"))
        };
        format!(
            "{name:<22}{}{}{}{:>9.3}{:>11.3}\n",
            cell(Difficulty::Easy),
            cell(Difficulty::Medium),
            cell(Difficulty::Hard),
            m.all_avg,
            m.macro_avg,
        )
    };
    let mut header = format!(
        "{:<22}{:>7}{:>7}{:>7}{:>9}{:>11}\n",
        "Metric", "Easy", "Medium", "Hard", "All Avg.", "Macro Avg."
    );
    header.push_str(&"-".repeat(63));
    header.push('\n');
    let mut body = String::new();
    body.push_str(&row("Routing Exact Match", &report.routing));
    body.push_str(&row("Syntax Validity", &report.syntax_validity));
    body.push_str(&row("Post-Repair Validity", &report.post_repair_validity));
    body.push_str(&row("Structural Accuracy", &report.structural));
    body.push_str(&row("AST Exact Match", &report.ast_exact));
    if let Some(judge) = &report.judge {
        body.push_str(&row("Judge Score", judge));
    }
    let counts = Difficulty::ALL
        .iter()
        .map(|d| format!("{d}: {}", report.counts.get(d).copied().unwrap_or(0)))
        .collect::<Vec<_>>()
        .join(", ");
    format!("{header}{body}questions: {counts}\n")
}
