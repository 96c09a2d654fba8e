//! Election and Levenshtein stability scores over repeated runs of
//! identical inputs.
//!
//! Both scores operate on normalized output text: lowercase, code fences
//! stripped, whitespace runs collapsed. The election score is
//! `(F1 - F2) / (N - F2)` over the output frequency distribution, with ties
//! for the most frequent output scoring 0. The Levenshtein score is the mean
//! normalized edit similarity between the first output and each subsequent
//! one.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum StabilityError {
    #[error("stability run has no outputs")]
    EmptyRun,
    #[error("levenshtein stability needs at least 2 outputs, got {0}")]
    InsufficientSamples(usize),
}

/// N repeated outputs for one question, in run order (index 0 is the first
/// answer).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StabilityRun {
    pub question_id: String,
    pub outputs: Vec<String>,
}

impl StabilityRun {
    /// Build a run from raw outputs, normalizing each.
    pub fn from_raw(question_id: impl Into<String>, raw_outputs: &[String]) -> Self {
        StabilityRun {
            question_id: question_id.into(),
            outputs: raw_outputs.iter().map(|o| normalize_output(o)).collect(),
        }
    }
}

/// Frequency profile of a run: total count, top frequency, second frequency
/// (0 when only one unique output exists).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrequencyProfile {
    pub n: usize,
    pub f1: usize,
    pub f2: usize,
}

/// Lowercase, strip code fences, collapse whitespace runs to single spaces,
/// trim.
pub fn normalize_output(text: &str) -> String {
    let without_fences: String = text
        .lines()
        .filter(|line| !line.trim_start().starts_with("```"))
        .collect::<Vec<_>>()
        .join("\n");
    without_fences
        .to_lowercase()
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

/// Count output frequencies and pick the top two.
pub fn frequency_profile(run: &StabilityRun) -> Result<FrequencyProfile, StabilityError> {
    if run.outputs.is_empty() {
        return Err(StabilityError::EmptyRun);
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for out in &run.outputs {
        *counts.entry(out.as_str()).or_default() += 1;
    }
    let mut freqs: Vec<usize> = counts.values().copied().collect();
    freqs.sort_unstable_by(|a, b| b.cmp(a));
    Ok(FrequencyProfile {
        n: run.outputs.len(),
        f1: freqs[0],
        f2: freqs.get(1).copied().unwrap_or(0),
    })
}

/// Election stability score: `(F1 - F2) / (N - F2)`, 0 on a tie for the most
/// frequent output, 1 when all outputs are identical.
pub fn election_score(run: &StabilityRun) -> Result<f64, StabilityError> {
    let p = frequency_profile(run)?;
    if p.f1 == p.f2 {
        return Ok(0.0);
    }
    Ok((p.f1 - p.f2) as f64 / (p.n - p.f2) as f64)
}

/// Minimum edit count between two strings under unit-cost insert, delete,
/// and substitute, over characters.
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    if a.is_empty() {
        return b.len();
    }
    if b.is_empty() {
        return a.len();
    }
    let mut row: Vec<usize> = (0..=b.len()).collect();
    for (i, &ca) in a.iter().enumerate() {
        let mut prev_diag = row[0];
        row[0] = i + 1;
        for (j, &cb) in b.iter().enumerate() {
            let cost = if ca == cb { 0 } else { 1 };
            let next = (prev_diag + cost).min(row[j] + 1).min(row[j + 1] + 1);
            prev_diag = row[j + 1];
            row[j + 1] = next;
        }
    }
    row[b.len()]
}

/// Mean normalized edit similarity between the first output and each
/// subsequent one: `(1/n) Σ (1 - lev(x0, xi) / max(len(x0), len(xi)))`.
/// A term where both texts are empty counts as 1.
pub fn levenshtein_stability(run: &StabilityRun) -> Result<f64, StabilityError> {
    if run.outputs.len() < 2 {
        return Err(StabilityError::InsufficientSamples(run.outputs.len()));
    }
    let first = &run.outputs[0];
    let first_len = first.chars().count();
    let mut sum = 0.0;
    for other in &run.outputs[1..] {
        let other_len = other.chars().count();
        let max_len = first_len.max(other_len);
        let term = if max_len == 0 {
            1.0
        } else {
            1.0 - levenshtein(first, other) as f64 / max_len as f64
        };
        sum += term;
    }
    Ok(sum / (run.outputs.len() - 1) as f64)
}
