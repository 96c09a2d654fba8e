//! Parse, repair, canonicalize, and serialize structured model outputs.
//!
//! Model completions arrive as free text that should contain a call plan in
//! JSON or YAML. This module turns that text into the canonical [`CallPlan`]
//! form, applying a deterministic repair pipeline (and optionally a
//! model-backed repair) when the raw text does not parse.

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::backends::{CompletionOptions, ModelBackend};
use crate::dataset::Message;

/// Structured-text format for catalogs, prompts, and plan output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Json,
    Yaml,
}

impl std::fmt::Display for OutputFormat {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            OutputFormat::Json => write!(f, "json"),
            OutputFormat::Yaml => write!(f, "yaml"),
        }
    }
}

/// A raw model completion plus the format it was asked to produce.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawOutput {
    pub text: String,
    pub format_hint: OutputFormat,
}

impl RawOutput {
    pub fn json(text: impl Into<String>) -> Self {
        RawOutput { text: text.into(), format_hint: OutputFormat::Json }
    }

    pub fn yaml(text: impl Into<String>) -> Self {
        RawOutput { text: text.into(), format_hint: OutputFormat::Yaml }
    }
}

/// One predicted API call: name plus argument map (values carried as text).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallStep {
    pub api_name: String,
    pub arguments: IndexMap<String, String>,
}

impl CallStep {
    pub fn new(api_name: impl Into<String>) -> Self {
        CallStep { api_name: api_name.into(), arguments: IndexMap::new() }
    }

    pub fn with_arg(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.arguments.insert(key.into(), value.into());
        self
    }
}

/// Canonical parsed prediction: an ordered call sequence. An empty plan
/// signals an unusable prediction and scores 0 downstream.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CallPlan {
    pub calls: Vec<CallStep>,
}

impl CallPlan {
    pub fn api_names(&self) -> Vec<String> {
        self.calls.iter().map(|c| c.api_name.clone()).collect()
    }

    pub fn is_empty(&self) -> bool {
        self.calls.is_empty()
    }
}

/// Result of a repair attempt. `steps_applied` is empty iff nothing changed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepairOutcome {
    pub repaired_text: String,
    pub was_repaired: bool,
    pub steps_applied: Vec<String>,
}

#[derive(Debug, thiserror::Error)]
pub enum CodecError {
    #[error("empty input")]
    EmptyInput,
    #[error("syntax error: {0}")]
    Syntax(String),
    #[error("shape error: {0}")]
    Shape(String),
}

// --- parsing ---------------------------------------------------------------

/// Parse raw text in its hinted format into a generic tree. Succeeds only if
/// the whole text is one structured value (map or list); scalars and trailing
/// garbage are syntax errors, matching how plan output validity is scored.
pub fn parse_structured(raw: &RawOutput) -> Result<serde_json::Value, CodecError> {
    if raw.text.trim().is_empty() {
        return Err(CodecError::EmptyInput);
    }
    let tree = match raw.format_hint {
        OutputFormat::Json => serde_json::from_str::<serde_json::Value>(&raw.text)
            .map_err(|e| CodecError::Syntax(format!("line {}, column {}: {}", e.line(), e.column(), e)))?,
        OutputFormat::Yaml => {
            if let Some(tok) = find_yaml_anchor(&raw.text) {
                return Err(CodecError::Shape(format!(
                    "yaml anchors/aliases are not supported (found {tok:?})"
                )));
            }
            let v: serde_yaml::Value = serde_yaml::from_str(&raw.text).map_err(|e| {
                let pos = e
                    .location()
                    .map(|l| format!("line {}, column {}: ", l.line(), l.column()))
                    .unwrap_or_default();
                CodecError::Syntax(format!("{pos}{e}"))
            })?;
            yaml_to_json(v)?
        }
    };
    match &tree {
        serde_json::Value::Object(_) | serde_json::Value::Array(_) => Ok(tree),
        _ => Err(CodecError::Syntax(
            "top-level value is a scalar, not a structured object".into(),
        )),
    }
}

// Plan-subset YAML only: block maps, lists, scalars.
fn yaml_to_json(v: serde_yaml::Value) -> Result<serde_json::Value, CodecError> {
    use serde_yaml::Value as Y;
    Ok(match v {
        Y::Null => serde_json::Value::Null,
        Y::Bool(b) => serde_json::Value::Bool(b),
        Y::Number(n) => serde_json::from_str(&n.to_string())
            .unwrap_or_else(|_| serde_json::Value::String(n.to_string())),
        Y::String(s) => serde_json::Value::String(s),
        Y::Sequence(seq) => serde_json::Value::Array(
            seq.into_iter().map(yaml_to_json).collect::<Result<_, _>>()?,
        ),
        Y::Mapping(map) => {
            let mut out = serde_json::Map::new();
            for (k, val) in map {
                let key = match k {
                    Y::String(s) => s,
                    Y::Number(n) => n.to_string(),
                    Y::Bool(b) => b.to_string(),
                    other => {
                        return Err(CodecError::Shape(format!(
                            "unsupported yaml mapping key: {other:?}"
                        )))
                    }
                };
                out.insert(key, yaml_to_json(val)?);
            }
            serde_json::Value::Object(out)
        }
        Y::Tagged(_) => return Err(CodecError::Shape("yaml tags are not supported".into())),
    })
}

// Detects `&anchor` / `*alias` tokens at value positions, outside quotes.
fn find_yaml_anchor(text: &str) -> Option<String> {
    for line in text.lines() {
        let mut in_single = false;
        let mut in_double = false;
        let mut prev_is_sep = true;
        let mut chars = line.chars().peekable();
        while let Some(c) = chars.next() {
            match c {
                '\'' if !in_double => in_single = !in_single,
                '"' if !in_single => in_double = !in_double,
                '#' if !in_single && !in_double => break,
                '&' | '*' if !in_single && !in_double && prev_is_sep => {
                    if chars.peek().is_some_and(|n| n.is_alphanumeric() || *n == '_') {
                        let name: String =
                            std::iter::once(c).chain(chars.by_ref().take(12)).collect();
                        return Some(name);
                    }
                }
                _ => {}
            }
            prev_is_sep = c.is_whitespace() || matches!(c, ':' | '-' | ',' | '[' | '{');
        }
    }
    None
}

// --- deterministic repair --------------------------------------------------

/// Apply the deterministic repair pipeline: strip code fences, drop prose and
/// comment lines outside bracket balance, extract the first balanced object,
/// normalize smart quotes and trailing commas. The original text is untouched
/// and the outcome records which steps fired. Repairing already-repaired text
/// applies no further steps.
pub fn repair_deterministic(raw: &RawOutput) -> RepairOutcome {
    let mut text = raw.text.clone();
    let mut steps = Vec::new();

    let stripped = strip_code_fences(&text);
    if stripped != text {
        text = stripped;
        steps.push("strip-fences".to_string());
    }

    // Prose-dropping and object extraction assume bracket-delimited syntax;
    // for yaml output only fences and punctuation are safe to touch.
    if raw.format_hint == OutputFormat::Json {
        let pruned = drop_prose_lines(&text);
        if pruned != text {
            text = pruned;
            steps.push("drop-prose".to_string());
        }

        if let Some(extracted) = extract_first_balanced(&text) {
            if extracted != text.trim() {
                text = extracted.to_string();
                steps.push("extract-object".to_string());
            }
        }

        let normalized = normalize_punctuation(&text);
        if normalized != text {
            text = normalized;
            steps.push("normalize-punctuation".to_string());
        }
    } else {
        let normalized = normalize_quotes(&text);
        if normalized != text {
            text = normalized;
            steps.push("normalize-punctuation".to_string());
        }
    }

    RepairOutcome { was_repaired: !steps.is_empty(), repaired_text: text, steps_applied: steps }
}

fn strip_code_fences(text: &str) -> String {
    if !text.contains("```") {
        return text.to_string();
    }
    let kept: Vec<&str> = text
        .lines()
        .filter(|line| !line.trim_start().starts_with("```"))
        .collect();
    kept.join("\n")
}

// Drop lines that sit entirely outside any brace/bracket balance and open no
// bracket themselves: leading prose, trailing notes, `#`/`//` comments.
fn drop_prose_lines(text: &str) -> String {
    let mut depth: i32 = 0;
    let mut in_string = false;
    let mut kept = Vec::new();
    for line in text.lines() {
        let line_start_depth = depth;
        let mut opens_bracket = false;
        let mut escaped = false;
        for c in line.chars() {
            if in_string {
                if escaped {
                    escaped = false;
                } else if c == '\\' {
                    escaped = true;
                } else if c == '"' {
                    in_string = false;
                }
                continue;
            }
            match c {
                '"' => in_string = true,
                '{' | '[' => {
                    depth += 1;
                    opens_bracket = true;
                }
                '}' | ']' => depth -= 1,
                _ => {}
            }
        }
        let trimmed = line.trim_start();
        let is_comment = trimmed.starts_with('#') || trimmed.starts_with("//");
        let is_prose = line_start_depth == 0 && !opens_bracket && !trimmed.is_empty();
        if (is_comment && line_start_depth == 0) || is_prose {
            continue;
        }
        kept.push(line);
    }
    kept.join("\n")
}

// First balanced `{...}` (falling back to `[...]`), string-aware.
fn extract_first_balanced(text: &str) -> Option<&str> {
    extract_balanced_from(text, '{', '}').or_else(|| extract_balanced_from(text, '[', ']'))
}

fn extract_balanced_from(text: &str, open: char, close: char) -> Option<&str> {
    let start = text.find(open)?;
    let mut depth = 0i32;
    let mut in_string = false;
    let mut escaped = false;
    for (i, c) in text[start..].char_indices() {
        if in_string {
            if escaped {
                escaped = false;
            } else if c == '\\' {
                escaped = true;
            } else if c == '"' {
                in_string = false;
            }
            continue;
        }
        match c {
            '"' => in_string = true,
            c if c == open => depth += 1,
            c if c == close => {
                depth -= 1;
                if depth == 0 {
                    return Some(&text[start..start + i + c.len_utf8()]);
                }
            }
            _ => {}
        }
    }
    None
}

fn normalize_quotes(text: &str) -> String {
    text.replace(['\u{201c}', '\u{201d}'], "\"")
        .replace(['\u{2018}', '\u{2019}'], "'")
}

fn normalize_punctuation(text: &str) -> String {
    let text = normalize_quotes(text);
    // Remove trailing commas before a closing brace/bracket, outside strings.
    let mut out = String::with_capacity(text.len());
    let mut in_string = false;
    let mut escaped = false;
    let mut pending_comma: Option<String> = None;
    for c in text.chars() {
        if in_string {
            out.push(c);
            if escaped {
                escaped = false;
            } else if c == '\\' {
                escaped = true;
            } else if c == '"' {
                in_string = false;
            }
            continue;
        }
        match c {
            ',' => {
                if let Some(p) = pending_comma.take() {
                    out.push_str(&p);
                }
                pending_comma = Some(",".to_string());
            }
            c if c.is_whitespace() => {
                if let Some(p) = pending_comma.as_mut() {
                    p.push(c);
                } else {
                    out.push(c);
                }
            }
            '}' | ']' => {
                if let Some(p) = pending_comma.take() {
                    // drop the comma, keep the whitespace after it
                    out.push_str(&p[1..]);
                }
                out.push(c);
            }
            _ => {
                if let Some(p) = pending_comma.take() {
                    out.push_str(&p);
                }
                if c == '"' {
                    in_string = true;
                }
                out.push(c);
            }
        }
    }
    if let Some(p) = pending_comma {
        out.push_str(&p);
    }
    out
}

// --- backend repair --------------------------------------------------------

const REPAIR_PROMPT: &str = include_str!("../assets/repair_prompt.txt");

/// Ask a model to rewrite malformed output as a valid plan object. Falls back
/// to the deterministic pipeline when the backend fails.
pub fn repair_with_backend(raw: &RawOutput, backend: &dyn ModelBackend) -> RepairOutcome {
    let prompt = REPAIR_PROMPT
        .replace("{format}", &raw.format_hint.to_string())
        .replace("{raw}", &raw.text);
    let messages = [Message::user(prompt)];
    match backend.complete(&messages, &CompletionOptions::default()) {
        Ok(completion) => RepairOutcome {
            repaired_text: completion,
            was_repaired: true,
            steps_applied: vec!["backend-repair".to_string()],
        },
        Err(_) => {
            let mut outcome = repair_deterministic(raw);
            if outcome.was_repaired {
                outcome.steps_applied.push("deterministic-fallback".to_string());
            }
            outcome
        }
    }
}

// --- plan extraction -------------------------------------------------------

fn scalar_to_text(v: &serde_json::Value) -> String {
    match v {
        serde_json::Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// Extract the canonical plan from a parsed tree. `API` may be a list of
/// names or a single name; `parameters` may be a list of maps or a single
/// map. Missing argument maps are padded with empty maps, positionally.
pub fn extract_call_plan(tree: &serde_json::Value) -> Result<CallPlan, CodecError> {
    let obj = tree
        .as_object()
        .ok_or_else(|| CodecError::Shape("top-level value is not an object".into()))?;
    let api_value = obj
        .get("API")
        .ok_or_else(|| CodecError::Shape("missing \"API\" key".into()))?;

    let api_names: Vec<String> = match api_value {
        serde_json::Value::String(name) => vec![name.clone()],
        serde_json::Value::Array(items) => items
            .iter()
            .map(|item| match item {
                serde_json::Value::String(name) => Ok(name.clone()),
                other => Err(CodecError::Shape(format!(
                    "API entry is not a name: {other}"
                ))),
            })
            .collect::<Result<_, _>>()?,
        other => {
            return Err(CodecError::Shape(format!("\"API\" is not name-like: {other}")))
        }
    };

    let mut arg_maps: Vec<IndexMap<String, String>> = match obj.get("parameters") {
        None | Some(serde_json::Value::Null) => Vec::new(),
        Some(serde_json::Value::Object(map)) => vec![object_to_args(map)?],
        Some(serde_json::Value::Array(items)) => items
            .iter()
            .map(|item| match item {
                serde_json::Value::Object(map) => object_to_args(map),
                serde_json::Value::Null => Ok(IndexMap::new()),
                other => Err(CodecError::Shape(format!(
                    "parameters entry is not a map: {other}"
                ))),
            })
            .collect::<Result<_, _>>()?,
        Some(other) => {
            return Err(CodecError::Shape(format!(
                "\"parameters\" is not a map or list: {other}"
            )))
        }
    };
    arg_maps.resize(api_names.len().max(arg_maps.len()), IndexMap::new());
    arg_maps.truncate(api_names.len());

    let calls = api_names
        .into_iter()
        .zip(arg_maps)
        .map(|(api_name, arguments)| CallStep { api_name, arguments })
        .collect();
    Ok(CallPlan { calls })
}

fn object_to_args(
    map: &serde_json::Map<String, serde_json::Value>,
) -> Result<IndexMap<String, String>, CodecError> {
    let mut out = IndexMap::new();
    for (k, v) in map {
        if k.is_empty() {
            return Err(CodecError::Shape("empty argument key".into()));
        }
        out.insert(k.clone(), scalar_to_text(v));
    }
    Ok(out)
}

// --- function-call syntax --------------------------------------------------

/// Convert model-native call syntax (`name(arg=value, ...)` lines) into a
/// plan. Accepted grammar, one call per line: an identifier, a parenthesized
/// comma-separated list of `key=value` pairs (values optionally quoted).
/// Returns `None` when no line matches.
pub fn parse_function_calls(text: &str) -> Option<CallPlan> {
    let mut calls = Vec::new();
    for line in text.lines() {
        if let Some(step) = parse_call_line(line.trim()) {
            calls.push(step);
        }
    }
    if calls.is_empty() {
        None
    } else {
        Some(CallPlan { calls })
    }
}

fn parse_call_line(line: &str) -> Option<CallStep> {
    let open = line.find('(')?;
    if !line.ends_with(')') {
        return None;
    }
    let name = line[..open].trim();
    if name.is_empty() || !name.chars().all(|c| c.is_alphanumeric() || c == '_' || c == '.') {
        return None;
    }
    let inner = &line[open + 1..line.len() - 1];
    let mut arguments = IndexMap::new();
    for part in split_top_level_commas(inner) {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        let eq = part.find('=')?;
        let key = part[..eq].trim();
        if key.is_empty() || !key.chars().all(|c| c.is_alphanumeric() || c == '_') {
            return None;
        }
        let value = unquote(part[eq + 1..].trim());
        arguments.insert(key.to_string(), value);
    }
    Some(CallStep { api_name: name.to_string(), arguments })
}

fn split_top_level_commas(s: &str) -> Vec<&str> {
    let mut parts = Vec::new();
    let mut start = 0;
    let mut in_single = false;
    let mut in_double = false;
    for (i, c) in s.char_indices() {
        match c {
            '\'' if !in_double => in_single = !in_single,
            '"' if !in_single => in_double = !in_double,
            ',' if !in_single && !in_double => {
                parts.push(&s[start..i]);
                start = i + 1;
            }
            _ => {}
        }
    }
    parts.push(&s[start..]);
    parts
}

fn unquote(s: &str) -> String {
    let bytes = s.as_bytes();
    if bytes.len() >= 2
        && ((bytes[0] == b'"' && bytes[bytes.len() - 1] == b'"')
            || (bytes[0] == b'\'' && bytes[bytes.len() - 1] == b'\''))
    {
        s[1..s.len() - 1].to_string()
    } else {
        s.to_string()
    }
}

// --- serialization ---------------------------------------------------------

/// Serialize a plan deterministically: `API` key first, argument keys in
/// insertion order, so serialize∘extract∘parse is a fixed point.
pub fn serialize_call_plan(plan: &CallPlan, format: OutputFormat) -> String {
    match format {
        OutputFormat::Json => serialize_json(plan),
        OutputFormat::Yaml => serialize_yaml(plan),
    }
}

fn json_str(s: &str) -> String {
    serde_json::to_string(s).expect("string serialization is infallible")
}

fn serialize_json(plan: &CallPlan) -> String {
    let apis = plan
        .calls
        .iter()
        .map(|c| json_str(&c.api_name))
        .collect::<Vec<_>>()
        .join(", ");
    let params = plan
        .calls
        .iter()
        .map(|c| {
            let fields = c
                .arguments
                .iter()
                .map(|(k, v)| format!("{}: {}", json_str(k), json_str(v)))
                .collect::<Vec<_>>()
                .join(", ");
            if fields.is_empty() {
                "{}".to_string()
            } else {
                format!("{{{fields}}}")
            }
        })
        .collect::<Vec<_>>()
        .join(", ");
    format!("{{\"API\": [{apis}], \"parameters\": [{params}]}}")
}

fn serialize_yaml(plan: &CallPlan) -> String {
    use serde_yaml::{Mapping, Value};
    let api = Value::Sequence(
        plan.calls.iter().map(|c| Value::String(c.api_name.clone())).collect(),
    );
    let params = Value::Sequence(
        plan.calls
            .iter()
            .map(|c| {
                let mut m = Mapping::new();
                for (k, v) in &c.arguments {
                    m.insert(Value::String(k.clone()), Value::String(v.clone()));
                }
                Value::Mapping(m)
            })
            .collect(),
    );
    let mut root = Mapping::new();
    root.insert(Value::String("API".into()), api);
    root.insert(Value::String("parameters".into()), params);
    serde_yaml::to_string(&Value::Mapping(root)).expect("plan yaml serialization is infallible")
}

/// Parse raw text and extract the plan in one go.
pub fn parse_plan(raw: &RawOutput) -> Result<CallPlan, CodecError> {
    let tree = parse_structured(raw)?;
    extract_call_plan(&tree)
}
