//! Data model, loading, and validation for CallNavi-format API catalogs and
//! question files.
//!
//! A catalog is a JSON list of API records (`name`, `parameters`,
//! `description`, `returnParameter`). A question file is a JSON list of
//! records with `id`, `question` (role/content messages), `ground_truth`
//! (`API` list plus `parameters` map-or-list) and `difficulty`.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::PLACEHOLDER;

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("parse failure in {path}: {source}")]
    Parse {
        path: String,
        source: serde_json::Error,
    },
    #[error("catalog is empty")]
    EmptyCatalog,
    #[error("duplicate API name in catalog: {0}")]
    DuplicateApiName(String),
    #[error("API spec has an empty name")]
    EmptyApiName,
    #[error("duplicate parameter name {param} in API {api}")]
    DuplicateParameter { api: String, param: String },
    #[error("duplicate question id: {0}")]
    DuplicateQuestionId(String),
    #[error("question {id}: API list has {apis} entries but parameters list has {params}")]
    LengthMismatch { id: String, apis: usize, params: usize },
    #[error("question {id}: unknown difficulty label {label:?}")]
    UnknownDifficulty { id: String, label: String },
    #[error("question {id} has no user message")]
    NoUserMessage { id: String },
    #[error("question {id}: placeholder {PLACEHOLDER:?} used as an argument key")]
    PlaceholderKey { id: String },
    #[error("strict validation failed:\n{}", .0.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("\n"))]
    StrictValidation(Vec<Diagnostic>),
}

/// One API entry from a catalog file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiSpec {
    pub name: String,
    #[serde(default)]
    pub parameters: Vec<String>,
    #[serde(default)]
    pub description: String,
    #[serde(default, rename = "returnParameter")]
    pub return_parameters: IndexMap<String, String>,
}

/// An ordered collection of API specs for one domain.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiCatalog {
    #[serde(default)]
    pub domain: String,
    pub specs: Vec<ApiSpec>,
}

impl ApiCatalog {
    pub fn get(&self, name: &str) -> Option<&ApiSpec> {
        self.specs.iter().find(|s| s.name == name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.get(name).is_some()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Difficulty {
    Easy,
    Medium,
    Hard,
}

impl Difficulty {
    pub const ALL: [Difficulty; 3] = [Difficulty::Easy, Difficulty::Medium, Difficulty::Hard];
}

impl fmt::Display for Difficulty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Difficulty::Easy => write!(f, "easy"),
            Difficulty::Medium => write!(f, "medium"),
            Difficulty::Hard => write!(f, "hard"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: String,
    pub content: String,
}

impl Message {
    pub fn new(role: impl Into<String>, content: impl Into<String>) -> Self {
        Message { role: role.into(), content: content.into() }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Message::new("user", content)
    }

    pub fn system(content: impl Into<String>) -> Self {
        Message::new("system", content)
    }
}

/// One benchmark question: the user query plus its difficulty label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Question {
    pub id: String,
    pub messages: Vec<Message>,
    pub difficulty: Difficulty,
}

impl Question {
    /// Concatenated content of all user messages.
    pub fn user_content(&self) -> String {
        self.messages
            .iter()
            .filter(|m| m.role == "user")
            .map(|m| m.content.as_str())
            .collect::<Vec<_>>()
            .join("\n")
    }
}

/// Reference answer: the API call sequence and per-step argument maps.
/// A `$$$` argument value marks a parameter that depends on a prior call.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub api_sequence: Vec<String>,
    pub args_sequence: Vec<IndexMap<String, String>>,
}

/// A non-fatal finding from catalog validation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Diagnostic {
    UnknownApi { question_id: String, api: String },
    UnknownArgumentKey { question_id: String, api: String, key: String },
    EmptyPlan { question_id: String },
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Diagnostic::UnknownApi { question_id, api } => {
                write!(f, "{question_id}: API {api:?} not found in catalog")
            }
            Diagnostic::UnknownArgumentKey { question_id, api, key } => {
                write!(f, "{question_id}: argument {key:?} not declared by API {api:?}")
            }
            Diagnostic::EmptyPlan { question_id } => write!(f, "{question_id}: empty plan"),
        }
    }
}

// --- raw file shapes -------------------------------------------------------

#[derive(Deserialize)]
struct RawQuestion {
    id: String,
    question: Vec<Message>,
    ground_truth: RawGroundTruth,
    difficulty: String,
}

#[derive(Deserialize)]
struct RawGroundTruth {
    #[serde(rename = "API")]
    api: Vec<String>,
    #[serde(default)]
    parameters: ParamsField,
}

/// The easy-question listing uses a single map for `parameters`; medium and
/// hard listings use a list aligned with the API sequence. Both normalize to
/// the list shape.
#[derive(Deserialize, Default)]
#[serde(untagged)]
enum ParamsField {
    #[default]
    Missing,
    Single(IndexMap<String, serde_json::Value>),
    List(Vec<IndexMap<String, serde_json::Value>>),
}

fn scalar_to_text(v: &serde_json::Value) -> String {
    match v {
        serde_json::Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn read_to_string(path: &Path) -> Result<String, DatasetError> {
    std::fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Load and validate a catalog file. Spec ordering is preserved.
pub fn load_catalog(path: impl AsRef<Path>) -> Result<ApiCatalog, DatasetError> {
    let path = path.as_ref();
    let text = read_to_string(path)?;
    let specs: Vec<ApiSpec> =
        serde_json::from_str(&text).map_err(|source| DatasetError::Parse {
            path: path.display().to_string(),
            source,
        })?;
    let domain = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    validate_catalog(ApiCatalog { domain, specs })
}

fn validate_catalog(catalog: ApiCatalog) -> Result<ApiCatalog, DatasetError> {
    if catalog.specs.is_empty() {
        return Err(DatasetError::EmptyCatalog);
    }
    let mut seen = HashSet::new();
    for spec in &catalog.specs {
        if spec.name.is_empty() {
            return Err(DatasetError::EmptyApiName);
        }
        if !seen.insert(spec.name.as_str()) {
            return Err(DatasetError::DuplicateApiName(spec.name.clone()));
        }
        let mut params = HashSet::new();
        for p in &spec.parameters {
            if !params.insert(p.as_str()) {
                return Err(DatasetError::DuplicateParameter {
                    api: spec.name.clone(),
                    param: p.clone(),
                });
            }
        }
    }
    Ok(catalog)
}

/// Load a question file, normalizing single-map `parameters` fields into
/// one-element lists aligned with the API sequence.
pub fn load_questions(
    path: impl AsRef<Path>,
) -> Result<Vec<(Question, GroundTruth)>, DatasetError> {
    let path = path.as_ref();
    let text = read_to_string(path)?;
    let raw: Vec<RawQuestion> =
        serde_json::from_str(&text).map_err(|source| DatasetError::Parse {
            path: path.display().to_string(),
            source,
        })?;

    let mut out = Vec::with_capacity(raw.len());
    let mut ids = HashSet::new();
    for rq in raw {
        if !ids.insert(rq.id.clone()) {
            return Err(DatasetError::DuplicateQuestionId(rq.id));
        }
        let difficulty = match rq.difficulty.as_str() {
            "easy" => Difficulty::Easy,
            "medium" => Difficulty::Medium,
            "hard" => Difficulty::Hard,
            other => {
                return Err(DatasetError::UnknownDifficulty {
                    id: rq.id,
                    label: other.to_string(),
                })
            }
        };
        if !rq.question.iter().any(|m| m.role == "user") {
            return Err(DatasetError::NoUserMessage { id: rq.id });
        }

        let args_raw = match rq.ground_truth.parameters {
            ParamsField::Missing => vec![IndexMap::new(); rq.ground_truth.api.len()],
            ParamsField::Single(map) => vec![map],
            ParamsField::List(list) => list,
        };
        if args_raw.len() != rq.ground_truth.api.len() {
            return Err(DatasetError::LengthMismatch {
                id: rq.id,
                apis: rq.ground_truth.api.len(),
                params: args_raw.len(),
            });
        }
        let mut args_sequence = Vec::with_capacity(args_raw.len());
        for map in &args_raw {
            let mut step = IndexMap::new();
            for (k, v) in map {
                if k == PLACEHOLDER {
                    return Err(DatasetError::PlaceholderKey { id: rq.id });
                }
                step.insert(k.clone(), scalar_to_text(v));
            }
            args_sequence.push(step);
        }

        out.push((
            Question { id: rq.id, messages: rq.question, difficulty },
            GroundTruth { api_sequence: rq.ground_truth.api, args_sequence },
        ));
    }
    Ok(out)
}

/// Cross-check a ground truth against a catalog. Warn-by-default; with
/// `strict` any diagnostic becomes an error.
pub fn validate_against_catalog(
    question_id: &str,
    gt: &GroundTruth,
    catalog: &ApiCatalog,
    strict: bool,
) -> Result<Vec<Diagnostic>, DatasetError> {
    let mut diags = Vec::new();
    if gt.api_sequence.is_empty() {
        diags.push(Diagnostic::EmptyPlan { question_id: question_id.to_string() });
    }
    for (api, args) in gt.api_sequence.iter().zip(&gt.args_sequence) {
        match catalog.get(api) {
            None => diags.push(Diagnostic::UnknownApi {
                question_id: question_id.to_string(),
                api: api.clone(),
            }),
            Some(spec) => {
                for key in args.keys() {
                    if !spec.parameters.iter().any(|p| p == key) {
                        diags.push(Diagnostic::UnknownArgumentKey {
                            question_id: question_id.to_string(),
                            api: api.clone(),
                            key: key.clone(),
                        });
                    }
                }
            }
        }
    }
    if strict && !diags.is_empty() {
        return Err(DatasetError::StrictValidation(diags));
    }
    Ok(diags)
}

/// Re-serialize loaded questions in the on-disk file shape (parameters kept
/// as a list; this is the normalized form, so load∘save∘load is identity).
pub fn save_questions(
    pairs: &[(Question, GroundTruth)],
) -> Result<String, serde_json::Error> {
    #[derive(Serialize)]
    struct OutQuestion<'a> {
        id: &'a str,
        question: &'a [Message],
        ground_truth: OutGroundTruth<'a>,
        difficulty: Difficulty,
    }
    #[derive(Serialize)]
    struct OutGroundTruth<'a> {
        #[serde(rename = "API")]
        api: &'a [String],
        parameters: &'a [IndexMap<String, String>],
    }
    let out: Vec<OutQuestion> = pairs
        .iter()
        .map(|(q, gt)| OutQuestion {
            id: &q.id,
            question: &q.messages,
            ground_truth: OutGroundTruth {
                api: &gt.api_sequence,
                parameters: &gt.args_sequence,
            },
            difficulty: q.difficulty,
        })
        .collect();
    serde_json::to_string_pretty(&out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_temp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    const BALANCE_CATALOG: &str = r#"[
      {
        "name": "getAccountBalance",
        "parameters": ["accountID"],
        "description": "Retrieves the current balance for a specific account.",
        "returnParameter": { "Balance": "number" }
      }
    ]"#;

    const BAN01: &str = r#"[
      {
        "id": "ban01",
        "question": [
          {"role": "user", "content": "What is the balance for the account with ID 987654?"}
        ],
        "ground_truth": {
          "API": ["getAccountBalance"],
          "parameters": {"accountID": "987654"}
        },
        "difficulty": "easy"
      }
    ]"#;

    const BAN069: &str = r#"[
      {
        "id": "ban069",
        "question": [
          {"role": "user", "content": "Retrieve details of wire transfer WT987654 and cancel it."}
        ],
        "ground_truth": {
          "API": ["getWireTransferDetails", "cancelWireTransfer"],
          "parameters": [
            {"transferID": "WT987654"},
            {"transferID": "WT987654"}
          ]
        },
        "difficulty": "medium"
      }
    ]"#;

    #[test]
    fn load_single_entry_catalog() {
        let f = write_temp(BALANCE_CATALOG);
        let catalog = load_catalog(f.path()).unwrap();
        assert_eq!(catalog.specs.len(), 1);
        assert_eq!(catalog.specs[0].name, "getAccountBalance");
        assert_eq!(catalog.specs[0].parameters, vec!["accountID"]);
        assert_eq!(catalog.specs[0].return_parameters.get("Balance").unwrap(), "number");
    }

    #[test]
    fn empty_catalog_rejected() {
        let f = write_temp("[]");
        assert!(matches!(load_catalog(f.path()), Err(DatasetError::EmptyCatalog)));
    }

    #[test]
    fn duplicate_api_name_rejected() {
        let f = write_temp(
            r#"[{"name": "a", "parameters": []}, {"name": "a", "parameters": []}]"#,
        );
        match load_catalog(f.path()) {
            Err(DatasetError::DuplicateApiName(name)) => assert_eq!(name, "a"),
            other => panic!("expected duplicate-name error, got {other:?}"),
        }
    }

    #[test]
    fn single_map_parameters_normalize_to_list() {
        let f = write_temp(BAN01);
        let pairs = load_questions(f.path()).unwrap();
        assert_eq!(pairs.len(), 1);
        let (q, gt) = &pairs[0];
        assert_eq!(q.id, "ban01");
        assert_eq!(q.difficulty, Difficulty::Easy);
        assert_eq!(gt.api_sequence, vec!["getAccountBalance"]);
        assert_eq!(gt.args_sequence.len(), 1);
        assert_eq!(gt.args_sequence[0].get("accountID").unwrap(), "987654");
    }

    #[test]
    fn list_parameters_kept_positional() {
        let f = write_temp(BAN069);
        let pairs = load_questions(f.path()).unwrap();
        let (_, gt) = &pairs[0];
        assert_eq!(gt.args_sequence.len(), 2);
        for args in &gt.args_sequence {
            assert_eq!(args.get("transferID").unwrap(), "WT987654");
        }
    }

    #[test]
    fn length_mismatch_rejected() {
        let f = write_temp(
            r#"[{
              "id": "q1",
              "question": [{"role": "user", "content": "x"}],
              "ground_truth": {"API": ["a", "b"], "parameters": [{}, {}, {}]},
              "difficulty": "medium"
            }]"#,
        );
        match load_questions(f.path()) {
            Err(DatasetError::LengthMismatch { apis, params, .. }) => {
                assert_eq!((apis, params), (2, 3));
            }
            other => panic!("expected length mismatch, got {other:?}"),
        }
    }

    #[test]
    fn unknown_difficulty_rejected() {
        let f = write_temp(
            r#"[{
              "id": "q1",
              "question": [{"role": "user", "content": "x"}],
              "ground_truth": {"API": ["a"], "parameters": [{}]},
              "difficulty": "impossible"
            }]"#,
        );
        assert!(matches!(
            load_questions(f.path()),
            Err(DatasetError::UnknownDifficulty { .. })
        ));
    }

    #[test]
    fn validate_unknown_api_diagnostic() {
        let f = write_temp(BALANCE_CATALOG);
        let catalog = load_catalog(f.path()).unwrap();
        let gt = GroundTruth {
            api_sequence: vec!["getLostBaggageReport".into()],
            args_sequence: vec![IndexMap::new()],
        };
        let diags = validate_against_catalog("q", &gt, &catalog, false).unwrap();
        assert_eq!(diags.len(), 1);
        assert!(matches!(&diags[0], Diagnostic::UnknownApi { api, .. } if api == "getLostBaggageReport"));
        assert!(validate_against_catalog("q", &gt, &catalog, true).is_err());
    }

    #[test]
    fn validate_empty_plan_diagnostic() {
        let f = write_temp(BALANCE_CATALOG);
        let catalog = load_catalog(f.path()).unwrap();
        let gt = GroundTruth { api_sequence: vec![], args_sequence: vec![] };
        let diags = validate_against_catalog("q", &gt, &catalog, false).unwrap();
        assert_eq!(diags, vec![Diagnostic::EmptyPlan { question_id: "q".into() }]);
    }

    #[test]
    fn validate_matching_ground_truth_is_clean() {
        let f = write_temp(
            r#"[
              {"name": "getCustomerCreditCards", "parameters": ["customerID"]},
              {"name": "getCreditCardDetails", "parameters": ["creditCardNumber"]},
              {"name": "getCurrencyExchangeRates", "parameters": ["currencyPair"]}
            ]"#,
        );
        let catalog = load_catalog(f.path()).unwrap();
        let gt = GroundTruth {
            api_sequence: vec![
                "getCustomerCreditCards".into(),
                "getCreditCardDetails".into(),
                "getCurrencyExchangeRates".into(),
            ],
            args_sequence: vec![
                IndexMap::from([("customerID".to_string(), "123155".to_string())]),
                IndexMap::from([("creditCardNumber".to_string(), "$$$".to_string())]),
                IndexMap::from([("currencyPair".to_string(), "$$$".to_string())]),
            ],
        };
        assert!(validate_against_catalog("ban081", &gt, &catalog, true).unwrap().is_empty());
    }

    #[test]
    fn round_trip_is_identity_on_normalized_model() {
        let f = write_temp(BAN01);
        let pairs = load_questions(f.path()).unwrap();
        let text = save_questions(&pairs).unwrap();
        let f2 = write_temp(&text);
        let reloaded = load_questions(f2.path()).unwrap();
        assert_eq!(pairs, reloaded);
    }

    #[test]
    fn normalization_is_idempotent() {
        let f = write_temp(BAN069);
        let pairs = load_questions(f.path()).unwrap();
        let text = save_questions(&pairs).unwrap();
        let f2 = write_temp(&text);
        let once = load_questions(f2.path()).unwrap();
        let text2 = save_questions(&once).unwrap();
        assert_eq!(text, text2);
    }

    #[test]
    fn numeric_scalars_stored_as_text() {
        let f = write_temp(
            r#"[{
              "id": "q1",
              "question": [{"role": "user", "content": "x"}],
              "ground_truth": {"API": ["a"], "parameters": [{"accountID": 987654}]},
              "difficulty": "easy"
            }]"#,
        );
        let pairs = load_questions(f.path()).unwrap();
        assert_eq!(pairs[0].1.args_sequence[0].get("accountID").unwrap(), "987654");
    }
}
