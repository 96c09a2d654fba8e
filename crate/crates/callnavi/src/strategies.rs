//! Prompt construction and the three inference pipelines: direct
//! generation, two-step routing + parameter generation, and backward
//! inference from the final call.
//!
//! All prompt templates live under `assets/` and are versioned with the
//! crate. Strategies never execute real APIs; they only produce call plans.

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::backends::{BackendError, CompletionOptions, ModelBackend};
use crate::codec::{
    self, CallPlan, CallStep, OutputFormat, RawOutput,
};
use crate::dataset::{ApiCatalog, Message, Question};
use crate::PLACEHOLDER;

const ROUTING_PROMPT: &str = include_str!("../assets/routing_prompt.txt");
const FULL_PROMPT: &str = include_str!("../assets/full_prompt.txt");
const BACKWARD_FINAL_API: &str = include_str!("../assets/backward_final_api.txt");
const BACKWARD_PARAMS: &str = include_str!("../assets/backward_params.txt");
const BACKWARD_SUPPLIER: &str = include_str!("../assets/backward_supplier.txt");

pub const DEFAULT_MAX_DEPTH: usize = 5;

#[derive(Debug, thiserror::Error)]
pub enum StrategyError {
    #[error("question {0} has empty content")]
    EmptyQuestion(String),
    #[error("backend failure on question {question_id}: {source}")]
    Backend {
        question_id: String,
        #[source]
        source: BackendError,
    },
}

/// Input/output format configuration: how the catalog is serialized into
/// the prompt and which format the model is asked to emit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FormatConfig {
    pub catalog_format: OutputFormat,
    pub output_format: OutputFormat,
}

impl Default for FormatConfig {
    fn default() -> Self {
        FormatConfig { catalog_format: OutputFormat::Json, output_format: OutputFormat::Json }
    }
}

/// A fully rendered prompt: the message list plus the formats it assumes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub messages: Vec<Message>,
    pub requested_output_format: OutputFormat,
    pub catalog_format: OutputFormat,
}

impl PromptBundle {
    pub fn content(&self) -> String {
        self.messages
            .iter()
            .map(|m| m.content.as_str())
            .collect::<Vec<_>>()
            .join("\n")
    }
}

/// One backend exchange in a strategy trace.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceTurn {
    pub tag: String,
    pub prompt: String,
    pub response: String,
}

/// Serialize the full catalog in the requested format (no truncation).
pub fn serialize_catalog(catalog: &ApiCatalog, format: OutputFormat) -> String {
    match format {
        OutputFormat::Json => serde_json::to_string_pretty(&catalog.specs)
            .expect("catalog json serialization is infallible"),
        OutputFormat::Yaml => serde_yaml::to_string(&catalog.specs)
            .expect("catalog yaml serialization is infallible"),
    }
}

fn render_prompt(
    template: &str,
    catalog: &ApiCatalog,
    question: &Question,
    formats: FormatConfig,
) -> Result<PromptBundle, StrategyError> {
    let content = question.user_content();
    if content.trim().is_empty() {
        return Err(StrategyError::EmptyQuestion(question.id.clone()));
    }
    let rendered = template
        .replace("{catalog_format}", &formats.catalog_format.to_string())
        .replace("{output_format}", &formats.output_format.to_string())
        .replace("{catalog}", &serialize_catalog(catalog, formats.catalog_format))
        .replace("{question}", &content);
    Ok(PromptBundle {
        messages: vec![Message::user(rendered)],
        requested_output_format: formats.output_format,
        catalog_format: formats.catalog_format,
    })
}

/// Prompt asking for only the ordered API-name list.
pub fn build_routing_prompt(
    catalog: &ApiCatalog,
    question: &Question,
    formats: FormatConfig,
) -> Result<PromptBundle, StrategyError> {
    render_prompt(ROUTING_PROMPT, catalog, question, formats)
}

/// Prompt asking for the complete plan with parameters.
pub fn build_full_prompt(
    catalog: &ApiCatalog,
    question: &Question,
    formats: FormatConfig,
) -> Result<PromptBundle, StrategyError> {
    render_prompt(FULL_PROMPT, catalog, question, formats)
}

fn complete(
    backend: &dyn ModelBackend,
    question: &Question,
    messages: &[Message],
    options: &CompletionOptions,
) -> Result<String, StrategyError> {
    let mut options = options.clone();
    options.script_key.get_or_insert_with(|| question.id.clone());
    backend
        .complete(messages, &options)
        .map_err(|source| StrategyError::Backend { question_id: question.id.clone(), source })
}

// --- direct ----------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct DirectOutcome {
    pub raw: RawOutput,
    pub plan: Option<CallPlan>,
    pub trace: Vec<TraceTurn>,
}

/// One-shot generation: full prompt in, raw completion out, plan recovered
/// through the codec pipeline. The raw text is kept for scoring.
pub fn run_direct(
    backend: &dyn ModelBackend,
    catalog: &ApiCatalog,
    question: &Question,
    formats: FormatConfig,
    options: &CompletionOptions,
) -> Result<DirectOutcome, StrategyError> {
    let prompt = build_full_prompt(catalog, question, formats)?;
    let completion = complete(backend, question, &prompt.messages, options)?;
    let raw = RawOutput { text: completion.clone(), format_hint: formats.output_format };
    let (plan, _, _) = crate::scoring::recover_plan(&raw, None);
    Ok(DirectOutcome {
        raw,
        plan,
        trace: vec![TraceTurn {
            tag: "direct".into(),
            prompt: prompt.content(),
            response: completion,
        }],
    })
}

// --- two-step --------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct TwoStepOutcome {
    /// API names the router produced, before catalog filtering.
    pub route: Vec<String>,
    /// Route names dropped because the catalog does not know them.
    pub dropped_route_names: Vec<String>,
    /// The step-2 prompt, present unless step 2 was skipped.
    pub step2_prompt: Option<PromptBundle>,
    pub raw: RawOutput,
    pub plan: Option<CallPlan>,
    pub trace: Vec<TraceTurn>,
    pub diagnostics: Vec<String>,
}

/// Parse a routing reply: a structured list of names, an object with an
/// `API` list, or a newline/comma-separated list of identifier-like names.
pub fn parse_route(text: &str, format: OutputFormat) -> Vec<String> {
    let repaired = codec::repair_deterministic(&RawOutput {
        text: text.to_string(),
        format_hint: format,
    });
    for candidate in [text, repaired.repaired_text.as_str()] {
        let raw = RawOutput { text: candidate.to_string(), format_hint: format };
        if let Ok(tree) = codec::parse_structured(&raw) {
            match &tree {
                serde_json::Value::Array(items) => {
                    let names: Vec<String> = items
                        .iter()
                        .filter_map(|v| v.as_str().map(str::to_string))
                        .collect();
                    if names.len() == items.len() {
                        return names;
                    }
                }
                serde_json::Value::Object(_) => {
                    if let Ok(plan) = codec::extract_call_plan(&tree) {
                        return plan.api_names();
                    }
                }
                _ => {}
            }
        }
    }
    // Plain-text fallback: one name per line or comma entry.
    text.split(|c: char| c == '\n' || c == ',')
        .map(|part| part.trim().trim_matches(|c: char| c == '-' || c == '*' || c == '"').trim())
        .filter(|part| {
            !part.is_empty() && part.chars().all(|c| c.is_alphanumeric() || c == '_' || c == '.')
        })
        .map(str::to_string)
        .collect()
}

/// Step 1: the router selects API names. Step 2: the parameter model sees a
/// catalog filtered to exactly the routed, catalog-known names in route
/// order, and produces the full plan.
pub fn run_two_step(
    router_backend: &dyn ModelBackend,
    paramgen_backend: &dyn ModelBackend,
    catalog: &ApiCatalog,
    question: &Question,
    formats: FormatConfig,
    options: &CompletionOptions,
) -> Result<TwoStepOutcome, StrategyError> {
    let mut trace = Vec::new();
    let mut diagnostics = Vec::new();

    let routing_prompt = build_routing_prompt(catalog, question, formats)?;
    let route_reply = complete(router_backend, question, &routing_prompt.messages, options)?;
    trace.push(TraceTurn {
        tag: "route".into(),
        prompt: routing_prompt.content(),
        response: route_reply.clone(),
    });

    let route = parse_route(&route_reply, formats.output_format);
    if route.is_empty() {
        diagnostics.push("router produced no parseable API names; step 2 skipped".into());
        return Ok(TwoStepOutcome {
            route,
            dropped_route_names: Vec::new(),
            step2_prompt: None,
            raw: RawOutput { text: String::new(), format_hint: formats.output_format },
            plan: Some(CallPlan::default()),
            trace,
            diagnostics,
        });
    }

    let mut filtered = ApiCatalog { domain: catalog.domain.clone(), specs: Vec::new() };
    let mut dropped = Vec::new();
    for name in &route {
        match catalog.get(name) {
            Some(spec) => filtered.specs.push(spec.clone()),
            None => {
                diagnostics.push(format!("routed API {name:?} is not in the catalog; dropped"));
                dropped.push(name.clone());
            }
        }
    }
    if filtered.specs.is_empty() {
        diagnostics.push("no routed API survived catalog filtering; step 2 skipped".into());
        return Ok(TwoStepOutcome {
            route,
            dropped_route_names: dropped,
            step2_prompt: None,
            raw: RawOutput { text: String::new(), format_hint: formats.output_format },
            plan: Some(CallPlan::default()),
            trace,
            diagnostics,
        });
    }

    let step2_prompt = build_full_prompt(&filtered, question, formats)?;
    let completion = complete(paramgen_backend, question, &step2_prompt.messages, options)?;
    trace.push(TraceTurn {
        tag: "paramgen".into(),
        prompt: step2_prompt.content(),
        response: completion.clone(),
    });
    let raw = RawOutput { text: completion, format_hint: formats.output_format };
    let (plan, _, _) = crate::scoring::recover_plan(&raw, None);
    Ok(TwoStepOutcome {
        route,
        dropped_route_names: dropped,
        step2_prompt: Some(step2_prompt),
        raw,
        plan,
        trace,
        diagnostics,
    })
}

// --- backward inference ----------------------------------------------------

/// Working state of a backward run: calls in reverse order of discovery,
/// parameter names still unresolved, and the current depth.
#[derive(Debug, Clone, Default)]
pub struct BackwardState {
    pub resolved: Vec<CallStep>,
    pub pending_params: Vec<(String, String)>,
    pub depth: usize,
}

#[derive(Debug, Clone)]
pub struct BackwardOutcome {
    pub plan: CallPlan,
    pub trace: Vec<TraceTurn>,
    pub diagnostics: Vec<String>,
}

fn single_name(reply: &str) -> String {
    reply
        .trim()
        .trim_matches(|c: char| c == '"' || c == '\'' || c == '`' || c == '.')
        .to_string()
}

// Parse the parameter-resolution reply into declared-parameter values.
// Anything the backend omits, and anything it invents, is overruled by the
// catalog's declared parameter list.
fn parse_param_values(
    reply: &str,
    declared: &[String],
) -> Option<IndexMap<String, String>> {
    let raw = RawOutput::json(reply.to_string());
    let tree = codec::parse_structured(&raw).ok().or_else(|| {
        let repaired = codec::repair_deterministic(&raw);
        codec::parse_structured(&RawOutput::json(repaired.repaired_text)).ok()
    })?;
    let obj = tree.as_object()?;
    let mut out = IndexMap::new();
    for param in declared {
        let value = obj
            .get(param)
            .map(|v| match v {
                serde_json::Value::String(s) => s.clone(),
                other => other.to_string(),
            })
            .unwrap_or_else(|| PLACEHOLDER.to_string());
        out.insert(param.clone(), value);
    }
    Some(out)
}

/// Plan construction from the final call backwards: identify the final API,
/// resolve its parameters from the question, and recursively select
/// supplier APIs for parameters that must come from prior calls. The
/// resolved steps, reversed, form the forward execution order; unresolved
/// parameters keep the `$$$` placeholder.
pub fn run_backward(
    backend: &dyn ModelBackend,
    catalog: &ApiCatalog,
    question: &Question,
    formats: FormatConfig,
    options: &CompletionOptions,
    max_depth: usize,
) -> Result<BackwardOutcome, StrategyError> {
    let mut trace = Vec::new();
    let mut diagnostics = Vec::new();
    let mut state = BackwardState::default();

    let content = question.user_content();
    if content.trim().is_empty() {
        return Err(StrategyError::EmptyQuestion(question.id.clone()));
    }
    let catalog_text = serialize_catalog(catalog, formats.catalog_format);
    let ask = |template: &str, vars: &[(&str, &str)]| {
        let mut rendered = template
            .replace("{catalog_format}", &formats.catalog_format.to_string())
            .replace("{catalog}", &catalog_text)
            .replace("{question}", &content);
        for (key, value) in vars {
            rendered = rendered.replace(&format!("{{{key}}}"), value);
        }
        rendered
    };

    // Step 1: the final API.
    let final_prompt = ask(BACKWARD_FINAL_API, &[]);
    let reply = complete(backend, question, &[Message::user(final_prompt.clone())], options)?;
    trace.push(TraceTurn { tag: "final-api".into(), prompt: final_prompt, response: reply.clone() });
    let final_api = single_name(&reply);
    if !catalog.contains(&final_api) {
        diagnostics.push(format!("final API {final_api:?} is not in the catalog"));
        return Ok(BackwardOutcome { plan: CallPlan::default(), trace, diagnostics });
    }

    // Steps 2-4: resolve parameters, select suppliers, iterate.
    let mut queue = vec![final_api];
    while let Some(api_name) = queue.pop() {
        if state.resolved.iter().any(|s| s.api_name == api_name) {
            continue;
        }
        if state.resolved.len() >= max_depth {
            diagnostics.push(format!(
                "depth cap {max_depth} reached; not expanding {api_name:?}"
            ));
            break;
        }
        let spec = catalog.get(&api_name).expect("queued names are catalog-checked");
        let declared = spec.parameters.clone();

        let arguments = if declared.is_empty() {
            IndexMap::new()
        } else {
            let params_prompt = ask(
                BACKWARD_PARAMS,
                &[("api", api_name.as_str()), ("parameters", &declared.join(", "))],
            );
            let reply =
                complete(backend, question, &[Message::user(params_prompt.clone())], options)?;
            trace.push(TraceTurn {
                tag: format!("params:{api_name}"),
                prompt: params_prompt,
                response: reply.clone(),
            });
            match parse_param_values(&reply, &declared) {
                Some(values) => values,
                None => {
                    diagnostics.push(format!(
                        "unparseable parameter reply for {api_name:?}; defaulting to placeholders"
                    ));
                    declared.iter().map(|p| (p.clone(), PLACEHOLDER.to_string())).collect()
                }
            }
        };

        let missing: Vec<String> = arguments
            .iter()
            .filter(|(_, v)| v.as_str() == PLACEHOLDER)
            .map(|(k, _)| k.clone())
            .collect();
        state.resolved.push(CallStep { api_name: api_name.clone(), arguments });
        state.depth = state.resolved.len();

        for param in missing {
            let supplier_prompt = ask(
                BACKWARD_SUPPLIER,
                &[("api", api_name.as_str()), ("parameter", param.as_str())],
            );
            let reply =
                complete(backend, question, &[Message::user(supplier_prompt.clone())], options)?;
            trace.push(TraceTurn {
                tag: format!("supplier:{api_name}.{param}"),
                prompt: supplier_prompt,
                response: reply.clone(),
            });
            let supplier = single_name(&reply);
            if supplier.eq_ignore_ascii_case("none") || supplier.is_empty() {
                diagnostics.push(format!(
                    "no supplier for parameter {param:?} of {api_name:?}; left as placeholder"
                ));
                state.pending_params.push((api_name.clone(), param));
                continue;
            }
            if supplier == api_name || state.resolved.iter().any(|s| s.api_name == supplier) {
                diagnostics.push(format!(
                    "cycle detected: {supplier:?} suggested to supply {param:?} of {api_name:?}; branch halted"
                ));
                continue;
            }
            if !catalog.contains(&supplier) {
                diagnostics.push(format!(
                    "supplier {supplier:?} for {param:?} is not in the catalog; ignored"
                ));
                continue;
            }
            queue.push(supplier);
        }
    }

    // Reverse discovery order into execution order.
    let mut calls = state.resolved;
    calls.reverse();
    Ok(BackwardOutcome { plan: CallPlan { calls }, trace, diagnostics })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::ScriptedBackend;
    use crate::dataset::{ApiSpec, Difficulty};

    fn spec(name: &str, params: &[&str], returns: &[(&str, &str)]) -> ApiSpec {
        ApiSpec {
            name: name.into(),
            parameters: params.iter().map(|s| s.to_string()).collect(),
            description: format!("{name} description"),
            return_parameters: returns
                .iter()
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .collect(),
        }
    }

    fn banking_catalog() -> ApiCatalog {
        ApiCatalog {
            domain: "banking".into(),
            specs: vec![
                spec("getAccountBalance", &["accountID"], &[("Balance", "number")]),
                spec(
                    "getWireTransferDetails",
                    &["transferID"],
                    &[("transferDetails", "object")],
                ),
                spec("cancelWireTransfer", &["transferID"], &[("status", "string")]),
                spec(
                    "getCustomerCreditCards",
                    &["customerID"],
                    &[("creditCardNumber", "string")],
                ),
                spec(
                    "getCreditCardDetails",
                    &["creditCardNumber"],
                    &[("currencyPair", "string")],
                ),
                spec("getCurrencyExchangeRates", &["currencyPair"], &[("rate", "number")]),
            ],
        }
    }

    fn question(id: &str, content: &str) -> Question {
        Question {
            id: id.into(),
            messages: vec![Message::user(content)],
            difficulty: Difficulty::Easy,
        }
    }

    fn ban01() -> Question {
        question("ban01", "What is the balance for the account with ID 987654?")
    }

    #[test]
    fn routing_prompt_contains_catalog_and_question() {
        let bundle =
            build_routing_prompt(&banking_catalog(), &ban01(), FormatConfig::default()).unwrap();
        let content = bundle.content();
        assert!(content.contains("Retrieves the current balance")
            || content.contains("getAccountBalance description"));
        assert!(content.contains("balance for the account with ID 987654"));
    }

    #[test]
    fn empty_question_is_error() {
        let q = question("empty", "   ");
        assert!(matches!(
            build_routing_prompt(&banking_catalog(), &q, FormatConfig::default()),
            Err(StrategyError::EmptyQuestion(_))
        ));
    }

    #[test]
    fn yaml_catalog_format_serializes_yaml() {
        let formats = FormatConfig {
            catalog_format: OutputFormat::Yaml,
            output_format: OutputFormat::Json,
        };
        let bundle = build_full_prompt(&banking_catalog(), &ban01(), formats).unwrap();
        let content = bundle.content();
        assert!(content.contains("- name: getAccountBalance"));
        assert!(content.contains("yaml format"));
    }

    #[test]
    fn full_prompt_names_plan_keys_and_output_format() {
        let formats = FormatConfig {
            catalog_format: OutputFormat::Json,
            output_format: OutputFormat::Yaml,
        };
        let bundle = build_full_prompt(&banking_catalog(), &ban01(), formats).unwrap();
        let content = bundle.content();
        assert!(content.contains("\"API\""));
        assert!(content.contains("\"parameters\""));
        assert!(content.contains("single yaml object"));
    }

    #[test]
    fn full_prompt_serializes_every_spec() {
        let mut catalog = banking_catalog();
        for i in 0..100 {
            catalog.specs.push(spec(&format!("api{i}"), &[], &[]));
        }
        let bundle = build_full_prompt(&catalog, &ban01(), FormatConfig::default()).unwrap();
        let content = bundle.content();
        for i in 0..100 {
            assert!(content.contains(&format!("api{i}")));
        }
    }

    #[test]
    fn direct_with_scripted_echo_recovers_plan() {
        let backend = ScriptedBackend::new("echo").with_response(
            "ban01",
            r#"{"API": ["getAccountBalance"], "parameters": [{"accountID": "987654"}]}"#,
        );
        let outcome = run_direct(
            &backend,
            &banking_catalog(),
            &ban01(),
            FormatConfig::default(),
            &CompletionOptions::default(),
        )
        .unwrap();
        let plan = outcome.plan.unwrap();
        assert_eq!(plan.api_names(), vec!["getAccountBalance"]);
    }

    #[test]
    fn direct_with_garbage_keeps_raw() {
        let backend = ScriptedBackend::new("garbage").with_response("ban01", "no structure here");
        let outcome = run_direct(
            &backend,
            &banking_catalog(),
            &ban01(),
            FormatConfig::default(),
            &CompletionOptions::default(),
        )
        .unwrap();
        assert_eq!(outcome.raw.text, "no structure here");
        assert!(outcome.plan.is_none());
    }

    #[test]
    fn direct_backend_error_carries_question_id() {
        let backend = ScriptedBackend::new("down").with_response("ban01", "!error timeout");
        let err = run_direct(
            &backend,
            &banking_catalog(),
            &ban01(),
            FormatConfig::default(),
            &CompletionOptions::default(),
        )
        .unwrap_err();
        assert!(matches!(err, StrategyError::Backend { ref question_id, .. } if question_id == "ban01"));
    }

    #[test]
    fn parse_route_accepts_structured_and_plain_lists() {
        let json = r#"["a", "b"]"#;
        assert_eq!(parse_route(json, OutputFormat::Json), vec!["a", "b"]);
        let object = r#"{"API": ["a", "b"]}"#;
        assert_eq!(parse_route(object, OutputFormat::Json), vec!["a", "b"]);
        let lines = "getWireTransferDetails\ncancelWireTransfer";
        assert_eq!(
            parse_route(lines, OutputFormat::Json),
            vec!["getWireTransferDetails", "cancelWireTransfer"]
        );
        assert!(parse_route("I really cannot say!", OutputFormat::Json).is_empty());
    }

    #[test]
    fn two_step_filters_catalog_to_route_order() {
        let q = question("ban069", "Retrieve details of wire transfer WT987654 and cancel it.");
        let router = ScriptedBackend::new("router")
            .with_response("ban069", r#"["getWireTransferDetails", "cancelWireTransfer"]"#);
        let paramgen = ScriptedBackend::new("paramgen").with_response(
            "ban069",
            r#"{"API": ["getWireTransferDetails", "cancelWireTransfer"], "parameters": [{"transferID": "WT987654"}, {"transferID": "WT987654"}]}"#,
        );
        let outcome = run_two_step(
            &router,
            &paramgen,
            &banking_catalog(),
            &q,
            FormatConfig::default(),
            &CompletionOptions::default(),
        )
        .unwrap();
        assert_eq!(outcome.route, vec!["getWireTransferDetails", "cancelWireTransfer"]);
        let plan = outcome.plan.unwrap();
        assert_eq!(plan.api_names(), vec!["getWireTransferDetails", "cancelWireTransfer"]);

        // The step-2 prompt carries exactly the two routed specs, in order.
        let step2 = outcome.step2_prompt.unwrap().content();
        let pos_details = step2.find("\"getWireTransferDetails\"").unwrap();
        let pos_cancel = step2.find("\"cancelWireTransfer\"").unwrap();
        assert!(pos_details < pos_cancel);
        assert!(!step2.contains("getAccountBalance"));
    }

    #[test]
    fn two_step_drops_hallucinated_route_names() {
        let q = ban01();
        let router = ScriptedBackend::new("router")
            .with_response("ban01", r#"["getImaginaryApi", "getAccountBalance"]"#);
        let paramgen = ScriptedBackend::new("paramgen").with_response(
            "ban01",
            r#"{"API": ["getAccountBalance"], "parameters": [{"accountID": "987654"}]}"#,
        );
        let outcome = run_two_step(
            &router,
            &paramgen,
            &banking_catalog(),
            &q,
            FormatConfig::default(),
            &CompletionOptions::default(),
        )
        .unwrap();
        assert_eq!(outcome.dropped_route_names, vec!["getImaginaryApi"]);
        assert!(!outcome.diagnostics.is_empty());
        let step2 = outcome.step2_prompt.unwrap().content();
        assert!(!step2.contains("getImaginaryApi"));
    }

    #[test]
    fn two_step_empty_route_skips_step_two() {
        let router = ScriptedBackend::new("router").with_response("ban01", "[]");
        let paramgen = ScriptedBackend::new("paramgen");
        let outcome = run_two_step(
            &router,
            &paramgen,
            &banking_catalog(),
            &ban01(),
            FormatConfig::default(),
            &CompletionOptions::default(),
        )
        .unwrap();
        assert!(outcome.step2_prompt.is_none());
        assert!(outcome.plan.unwrap().is_empty());
        assert!(paramgen.recorded_calls().is_empty());
    }

    #[test]
    fn two_step_same_backend_for_both_roles() {
        let backend = ScriptedBackend::new("both").with_responses(
            "ban01",
            vec![
                r#"["getAccountBalance"]"#.into(),
                r#"{"API": ["getAccountBalance"], "parameters": [{"accountID": "987654"}]}"#.into(),
            ],
        );
        let outcome = run_two_step(
            &backend,
            &backend,
            &banking_catalog(),
            &ban01(),
            FormatConfig::default(),
            &CompletionOptions::default(),
        )
        .unwrap();
        assert_eq!(outcome.plan.unwrap().api_names(), vec!["getAccountBalance"]);
    }

    fn ban081() -> Question {
        Question {
            id: "ban081".into(),
            messages: vec![Message::user(
                "I want to travel to Japan, how many Japanese Yen I can spend with my credit card? my customer ID is 123155.",
            )],
            difficulty: Difficulty::Hard,
        }
    }

    fn ban081_script() -> Vec<String> {
        vec![
            // final API
            "getCurrencyExchangeRates".into(),
            // its params: must come from a prior call
            r#"{"currencyPair": "$$$"}"#.into(),
            // supplier for currencyPair
            "getCreditCardDetails".into(),
            // its params
            r#"{"creditCardNumber": "$$$"}"#.into(),
            // supplier for creditCardNumber
            "getCustomerCreditCards".into(),
            // its params, available in the question
            r#"{"customerID": "123155"}"#.into(),
        ]
    }

    #[test]
    fn backward_walks_ban081_chain_into_forward_order() {
        let backend =
            ScriptedBackend::new("backward").with_responses("ban081", ban081_script());
        let outcome = run_backward(
            &backend,
            &banking_catalog(),
            &ban081(),
            FormatConfig::default(),
            &CompletionOptions::default(),
            DEFAULT_MAX_DEPTH,
        )
        .unwrap();
        assert_eq!(
            outcome.plan.api_names(),
            vec!["getCustomerCreditCards", "getCreditCardDetails", "getCurrencyExchangeRates"]
        );
        assert_eq!(
            outcome.plan.calls[0].arguments.get("customerID").unwrap(),
            "123155"
        );
        assert_eq!(
            outcome.plan.calls[1].arguments.get("creditCardNumber").unwrap(),
            PLACEHOLDER
        );
        assert!(outcome.diagnostics.is_empty());
    }

    #[test]
    fn backward_single_step_when_question_has_all_parameters() {
        let backend = ScriptedBackend::new("backward").with_responses(
            "ban01",
            vec!["getAccountBalance".into(), r#"{"accountID": "987654"}"#.into()],
        );
        let outcome = run_backward(
            &backend,
            &banking_catalog(),
            &ban01(),
            FormatConfig::default(),
            &CompletionOptions::default(),
            DEFAULT_MAX_DEPTH,
        )
        .unwrap();
        assert_eq!(outcome.plan.api_names(), vec!["getAccountBalance"]);
        assert_eq!(outcome.trace.len(), 2);
    }

    #[test]
    fn backward_self_cycle_halts_with_diagnostic() {
        let backend = ScriptedBackend::new("backward").with_responses(
            "ban01",
            vec![
                "getAccountBalance".into(),
                r#"{"accountID": "$$$"}"#.into(),
                // claims the API supplies its own missing parameter
                "getAccountBalance".into(),
            ],
        );
        let outcome = run_backward(
            &backend,
            &banking_catalog(),
            &ban01(),
            FormatConfig::default(),
            &CompletionOptions::default(),
            DEFAULT_MAX_DEPTH,
        )
        .unwrap();
        assert_eq!(outcome.plan.calls.len(), 1);
        assert!(outcome
            .diagnostics
            .iter()
            .any(|d| d.contains("cycle detected")));
    }

    #[test]
    fn backward_unknown_final_api_gives_empty_plan() {
        let backend =
            ScriptedBackend::new("backward").with_response("ban01", "getMadeUpApi");
        let outcome = run_backward(
            &backend,
            &banking_catalog(),
            &ban01(),
            FormatConfig::default(),
            &CompletionOptions::default(),
            DEFAULT_MAX_DEPTH,
        )
        .unwrap();
        assert!(outcome.plan.is_empty());
        assert!(!outcome.diagnostics.is_empty());
    }

    #[test]
    fn backward_respects_depth_cap() {
        // A linear chain longer than the cap: each api{i} needs a value
        // supplied by api{i+1}.
        let mut specs = Vec::new();
        for i in 0..8usize {
            specs.push(spec(
                &format!("api{i}"),
                &[&format!("p{i}")],
                &[(&format!("p{}", i.saturating_sub(1)), "string")],
            ));
        }
        let catalog = ApiCatalog { domain: "chain".into(), specs };
        let mut script = vec!["api0".to_string()];
        for i in 0..8 {
            script.push(format!("{{\"p{i}\": \"$$$\"}}"));
            script.push(format!("api{}", i + 1));
        }
        let backend = ScriptedBackend::new("chain").with_responses("q", script);
        let q = question("q", "walk the chain");
        let outcome = run_backward(
            &backend,
            &catalog,
            &q,
            FormatConfig::default(),
            &CompletionOptions::default(),
            DEFAULT_MAX_DEPTH,
        )
        .unwrap();
        assert!(outcome.plan.calls.len() <= DEFAULT_MAX_DEPTH);
        assert!(outcome.diagnostics.iter().any(|d| d.contains("depth cap")));
        let names = outcome.plan.api_names();
        let unique: std::collections::HashSet<_> = names.iter().collect();
        assert_eq!(unique.len(), names.len());
    }
}
