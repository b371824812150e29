//! Agentic dataset retrieval: the model reformulates the question into at
//! most `max_subqueries` searches and reports the datasets it needs. An empty
//! report is a rejection.

mod pdf;

use std::collections::HashMap;
use std::time::{Duration, Instant};

use base64::Engine as _;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value as Json};
use thiserror::Error;

use crate::catalog::{Catalog, DatasetMetadata};
use crate::embedding::{hit_order, Embedder, EmbeddingError, Index, SearchHit};
use crate::llm::{ChatMessage, Gateway, LlmError, Part, ToolCall, ToolSpec, Usage};
use crate::prompts;

pub use pdf::{convert_pdf, page_markers};

pub const SEARCH_TOOL: &str = "search_datasets";
pub const REPORT_TOOL: &str = "report_results";
pub const NO_REPORT_REASON: &str = "agent_no_report";
const MAX_TOP_K: u64 = 20;

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error("question text is empty")]
    EmptyQuestion,
    #[error(transparent)]
    Provider(#[from] LlmError),
    #[error("unreadable PDF: {0}")]
    UnreadablePdf(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetrievalConfig {
    pub max_subqueries: usize,
    pub max_tool_rounds: usize,
    pub top_k: usize,
    pub snippet_max_chars: usize,
    /// Language for reformulations; defaults to the catalog's dominant tag.
    pub language: Option<String>,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        RetrievalConfig { max_subqueries: 3, max_tool_rounds: 8, top_k: 5, snippet_max_chars: 2000, language: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Attachment {
    Image { media_type: String, data_base64: String },
    Document { name: String, markdown: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserQuestion {
    pub text: String,
    #[serde(default)]
    pub attachments: Vec<Attachment>,
}

impl UserQuestion {
    pub fn new(text: impl Into<String>) -> Self {
        UserQuestion { text: text.into(), attachments: Vec::new() }
    }

    pub fn with_image(mut self, media_type: &str, bytes: &[u8]) -> Self {
        self.attachments.push(Attachment::Image {
            media_type: media_type.to_string(),
            data_base64: base64::engine::general_purpose::STANDARD.encode(bytes),
        });
        self
    }

    pub fn with_pdf(mut self, name: &str, bytes: &[u8]) -> Result<Self, RetrievalError> {
        let markdown = convert_pdf(bytes)?;
        self.attachments.push(Attachment::Document { name: name.to_string(), markdown });
        Ok(self)
    }

    pub fn parts(&self) -> Vec<Part> {
        let mut parts = vec![Part::Text { text: self.text.clone() }];
        for a in &self.attachments {
            parts.push(match a {
                Attachment::Image { media_type, data_base64 } => {
                    Part::Image { media_type: media_type.clone(), data_base64: data_base64.clone() }
                }
                Attachment::Document { name, markdown } => {
                    Part::Document { markdown: format!("Attached document `{name}`:\n\n{markdown}") }
                }
            });
        }
        parts
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum TraceEvent {
    SubqueryIssued { text: String },
    HitsReturned { hits: Vec<SearchHit> },
    Warning { message: String },
    Reported {
        dataset_ids: Vec<String>,
        justification: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        reason: Option<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalTrace {
    pub prompt_hash: String,
    pub events: Vec<TraceEvent>,
}

impl RetrievalTrace {
    /// Last event is `Reported`; every `HitsReturned` follows a `SubqueryIssued`
    /// (warnings may sit in between).
    pub fn is_well_formed(&self) -> bool {
        let mut open = false;
        for e in &self.events {
            match e {
                TraceEvent::SubqueryIssued { .. } => open = true,
                TraceEvent::HitsReturned { .. } if !open => return false,
                TraceEvent::HitsReturned { .. } => open = false,
                _ => {}
            }
        }
        matches!(self.events.last(), Some(TraceEvent::Reported { .. }))
    }

    pub fn warnings(&self) -> impl Iterator<Item = &str> {
        self.events.iter().filter_map(|e| match e {
            TraceEvent::Warning { message } => Some(message.as_str()),
            _ => None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalOutcome {
    pub dataset_ids: Vec<String>,
    pub rejected: bool,
    pub reformulations: Vec<String>,
    /// Every hit seen across subqueries, deduplicated by id keeping the max score.
    pub candidates: Vec<SearchHit>,
    pub justification: String,
    pub trace: RetrievalTrace,
    pub usage: Usage,
    #[serde(with = "duration_ms")]
    pub latency: Duration,
}

pub(crate) mod duration_ms {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64() * 1000.0)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        let ms = f64::deserialize(d)?;
        Ok(Duration::from_secs_f64(ms.max(0.0) / 1000.0))
    }
}

pub fn tool_specs(config: &RetrievalConfig) -> Vec<ToolSpec> {
    vec![
        ToolSpec {
            name: SEARCH_TOOL.into(),
            description: format!(
                "Nearest-neighbour search over the dataset catalog. At most {} searches per question.",
                config.max_subqueries
            ),
            parameters: json!({
                "type": "object",
                "properties": {
                    "query": {"type": "string", "minLength": 1},
                    "top_k": {"type": "integer", "minimum": 1, "maximum": MAX_TOP_K}
                },
                "required": ["query"],
                "additionalProperties": false
            }),
        },
        ToolSpec {
            name: REPORT_TOOL.into(),
            description: "Report the datasets needed to answer the question. An empty list means the catalog \
                          cannot answer it."
                .into(),
            parameters: json!({
                "type": "object",
                "properties": {
                    "dataset_ids": {"type": "array", "items": {"type": "string"}},
                    "justification": {"type": "string"}
                },
                "required": ["dataset_ids"],
                "additionalProperties": false
            }),
        },
    ]
}

fn truncate_chars(s: &str, max: usize) -> String {
    match s.char_indices().nth(max) {
        None => s.to_string(),
        Some((cut, _)) if max >= 1 => {
            let (head, _) = s.split_at(s[..cut].char_indices().last().map_or(0, |(i, _)| i));
            format!("{head}…")
        }
        Some(_) => String::new(),
    }
}

/// Title, summary and field names of one document, at most `max_chars` long.
pub fn snippet(meta: &DatasetMetadata, max_chars: usize) -> String {
    let fields: Vec<&str> = meta.fields.iter().map(|f| f.name.as_str()).collect();
    let full = format!("{}\n{}\nFields: {}", meta.title, meta.summary, fields.join(", "));
    truncate_chars(&full, max_chars)
}

pub fn tool_search_datasets(
    catalog: &Catalog,
    index: &Index,
    embedder: &dyn Embedder,
    query: &str,
    top_k: usize,
    snippet_max_chars: usize,
) -> Result<Vec<(SearchHit, String)>, RetrievalError> {
    if top_k == 0 {
        return Err(RetrievalError::InvalidArgument("top_k must be at least 1".into()));
    }
    if index.is_empty() {
        return Err(EmbeddingError::EmptyIndex.into());
    }
    let q = embedder.embed(query)?;
    let hits = index.knn(&q, top_k)?;
    Ok(hits
        .into_iter()
        .map(|h| {
            let s = catalog.get(&h.dataset_id).map(|m| snippet(m, snippet_max_chars)).unwrap_or_default();
            (h, s)
        })
        .collect())
}

/// Everything the retrieval loop needs besides the question.
pub struct Retriever<'a> {
    pub catalog: &'a Catalog,
    pub index: &'a Index,
    pub embedder: &'a dyn Embedder,
    pub gateway: &'a Gateway,
    pub config: &'a RetrievalConfig,
}

struct LoopState {
    events: Vec<TraceEvent>,
    reformulations: Vec<String>,
    best: HashMap<String, f64>,
    report: Option<(Vec<String>, String, Option<String>)>,
}

impl LoopState {
    fn warn(&mut self, message: String) {
        tracing::warn!("{message}");
        self.events.push(TraceEvent::Warning { message });
    }
}

impl Retriever<'_> {
    pub fn system_prompt(&self) -> String {
        let language = self.config.language.as_deref().or(self.catalog.language()).unwrap_or("en");
        prompts::render(
            prompts::RETRIEVAL,
            &[("max_subqueries", &self.config.max_subqueries.to_string()), ("language", language)],
        )
    }

    pub fn retrieve(&self, question: &UserQuestion) -> Result<RetrievalOutcome, RetrievalError> {
        if question.text.trim().is_empty() {
            return Err(RetrievalError::EmptyQuestion);
        }
        let started = Instant::now();
        let tools = tool_specs(self.config);
        let user = ChatMessage { parts: question.parts(), ..ChatMessage::user("") };
        let mut messages = vec![ChatMessage::system(self.system_prompt()), user];
        let mut usage = Usage::default();
        let mut st = LoopState { events: Vec::new(), reformulations: Vec::new(), best: HashMap::new(), report: None };

        for _round in 0..self.config.max_tool_rounds {
            let (reply, u) = match self.gateway.complete(&messages, &tools) {
                Ok(r) => r,
                Err(LlmError::MalformedToolArguments { call_id, reason, message, usage: u }) => {
                    usage += u;
                    st.warn(format!("malformed tool arguments in {call_id}: {reason}"));
                    let calls = message.tool_calls.clone();
                    messages.push(*message);
                    for c in calls {
                        let text = if c.id == call_id {
                            format!("error: invalid arguments: {reason}")
                        } else {
                            format!("error: not executed because call {call_id} had invalid arguments")
                        };
                        messages.push(ChatMessage::tool(c.id, text));
                    }
                    continue;
                }
                Err(e) => return Err(e.into()),
            };
            usage += u;
            let calls = reply.tool_calls.clone();
            messages.push(reply);
            if calls.is_empty() {
                messages.push(ChatMessage::user(format!(
                    "Continue by calling `{SEARCH_TOOL}` or `{REPORT_TOOL}`."
                )));
                continue;
            }
            for call in &calls {
                let response = self.handle_call(call, &mut st);
                messages.push(ChatMessage::tool(call.id.clone(), response));
            }
            if st.report.is_some() {
                break;
            }
        }

        let (dataset_ids, justification, reason) = st.report.take().unwrap_or_else(|| {
            st.warn(format!("no report after {} tool rounds", self.config.max_tool_rounds));
            (Vec::new(), String::new(), Some(NO_REPORT_REASON.to_string()))
        });
        st.events.push(TraceEvent::Reported {
            dataset_ids: dataset_ids.clone(),
            justification: justification.clone(),
            reason,
        });
        let mut candidates: Vec<SearchHit> =
            st.best.into_iter().map(|(dataset_id, score)| SearchHit { dataset_id, score }).collect();
        candidates.sort_by(hit_order);
        Ok(RetrievalOutcome {
            rejected: dataset_ids.is_empty(),
            dataset_ids,
            reformulations: st.reformulations,
            candidates,
            justification,
            trace: RetrievalTrace { prompt_hash: prompts::hash(prompts::RETRIEVAL), events: st.events },
            usage,
            latency: started.elapsed(),
        })
    }

    fn handle_call(&self, call: &ToolCall, st: &mut LoopState) -> String {
        match call.name.as_str() {
            SEARCH_TOOL => {
                if st.report.is_some() {
                    st.warn(format!("search after report ignored ({})", call.id));
                    return "error: results were already reported".into();
                }
                if st.reformulations.len() >= self.config.max_subqueries {
                    st.warn(format!("subquery budget of {} exhausted", self.config.max_subqueries));
                    return format!(
                        "refused: the limit of {} searches is reached; report your results now",
                        self.config.max_subqueries
                    );
                }
                let query = call.arguments.get("query").and_then(Json::as_str).unwrap_or("").to_string();
                let top_k = call.arguments.get("top_k").and_then(Json::as_u64).unwrap_or(self.config.top_k as u64);
                st.reformulations.push(query.clone());
                st.events.push(TraceEvent::SubqueryIssued { text: query.clone() });
                match tool_search_datasets(
                    self.catalog,
                    self.index,
                    self.embedder,
                    &query,
                    top_k.min(MAX_TOP_K) as usize,
                    self.config.snippet_max_chars,
                ) {
                    Ok(hits) => {
                        for (h, _) in &hits {
                            let best = st.best.entry(h.dataset_id.clone()).or_insert(h.score);
                            *best = best.max(h.score);
                        }
                        st.events.push(TraceEvent::HitsReturned { hits: hits.iter().map(|(h, _)| h.clone()).collect() });
                        let body: Vec<Json> = hits
                            .iter()
                            .map(|(h, s)| {
                                json!({"dataset_id": h.dataset_id, "score": (h.score * 1e4).round() / 1e4, "snippet": s})
                            })
                            .collect();
                        serde_json::to_string_pretty(&body).unwrap()
                    }
                    Err(e) => {
                        st.events.push(TraceEvent::HitsReturned { hits: Vec::new() });
                        st.warn(format!("search failed: {e}"));
                        format!("error: {e}")
                    }
                }
            }
            REPORT_TOOL => {
                if st.report.is_some() {
                    st.warn(format!("second report ignored ({})", call.id));
                    return "error: results were already reported".into();
                }
                let raw: Vec<String> = call
                    .arguments
                    .get("dataset_ids")
                    .and_then(Json::as_array)
                    .map(|a| a.iter().filter_map(|v| v.as_str().map(str::to_string)).collect())
                    .unwrap_or_default();
                let justification =
                    call.arguments.get("justification").and_then(Json::as_str).unwrap_or("").to_string();
                let mut ids: Vec<String> = Vec::new();
                for id in raw {
                    if !self.catalog.contains(&id) {
                        st.warn(format!("dropped unknown dataset id `{id}`"));
                    } else if !ids.contains(&id) {
                        ids.push(id);
                    }
                }
                st.report = Some((ids, justification, None));
                "reported".into()
            }
            other => {
                st.warn(format!("unknown tool `{other}`"));
                format!("error: unknown tool `{other}`")
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn truncation_counts_chars() {
        assert_eq!(truncate_chars("abc", 5), "abc");
        let t = truncate_chars("äöüäöü", 4);
        assert_eq!(t.chars().count(), 4);
        assert!(t.ends_with('…'));
        assert_eq!(truncate_chars("abc", 0), "");
    }

    #[test]
    fn trace_shape_check() {
        let ok = RetrievalTrace {
            prompt_hash: String::new(),
            events: vec![
                TraceEvent::SubqueryIssued { text: "a".into() },
                TraceEvent::HitsReturned { hits: vec![] },
                TraceEvent::Reported { dataset_ids: vec![], justification: String::new(), reason: None },
            ],
        };
        assert!(ok.is_well_formed());
        let mut bad = ok.clone();
        bad.events.remove(0);
        assert!(!bad.is_well_formed());
        let mut bad = ok;
        bad.events.pop();
        assert!(!bad.is_well_formed());
    }
}
