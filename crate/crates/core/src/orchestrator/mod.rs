//! Conversation lifecycle: first turns run retrieval then analysis (or stop
//! at a rejection); follow-ups are routed by a model call. Every step lands
//! in the conversation's audit log.

pub mod audit;

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value as Json};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::analysis::{AnalysisConfig, AnalysisDataset, Analyst, FinalAnswer, StepEvent, TerminatedBy};
use crate::catalog::{Catalog, CatalogError, DatasetPayload};
use crate::config::{Config, EmbeddingProvider, LlmProvider};
use crate::embedding::{Embedder, EmbeddingCache, EmbeddingError, HashEmbedder, Index, RemoteEmbedder, RemoteEmbedderConfig};
use crate::llm::{
    ChatMessage, Gateway, LlmError, OpenAiConfig, OpenAiProvider, PricingTable, Provider, RetryPolicy, ScriptedProvider,
    ToolSpec, Usage,
};
use crate::prompts;
use crate::retrieval::{Attachment, RetrievalConfig, RetrievalError, RetrievalOutcome, Retriever, TraceEvent, UserQuestion};
use crate::sandbox::Session;

pub use audit::{check_stream, read_trace, AuditLog, EventEnvelope, EventType, EVENT_SCHEMA_VERSION};

pub const ROUTE_TOOL: &str = "route";
pub const REJECTION_TEXT: &str =
    "No dataset in the catalog can answer this question, so no analysis was run.";

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Catalog(#[from] CatalogError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error("{0}")]
    Setup(String),
}

/// Model-bound gateways per stage. They may share one provider.
#[derive(Clone)]
pub struct Gateways {
    pub retrieval: Gateway,
    pub analysis: Gateway,
    pub router: Gateway,
    pub judge: Gateway,
}

impl Gateways {
    pub fn single(provider: Arc<dyn Provider>, model: &str) -> Gateways {
        let g = Gateway::new(provider, model);
        Gateways { retrieval: g.clone(), analysis: g.clone(), router: g.clone(), judge: g }
    }
}

/// Shared, immutable per-process state.
pub struct Engine {
    pub catalog: Arc<Catalog>,
    pub index: Arc<Index>,
    pub embedder: Arc<dyn Embedder>,
    pub gateways: Gateways,
    pub pricing: PricingTable,
    pub retrieval: RetrievalConfig,
    pub analysis: AnalysisConfig,
    pub data_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RouteTarget {
    Retrieval,
    Analysis,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteDecision {
    pub target: RouteTarget,
    pub rationale: String,
    /// Set when the decision did not come from the model.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fallback: Option<String>,
    #[serde(default)]
    pub usage: Usage,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResponseKind {
    Answer,
    Rejection,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRef {
    pub id: String,
    pub title: String,
    pub source_url: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemResponse {
    pub kind: ResponseKind,
    pub text: String,
    pub datasets: Vec<DatasetRef>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub route: Option<RouteDecision>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub retrieval: Option<RetrievalOutcome>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub analysis: Option<FinalAnswer>,
}

impl SystemResponse {
    fn error(text: impl Into<String>) -> Self {
        SystemResponse {
            kind: ResponseKind::Error,
            text: text.into(),
            datasets: Vec::new(),
            route: None,
            retrieval: None,
            analysis: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Turn {
    pub question: UserQuestion,
    pub response: SystemResponse,
}

/// One conversation: its turns, datasets in use, sandbox session and log.
pub struct Conversation {
    pub id: String,
    pub turns: Vec<Turn>,
    pub active_datasets: Vec<String>,
    session: Option<Session>,
    payloads: HashMap<String, Arc<DatasetPayload>>,
    audit: AuditLog,
}

impl Conversation {
    pub fn new(id: &str) -> Conversation {
        Conversation {
            id: id.into(),
            turns: Vec::new(),
            active_datasets: Vec::new(),
            session: None,
            payloads: HashMap::new(),
            audit: AuditLog::in_memory(id),
        }
    }

    /// A conversation whose audit log is persisted at `path`.
    pub fn persisted(id: &str, path: &Path) -> std::io::Result<Conversation> {
        Ok(Conversation { audit: AuditLog::create(id, path)?, ..Conversation::new(id) })
    }

    pub fn has_session(&self) -> bool {
        self.session.is_some()
    }

    pub fn events(&self) -> &[EventEnvelope] {
        self.audit.events()
    }

    pub fn audit_path(&self) -> Option<&Path> {
        self.audit.path()
    }

    fn history(&self) -> String {
        let mut out = String::new();
        for (i, t) in self.turns.iter().enumerate() {
            out.push_str(&format!("Q{}: {}\nA{}: {}\n", i + 1, t.question.text, i + 1, t.response.text));
        }
        out
    }
}

fn digest(v: &impl Serialize) -> String {
    let bytes = serde_json::to_vec(v).expect("serializable");
    hex::encode(&Sha256::digest(&bytes)[..16])
}

fn attachment_summary(a: &Attachment) -> Json {
    match a {
        Attachment::Image { media_type, data_base64 } => {
            json!({"type": "image", "media_type": media_type, "sha256": digest(data_base64), "base64_len": data_base64.len()})
        }
        Attachment::Document { name, markdown } => {
            json!({"type": "document", "name": name, "sha256": digest(markdown), "markdown": markdown})
        }
    }
}

pub fn route_tool() -> ToolSpec {
    ToolSpec {
        name: ROUTE_TOOL.into(),
        description: "Send the follow-up to retrieval (new datasets needed) or analysis (loaded datasets suffice).".into(),
        parameters: json!({
            "type": "object",
            "properties": {
                "target": {"enum": ["retrieval", "analysis"]},
                "rationale": {"type": "string"}
            },
            "required": ["target"],
            "additionalProperties": false
        }),
    }
}

struct Emitter<'a> {
    turn: u32,
    sink: &'a mut dyn FnMut(&EventEnvelope),
}

impl Emitter<'_> {
    fn emit(&mut self, log: &mut AuditLog, kind: EventType, payload: Json) {
        let ev = log.append(self.turn, kind, payload);
        (self.sink)(ev);
    }
}

impl Engine {
    /// Loads the catalog, builds the index and the gateways described by `config`.
    pub fn from_config(config: &Config) -> Result<Engine, EngineError> {
        let catalog = Catalog::ingest(&config.catalog.manifest)?;
        let e = &config.embedding;
        let embedder: Arc<dyn Embedder> = match e.provider {
            EmbeddingProvider::Hash => Arc::new(HashEmbedder::new(e.dim)),
            EmbeddingProvider::Remote => Arc::new(RemoteEmbedder::new(RemoteEmbedderConfig {
                endpoint: e.endpoint.clone(),
                model: e.model.clone(),
                api_key_env: e.api_key_env.clone(),
                dim: e.dim,
                timeout_secs: 60,
            })?),
        };
        let cache = if e.cache { Some(EmbeddingCache::open(config.data_dir.join("embeddings"))?) } else { None };
        let index = Index::build(&catalog, embedder.clone(), cache.as_ref(), e.in_flight)?;
        let l = &config.llm;
        let provider: Arc<dyn Provider> = match l.provider {
            LlmProvider::Scripted => {
                let path = l.script.as_ref().ok_or_else(|| EngineError::Setup("llm.script is not set".into()))?;
                Arc::new(ScriptedProvider::load(path)?)
            }
            LlmProvider::Openai => Arc::new(OpenAiProvider::new(OpenAiConfig {
                endpoint: l.endpoint.clone(),
                api_key_env: l.api_key_env.clone(),
                timeout_secs: l.timeout_secs,
                temperature: l.temperature,
            })?),
        };
        let retry = RetryPolicy { max_retries: l.max_retries, ..RetryPolicy::default() };
        let base = Gateway::new(provider.clone(), l.model.clone()).with_retry(retry).with_in_flight(l.in_flight);
        let bind = |model: &str| {
            let mut g = base.clone();
            if g.model() != model {
                g = Gateway::new(provider.clone(), model).with_retry(retry).with_in_flight(l.in_flight);
            }
            g
        };
        let gateways = Gateways {
            retrieval: bind(l.retrieval_model()),
            analysis: bind(l.analysis_model()),
            router: bind(l.router_model()),
            judge: bind(l.judge_model()),
        };
        let pricing = match &l.pricing {
            Some(p) => PricingTable::load(p)?,
            None => PricingTable::bundled(),
        };
        Ok(Engine {
            catalog: Arc::new(catalog),
            index: Arc::new(index),
            embedder,
            gateways,
            pricing,
            retrieval: config.retrieval.clone(),
            analysis: config.analysis.clone(),
            data_dir: Some(config.data_dir.clone()),
        })
    }

    pub fn retriever(&self) -> Retriever<'_> {
        Retriever {
            catalog: &self.catalog,
            index: &self.index,
            embedder: self.embedder.as_ref(),
            gateway: &self.gateways.retrieval,
            config: &self.retrieval,
        }
    }

    pub fn analyst(&self) -> Analyst<'_> {
        Analyst { gateway: &self.gateways.analysis, config: &self.analysis }
    }

    pub fn retrieve(&self, question: &UserQuestion) -> Result<RetrievalOutcome, RetrievalError> {
        self.retriever().retrieve(question)
    }

    /// Cost in USD, or `None` when the model has no price entry.
    pub fn cost(&self, model: &str, usage: Usage) -> Option<f64> {
        self.pricing.cost(model, usage).ok()
    }

    pub fn dataset_ref(&self, id: &str) -> Option<DatasetRef> {
        self.catalog.get(id).map(|m| DatasetRef { id: m.id.clone(), title: m.title.clone(), source_url: m.source_url.clone() })
    }

    /// Analysis over the given datasets in a fresh session, as the benchmark
    /// runs it with ground-truth datasets.
    pub fn analyze_datasets(&self, question: &str, ids: &[String]) -> Result<FinalAnswer, EngineError> {
        let payloads: Vec<(String, DatasetPayload)> =
            ids.iter().map(|id| Ok((id.clone(), self.catalog.load_payload(id)?))).collect::<Result<_, CatalogError>>()?;
        let datasets: Vec<AnalysisDataset<'_>> = payloads
            .iter()
            .map(|(id, p)| AnalysisDataset { meta: self.catalog.get(id).expect("loaded above"), payload: p })
            .collect();
        let mut session = Session::new();
        Ok(self.analyst().analyze(question, "", &datasets, &mut session, &mut |_| {}))
    }

    /// Decides where a follow-up goes. Never fails: provider errors fall back
    /// to analysis when datasets are loaded, else retrieval.
    pub fn route_followup(&self, conv: &Conversation, question: &UserQuestion) -> RouteDecision {
        let fallback = |why: String| {
            let target = if conv.active_datasets.is_empty() { RouteTarget::Retrieval } else { RouteTarget::Analysis };
            tracing::warn!(conversation = %conv.id, "router fallback: {why}");
            RouteDecision { target, rationale: format!("fallback: {why}"), fallback: Some(why), usage: Usage::default() }
        };
        if conv.active_datasets.is_empty() {
            return RouteDecision {
                target: RouteTarget::Retrieval,
                rationale: "no datasets are loaded yet".into(),
                fallback: Some("no_active_datasets".into()),
                usage: Usage::default(),
            };
        }
        let loaded: Vec<String> = conv
            .active_datasets
            .iter()
            .filter_map(|id| self.catalog.get(id))
            .map(|m| format!("- {} ({}): {}", m.id, m.title, m.summary))
            .collect();
        let system = prompts::render(prompts::ROUTER, &[("datasets", &loaded.join("\n"))]);
        let user = format!("Follow-up question: {}\n\nEarlier in this conversation:\n{}", question.text, conv.history());
        let msgs = [ChatMessage::system(system), ChatMessage::user(user)];
        match self.gateways.router.complete(&msgs, &[route_tool()]) {
            Ok((reply, usage)) => {
                let Some(call) = reply.tool_calls.iter().find(|c| c.name == ROUTE_TOOL) else {
                    return RouteDecision {
                        target: RouteTarget::Retrieval,
                        rationale: "router gave no decision; preferring retrieval".into(),
                        fallback: Some("no_tool_call".into()),
                        usage,
                    };
                };
                let target = match call.arguments.get("target").and_then(Json::as_str) {
                    Some("analysis") => RouteTarget::Analysis,
                    _ => RouteTarget::Retrieval,
                };
                let rationale = call.arguments.get("rationale").and_then(Json::as_str).unwrap_or("").to_string();
                RouteDecision { target, rationale, fallback: None, usage }
            }
            Err(LlmError::MalformedToolArguments { reason, usage, .. }) => RouteDecision {
                usage,
                ..fallback(format!("malformed router arguments: {reason}"))
            },
            Err(e) => fallback(e.to_string()),
        }
    }

    fn load_active(&self, conv: &mut Conversation) -> Result<(), (String, CatalogError)> {
        for id in conv.active_datasets.clone() {
            if !conv.payloads.contains_key(&id) {
                let p = self.catalog.load_payload(&id).map_err(|e| (id.clone(), e))?;
                conv.payloads.insert(id, Arc::new(p));
            }
        }
        Ok(())
    }

    /// Runs one turn, emitting events to the audit log and to `sink`.
    pub fn handle_turn(
        &self,
        conv: &mut Conversation,
        question: UserQuestion,
        sink: &mut dyn FnMut(&EventEnvelope),
    ) -> SystemResponse {
        let turn = conv.turns.len() as u32 + 1;
        let mut em = Emitter { turn, sink };
        let response = self.run_turn(conv, &question, &mut em);
        conv.turns.push(Turn { question, response: response.clone() });
        response
    }

    fn run_turn(&self, conv: &mut Conversation, question: &UserQuestion, em: &mut Emitter<'_>) -> SystemResponse {
        let attachments: Vec<Json> = question.attachments.iter().map(attachment_summary).collect();
        em.emit(&mut conv.audit, EventType::TurnStarted, json!({"question": question.text, "attachments": attachments}));

        let route = if conv.turns.is_empty() {
            None
        } else {
            let d = self.route_followup(conv, question);
            em.emit(&mut conv.audit, EventType::Route, serde_json::to_value(&d).unwrap());
            Some(d)
        };
        let router_usage = route.as_ref().map(|r| r.usage).unwrap_or_default();

        let mut retrieval = None;
        if route.as_ref().is_none_or(|r| r.target == RouteTarget::Retrieval) {
            let outcome = match self.retrieve(question) {
                Ok(o) => o,
                Err(e) => {
                    let msg = "The dataset search failed; please try again later.";
                    em.emit(
                        &mut conv.audit,
                        EventType::Error,
                        json!({"stage": "retrieval", "kind": "RetrievalFailed", "message": msg, "detail": e.to_string()}),
                    );
                    return SystemResponse { route, ..SystemResponse::error(msg) };
                }
            };
            self.emit_reformulations(conv, em, &outcome);
            let new_ids: Vec<String> =
                outcome.dataset_ids.iter().filter(|id| !conv.active_datasets.contains(id)).cloned().collect();
            if outcome.rejected && conv.active_datasets.is_empty() {
                let reason = match outcome.trace.events.last() {
                    Some(TraceEvent::Reported { reason: Some(r), .. }) => r.clone(),
                    _ => "no_relevant_datasets".into(),
                };
                em.emit(
                    &mut conv.audit,
                    EventType::Rejection,
                    json!({
                        "message": REJECTION_TEXT,
                        "reason": reason,
                        "justification": outcome.justification,
                        "usage": {"retrieval": outcome.usage, "analysis": Usage::default(), "router": router_usage},
                        "analysis_steps": 0,
                    }),
                );
                return SystemResponse {
                    kind: ResponseKind::Rejection,
                    text: REJECTION_TEXT.into(),
                    datasets: Vec::new(),
                    route,
                    retrieval: Some(outcome),
                    analysis: None,
                };
            }
            em.emit(
                &mut conv.audit,
                EventType::DatasetsSelected,
                json!({
                    "dataset_ids": outcome.dataset_ids,
                    "added": new_ids,
                    "active": conv.active_datasets.iter().chain(new_ids.iter()).collect::<Vec<_>>(),
                    "datasets": outcome.dataset_ids.iter().filter_map(|id| self.dataset_ref(id)).collect::<Vec<_>>(),
                    "justification": outcome.justification,
                    "warnings": outcome.trace.warnings().collect::<Vec<_>>(),
                    "candidates": outcome.candidates,
                    "prompt_hash": outcome.trace.prompt_hash,
                    "usage": outcome.usage,
                }),
            );
            conv.active_datasets.extend(new_ids);
            retrieval = Some(outcome);
        }

        if let Err((id, e)) = self.load_active(conv) {
            let msg = format!("The dataset `{id}` could not be loaded.");
            let kind = match e {
                CatalogError::PayloadUnreadable { .. } => "PayloadUnreadable",
                CatalogError::TypeMismatch { .. } => "TypeMismatch",
                CatalogError::UnknownDataset(_) => "UnknownDataset",
                _ => "CatalogError",
            };
            em.emit(
                &mut conv.audit,
                EventType::Error,
                json!({"stage": "load", "kind": kind, "dataset_id": id, "message": msg, "detail": e.to_string()}),
            );
            return SystemResponse { route, retrieval, ..SystemResponse::error(msg) };
        }

        let history = conv.history();
        let ids = conv.active_datasets.clone();
        let payloads: Vec<Arc<DatasetPayload>> = ids.iter().map(|id| conv.payloads[id].clone()).collect();
        let datasets: Vec<AnalysisDataset<'_>> = ids
            .iter()
            .zip(&payloads)
            .map(|(id, p)| AnalysisDataset { meta: self.catalog.get(id).expect("active ids are catalog ids"), payload: p })
            .collect();
        let mut session = conv.session.take().unwrap_or_default();
        let audit = &mut conv.audit;
        let answer = self.analyst().analyze(&question.text, &history, &datasets, &mut session, &mut |ev| match ev {
            StepEvent::Started { index, plan, code } => {
                em.emit(audit, EventType::StepStarted, json!({"index": index, "plan": plan, "code": code}));
            }
            StepEvent::Finished(step) => {
                let r = &step.result;
                em.emit(
                    audit,
                    EventType::StepResult,
                    json!({
                        "index": step.index,
                        "status": r.status,
                        "log": r.log,
                        "value": r.value,
                        "error_message": r.error_message,
                        "error_kind": r.error_kind,
                        "ops_used": r.ops_used,
                        "output_truncated": r.output_truncated,
                        "artifact_count": r.artifacts.len(),
                        "warnings": step.warnings,
                        "usage": step.usage,
                        "digest": digest(r),
                    }),
                );
                for a in &r.artifacts {
                    em.emit(audit, EventType::Artifact, json!({"step": step.index, "kind": a.kind, "payload": a.payload}));
                }
            }
        });
        conv.session = Some(session);

        let retrieval_usage = retrieval.as_ref().map(|r| r.usage).unwrap_or_default();
        let cost = self.cost(self.gateways.retrieval.model(), retrieval_usage).and_then(|a| {
            let b = self.cost(self.gateways.analysis.model(), answer.usage)?;
            let c = self.cost(self.gateways.router.model(), router_usage)?;
            Some(a + b + c)
        });
        let refs: Vec<DatasetRef> = ids.iter().filter_map(|id| self.dataset_ref(id)).collect();
        let final_payload = json!({
            "text": answer.text,
            "terminated_by": answer.terminated_by,
            "steps": answer.steps.len(),
            "artifact_count": answer.artifacts.len(),
            "datasets": refs,
            "usage": {"retrieval": retrieval_usage, "analysis": answer.usage, "router": router_usage},
            "cost_usd": cost,
            "prompt_hash": answer.prompt_hash,
            "failure": answer.failure,
        });
        if answer.terminated_by == TerminatedBy::ProviderFailure {
            em.emit(
                &mut conv.audit,
                EventType::Error,
                json!({"stage": "analysis", "kind": "ProviderUnavailable", "message": answer.text, "final": final_payload}),
            );
            return SystemResponse {
                kind: ResponseKind::Error,
                text: answer.text.clone(),
                datasets: refs,
                route,
                retrieval,
                analysis: Some(answer),
            };
        }
        em.emit(&mut conv.audit, EventType::Final, final_payload);
        SystemResponse {
            kind: ResponseKind::Answer,
            text: answer.text.clone(),
            datasets: refs,
            route,
            retrieval,
            analysis: Some(answer),
        }
    }

    fn emit_reformulations(&self, conv: &mut Conversation, em: &mut Emitter<'_>, outcome: &RetrievalOutcome) {
        let mut index = 0;
        let mut pending: Option<String> = None;
        for ev in &outcome.trace.events {
            match ev {
                TraceEvent::SubqueryIssued { text } => pending = Some(text.clone()),
                TraceEvent::HitsReturned { hits } => {
                    if let Some(text) = pending.take() {
                        index += 1;
                        em.emit(
                            &mut conv.audit,
                            EventType::Reformulation,
                            json!({"index": index, "text": text, "hits": hits}),
                        );
                    }
                }
                _ => {}
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digests_are_stable() {
        assert_eq!(digest(&json!({"a": 1})), digest(&json!({"a": 1})));
        assert_ne!(digest(&json!({"a": 1})), digest(&json!({"a": 2})));
    }
}
