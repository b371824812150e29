//! CodeAct loop: plan, write one code block, run it in the sandbox, observe,
//! repeat until `final_answer` or the step budget runs out.

use std::fmt::Write as _;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value as Json};

use crate::catalog::{Cell, DatasetMetadata, DatasetPayload};
use crate::geometry;
use crate::llm::{ChatMessage, Gateway, LlmError, ToolSpec, Usage};
use crate::prompts;
use crate::retrieval::duration_ms;
use crate::sandbox::{
    is_identifier, Artifact, ArtifactKind, ErrorKind, ExecutionResult, Executor, RegisterError, ResourceLimits,
    Status, ALLOWED_MODULES, BUILTIN_NAMES,
};

pub const FINAL_ANSWER_TOOL: &str = "final_answer";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnalysisConfig {
    pub max_steps: usize,
    pub sample_rows: usize,
    pub limits: ResourceLimits,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig { max_steps: 20, sample_rows: 5, limits: ResourceLimits::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminatedBy {
    FinalAnswerTool,
    MaxSteps,
    ProviderFailure,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentStep {
    pub index: usize,
    pub plan: String,
    pub code: String,
    pub result: ExecutionResult,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
    pub usage: Usage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalAnswer {
    pub text: String,
    pub artifacts: Vec<Artifact>,
    pub steps: Vec<AgentStep>,
    pub usage: Usage,
    #[serde(with = "duration_ms")]
    pub latency: Duration,
    pub terminated_by: TerminatedBy,
    pub prompt_hash: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

/// A dataset as handed to the analysis stage.
pub struct AnalysisDataset<'a> {
    pub meta: &'a DatasetMetadata,
    pub payload: &'a DatasetPayload,
}

pub enum StepEvent<'a> {
    Started { index: usize, plan: &'a str, code: &'a str },
    Finished(&'a AgentStep),
}

/// Sandbox variable name for a dataset id.
pub fn variable_name(id: &str) -> String {
    let mut s: String =
        id.chars().map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '_' }).collect();
    if s.is_empty() || s.starts_with(|c: char| c.is_ascii_digit()) {
        s.insert_str(0, "ds_");
    }
    let reserved = ALLOWED_MODULES.contains(&s.as_str()) || BUILTIN_NAMES.contains(&s.as_str());
    if reserved || !is_identifier(&s) {
        s.insert_str(0, "ds_");
    }
    s
}

/// Splits a model reply into the plan (text before the first fence) and the
/// first fenced code block. Returns the number of code blocks found.
pub fn extract_code(reply: &str) -> (String, Option<String>, usize) {
    let mut plan = String::new();
    let mut code: Option<String> = None;
    let mut current: Option<String> = None;
    let mut blocks = 0;
    for line in reply.lines() {
        let fence = line.trim_start().starts_with("```");
        match (&mut current, fence) {
            (None, true) => {
                blocks += 1;
                current = Some(String::new());
            }
            (Some(buf), true) => {
                if code.is_none() {
                    code = Some(std::mem::take(buf));
                }
                current = None;
            }
            (Some(buf), false) => {
                buf.push_str(line);
                buf.push('\n');
            }
            (None, false) if blocks == 0 => {
                plan.push_str(line);
                plan.push('\n');
            }
            (None, false) => {}
        }
    }
    // An unterminated last fence still counts.
    if let (Some(buf), None) = (current, &code) {
        code = Some(buf);
    }
    (plan.trim().to_string(), code, blocks)
}

fn cell_text(c: &Cell) -> String {
    let s = match c {
        Cell::Null => "None".to_string(),
        Cell::Integer(i) => i.to_string(),
        Cell::Real(r) => r.to_string(),
        Cell::Text(t) => t.clone(),
        Cell::Date(d) => d.format("%Y-%m-%d").to_string(),
        Cell::Boolean(b) => if *b { "True" } else { "False" }.to_string(),
        Cell::Geometry(g) => geometry::to_wkt(g),
    };
    let s = s.replace(['\n', '|'], " ");
    if s.chars().count() > 60 {
        format!("{}…", s.chars().take(59).collect::<String>())
    } else {
        s
    }
}

/// Prompt section describing one dataset: metadata plus a row sample.
pub fn describe_dataset(d: &AnalysisDataset<'_>, sample_rows: usize) -> String {
    let m = d.meta;
    let mut out = String::new();
    let _ = writeln!(out, "## `{}`: {} (id `{}`)", variable_name(&m.id), m.title, m.id);
    let _ = writeln!(out, "{}", m.summary);
    let crs = d.payload.crs.as_ref().map(|c| c.as_str().to_string()).unwrap_or_else(|| "none".into());
    let _ = writeln!(out, "Published {}. Source: {}. CRS: {crs}.", m.publication_date, m.source_url);
    out.push_str("Fields:\n");
    for f in &d.payload.columns {
        if f.description.is_empty() {
            let _ = writeln!(out, "- {} ({})", f.name, f.type_hint.as_str());
        } else {
            let _ = writeln!(out, "- {} ({}): {}", f.name, f.type_hint.as_str(), f.description);
        }
    }
    let n = d.payload.rows.len();
    let shown = n.min(sample_rows);
    let _ = writeln!(out, "{n} rows. First {shown}:");
    let names: Vec<&str> = d.payload.columns.iter().map(|c| c.name.as_str()).collect();
    let _ = writeln!(out, "| {} |", names.join(" | "));
    let _ = writeln!(out, "|{}", " --- |".repeat(names.len()));
    for row in d.payload.rows.iter().take(shown) {
        let cells: Vec<String> = row.iter().map(cell_text).collect();
        let _ = writeln!(out, "| {} |", cells.join(" | "));
    }
    out
}

pub fn final_answer_tool() -> ToolSpec {
    ToolSpec {
        name: FINAL_ANSWER_TOOL.into(),
        description: "Finish with a list of results; at least one must be a non-empty text.".into(),
        parameters: json!({
            "type": "object",
            "properties": {
                "results": {
                    "type": "array",
                    "minItems": 1,
                    "items": {
                        "type": "object",
                        "properties": {
                            "kind": {"enum": ["text", "table", "plot_spec", "map_spec"]},
                            "payload": {}
                        },
                        "required": ["kind", "payload"]
                    }
                }
            },
            "required": ["results"]
        }),
    }
}

/// Validates `final_answer` tool arguments into artifacts plus the answer text.
pub fn tool_final_answer(arguments: &Json) -> Result<(String, Vec<Artifact>), String> {
    let results = arguments.get("results").and_then(Json::as_array).ok_or("`results` must be a list")?;
    let mut artifacts = Vec::with_capacity(results.len());
    for (i, r) in results.iter().enumerate() {
        let kind_name = r.get("kind").and_then(Json::as_str).unwrap_or("");
        let kind = ArtifactKind::parse(kind_name).ok_or_else(|| format!("results[{i}]: unknown kind `{kind_name}`"))?;
        let payload = r.get("payload").cloned().unwrap_or(Json::Null);
        artifacts.push(Artifact::new(kind, payload).map_err(|e| format!("results[{i}]: {e}"))?);
    }
    let texts: Vec<&str> =
        artifacts.iter().filter(|a| a.kind == ArtifactKind::Text).filter_map(|a| a.payload.as_str()).collect();
    if texts.is_empty() {
        return Err("at least one non-empty text result is required".into());
    }
    Ok((texts.join("\n"), artifacts))
}

pub struct Analyst<'a> {
    pub gateway: &'a Gateway,
    pub config: &'a AnalysisConfig,
}

pub const MAX_STEPS_TEXT: &str =
    "I could not produce a reliable answer within the step limit, so I will not guess. Please try rephrasing the question.";
pub const PROVIDER_FAILURE_TEXT: &str =
    "The analysis could not be completed because the language model service is unavailable.";

impl Analyst<'_> {
    pub fn system_prompt(&self, datasets: &[AnalysisDataset<'_>]) -> String {
        let described: Vec<String> = datasets.iter().map(|d| describe_dataset(d, self.config.sample_rows)).collect();
        prompts::render(
            prompts::ANALYSIS,
            &[
                ("max_steps", &self.config.max_steps.to_string()),
                ("language_reference", prompts::LANGUAGE_REFERENCE),
                ("datasets", &described.join("\n")),
            ],
        )
    }

    /// Registers `datasets` (skipping names already bound from an earlier
    /// turn) and runs the loop. `history` is prior conversation context.
    pub fn analyze(
        &self,
        question: &str,
        history: &str,
        datasets: &[AnalysisDataset<'_>],
        session: &mut dyn Executor,
        on_step: &mut dyn FnMut(StepEvent<'_>),
    ) -> FinalAnswer {
        let started = Instant::now();
        let mut warnings_before = Vec::new();
        for d in datasets {
            let name = variable_name(&d.meta.id);
            match session.register_dataset(&name, d.payload) {
                Ok(()) | Err(RegisterError::NameCollision(_)) => {}
                Err(e) => warnings_before.push(format!("could not register `{}`: {e}", d.meta.id)),
            }
        }
        let mut user = format!("Question: {question}\n");
        if !history.is_empty() {
            user.push_str("\nEarlier in this conversation:\n");
            user.push_str(history);
            user.push('\n');
        }
        let mut messages = vec![ChatMessage::system(self.system_prompt(datasets)), ChatMessage::user(user)];
        let tools = [final_answer_tool()];
        let mut steps: Vec<AgentStep> = Vec::new();
        let mut artifacts: Vec<Artifact> = Vec::new();
        let mut usage = Usage::default();
        let done = |text: String, artifacts, steps, usage, by, failure| FinalAnswer {
            text,
            artifacts,
            steps,
            usage,
            latency: started.elapsed(),
            terminated_by: by,
            prompt_hash: prompts::hash(prompts::ANALYSIS),
            failure,
        };

        while steps.len() < self.config.max_steps {
            let index = steps.len() + 1;
            let (reply, u, malformed) = match self.gateway.complete(&messages, &tools) {
                Ok((m, u)) => (m, u, None),
                Err(LlmError::MalformedToolArguments { call_id, reason, message, usage: u }) => {
                    (*message, u, Some((call_id, reason)))
                }
                Err(e) => {
                    return done(
                        PROVIDER_FAILURE_TEXT.into(),
                        artifacts,
                        steps,
                        usage,
                        TerminatedBy::ProviderFailure,
                        Some(e.to_string()),
                    )
                }
            };
            usage += u;
            let reply_text = reply.text();
            let calls = reply.tool_calls.clone();
            messages.push(reply);
            let mut warnings = std::mem::take(&mut warnings_before);

            // Tool-call path: final_answer as a structured tool.
            if let Some(call) = calls.first() {
                if calls.len() > 1 {
                    warnings.push(format!("{} tool calls in one reply; only the first is handled", calls.len()));
                }
                let outcome = match &malformed {
                    Some((_, reason)) => Err(format!("invalid arguments: {reason}")),
                    None => tool_final_answer(&call.arguments),
                };
                on_step(StepEvent::Started { index, plan: &reply_text, code: "" });
                let (result, finished) = match outcome {
                    Ok((text, arts)) => {
                        let mut r = ExecutionResult::empty_ok();
                        r.final_answer = Some(text.clone());
                        r.artifacts = arts;
                        (r, Some(text))
                    }
                    Err(e) => (
                        ExecutionResult::failed(
                            Status::RuntimeError,
                            ErrorKind::InvalidFinalAnswer,
                            format!("InvalidFinalAnswer: {e}"),
                        ),
                        None,
                    ),
                };
                for c in &calls {
                    let text = if c.id == call.id { result.observation() } else { "error: ignored".into() };
                    messages.push(ChatMessage::tool(c.id.clone(), text));
                }
                let step = AgentStep { index, plan: reply_text, code: String::new(), result, warnings, usage: u };
                artifacts.extend(step.result.artifacts.iter().cloned());
                on_step(StepEvent::Finished(&step));
                steps.push(step);
                if let Some(text) = finished {
                    return done(text, artifacts, steps, usage, TerminatedBy::FinalAnswerTool, None);
                }
                continue;
            }

            let (plan, code, blocks) = extract_code(&reply_text);
            if blocks > 1 {
                warnings.push(format!("{blocks} code blocks in one reply; only the first was executed"));
            }
            let code = code.unwrap_or_default();
            on_step(StepEvent::Started { index, plan: &plan, code: &code });
            let result = if code.trim().is_empty() {
                ExecutionResult::failed(
                    Status::SyntaxError,
                    ErrorKind::SyntaxError,
                    "SyntaxError: the reply contained no fenced code block".into(),
                )
            } else {
                session.execute(&code, &self.config.limits)
            };
            messages.push(ChatMessage::user(format!("Observation (step {index}):\n{}", result.observation())));
            let finished = result.final_answer.clone();
            let step = AgentStep { index, plan, code, result, warnings, usage: u };
            artifacts.extend(step.result.artifacts.iter().cloned());
            on_step(StepEvent::Finished(&step));
            steps.push(step);
            if let Some(text) = finished {
                return done(text, artifacts, steps, usage, TerminatedBy::FinalAnswerTool, None);
            }
        }
        done(MAX_STEPS_TEXT.into(), artifacts, steps, usage, TerminatedBy::MaxSteps, None)
    }
}
