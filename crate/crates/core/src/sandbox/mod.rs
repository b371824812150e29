//! Restricted interpreter for analysis code: a Python subset evaluated in a
//! persistent session with an import allowlist, locked submodules and an
//! elementary-operation cap.

pub mod artifacts;
mod builtins;
mod format;
mod frame;
mod gazetteer;
mod geolib;
mod interp;
mod lexer;
mod parser;
mod printer;
mod value;

pub mod ast;

use std::fmt;
use std::panic::{catch_unwind, AssertUnwindSafe};

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::catalog::DatasetPayload;

pub use artifacts::{validate_artifact, Artifact, ArtifactKind};
pub use ast::Program;
pub use parser::parse;
pub use printer::print_program;
pub use builtins::{reachable_names, ALLOWED_MODULES, BUILTIN_NAMES};
pub use gazetteer::Gazetteer;
pub use value::Value;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ParseError {
    #[error("SyntaxError: {message} (line {line}, column {col})")]
    Syntax { line: u32, col: u32, message: String },
    #[error("UnsupportedConstruct: '{construct}' is not supported (line {line})")]
    Unsupported { construct: String, line: u32 },
}

impl ParseError {
    pub fn line(&self) -> u32 {
        match self {
            ParseError::Syntax { line, .. } | ParseError::Unsupported { line, .. } => *line,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ResourceLimits {
    pub max_ops: u64,
    pub max_collection_len: u64,
    pub max_output_chars: u64,
}

impl Default for ResourceLimits {
    fn default() -> Self {
        ResourceLimits { max_ops: 10_000_000, max_collection_len: 1_000_000, max_output_chars: 20_000 }
    }
}

impl ResourceLimits {
    pub fn validate(&self) -> Result<(), String> {
        if self.max_ops == 0 || self.max_collection_len == 0 || self.max_output_chars == 0 {
            return Err("resource limits must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    SyntaxError,
    RuntimeError,
    ResourceExhausted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ErrorKind {
    SyntaxError,
    UnsupportedConstruct,
    ImportDenied,
    SubmoduleAccessDenied,
    NameUndefined,
    TypeMismatch,
    DivisionByZero,
    IndexOutOfRange,
    KeyNotFound,
    AttributeMissing,
    ValueInvalid,
    IntegerOverflow,
    RecursionLimit,
    OperationCapExceeded,
    CollectionTooLarge,
    InvalidFinalAnswer,
    InternalError,
    /// Internal unwinding signal raised by `final_answer`.
    #[doc(hidden)]
    Stop,
}

impl fmt::Display for ErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionResult {
    pub status: Status,
    pub log: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub value: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error_message: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error_kind: Option<ErrorKind>,
    pub ops_used: u64,
    pub artifacts: Vec<Artifact>,
    pub output_truncated: bool,
    /// Text passed to `final_answer`, when the snippet called it.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub final_answer: Option<String>,
}

impl ExecutionResult {
    pub fn failed(status: Status, kind: ErrorKind, message: String) -> Self {
        ExecutionResult {
            status,
            log: String::new(),
            value: None,
            error_message: Some(message),
            error_kind: Some(kind),
            ops_used: 0,
            artifacts: Vec::new(),
            output_truncated: false,
            final_answer: None,
        }
    }

    /// A successful result with no output, for steps that ran no code.
    pub fn empty_ok() -> Self {
        ExecutionResult { status: Status::Ok, error_message: None, error_kind: None, ..Self::failed(Status::Ok, ErrorKind::InternalError, String::new()) }
    }

    /// The text shown to the model after a step.
    pub fn observation(&self) -> String {
        let mut out = String::new();
        if !self.log.is_empty() {
            out.push_str("Output:\n");
            out.push_str(&self.log);
            if !self.log.ends_with('\n') {
                out.push('\n');
            }
            if self.output_truncated {
                out.push_str("[output truncated]\n");
            }
        }
        if let Some(v) = &self.value {
            out.push_str("Value: ");
            out.push_str(v);
            out.push('\n');
        }
        if let Some(e) = &self.error_message {
            out.push_str("Error: ");
            out.push_str(e);
            out.push('\n');
        }
        for a in &self.artifacts {
            out.push_str(&format!("[{} artifact recorded]\n", a.kind.as_str()));
        }
        if out.is_empty() {
            out.push_str("(no output)\n");
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RegisterError {
    #[error("name '{0}' is already bound")]
    NameCollision(String),
    #[error("'{0}' is not a valid identifier")]
    InvalidIdentifier(String),
}

/// A persistent environment. Executions on one session are serialized by
/// `&mut self`; distinct sessions share nothing.
#[derive(Debug)]
pub struct Session {
    globals: IndexMap<String, Value>,
    datasets: Vec<String>,
    ops_used_total: u64,
}

impl Default for Session {
    fn default() -> Self {
        Session::new()
    }
}

const STACK_BYTES: usize = 256 * 1024 * 1024;

impl Session {
    pub fn new() -> Session {
        let mut globals = IndexMap::new();
        for m in ALLOWED_MODULES {
            globals.insert(m.to_string(), Value::Module(m));
        }
        Session { globals, datasets: Vec::new(), ops_used_total: 0 }
    }

    pub fn ops_used_total(&self) -> u64 {
        self.ops_used_total
    }

    pub fn datasets(&self) -> &[String] {
        &self.datasets
    }

    pub fn binding_names(&self) -> impl Iterator<Item = &str> {
        self.globals.keys().map(|k| k.as_str())
    }

    pub fn get(&self, name: &str) -> Option<&Value> {
        self.globals.get(name)
    }

    pub fn register_dataset(&mut self, name: &str, payload: &DatasetPayload) -> Result<(), RegisterError> {
        if !is_identifier(name) {
            return Err(RegisterError::InvalidIdentifier(name.to_string()));
        }
        if self.globals.contains_key(name) || builtins::builtin(name).is_some() {
            return Err(RegisterError::NameCollision(name.to_string()));
        }
        let f = frame::Frame::from_payload(payload);
        self.globals.insert(name.to_string(), Value::Frame(std::sync::Arc::new(f)));
        self.datasets.push(name.to_string());
        Ok(())
    }

    /// Parses and runs `source`. Bindings made before a runtime error persist.
    pub fn execute(&mut self, source: &str, limits: &ResourceLimits) -> ExecutionResult {
        let program = match parse(source) {
            Ok(p) => p,
            Err(e) => {
                let kind = match e {
                    ParseError::Syntax { .. } => ErrorKind::SyntaxError,
                    ParseError::Unsupported { .. } => ErrorKind::UnsupportedConstruct,
                };
                return ExecutionResult::failed(Status::SyntaxError, kind, e.to_string());
            }
        };
        self.run(&program, limits)
    }

    pub fn run(&mut self, program: &Program, limits: &ResourceLimits) -> ExecutionResult {
        let limits = *limits;
        let globals = &mut self.globals;
        // Deep recursion in user code is bounded by the call-depth limit; the
        // large stack keeps that bound below the native stack size.
        let res = std::thread::scope(|s| {
            std::thread::Builder::new()
                .stack_size(STACK_BYTES)
                .spawn_scoped(s, move || {
                    catch_unwind(AssertUnwindSafe(|| {
                        let mut it = interp::Interp::new(globals, limits);
                        let r = it.run(program);
                        (r, it.ops, it.log, it.truncated, it.artifacts, it.final_answer)
                    }))
                })
                .expect("spawn interpreter thread")
                .join()
        });
        let (r, ops, log, truncated, artifacts, final_answer) = match res {
            Ok(Ok(parts)) => parts,
            _ => {
                return ExecutionResult::failed(
                    Status::RuntimeError,
                    ErrorKind::InternalError,
                    "InternalError: the interpreter failed unexpectedly".into(),
                )
            }
        };
        self.ops_used_total += ops;
        let mut out = ExecutionResult {
            status: Status::Ok,
            log,
            value: None,
            error_message: None,
            error_kind: None,
            ops_used: ops,
            artifacts,
            output_truncated: truncated,
            final_answer,
        };
        match r {
            Ok(v) => out.value = v.map(|v| v.repr()),
            Err(e) if e.kind == ErrorKind::Stop => {}
            Err(e) => {
                out.status = if e.kind == ErrorKind::OperationCapExceeded {
                    Status::ResourceExhausted
                } else {
                    Status::RuntimeError
                };
                out.error_message = Some(format!("{}: {} (line {})", e.kind, e.msg, e.line));
                out.error_kind = Some(e.kind);
            }
        }
        out
    }
}

pub fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c == '_' || c.is_alphabetic() => {}
        _ => return false,
    }
    chars.all(|c| c == '_' || c.is_alphanumeric()) && !parser::is_keyword(s)
}

/// Submit source, receive a result. Implemented in-process by [`Session`]
/// and, as a contract only, by [`RemoteExecutor`].
pub trait Executor: Send {
    fn register_dataset(&mut self, name: &str, payload: &DatasetPayload) -> Result<(), RegisterError>;
    fn execute(&mut self, source: &str, limits: &ResourceLimits) -> ExecutionResult;
}

impl Executor for Session {
    fn register_dataset(&mut self, name: &str, payload: &DatasetPayload) -> Result<(), RegisterError> {
        Session::register_dataset(self, name, payload)
    }

    fn execute(&mut self, source: &str, limits: &ResourceLimits) -> ExecutionResult {
        Session::execute(self, source, limits)
    }
}

/// Client stub for a remote microVM sandbox. No provider is implemented;
/// every execution reports an internal error.
#[derive(Debug, Clone)]
pub struct RemoteExecutor {
    pub endpoint: String,
}

impl Executor for RemoteExecutor {
    fn register_dataset(&mut self, _name: &str, _payload: &DatasetPayload) -> Result<(), RegisterError> {
        Ok(())
    }

    fn execute(&mut self, _source: &str, _limits: &ResourceLimits) -> ExecutionResult {
        ExecutionResult::failed(
            Status::RuntimeError,
            ErrorKind::InternalError,
            format!("InternalError: remote executor at {} is not available", self.endpoint),
        )
    }
}
