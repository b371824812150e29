//! Conversation events. The same envelopes are appended to the audit JSONL
//! file and streamed live by the service.

use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};
use serde_json::Value as Json;

pub const EVENT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventType {
    TurnStarted,
    Route,
    Reformulation,
    DatasetsSelected,
    Rejection,
    StepStarted,
    StepResult,
    Artifact,
    Final,
    Error,
}

impl EventType {
    /// Ends a turn; nothing of the same turn may follow.
    pub fn is_terminal(self) -> bool {
        matches!(self, EventType::Final | EventType::Rejection | EventType::Error)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            EventType::TurnStarted => "turn_started",
            EventType::Route => "route",
            EventType::Reformulation => "reformulation",
            EventType::DatasetsSelected => "datasets_selected",
            EventType::Rejection => "rejection",
            EventType::StepStarted => "step_started",
            EventType::StepResult => "step_result",
            EventType::Artifact => "artifact",
            EventType::Final => "final",
            EventType::Error => "error",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventEnvelope {
    pub v: u32,
    pub conversation_id: String,
    pub seq: u64,
    pub turn: u32,
    pub ts: String,
    #[serde(rename = "type")]
    pub kind: EventType,
    pub payload: Json,
}

impl EventEnvelope {
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("events serialize")
    }
}

/// Append-only event log of one conversation. Sequence numbers start at 1
/// and timestamps never go backwards.
#[derive(Debug)]
pub struct AuditLog {
    conversation_id: String,
    path: Option<PathBuf>,
    file: Option<File>,
    events: Vec<EventEnvelope>,
    last_ts: Option<DateTime<Utc>>,
}

impl AuditLog {
    pub fn in_memory(conversation_id: &str) -> AuditLog {
        AuditLog { conversation_id: conversation_id.into(), path: None, file: None, events: Vec::new(), last_ts: None }
    }

    pub fn create(conversation_id: &str, path: &Path) -> std::io::Result<AuditLog> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(AuditLog { path: Some(path.to_path_buf()), file: Some(file), ..AuditLog::in_memory(conversation_id) })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn events(&self) -> &[EventEnvelope] {
        &self.events
    }

    pub fn next_seq(&self) -> u64 {
        self.events.len() as u64 + 1
    }

    pub fn append(&mut self, turn: u32, kind: EventType, payload: Json) -> &EventEnvelope {
        let now = Utc::now();
        let ts = match self.last_ts {
            Some(prev) if prev > now => prev,
            _ => now,
        };
        self.last_ts = Some(ts);
        let ev = EventEnvelope {
            v: EVENT_SCHEMA_VERSION,
            conversation_id: self.conversation_id.clone(),
            seq: self.next_seq(),
            turn,
            ts: ts.to_rfc3339_opts(SecondsFormat::Millis, true),
            kind,
            payload,
        };
        if let Some(f) = &mut self.file {
            let line = ev.to_line();
            if let Err(e) = writeln!(f, "{line}").and_then(|_| f.flush()) {
                tracing::error!(conversation = %self.conversation_id, "audit write failed: {e}");
            }
        }
        self.events.push(ev);
        self.events.last().unwrap()
    }
}

/// Reads an audit JSONL file back into envelopes.
pub fn read_trace(path: &Path) -> std::io::Result<Vec<EventEnvelope>> {
    let f = File::open(path)?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let ev = serde_json::from_str(&line).map_err(|e| {
            std::io::Error::new(std::io::ErrorKind::InvalidData, format!("line {}: {e}", i + 1))
        })?;
        out.push(ev);
    }
    Ok(out)
}

/// Checks the stream invariants: contiguous `seq` from 1, non-decreasing
/// timestamps, non-decreasing turns, nothing after a turn's terminal event,
/// and every turn that started has exactly one terminal event (the last turn
/// may still be running when `allow_open` is set).
pub fn check_stream(events: &[EventEnvelope], allow_open: bool) -> Result<(), String> {
    let mut closed_turn = 0u32;
    let mut open_turn: Option<u32> = None;
    let mut last_ts = String::new();
    for (i, e) in events.iter().enumerate() {
        if e.seq != i as u64 + 1 {
            return Err(format!("event {i} has seq {}", e.seq));
        }
        if e.ts < last_ts {
            return Err(format!("timestamp goes backwards at seq {}", e.seq));
        }
        last_ts = e.ts.clone();
        if e.turn <= closed_turn {
            return Err(format!("event seq {} after the terminal event of turn {}", e.seq, e.turn));
        }
        match open_turn {
            Some(t) if t != e.turn => return Err(format!("turn {} started before turn {t} ended", e.turn)),
            _ => open_turn = Some(e.turn),
        }
        if e.kind.is_terminal() {
            closed_turn = e.turn;
            open_turn = None;
        }
    }
    match open_turn {
        Some(t) if !allow_open => Err(format!("turn {t} has no terminal event")),
        _ => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn appends_and_reads_back() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c1/audit.jsonl");
        let mut log = AuditLog::create("c1", &path).unwrap();
        log.append(1, EventType::TurnStarted, json!({"question": "q"}));
        log.append(1, EventType::Final, json!({"text": "a"}));
        let back = read_trace(&path).unwrap();
        assert_eq!(back, log.events());
        assert_eq!(back[1].seq, 2);
        assert!(check_stream(&back, false).is_ok());
        assert_eq!(serde_json::to_value(&back[0]).unwrap()["type"], "turn_started");
    }

    #[test]
    fn stream_checks() {
        let mut log = AuditLog::in_memory("c");
        log.append(1, EventType::TurnStarted, json!({}));
        assert!(check_stream(log.events(), true).is_ok());
        assert!(check_stream(log.events(), false).is_err());
        log.append(1, EventType::Rejection, json!({}));
        log.append(1, EventType::Artifact, json!({}));
        assert!(check_stream(log.events(), true).is_err());
    }
}
