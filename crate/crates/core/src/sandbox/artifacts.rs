//! Final-answer artifacts and their JSON schemas.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use serde_json::Value as Json;

pub const TEXT_SCHEMA: &str = include_str!("../../../../docs/schemas/text.schema.json");
pub const TABLE_SCHEMA: &str = include_str!("../../../../docs/schemas/table.schema.json");
pub const PLOT_SCHEMA: &str = include_str!("../../../../docs/schemas/plot_spec.schema.json");
pub const MAP_SCHEMA: &str = include_str!("../../../../docs/schemas/map_spec.schema.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArtifactKind {
    Text,
    Table,
    PlotSpec,
    MapSpec,
}

impl ArtifactKind {
    pub const ALL: [ArtifactKind; 4] = [ArtifactKind::Text, ArtifactKind::Table, ArtifactKind::PlotSpec, ArtifactKind::MapSpec];

    pub fn as_str(self) -> &'static str {
        match self {
            ArtifactKind::Text => "text",
            ArtifactKind::Table => "table",
            ArtifactKind::PlotSpec => "plot_spec",
            ArtifactKind::MapSpec => "map_spec",
        }
    }

    pub fn parse(s: &str) -> Option<ArtifactKind> {
        ArtifactKind::ALL.into_iter().find(|k| k.as_str() == s)
    }

    pub fn schema_source(self) -> &'static str {
        match self {
            ArtifactKind::Text => TEXT_SCHEMA,
            ArtifactKind::Table => TABLE_SCHEMA,
            ArtifactKind::PlotSpec => PLOT_SCHEMA,
            ArtifactKind::MapSpec => MAP_SCHEMA,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    pub kind: ArtifactKind,
    pub payload: Json,
}

impl Artifact {
    pub fn text(s: impl Into<String>) -> Artifact {
        Artifact { kind: ArtifactKind::Text, payload: Json::String(s.into()) }
    }

    /// Builds a validated artifact.
    pub fn new(kind: ArtifactKind, payload: Json) -> Result<Artifact, String> {
        validate_artifact(kind, &payload)?;
        Ok(Artifact { kind, payload })
    }
}

fn validators() -> &'static [jsonschema::Validator; 4] {
    static V: OnceLock<[jsonschema::Validator; 4]> = OnceLock::new();
    V.get_or_init(|| {
        ArtifactKind::ALL.map(|k| {
            let schema: Json = serde_json::from_str(k.schema_source()).expect("bundled schema is JSON");
            jsonschema::validator_for(&schema).expect("bundled schema compiles")
        })
    })
}

/// Schema validation plus the cross-field checks a schema cannot express.
pub fn validate_artifact(kind: ArtifactKind, payload: &Json) -> Result<(), String> {
    let v = &validators()[kind as usize];
    let errors: Vec<String> = v.iter_errors(payload).map(|e| format!("{} at '{}'", e, e.instance_path)).collect();
    if !errors.is_empty() {
        return Err(format!("invalid {} payload: {}", kind.as_str(), errors.join("; ")));
    }
    match kind {
        ArtifactKind::Table => {
            let ncols = payload["columns"].as_array().map_or(0, |c| c.len());
            for (i, row) in payload["rows"].as_array().into_iter().flatten().enumerate() {
                let n = row.as_array().map_or(0, |r| r.len());
                if n != ncols {
                    return Err(format!("invalid table payload: row {i} has {n} cells but there are {ncols} columns"));
                }
            }
        }
        ArtifactKind::PlotSpec => {
            let data = payload["data"].as_array().into_iter().flatten();
            for (i, rec) in data.enumerate() {
                for enc in ["x", "y", "series"] {
                    if let Some(field) = payload[enc]["field"].as_str() {
                        if rec.get(field).is_none() {
                            return Err(format!("invalid plot_spec payload: data record {i} lacks field '{field}'"));
                        }
                    }
                }
            }
        }
        _ => {}
    }
    Ok(())
}
