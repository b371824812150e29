//! Dataset catalog: metadata documents listed by a JSON manifest, plus the
//! tabular/geospatial payload behind each document.
//!
//! Manifest format: a JSON array of `{"metadata": "<path>", "payload": "<path>"}`
//! with paths relative to the manifest's directory. Each metadata file holds
//! one JSON object (see `docs/schemas/metadata.schema.json`).

mod payload;

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use serde_json::Value as Json;
use thiserror::Error;

pub use payload::{load_payload_file, Cell, DatasetPayload};

#[derive(Debug, Error)]
pub enum CatalogError {
    #[error("manifest not found: {0}")]
    ManifestNotFound(PathBuf),
    #[error("manifest is invalid: {0}")]
    ManifestInvalid(String),
    #[error("schema violation in `{id}`: {reason}")]
    SchemaViolation { id: String, reason: String },
    #[error("duplicate dataset id `{0}`")]
    DuplicateId(String),
    #[error("unknown dataset `{0}`")]
    UnknownDataset(String),
    #[error("payload of `{id}` unreadable: {reason}")]
    PayloadUnreadable { id: String, reason: String },
    #[error("type mismatch in column `{column}` at row {row_index}")]
    TypeMismatch { column: String, row_index: usize },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FieldType {
    Integer,
    Real,
    Text,
    Date,
    Boolean,
    Geometry,
}

impl FieldType {
    pub fn as_str(self) -> &'static str {
        match self {
            FieldType::Integer => "integer",
            FieldType::Real => "real",
            FieldType::Text => "text",
            FieldType::Date => "date",
            FieldType::Boolean => "boolean",
            FieldType::Geometry => "geometry",
        }
    }

    fn parse(s: &str) -> Option<FieldType> {
        Some(match s {
            "integer" => FieldType::Integer,
            "real" => FieldType::Real,
            "text" => FieldType::Text,
            "date" => FieldType::Date,
            "boolean" => FieldType::Boolean,
            "geometry" => FieldType::Geometry,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldDescriptor {
    pub name: String,
    #[serde(rename = "type")]
    pub type_hint: FieldType,
    #[serde(default)]
    pub description: String,
}

/// One catalog document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMetadata {
    pub id: String,
    pub title: String,
    pub summary: String,
    #[serde(default)]
    pub categories: Vec<String>,
    #[serde(default)]
    pub fields: Vec<FieldDescriptor>,
    pub publication_date: NaiveDate,
    pub source_url: String,
    pub payload_locator: String,
    pub language: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub crs: Option<String>,
}

impl DatasetMetadata {
    pub fn geometry_field(&self) -> Option<&FieldDescriptor> {
        self.fields.iter().find(|f| f.type_hint == FieldType::Geometry)
    }
}

/// Canonical text embedded for a document. Pure and deterministic.
pub fn embedding_text(meta: &DatasetMetadata) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "TITLE: {}", meta.title);
    let _ = writeln!(out, "SUMMARY: {}", meta.summary);
    let _ = writeln!(out, "CATEGORIES: {}", meta.categories.join(", "));
    out.push_str("FIELDS:\n");
    for f in &meta.fields {
        if f.description.is_empty() {
            let _ = writeln!(out, "- {}", f.name);
        } else {
            let _ = writeln!(out, "- {}: {}", f.name, f.description);
        }
    }
    let _ = write!(out, "PUBLISHED: {}", meta.publication_date.format("%Y-%m-%d"));
    out
}

#[derive(Debug, Deserialize, Serialize)]
struct ManifestEntry {
    metadata: String,
    payload: String,
}

/// An immutable set of validated metadata documents.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Catalog {
    docs: Vec<DatasetMetadata>,
    by_id: HashMap<String, usize>,
}

fn violation(id: &str, pointer: &str, what: impl std::fmt::Display) -> CatalogError {
    CatalogError::SchemaViolation { id: id.to_string(), reason: format!("{pointer}: {what}") }
}

fn req_str<'a>(obj: &'a Json, id: &str, key: &str) -> Result<&'a str, CatalogError> {
    obj.get(key)
        .ok_or_else(|| violation(id, &format!("/{key}"), "missing required field"))?
        .as_str()
        .ok_or_else(|| violation(id, &format!("/{key}"), "expected a string"))
}

fn valid_language_tag(tag: &str) -> bool {
    let mut parts = tag.split('-');
    let primary = parts.next().unwrap_or("");
    (2..=8).contains(&primary.len())
        && primary.chars().all(|c| c.is_ascii_alphabetic())
        && parts.all(|p| (1..=8).contains(&p.len()) && p.chars().all(|c| c.is_ascii_alphanumeric()))
}

/// Validates one metadata JSON object; `payload_locator` comes from the manifest
/// when the document does not carry one.
pub fn parse_metadata(doc: &Json, payload_locator: Option<&str>) -> Result<DatasetMetadata, CatalogError> {
    if !doc.is_object() {
        return Err(violation("?", "", "metadata document must be a JSON object"));
    }
    let id = doc
        .get("id")
        .and_then(Json::as_str)
        .filter(|s| !s.trim().is_empty())
        .ok_or_else(|| violation("?", "/id", "must be a non-empty string"))?
        .to_string();
    let title = req_str(doc, &id, "title")?;
    if title.trim().is_empty() {
        return Err(violation(&id, "/title", "must not be empty"));
    }
    let summary = req_str(doc, &id, "summary")?;
    if summary.trim().is_empty() {
        return Err(violation(&id, "/summary", "must not be empty"));
    }
    let date_text = req_str(doc, &id, "publication_date")?;
    let publication_date = NaiveDate::parse_from_str(date_text, "%Y-%m-%d")
        .map_err(|_| violation(&id, "/publication_date", format!("`{date_text}` is not an ISO-8601 date")))?;
    let source_url = req_str(doc, &id, "source_url")?.to_string();
    let language = req_str(doc, &id, "language")?.to_string();
    if !valid_language_tag(&language) {
        return Err(violation(&id, "/language", format!("`{language}` is not an IETF language tag")));
    }

    let categories = match doc.get("categories") {
        None => Vec::new(),
        Some(Json::Array(items)) => items
            .iter()
            .enumerate()
            .map(|(i, c)| {
                c.as_str()
                    .map(str::to_string)
                    .ok_or_else(|| violation(&id, &format!("/categories/{i}"), "expected a string"))
            })
            .collect::<Result<_, _>>()?,
        Some(_) => return Err(violation(&id, "/categories", "expected an array")),
    };

    let mut fields = Vec::new();
    match doc.get("fields") {
        None => {}
        Some(Json::Array(items)) => {
            for (i, f) in items.iter().enumerate() {
                let ptr = format!("/fields/{i}");
                let name = f
                    .get("name")
                    .and_then(Json::as_str)
                    .filter(|s| !s.is_empty())
                    .ok_or_else(|| violation(&id, &format!("{ptr}/name"), "must be a non-empty string"))?;
                if fields.iter().any(|d: &FieldDescriptor| d.name == name) {
                    return Err(violation(&id, &format!("{ptr}/name"), format!("duplicate field name `{name}`")));
                }
                let ty = f.get("type").and_then(Json::as_str).unwrap_or("");
                let type_hint = FieldType::parse(ty).ok_or_else(|| {
                    violation(&id, &format!("{ptr}/type"), format!("unknown type `{ty}`"))
                })?;
                let description = match f.get("description") {
                    None | Some(Json::Null) => String::new(),
                    Some(Json::String(s)) => s.clone(),
                    Some(_) => return Err(violation(&id, &format!("{ptr}/description"), "expected a string")),
                };
                fields.push(FieldDescriptor { name: name.to_string(), type_hint, description });
            }
        }
        Some(_) => return Err(violation(&id, "/fields", "expected an array")),
    }

    let payload_locator = match (doc.get("payload_locator").and_then(Json::as_str), payload_locator) {
        (_, Some(p)) => p.to_string(),
        (Some(p), None) => p.to_string(),
        (None, None) => return Err(violation(&id, "/payload_locator", "missing payload location")),
    };
    let crs = doc.get("crs").and_then(Json::as_str).map(str::to_string);

    Ok(DatasetMetadata {
        id,
        title: title.to_string(),
        summary: summary.to_string(),
        categories,
        fields,
        publication_date,
        source_url,
        payload_locator,
        language,
        crs,
    })
}

fn is_url(s: &str) -> bool {
    s.starts_with("http://") || s.starts_with("https://")
}

fn resolve(base: &Path, rel: &str) -> PathBuf {
    let p = Path::new(rel);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

impl Catalog {
    pub fn from_docs(docs: Vec<DatasetMetadata>) -> Result<Catalog, CatalogError> {
        let mut by_id = HashMap::with_capacity(docs.len());
        for (i, d) in docs.iter().enumerate() {
            if by_id.insert(d.id.clone(), i).is_some() {
                return Err(CatalogError::DuplicateId(d.id.clone()));
            }
        }
        Ok(Catalog { docs, by_id })
    }

    /// Reads and validates every document listed in a manifest.
    pub fn ingest(manifest_path: &Path) -> Result<Catalog, CatalogError> {
        let text = fs::read_to_string(manifest_path)
            .map_err(|_| CatalogError::ManifestNotFound(manifest_path.to_path_buf()))?;
        let entries: Vec<ManifestEntry> =
            serde_json::from_str(&text).map_err(|e| CatalogError::ManifestInvalid(e.to_string()))?;
        let base = manifest_path.parent().unwrap_or(Path::new("."));
        let base = base.canonicalize().unwrap_or_else(|_| base.to_path_buf());
        let mut docs = Vec::with_capacity(entries.len());
        for (i, entry) in entries.iter().enumerate() {
            let meta_path = resolve(&base, &entry.metadata);
            let raw = fs::read_to_string(&meta_path).map_err(|e| {
                CatalogError::ManifestInvalid(format!("/{i}/metadata: cannot read {}: {e}", meta_path.display()))
            })?;
            let json: Json = serde_json::from_str(&raw).map_err(|e| CatalogError::SchemaViolation {
                id: entry.metadata.clone(),
                reason: format!("invalid JSON: {e}"),
            })?;
            let locator = if is_url(&entry.payload) {
                entry.payload.clone()
            } else {
                resolve(&base, &entry.payload).to_string_lossy().into_owned()
            };
            docs.push(parse_metadata(&json, Some(&locator))?);
        }
        Catalog::from_docs(docs)
    }

    /// Writes the catalog as a manifest plus one metadata file per document.
    /// Ingesting the written manifest yields an equal catalog.
    pub fn save(&self, dir: &Path) -> Result<PathBuf, CatalogError> {
        let meta_dir = dir.join("metadata");
        fs::create_dir_all(&meta_dir)?;
        let mut entries = Vec::with_capacity(self.docs.len());
        for (i, d) in self.docs.iter().enumerate() {
            let file = format!("{i:05}.json");
            let mut json = serde_json::to_value(d).expect("metadata serializes");
            json.as_object_mut().unwrap().remove("payload_locator");
            fs::write(meta_dir.join(&file), serde_json::to_string_pretty(&json).unwrap())?;
            entries.push(ManifestEntry { metadata: format!("metadata/{file}"), payload: d.payload_locator.clone() });
        }
        let manifest = dir.join("manifest.json");
        fs::write(&manifest, serde_json::to_string_pretty(&entries).unwrap())?;
        Ok(manifest)
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&DatasetMetadata> {
        self.by_id.get(id).map(|&i| &self.docs[i])
    }

    pub fn contains(&self, id: &str) -> bool {
        self.by_id.contains_key(id)
    }

    pub fn docs(&self) -> &[DatasetMetadata] {
        &self.docs
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.docs.iter().map(|d| d.id.as_str())
    }

    /// Dominant language tag of the catalog, used for query reformulation.
    pub fn language(&self) -> Option<&str> {
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for d in &self.docs {
            *counts.entry(d.language.as_str()).or_default() += 1;
        }
        counts.into_iter().max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(a.0))).map(|(l, _)| l)
    }

    pub fn load_payload(&self, id: &str) -> Result<DatasetPayload, CatalogError> {
        let meta = self.get(id).ok_or_else(|| CatalogError::UnknownDataset(id.to_string()))?;
        payload::load(meta)
    }
}
