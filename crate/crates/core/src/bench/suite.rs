//! Question templates and suite manifests.
//!
//! A suite manifest is `{"name": ..., "templates": [...]}` where each entry
//! is either an inline template or a path (relative to the manifest) to a
//! JSON file holding one template or an array of them.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use serde_json::Value as Json;

use super::BenchError;
use crate::catalog::Catalog;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionTemplate {
    pub id: String,
    pub text_template: String,
    /// One expanded question per binding. An empty list means the template
    /// has no placeholders and yields a single question.
    #[serde(default)]
    pub bindings: Vec<IndexMap<String, Json>>,
    #[serde(default)]
    pub relevant_dataset_ids: Vec<String>,
    /// May contain placeholders, filled from the same binding.
    #[serde(default)]
    pub ground_truth: String,
    #[serde(default)]
    pub category: String,
    #[serde(default)]
    pub required_ops: Vec<String>,
    #[serde(default)]
    pub negative: bool,
    /// Ground-truth script in the analysis language, relative to the suite
    /// manifest. Besides the binding, `{question_id}` may be used. Informational.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub script: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchQuestion {
    pub id: String,
    pub template_id: String,
    pub text: String,
    pub relevant_dataset_ids: Vec<String>,
    pub ground_truth: String,
    pub negative: bool,
    pub category: String,
    pub required_ops: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub script: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Suite {
    pub name: String,
    pub templates: Vec<QuestionTemplate>,
    /// Directory against which template script paths resolve.
    pub base: PathBuf,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum Entry {
    Path(String),
    Inline(Box<QuestionTemplate>),
}

#[derive(Deserialize)]
struct Manifest {
    name: String,
    templates: Vec<Entry>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum TemplateFile {
    Many(Vec<QuestionTemplate>),
    One(Box<QuestionTemplate>),
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, BenchError> {
    let text = std::fs::read_to_string(path).map_err(|e| BenchError::Io(path.to_path_buf(), e))?;
    serde_json::from_str(&text).map_err(|e| BenchError::Parse(path.to_path_buf(), e.to_string()))
}

impl Suite {
    pub fn load(manifest_path: &Path) -> Result<Suite, BenchError> {
        let m: Manifest = read_json(manifest_path)?;
        let base = manifest_path.parent().unwrap_or(Path::new(".")).to_path_buf();
        let mut templates = Vec::new();
        for entry in m.templates {
            match entry {
                Entry::Inline(t) => templates.push(*t),
                Entry::Path(p) => match read_json::<TemplateFile>(&base.join(&p))? {
                    TemplateFile::Many(ts) => templates.extend(ts),
                    TemplateFile::One(t) => templates.push(*t),
                },
            }
        }
        let suite = Suite { name: m.name, templates, base };
        suite.validate()?;
        Ok(suite)
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        let mut seen = HashSet::new();
        for t in &self.templates {
            if !seen.insert(t.id.as_str()) {
                return Err(invalid(t, "duplicate template id"));
            }
            t.validate()?;
        }
        Ok(())
    }

    pub fn expand(&self) -> Result<Vec<BenchQuestion>, BenchError> {
        let mut qs = expand(&self.templates)?;
        for q in &mut qs {
            if let Some(s) = &q.script {
                q.script = Some(self.base.join(s));
            }
        }
        Ok(qs)
    }

    /// Ids referenced by the suite that the catalog does not contain.
    pub fn missing_datasets(&self, catalog: &Catalog) -> Vec<String> {
        let mut out: Vec<String> = self
            .templates
            .iter()
            .flat_map(|t| &t.relevant_dataset_ids)
            .filter(|id| !catalog.contains(id))
            .cloned()
            .collect();
        out.sort();
        out.dedup();
        out
    }
}

fn invalid(t: &QuestionTemplate, reason: &str) -> BenchError {
    BenchError::InvalidTemplate { template: t.id.clone(), reason: reason.into() }
}

impl QuestionTemplate {
    pub fn validate(&self) -> Result<(), BenchError> {
        if self.id.trim().is_empty() {
            return Err(invalid(self, "empty id"));
        }
        if self.text_template.trim().is_empty() {
            return Err(invalid(self, "empty text_template"));
        }
        if self.negative != self.relevant_dataset_ids.is_empty() {
            return Err(invalid(self, "negative must hold exactly when relevant_dataset_ids is empty"));
        }
        if self.negative != self.ground_truth.trim().is_empty() {
            return Err(invalid(self, "negative must hold exactly when ground_truth is empty"));
        }
        Ok(())
    }

    pub fn placeholders(&self) -> Vec<String> {
        let mut names = placeholders(&self.text_template);
        for n in placeholders(&self.ground_truth) {
            if !names.contains(&n) {
                names.push(n);
            }
        }
        names
    }
}

fn is_name_start(c: char) -> bool {
    c.is_ascii_alphabetic() || c == '_'
}

/// `{name}` occurrences; other braces are literal text.
pub fn placeholders(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut rest = text;
    while let Some(start) = rest.find('{') {
        let after = &rest[start + 1..];
        match after.find('}') {
            Some(end) if end > 0 && after[..end].starts_with(is_name_start) && after[..end].chars().all(|c| c.is_ascii_alphanumeric() || c == '_') => {
                let name = after[..end].to_string();
                if !out.contains(&name) {
                    out.push(name);
                }
                rest = &after[end + 1..];
            }
            _ => rest = after,
        }
    }
    out
}

fn binding_text(v: &Json) -> String {
    match v {
        Json::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn fill(template: &QuestionTemplate, text: &str, binding: &IndexMap<String, Json>) -> Result<String, BenchError> {
    let mut out = text.to_string();
    for name in placeholders(text) {
        let v = binding
            .get(&name)
            .ok_or_else(|| BenchError::UnboundPlaceholder { template: template.id.clone(), name: name.clone() })?;
        out = out.replace(&format!("{{{name}}}"), &binding_text(v));
    }
    Ok(out)
}

/// One question per binding. Question ids are the template id, suffixed
/// with `-n` (1-based) when a template has several bindings.
pub fn expand(templates: &[QuestionTemplate]) -> Result<Vec<BenchQuestion>, BenchError> {
    let empty = [IndexMap::new()];
    let mut out = Vec::new();
    for t in templates {
        t.validate()?;
        let bindings: &[IndexMap<String, Json>] = if t.bindings.is_empty() { &empty } else { &t.bindings };
        for (i, b) in bindings.iter().enumerate() {
            let id = if bindings.len() == 1 { t.id.clone() } else { format!("{}-{}", t.id, i + 1) };
            out.push(BenchQuestion {
                id: id.clone(),
                template_id: t.id.clone(),
                text: fill(t, &t.text_template, b)?,
                relevant_dataset_ids: t.relevant_dataset_ids.clone(),
                ground_truth: fill(t, &t.ground_truth, b)?,
                negative: t.negative,
                category: t.category.clone(),
                required_ops: t.required_ops.clone(),
                script: match &t.script {
                    Some(s) => {
                        let mut with_id = b.clone();
                        with_id.insert("question_id".into(), Json::String(id.clone()));
                        Some(PathBuf::from(fill(t, s, &with_id)?))
                    }
                    None => None,
                },
            });
        }
    }
    Ok(out)
}
