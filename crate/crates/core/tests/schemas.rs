//! The published JSON schemas accept what the engine reads and writes.

use std::path::{Path, PathBuf};

use odqa_core::bench::{report, run_analysis, run_retrieval, aggregate_by_model, Judge, Suite};
use odqa_core::catalog::parse_metadata;
use odqa_core::config::Config;
use odqa_core::orchestrator::{Conversation, Engine};
use odqa_core::retrieval::UserQuestion;
use serde_json::{json, Value as Json};

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn read(path: &Path) -> Json {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn schema(name: &str) -> jsonschema::Validator {
    jsonschema::validator_for(&read(&root().join("docs/schemas").join(name))).unwrap()
}

fn assert_valid(v: &jsonschema::Validator, doc: &Json, what: &str) {
    let errors: Vec<String> = v.iter_errors(doc).map(|e| format!("{} at {}", e, e.instance_path)).collect();
    assert!(errors.is_empty(), "{what}: {errors:?}");
}

fn engine() -> Engine {
    let config = Config::parse(&format!(
        "data_dir = {:?}\n[catalog]\nmanifest = {:?}\n[embedding]\ncache = false\n[llm]\nscript = {:?}\n",
        tempfile::tempdir().unwrap().keep(),
        root().join("fixtures/catalog/manifest.json"),
        root().join("fixtures/scripted/replay.json"),
    ))
    .unwrap();
    Engine::from_config(&config).unwrap()
}

#[test]
fn metadata_schema_agrees_with_the_validator() {
    let v = schema("metadata.schema.json");
    let dir = root().join("fixtures/catalog/metadata");
    let mut n = 0;
    for entry in std::fs::read_dir(&dir).unwrap() {
        let doc = read(&entry.unwrap().path());
        assert_valid(&v, &doc, "fixture metadata");
        assert!(parse_metadata(&doc, Some("x.csv")).is_ok());
        n += 1;
    }
    assert!(n >= 14);
    let good = json!({
        "id": "a", "title": "T", "summary": "S", "publication_date": "2024-01-31",
        "source_url": "https://x", "language": "de-CH",
        "fields": [{"name": "n", "type": "integer"}]
    });
    assert_valid(&v, &good, "minimal document");
    let mut bad_cases = vec![];
    for (key, value) in [
        ("title", json!("  ")),
        ("publication_date", json!("31.01.2024")),
        ("language", json!("deutsch!")),
        ("fields", json!([{"name": "n", "type": "decimal"}])),
        ("categories", json!("x")),
    ] {
        let mut doc = good.clone();
        doc[key] = value;
        bad_cases.push(doc);
    }
    let mut missing = good.clone();
    missing.as_object_mut().unwrap().remove("summary");
    bad_cases.push(missing);
    for doc in bad_cases {
        assert!(!v.is_valid(&doc), "schema accepted {doc}");
        assert!(parse_metadata(&doc, Some("x.csv")).is_err(), "validator accepted {doc}");
    }
}

#[test]
fn fixture_script_matches_the_script_schema() {
    assert_valid(&schema("script.schema.json"), &read(&root().join("fixtures/scripted/replay.json")), "replay.json");
}

#[test]
fn suites_match_their_schemas() {
    let suite_v = schema("suite.schema.json");
    let tmpl_v = schema("question_template.schema.json");
    for dir in ["fixtures/suite", "fixtures/suite_large"] {
        let manifest = read(&root().join(dir).join("suite.json"));
        assert_valid(&suite_v, &manifest, dir);
        for t in manifest["templates"].as_array().unwrap() {
            let doc = read(&root().join(dir).join(t.as_str().unwrap()));
            let templates = if doc.is_array() { doc.as_array().unwrap().clone() } else { vec![doc] };
            for t in &templates {
                assert_valid(&tmpl_v, t, &format!("{dir} template {}", t["id"]));
            }
        }
    }
    assert!(!tmpl_v.is_valid(&json!({"id": "x", "text_template": "q", "relevant_dataset_ids": []})));
}

#[test]
fn audit_events_match_the_event_schema() {
    let v = schema("audit_event.schema.json");
    let e = engine();
    let mut conv = Conversation::new("schema");
    for q in [
        "Wie viele Brunnen gibt es in der Stadt Zürich?",
        "Und wie viele davon liefern Trinkwasser?",
        "Gibt es auch Daten zum Hundebestand?",
    ] {
        e.handle_turn(&mut conv, UserQuestion::new(q), &mut |_| {});
    }
    let mut rejected = Conversation::new("schema-neg");
    e.handle_turn(&mut rejected, UserQuestion::new("Wie viele Einhörner leben im Zoo Zürich?"), &mut |_| {});
    let mut kinds = std::collections::HashSet::new();
    for ev in conv.events().iter().chain(rejected.events()) {
        let line: Json = serde_json::from_str(&ev.to_line()).unwrap();
        assert_valid(&v, &line, ev.kind.as_str());
        kinds.insert(ev.kind);
    }
    assert!(kinds.len() >= 8, "{kinds:?}");
    let mut bad: Json = serde_json::from_str(&conv.events()[0].to_line()).unwrap();
    bad["type"] = json!("rejection");
    assert!(!v.is_valid(&bad));
}

#[test]
fn report_matches_the_report_schema() {
    let e = engine();
    let qs = Suite::load(&root().join("fixtures/suite/suite.json")).unwrap().expand().unwrap();
    let mut records = run_retrieval(&e, &qs, 4, "h");
    records.extend(run_analysis(&e, &qs, 4, &Judge::deterministic(), "h"));
    let text = report::render(&aggregate_by_model(&records).unwrap(), report::ReportFormat::Json);
    assert_valid(&schema("report.schema.json"), &serde_json::from_str(&text).unwrap(), "report");
}
