//! Retrieval loop over the fixture catalog with scripted models, the search
//! tool, and PDF attachments.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use lopdf::content::{Content, Operation};
use lopdf::{dictionary, Document, Object, Stream};
use odqa_core::catalog::{embedding_text, Catalog};
use odqa_core::embedding::{cosine, hit_order, Embedder, EmbeddingVector, HashEmbedder, Index, SearchHit};
use odqa_core::llm::{Gateway, Part, RetryPolicy, ScriptedProvider, ScriptedTurn};
use odqa_core::retrieval::{
    convert_pdf, page_markers, tool_search_datasets, RetrievalConfig, RetrievalError, Retriever, TraceEvent,
    UserQuestion, NO_REPORT_REASON,
};
use proptest::prelude::*;
use serde_json::json;

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

struct World {
    catalog: Catalog,
    index: Index,
    embedder: HashEmbedder,
}

fn world() -> World {
    let catalog = Catalog::ingest(&fixtures().join("catalog/manifest.json")).unwrap();
    let embedder = HashEmbedder::default();
    let index = Index::build(&catalog, Arc::new(embedder.clone()), None, 4).unwrap();
    World { catalog, index, embedder }
}

fn gateway(turns: Vec<ScriptedTurn>) -> Gateway {
    Gateway::new(Arc::new(ScriptedProvider::new(turns)), "gpt-4.1").with_retry(RetryPolicy::none())
}

fn retrieve(w: &World, turns: Vec<ScriptedTurn>, config: &RetrievalConfig, q: &UserQuestion) -> Result<odqa_core::retrieval::RetrievalOutcome, RetrievalError> {
    let gw = gateway(turns);
    let r = Retriever { catalog: &w.catalog, index: &w.index, embedder: &w.embedder, gateway: &gw, config };
    r.retrieve(q)
}

fn search(query: &str) -> ScriptedTurn {
    ScriptedTurn::call("search_datasets", json!({"query": query}))
}

fn report(ids: &[&str]) -> ScriptedTurn {
    ScriptedTurn::call("report_results", json!({"dataset_ids": ids, "justification": "test"}))
}

#[test]
fn parking_question_reports_two_datasets() {
    let w = world();
    let out = retrieve(
        &w,
        vec![
            search("Parkplätze"),
            search("Behindertenparkplätze"),
            report(&["parkplaetze_oeffentlich", "parkplaetze_behinderte"]),
        ],
        &RetrievalConfig::default(),
        &UserQuestion::new("Welcher Anteil der Parkplätze ist für Menschen mit Behinderung reserviert?"),
    )
    .unwrap();
    assert_eq!(out.dataset_ids, vec!["parkplaetze_oeffentlich", "parkplaetze_behinderte"]);
    assert!(!out.rejected);
    assert_eq!(out.reformulations, vec!["Parkplätze", "Behindertenparkplätze"]);
    assert!(out.trace.is_well_formed());
    let ids: Vec<&str> = out.candidates.iter().map(|h| h.dataset_id.as_str()).collect();
    assert!(ids.contains(&"parkplaetze_behinderte"));
    let mut sorted = out.candidates.clone();
    sorted.sort_by(hit_order);
    assert_eq!(sorted, out.candidates);
}

#[test]
fn empty_report_is_a_rejection() {
    let w = world();
    let out = retrieve(
        &w,
        vec![search("Einhörner"), report(&[])],
        &RetrievalConfig::default(),
        &UserQuestion::new("Wie viele Einhörner leben in der Stadt?"),
    )
    .unwrap();
    assert!(out.rejected);
    assert!(out.dataset_ids.is_empty());
    assert!(out.trace.is_well_formed());
}

#[test]
fn unknown_ids_are_dropped_with_a_warning() {
    let w = world();
    let out = retrieve(
        &w,
        vec![search("Tram"), report(&["tramlinien", "tram_fahrplan_2030", "tramlinien"])],
        &RetrievalConfig::default(),
        &UserQuestion::new("Wie lang ist die Tramlinie 4?"),
    )
    .unwrap();
    assert_eq!(out.dataset_ids, vec!["tramlinien"]);
    assert!(out.trace.warnings().any(|m| m == "dropped unknown dataset id `tram_fahrplan_2030`"));
}

#[test]
fn fourth_search_is_refused_at_budget_three() {
    let w = world();
    let refused = "refused: the limit of 3 searches is reached; report your results now";
    let mut last = report(&["velozaehlung"]);
    last.expect = vec![odqa_core::llm::Expectation::LastToolResultContains(refused.into())];
    let out = retrieve(
        &w,
        vec![search("Velo"), search("Fahrrad"), search("Zählstelle"), search("Mythenquai"), last],
        &RetrievalConfig::default(),
        &UserQuestion::new("Wie viele Velos fuhren im Februar am Mythenquai?"),
    )
    .unwrap();
    assert_eq!(out.reformulations.len(), 3);
    assert_eq!(out.dataset_ids, vec!["velozaehlung"]);
    assert!(out.trace.warnings().any(|m| m == "subquery budget of 3 exhausted"));
    let issued = out.trace.events.iter().filter(|e| matches!(e, TraceEvent::SubqueryIssued { .. })).count();
    assert_eq!(issued, 3);
}

#[test]
fn no_report_after_round_limit() {
    let w = world();
    let turns = (0..8).map(|i| ScriptedTurn::text(format!("thinking {i}"))).collect();
    let out = retrieve(&w, turns, &RetrievalConfig::default(), &UserQuestion::new("Brunnen?")).unwrap();
    assert!(out.rejected);
    match out.trace.events.last() {
        Some(TraceEvent::Reported { reason, .. }) => assert_eq!(reason.as_deref(), Some(NO_REPORT_REASON)),
        other => panic!("{other:?}"),
    }
}

#[test]
fn empty_question_is_rejected_before_any_call() {
    let w = world();
    let err = retrieve(&w, vec![], &RetrievalConfig::default(), &UserQuestion::new("   ")).unwrap_err();
    assert!(matches!(err, RetrievalError::EmptyQuestion));
}

#[test]
fn provider_failure_propagates() {
    let w = world();
    let turn = ScriptedTurn { error: Some(odqa_core::llm::ScriptedError::Unavailable), ..Default::default() };
    let err = retrieve(&w, vec![turn], &RetrievalConfig::default(), &UserQuestion::new("Brunnen?")).unwrap_err();
    assert!(matches!(err, RetrievalError::Provider(_)), "{err:?}");
}

#[test]
fn malformed_top_k_becomes_a_warning_and_the_loop_continues() {
    let w = world();
    let bad = ScriptedTurn::call("search_datasets", json!({"query": "Brunnen", "top_k": 500}));
    let out = retrieve(
        &w,
        vec![bad, search("Brunnen"), report(&["brunnen"])],
        &RetrievalConfig::default(),
        &UserQuestion::new("Wie viele Brunnen gibt es?"),
    )
    .unwrap();
    assert_eq!(out.dataset_ids, vec!["brunnen"]);
    assert!(out.trace.warnings().any(|m| m.starts_with("malformed tool arguments")));
    assert_eq!(out.reformulations, vec!["Brunnen"]);
}

#[test]
fn search_tool_rejects_zero_top_k() {
    let w = world();
    let err = tool_search_datasets(&w.catalog, &w.index, &w.embedder, "Brunnen", 0, 2000).unwrap_err();
    assert!(matches!(err, RetrievalError::InvalidArgument(_)));
}

#[test]
fn top_k_larger_than_catalog_returns_everything() {
    let w = world();
    let hits = tool_search_datasets(&w.catalog, &w.index, &w.embedder, "Brunnen", 20, 2000).unwrap();
    assert_eq!(hits.len(), w.catalog.len());
}

#[test]
fn snippets_are_bounded_for_huge_summaries() {
    let base = Catalog::ingest(&fixtures().join("catalog/manifest.json")).unwrap();
    let mut docs = base.docs().to_vec();
    // about 22k tokens of summary
    docs[0].summary = "Messwerte der Luftqualität und Lärmbelastung pro Quartier. ".repeat(2600);
    let catalog = Catalog::from_docs(docs).unwrap();
    let embedder = HashEmbedder::default();
    let index = Index::build(&catalog, Arc::new(embedder.clone()), None, 2).unwrap();
    let hits = tool_search_datasets(&catalog, &index, &embedder, "Luftqualität Lärmbelastung", 20, 2000).unwrap();
    assert!(hits.iter().all(|(_, s)| s.chars().count() <= 2000));
    assert!(hits.iter().any(|(_, s)| s.chars().count() == 2000));
}

#[test]
fn a_title_query_finds_its_dataset_in_the_top_three() {
    let w = world();
    for doc in w.catalog.docs() {
        let hits = tool_search_datasets(&w.catalog, &w.index, &w.embedder, &doc.title, 3, 2000).unwrap();
        assert!(hits.iter().any(|(h, _)| h.dataset_id == doc.id), "{}: {:?}", doc.title, hits);
    }
}

#[test]
fn knn_matches_brute_force_cosine() {
    let w = world();
    let vectors: Vec<(String, EmbeddingVector)> =
        w.catalog.docs().iter().map(|d| (d.id.clone(), w.embedder.embed(&embedding_text(d)).unwrap())).collect();
    for query in ["Parkplätze", "Bäume pro Einwohner", "Tramlinie Länge", "Stromverbrauch Haushalte", "Hunde"] {
        let q = w.embedder.embed(query).unwrap();
        let mut expected: Vec<SearchHit> = vectors
            .iter()
            .map(|(id, v)| SearchHit { dataset_id: id.clone(), score: cosine(&q, v).unwrap() })
            .collect();
        expected.sort_by(hit_order);
        for k in [1, 3, 5, 14, 30] {
            let got = w.index.knn(&q, k).unwrap();
            let want = &expected[..k.min(expected.len())];
            assert_eq!(got.len(), want.len());
            for (g, e) in got.iter().zip(want) {
                assert_eq!(g.dataset_id, e.dataset_id);
                assert!((g.score - e.score).abs() < 1e-6);
            }
        }
    }
}

fn vector_strategy(dim: usize) -> impl Strategy<Value = Vec<f32>> {
    // small integer components make exact ties likely
    prop::collection::vec(-3i8..=3, dim)
        .prop_filter("non-zero", |v| v.iter().any(|&x| x != 0))
        .prop_map(|v| v.into_iter().map(f32::from).collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn knn_equals_full_sort(
        corpus in prop::collection::vec(vector_strategy(4), 1..40),
        query in vector_strategy(4),
        k in 1usize..50,
    ) {
        let items: Vec<(String, EmbeddingVector)> = corpus
            .iter()
            .enumerate()
            .map(|(i, v)| (format!("d{i:03}"), EmbeddingVector::new(v.clone()).unwrap()))
            .collect();
        let index = Index::from_vectors(items.clone()).unwrap();
        let q = EmbeddingVector::new(query).unwrap();
        // exact order of integer cosines: d_a/|a| > d_b/|b| iff
        // sign(d_a) d_a^2 |b|^2 > sign(d_b) d_b^2 |a|^2
        let ints = |v: &[f32]| v.iter().map(|&x| x as i64).collect::<Vec<i64>>();
        let dot = |a: &[i64], b: &[i64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<i64>();
        let qi = ints(q.values());
        let mut full: Vec<(i64, i64, &str)> = items
            .iter()
            .map(|(id, v)| {
                let vi = ints(v.values());
                (dot(&qi, &vi), dot(&vi, &vi), id.as_str())
            })
            .collect();
        let key = |d: i64, other_norm: i64| d.signum() * d * d * other_norm;
        full.sort_by(|a, b| key(b.0, a.1).cmp(&key(a.0, b.1)).then_with(|| a.2.cmp(b.2)));
        let got = index.knn(&q, k).unwrap();
        prop_assert_eq!(got.len(), k.min(items.len()));
        for w in got.windows(2) {
            prop_assert!(w[0].score > w[1].score || (w[0].score == w[1].score && w[0].dataset_id < w[1].dataset_id));
        }
        let got_ids: Vec<&str> = got.iter().map(|h| h.dataset_id.as_str()).collect();
        let want_ids: Vec<&str> = full[..got.len()].iter().map(|h| h.2).collect();
        prop_assert_eq!(got_ids, want_ids);
    }
}

#[test]
fn image_attachment_becomes_an_image_part() {
    let q = UserQuestion::new("Was zeigt dieses Bild?").with_image("image/png", &[0x89, b'P', b'N', b'G']);
    let parts = q.parts();
    assert_eq!(parts.len(), 2);
    match &parts[1] {
        Part::Image { media_type, data_base64 } => {
            assert_eq!(media_type, "image/png");
            assert_eq!(data_base64, "iVBORw==");
        }
        other => panic!("{other:?}"),
    }
}

fn pdf(pages: &[&str]) -> Vec<u8> {
    let mut doc = Document::with_version("1.5");
    let pages_id = doc.new_object_id();
    let font_id = doc.add_object(dictionary! {"Type" => "Font", "Subtype" => "Type1", "BaseFont" => "Courier"});
    let resources_id = doc.add_object(dictionary! {"Font" => dictionary! {"F1" => font_id}});
    let mut kids: Vec<Object> = Vec::new();
    for text in pages {
        let content = Content {
            operations: vec![
                Operation::new("BT", vec![]),
                Operation::new("Tf", vec!["F1".into(), 24.into()]),
                Operation::new("Td", vec![72.into(), 700.into()]),
                Operation::new("Tj", vec![Object::string_literal(*text)]),
                Operation::new("ET", vec![]),
            ],
        };
        let content_id = doc.add_object(Stream::new(dictionary! {}, content.encode().unwrap()));
        let page_id = doc.add_object(dictionary! {"Type" => "Page", "Parent" => pages_id, "Contents" => content_id});
        kids.push(page_id.into());
    }
    let count = kids.len() as i64;
    doc.objects.insert(
        pages_id,
        Object::Dictionary(dictionary! {
            "Type" => "Pages",
            "Kids" => kids,
            "Count" => count,
            "Resources" => resources_id,
            "MediaBox" => vec![0.into(), 0.into(), 595.into(), 842.into()],
        }),
    );
    let catalog_id = doc.add_object(dictionary! {"Type" => "Catalog", "Pages" => pages_id});
    doc.trailer.set("Root", catalog_id);
    let mut buf = Vec::new();
    doc.save_to(&mut buf).unwrap();
    buf
}

#[test]
fn one_page_pdf_converts_to_markdown() {
    let md = convert_pdf(&pdf(&["hello"])).unwrap();
    assert_eq!(page_markers(&md), 1);
    assert!(md.contains("hello"), "{md}");
}

#[test]
fn three_page_pdf_has_three_markers_in_order() {
    let md = convert_pdf(&pdf(&["eins", "zwei", "drei"])).unwrap();
    assert_eq!(page_markers(&md), 3);
    let p1 = md.find("<!-- page 1 -->").unwrap();
    let p2 = md.find("<!-- page 2 -->").unwrap();
    let p3 = md.find("<!-- page 3 -->").unwrap();
    assert!(p1 < p2 && p2 < p3);
    assert!(md.find("zwei").unwrap() > p2 && md.find("zwei").unwrap() < p3);
}

#[test]
fn non_pdf_and_encrypted_pdf_are_unreadable() {
    assert!(matches!(convert_pdf(b"GIF89a not a pdf"), Err(RetrievalError::UnreadablePdf(_))));
    let mut doc = Document::load_mem(&pdf(&["secret"])).unwrap();
    let encrypt_id = doc.add_object(dictionary! {
        "Filter" => "Standard",
        "V" => 1,
        "R" => 2,
        "O" => Object::string_literal(vec![0u8; 32]),
        "U" => Object::string_literal(vec![0u8; 32]),
        "P" => -4,
    });
    doc.trailer.set("Encrypt", encrypt_id);
    let mut buf = Vec::new();
    doc.save_to(&mut buf).unwrap();
    assert!(matches!(convert_pdf(&buf), Err(RetrievalError::UnreadablePdf(_))));
}

#[test]
fn pdf_attachment_reaches_the_model_as_a_document_part() {
    let w = world();
    let q = UserQuestion::new("Welche Datensätze passen zu diesem Bericht?").with_pdf("bericht.pdf", &pdf(&["Brunnen"])).unwrap();
    let mut first = search("Brunnen");
    first.expect = vec![odqa_core::llm::Expectation::AnyMessageContains("Attached document `bericht.pdf`".into())];
    let out = retrieve(&w, vec![first, report(&["brunnen"])], &RetrievalConfig::default(), &q).unwrap();
    assert_eq!(out.dataset_ids, vec!["brunnen"]);
}
