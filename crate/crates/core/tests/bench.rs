//! Suite loading, metric math and the scripted benchmark run over the
//! fixture catalog.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use odqa_core::analysis::variable_name;
use odqa_core::bench::judge::{judge_deterministic, numbers_match, Judge};
use odqa_core::bench::metrics::{AnalysisScore, RetrievalScore};
use odqa_core::bench::report::{self, ReportFormat};
use odqa_core::bench::{
    aggregate, aggregate_by_model, median_lower, read_records, run_analysis, run_retrieval, write_records, BenchError,
    BenchRecord, RunManifest, Stage, Suite,
};
use odqa_core::catalog::Catalog;
use odqa_core::config::{Config, JudgeMode};
use odqa_core::llm::{estimate_cost, Gateway, PricingTable, ScriptedProvider, ScriptedTurn, Usage};
use odqa_core::orchestrator::Engine;
use odqa_core::sandbox::{validate_artifact, ArtifactKind, ResourceLimits, Session, Status};
use proptest::prelude::*;
use serde_json::{json, Value as Json};

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn expected() -> Json {
    serde_json::from_str(&std::fs::read_to_string(fixtures().join("expected_answers.json")).unwrap()).unwrap()
}

fn fixture_engine() -> Engine {
    let mut config = Config::parse(&format!(
        "data_dir = {:?}\n[catalog]\nmanifest = {:?}\n[embedding]\ncache = false\n[llm]\nscript = {:?}\n",
        tempfile::tempdir().unwrap().keep(),
        fixtures().join("catalog/manifest.json"),
        fixtures().join("scripted/replay.json"),
    ))
    .unwrap();
    config.bench.workers = 4;
    Engine::from_config(&config).unwrap()
}

#[test]
fn fixture_suite_expands_to_twelve_questions() {
    let suite = Suite::load(&fixtures().join("suite/suite.json")).unwrap();
    let qs = suite.expand().unwrap();
    assert_eq!(qs.len(), 12);
    assert_eq!(qs.iter().filter(|q| q.negative).count(), 3);
    let catalog = Catalog::ingest(&fixtures().join("catalog/manifest.json")).unwrap();
    assert!(suite.missing_datasets(&catalog).is_empty());
    assert!(qs.iter().filter(|q| !q.negative).all(|q| q.script.as_ref().is_some_and(|p| p.exists())));
}

#[test]
fn large_suite_expands_to_169_positives_and_30_negatives() {
    let suite = Suite::load(&fixtures().join("suite_large/suite.json")).unwrap();
    assert_eq!(suite.templates.len(), 70);
    let qs = suite.expand().unwrap();
    assert_eq!(qs.len(), 199);
    assert_eq!(qs.iter().filter(|q| !q.negative).count(), 169);
    assert_eq!(qs.iter().filter(|q| q.negative).count(), 30);
    let mut ids: Vec<&str> = qs.iter().map(|q| q.id.as_str()).collect();
    ids.sort();
    ids.dedup();
    assert_eq!(ids.len(), 199);
}

#[test]
fn unbound_placeholder_names_template_and_placeholder() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("suite.json");
    std::fs::write(
        &path,
        json!({"name": "x", "templates": [{
            "id": "q1",
            "text_template": "How many {thing} in {district}?",
            "bindings": [{"thing": "fountains"}],
            "relevant_dataset_ids": ["a"],
            "ground_truth": "3"
        }]})
        .to_string(),
    )
    .unwrap();
    match Suite::load(&path).unwrap().expand() {
        Err(BenchError::UnboundPlaceholder { template, name }) => assert_eq!((template.as_str(), name.as_str()), ("q1", "district")),
        other => panic!("{other:?}"),
    }
}

/// Every ground-truth script runs in a fresh session over the catalog
/// payloads and its answer matches the reference.
#[test]
fn ground_truth_scripts_reproduce_the_references() {
    let catalog = Catalog::ingest(&fixtures().join("catalog/manifest.json")).unwrap();
    let suite = Suite::load(&fixtures().join("suite/suite.json")).unwrap();
    for q in suite.expand().unwrap().iter().filter(|q| !q.negative) {
        let mut session = Session::new();
        for id in &q.relevant_dataset_ids {
            session.register_dataset(&variable_name(id), &catalog.load_payload(id).unwrap()).unwrap();
        }
        let src = std::fs::read_to_string(q.script.as_ref().unwrap()).unwrap();
        let r = session.execute(&src, &ResourceLimits::default());
        assert_eq!(r.status, Status::Ok, "{}: {:?}", q.id, r.error_message);
        let answer = r.final_answer.expect("script calls final_answer");
        assert!(judge_deterministic(&answer, &q.ground_truth), "{}: {:?} vs {:?}", q.id, answer, q.ground_truth);
    }
}

#[test]
fn references_agree_with_the_generator() {
    let e = expected();
    let suite = Suite::load(&fixtures().join("suite/suite.json")).unwrap();
    let qs = suite.expand().unwrap();
    let gt = |id: &str| qs.iter().find(|q| q.id == id).unwrap().ground_truth.clone();
    assert_eq!(gt("t01"), e["fountains"].to_string());
    assert_eq!(gt("t04"), e["trees_per_capita_top"].as_str().unwrap());
    assert_eq!(gt("t05-2"), e["tram_km"]["4"].to_string());
    assert_eq!(gt("t06"), e["velo_mythenquai_feb"].to_string());
}

// ---------------------------------------------------------------------------
// Metric math.

fn record(stage: Stage, id: &str, negative: bool) -> BenchRecord {
    BenchRecord {
        question_id: id.into(),
        template_id: id.into(),
        stage,
        model: "m".into(),
        config_hash: "h".into(),
        negative,
        relevant_dataset_ids: if negative { vec![] } else { vec!["a".into()] },
        retrieval: None,
        analysis: None,
        usage: Usage::default(),
        cost_usd: Some(0.0),
        latency_ms: 1.0,
        failed: None,
    }
}

fn analysis_record(id: &str, correct: bool) -> BenchRecord {
    BenchRecord {
        analysis: Some(AnalysisScore {
            answer_text: String::new(),
            ground_truth: "1".into(),
            correct,
            reason: None,
            steps: 1,
            terminated_by: None,
            judge: JudgeMode::Deterministic,
            judge_fallback: false,
        }),
        ..record(Stage::Analysis, id, false)
    }
}

#[test]
fn correctness_over_169_with_three_wrong() {
    let records: Vec<BenchRecord> = (0..169).map(|i| analysis_record(&format!("q{i:03}"), i >= 3)).collect();
    let r = aggregate(&records).unwrap();
    assert_eq!(r.correctness_denominator, 169);
    let rate = r.correctness_rate.unwrap();
    assert!((rate - 166.0 / 169.0).abs() < 1e-12);
    assert_eq!(format!("{rate:.3}"), "0.982");
}

#[test]
fn latency_median_of_three() {
    let records: Vec<BenchRecord> = [1.0, 2.0, 100.0]
        .iter()
        .enumerate()
        .map(|(i, l)| BenchRecord { latency_ms: *l, ..analysis_record(&format!("q{i}"), true) })
        .collect();
    assert_eq!(aggregate(&records).unwrap().analysis.unwrap().latency_median_ms, 2.0);
}

#[test]
fn recall_mean_of_two() {
    let rel = vec!["a".to_string(), "b".to_string()];
    let recs = vec![
        BenchRecord {
            retrieval: Some(RetrievalScore::score(&rel, rel.clone(), vec![], vec![])),
            relevant_dataset_ids: rel.clone(),
            ..record(Stage::Retrieval, "q1", false)
        },
        BenchRecord {
            retrieval: Some(RetrievalScore::score(&rel, vec!["a".into()], vec![], vec![])),
            relevant_dataset_ids: rel.clone(),
            ..record(Stage::Retrieval, "q2", false)
        },
    ];
    assert_eq!(aggregate(&recs).unwrap().recall_mean, Some(0.75));
}

#[test]
fn aggregate_requires_records_and_one_model() {
    assert!(matches!(aggregate(&[]), Err(BenchError::Empty)));
    let a = analysis_record("a", true);
    let b = BenchRecord { model: "other".into(), ..analysis_record("b", true) };
    assert!(matches!(aggregate(&[a.clone(), b.clone()]), Err(BenchError::MixedModels(..))));
    let per_model = aggregate_by_model(&[b, a]).unwrap();
    assert_eq!(per_model.iter().map(|r| r.model_id.as_str()).collect::<Vec<_>>(), ["m", "other"]);
}

fn arb_retrieval_record() -> impl Strategy<Value = BenchRecord> {
    let ids = ["a", "b", "c", "d"];
    (
        "[a-z]{1,6}",
        proptest::sample::subsequence(ids.to_vec(), 0..=4),
        proptest::sample::subsequence(ids.to_vec(), 0..=4),
        0u64..5000,
        0.0f64..10_000.0,
    )
        .prop_map(|(qid, rel, ret, tokens, latency)| {
            let rel: Vec<String> = rel.iter().map(|s| s.to_string()).collect();
            let ret: Vec<String> = ret.iter().map(|s| s.to_string()).collect();
            BenchRecord {
                negative: rel.is_empty(),
                retrieval: Some(RetrievalScore::score(&rel, ret, vec![], vec![])),
                relevant_dataset_ids: rel,
                usage: Usage { input_tokens: tokens, output_tokens: tokens / 3, reasoning_tokens: 0 },
                latency_ms: latency,
                ..record(Stage::Retrieval, &qid, false)
            }
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn aggregate_is_permutation_invariant(
        records in proptest::collection::vec(arb_retrieval_record(), 1..30),
        seed in any::<u64>(),
    ) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let mut shuffled = records.clone();
        shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        let a = aggregate(&records).unwrap();
        let b = aggregate(&shuffled).unwrap();
        prop_assert_eq!(a.recall_mean, b.recall_mean);
        prop_assert_eq!(a.precision_mean, b.precision_mean);
        prop_assert_eq!(a.answerability_accuracy, b.answerability_accuracy);
        prop_assert_eq!(a.retrieval, b.retrieval);
        for v in [a.recall_mean, a.precision_mean, a.answerability_accuracy].into_iter().flatten() {
            prop_assert!((0.0..=1.0).contains(&v));
        }
    }

    #[test]
    fn perfect_runs_score_one(rels in proptest::collection::vec(proptest::sample::subsequence(vec!["a", "b", "c"], 0..=3), 1..20)) {
        let records: Vec<BenchRecord> = rels.iter().enumerate().map(|(i, rel)| {
            let rel: Vec<String> = rel.iter().map(|s| s.to_string()).collect();
            BenchRecord {
                negative: rel.is_empty(),
                retrieval: Some(RetrievalScore::score(&rel, rel.clone(), vec![], vec![])),
                relevant_dataset_ids: rel,
                ..record(Stage::Retrieval, &format!("q{i}"), false)
            }
        }).collect();
        let r = aggregate(&records).unwrap();
        prop_assert_eq!(r.recall_mean, Some(1.0));
        prop_assert_eq!(r.precision_mean, Some(1.0));
        prop_assert_eq!(r.answerability_accuracy, Some(1.0));
    }

    #[test]
    fn numeric_judge_is_symmetric(a in -1e9f64..1e9, rel in -2e-4f64..2e-4) {
        let b = a * (1.0 + rel);
        prop_assert_eq!(numbers_match(a, b), numbers_match(b, a));
        let (sa, sb) = (format!("{a}"), format!("{b}"));
        prop_assert_eq!(judge_deterministic(&sa, &sb), judge_deterministic(&sb, &sa));
    }

    #[test]
    fn median_is_an_element_with_half_below(v in proptest::collection::vec(0u64..1000, 1..50)) {
        let m = median_lower(&v).unwrap();
        let mut s = v.clone();
        s.sort();
        prop_assert_eq!(m, s[(s.len() - 1) / 2]);
        prop_assert!(s.iter().filter(|x| **x < m).count() <= (s.len() - 1) / 2);
    }
}

#[test]
fn judge_examples() {
    assert!(judge_deterministic("1,200 public parking spaces", "1200"));
    assert!(!judge_deterministic("42", "41"));
    assert!(judge_deterministic("12.3456%", "12.3457"));
}

#[test]
fn llm_judge_falls_back_and_flags() {
    let down: Arc<dyn odqa_core::llm::Provider> =
        Arc::new(ScriptedProvider::new(vec![ScriptedTurn { error: Some(odqa_core::llm::ScriptedError::Unavailable), ..Default::default() }]));
    let g = Gateway::new(down, "gpt-4.1").with_retry(odqa_core::llm::RetryPolicy::none());
    let judge = Judge { mode: JudgeMode::Llm, gateway: Some(&g) };
    let v = judge.judge("q", "Es sind 1'200.", "1200");
    assert!(v.correct && v.fallback);

    let ok: Arc<dyn odqa_core::llm::Provider> =
        Arc::new(ScriptedProvider::new(vec![ScriptedTurn::call("verdict", json!({"correct": false, "rationale": "wrong year"}))]));
    let g = Gateway::new(ok, "gpt-4.1");
    let v = Judge { mode: JudgeMode::Llm, gateway: Some(&g) }.judge("q", "1200", "1200");
    assert!(!v.correct && !v.fallback);
    assert_eq!(v.rationale, "wrong year");
}

// ---------------------------------------------------------------------------
// Scripted end-to-end run over the fixture suite.

fn run_both(engine: &Engine) -> (Vec<BenchRecord>, Vec<BenchRecord>) {
    let qs = Suite::load(&fixtures().join("suite/suite.json")).unwrap().expand().unwrap();
    let judge = Judge::deterministic();
    (run_retrieval(engine, &qs, 4, "fixture"), run_analysis(engine, &qs, 4, &judge, "fixture"))
}

#[test]
fn scripted_run_matches_hand_computed_metrics() {
    let engine = fixture_engine();
    let (ret, ana) = run_both(&engine);
    assert_eq!(ret.len(), 12);
    assert_eq!(ana.len(), 9);
    for r in ret.iter().chain(&ana) {
        assert!(r.failed.is_none(), "{}: {:?}", r.question_id, r.failed);
    }
    let get = |id: &str| ret.iter().find(|r| r.question_id == id).unwrap().retrieval.clone().unwrap();
    assert_eq!(get("t05-2").retrieved, ["tramlinien"]);
    assert!(get("t05-2").warnings.iter().any(|w| w.contains("tram_fahrplan_2030")));
    assert_eq!(get("t07").reformulations.len(), 3);
    assert_eq!(get("t08-2").retrieved, ["hundebestand"]);

    let mut all = ret.clone();
    all.extend(ana.clone());
    let r = aggregate(&all).unwrap();
    // Recall: 8 perfect positives, t04 at 1/2; negatives 1, 0, 1.
    assert_eq!(r.recall_mean, Some(10.5 / 12.0));
    // Precision: t03 at 2/3, t06 at 1/2, the rest of the positives at 1; negatives 1, 0, 1.
    let p = (7.0 + 2.0 / 3.0 + 0.5 + 2.0) / 12.0;
    assert!((r.precision_mean.unwrap() - p).abs() < 1e-12);
    assert_eq!(r.answerability_accuracy, Some(11.0 / 12.0));
    // Only t06 answers wrongly.
    assert_eq!(r.correctness_rate, Some(8.0 / 9.0));
    assert_eq!(r.correctness_denominator, 9);
    let wrong: Vec<&str> =
        ana.iter().filter(|r| !r.analysis.as_ref().unwrap().correct).map(|r| r.question_id.as_str()).collect();
    assert_eq!(wrong, ["t06"]);

    // Retrieval turns per question: 2 for most, 3 for t03 and t04, 5 for t07;
    // each turn reports 1000 input and 50 output tokens.
    let rs = r.retrieval.as_ref().unwrap();
    assert_eq!((rs.tokens_median.input, rs.tokens_median.output, rs.tokens_median.reasoning), (2000, 100, 0));
    assert!((rs.cost_median_usd.unwrap() - 0.0048).abs() < 1e-12);
    // Analysis steps per question: [2, 1, 1, 2, 2, 1, 3, 1, 2] at 3000/200 each.
    let a = r.analysis.as_ref().unwrap();
    assert_eq!((a.tokens_median.input, a.tokens_median.output), (6000, 400));
    assert!((a.cost_median_usd.unwrap() - 0.0152).abs() < 1e-12);

    let pricing = PricingTable::bundled();
    for rec in &all {
        assert_eq!(rec.cost_usd, Some(estimate_cost(rec.usage, pricing.get("gpt-4.1").unwrap())));
    }
}

fn strip_latency(records: &[BenchRecord]) -> Vec<BenchRecord> {
    records.iter().map(|r| BenchRecord { latency_ms: 0.0, ..r.clone() }).collect()
}

#[test]
fn scripted_runs_are_deterministic_and_round_trip() {
    let engine = fixture_engine();
    let (r1, a1) = run_both(&engine);
    let (r2, a2) = run_both(&engine);
    assert_eq!(strip_latency(&r1), strip_latency(&r2));
    assert_eq!(strip_latency(&a1), strip_latency(&a2));

    let dir = tempfile::tempdir().unwrap();
    let manifest = |stage, n| RunManifest {
        suite: "city-mini".into(),
        stage,
        model: "gpt-4.1".into(),
        config_hash: "fixture".into(),
        questions: n,
        failed: 0,
        judge: None,
        started_at: String::new(),
        finished_at: String::new(),
    };
    write_records(dir.path(), &manifest(Stage::Retrieval, r1.len()), &r1).unwrap();
    write_records(dir.path(), &manifest(Stage::Analysis, a1.len()), &a1).unwrap();
    let back = read_records(dir.path()).unwrap();
    assert_eq!(back.len(), 21);
    let mut both = r1.clone();
    both.extend(a1.clone());
    let reports = aggregate_by_model(&back).unwrap();
    assert_eq!(reports.len(), 1);
    assert_eq!(reports[0], aggregate(&both).unwrap());

    let text = report::render(&reports, ReportFormat::Json);
    assert_eq!(report::parse_json(&text).unwrap().models, reports);
    let md = report::render(&reports, ReportFormat::Markdown);
    assert_eq!(md.lines().filter(|l| l.starts_with("| gpt-4.1 |")).count(), 1);
    assert!(md.contains("Negative questions"));
    let plot: Json = serde_json::from_str(&report::render(&reports, ReportFormat::PlotSpec)).unwrap();
    validate_artifact(ArtifactKind::PlotSpec, &plot).unwrap();
}

#[test]
fn max_steps_and_failures_are_recorded() {
    let mut engine = fixture_engine();
    engine.analysis.max_steps = 2;
    let qs = Suite::load(&fixtures().join("suite/suite.json")).unwrap().expand().unwrap();
    let t05 = qs.iter().filter(|q| q.id == "t05-2").cloned().collect::<Vec<_>>();
    let recs = run_analysis(&engine, &t05, 1, &Judge::deterministic(), "h");
    let a = recs[0].analysis.as_ref().unwrap();
    assert!(!a.correct);
    assert_eq!(a.reason.as_deref(), Some("max_steps"), "{:?}", recs[0].failed);
    assert_eq!(a.steps, 2);

    // A question the script does not know fails at the provider; the run continues.
    let mut odd = qs[0].clone();
    odd.id = "zz".into();
    odd.text = "Eine Frage ohne Skript".into();
    let recs = run_retrieval(&engine, &[odd, qs[0].clone()], 2, "h");
    assert!(recs[0].failed.is_some());
    assert_eq!(recs[0].retrieval.as_ref().unwrap().recall, 0.0);
    assert!(recs[1].failed.is_none());
}
