//! Runs suite questions through the engine on a worker pool.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use chrono::{SecondsFormat, Utc};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::judge::Judge;
use super::metrics::{AnalysisScore, BenchRecord, RetrievalScore};
use super::{BenchError, BenchQuestion, Stage};
use crate::analysis::TerminatedBy;
use crate::config::JudgeMode;
use crate::llm::Usage;
use crate::orchestrator::Engine;
use crate::retrieval::UserQuestion;

/// Written next to the records of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub suite: String,
    pub stage: Stage,
    pub model: String,
    pub config_hash: String,
    pub questions: usize,
    pub failed: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub judge: Option<JudgeMode>,
    pub started_at: String,
    pub finished_at: String,
}

pub fn now_rfc3339() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}

fn pool(workers: usize) -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new().num_threads(workers.max(1)).build().expect("thread pool")
}

fn elapsed_ms(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1000.0
}

/// Retrieval over every question, negatives included. Records keep the
/// order of `questions`.
pub fn run_retrieval(engine: &Engine, questions: &[BenchQuestion], workers: usize, config_hash: &str) -> Vec<BenchRecord> {
    let model = engine.gateways.retrieval.model().to_string();
    pool(workers).install(|| {
        questions
            .par_iter()
            .map(|q| {
                let start = Instant::now();
                let result = engine.retrieve(&UserQuestion::new(q.text.clone()));
                let latency_ms = elapsed_ms(start);
                let (score, usage, failed) = match result {
                    Ok(o) => {
                        let warnings = o.trace.warnings().map(str::to_string).collect();
                        (RetrievalScore::score(&q.relevant_dataset_ids, o.dataset_ids, o.reformulations, warnings), o.usage, None)
                    }
                    Err(e) => {
                        tracing::warn!(question = %q.id, "retrieval failed: {e}");
                        (RetrievalScore::failed(), Usage::default(), Some(e.to_string()))
                    }
                };
                BenchRecord {
                    question_id: q.id.clone(),
                    template_id: q.template_id.clone(),
                    stage: Stage::Retrieval,
                    model: model.clone(),
                    config_hash: config_hash.into(),
                    negative: q.negative,
                    relevant_dataset_ids: q.relevant_dataset_ids.clone(),
                    retrieval: Some(score),
                    analysis: None,
                    usage,
                    cost_usd: engine.cost(&model, usage),
                    latency_ms,
                    failed,
                }
            })
            .collect()
    })
}

/// Analysis with the ground-truth datasets over the non-negative questions.
pub fn run_analysis(
    engine: &Engine,
    questions: &[BenchQuestion],
    workers: usize,
    judge: &Judge<'_>,
    config_hash: &str,
) -> Vec<BenchRecord> {
    let model = engine.gateways.analysis.model().to_string();
    let positives: Vec<&BenchQuestion> = questions.iter().filter(|q| !q.negative).collect();
    pool(workers).install(|| {
        positives
            .par_iter()
            .map(|q| {
                let start = Instant::now();
                let result = engine.analyze_datasets(&q.text, &q.relevant_dataset_ids);
                let latency_ms = elapsed_ms(start);
                let (score, usage, failed) = match result {
                    Ok(fa) => {
                        let (correct, reason, fallback, failed) = match fa.terminated_by {
                            TerminatedBy::FinalAnswerTool => {
                                let v = judge.judge(&q.text, &fa.text, &q.ground_truth);
                                let reason = (!v.correct).then(|| "incorrect".to_string());
                                (v.correct, reason, v.fallback, None)
                            }
                            TerminatedBy::MaxSteps => (false, Some("max_steps".into()), false, None),
                            TerminatedBy::ProviderFailure => {
                                (false, Some("provider_failure".into()), false, fa.failure.clone())
                            }
                        };
                        let score = AnalysisScore {
                            answer_text: fa.text,
                            ground_truth: q.ground_truth.clone(),
                            correct,
                            reason,
                            steps: fa.steps.len(),
                            terminated_by: Some(fa.terminated_by),
                            judge: judge.mode,
                            judge_fallback: fallback,
                        };
                        (score, fa.usage, failed)
                    }
                    Err(e) => {
                        tracing::warn!(question = %q.id, "analysis failed: {e}");
                        let score = AnalysisScore {
                            answer_text: String::new(),
                            ground_truth: q.ground_truth.clone(),
                            correct: false,
                            reason: Some("engine_error".into()),
                            steps: 0,
                            terminated_by: None,
                            judge: judge.mode,
                            judge_fallback: false,
                        };
                        (score, Usage::default(), Some(e.to_string()))
                    }
                };
                BenchRecord {
                    question_id: q.id.clone(),
                    template_id: q.template_id.clone(),
                    stage: Stage::Analysis,
                    model: model.clone(),
                    config_hash: config_hash.into(),
                    negative: false,
                    relevant_dataset_ids: q.relevant_dataset_ids.clone(),
                    retrieval: None,
                    analysis: Some(score),
                    usage,
                    cost_usd: engine.cost(&model, usage),
                    latency_ms,
                    failed,
                }
            })
            .collect()
    })
}

pub fn records_path(dir: &Path, stage: Stage) -> PathBuf {
    dir.join(format!("{}.records.jsonl", stage.as_str()))
}

/// Writes `<stage>.records.jsonl` and `<stage>.run.json` into `dir`.
pub fn write_records(dir: &Path, manifest: &RunManifest, records: &[BenchRecord]) -> Result<PathBuf, BenchError> {
    let io = |p: &Path, e| BenchError::Io(p.to_path_buf(), e);
    std::fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
    let path = records_path(dir, manifest.stage);
    let mut f = std::io::BufWriter::new(std::fs::File::create(&path).map_err(|e| io(&path, e))?);
    for r in records {
        writeln!(f, "{}", serde_json::to_string(r).expect("records serialize")).map_err(|e| io(&path, e))?;
    }
    f.flush().map_err(|e| io(&path, e))?;
    let mpath = dir.join(format!("{}.run.json", manifest.stage.as_str()));
    let text = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    std::fs::write(&mpath, text + "\n").map_err(|e| io(&mpath, e))?;
    Ok(path)
}

/// Reads every `*.records.jsonl` file in `dir`, in file name order.
pub fn read_records(dir: &Path) -> Result<Vec<BenchRecord>, BenchError> {
    let io = |p: &Path, e| BenchError::Io(p.to_path_buf(), e);
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.to_string_lossy().ends_with(".records.jsonl"))
        .collect();
    files.sort();
    let mut out = Vec::new();
    for path in files {
        let text = std::fs::read_to_string(&path).map_err(|e| io(&path, e))?;
        for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let r = serde_json::from_str(line).map_err(|e| BenchError::Parse(path.clone(), format!("line {}: {e}", i + 1)))?;
            out.push(r);
        }
    }
    Ok(out)
}
