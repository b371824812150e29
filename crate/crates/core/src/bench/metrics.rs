//! Per-question records and their aggregation.
//!
//! Negative questions (no relevant dataset) score recall = precision = 1.0
//! when retrieval rejects them and 0.0 when it returns anything. A failed
//! retrieval scores 0.0 on recall, precision and answerability.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{BenchError, Stage};
use crate::analysis::TerminatedBy;
use crate::config::JudgeMode;
use crate::llm::Usage;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

pub const NEGATIVE_CONVENTION: &str = "Negative questions (no relevant dataset) count as recall 1.0 and precision 1.0 \
when retrieval rejects them, and 0.0 for both when retrieval returns any dataset. Positive questions with an \
empty retrieval have precision 0.0. A question counts as answerable when at least one dataset was retrieved.";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRecord {
    pub question_id: String,
    pub template_id: String,
    pub stage: Stage,
    pub model: String,
    pub config_hash: String,
    pub negative: bool,
    pub relevant_dataset_ids: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub retrieval: Option<RetrievalScore>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub analysis: Option<AnalysisScore>,
    pub usage: Usage,
    /// `None` when the model has no price entry.
    pub cost_usd: Option<f64>,
    /// Wall-clock time from submission to result.
    pub latency_ms: f64,
    /// Set when the engine failed on this question.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failed: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalScore {
    pub retrieved: Vec<String>,
    pub reformulations: Vec<String>,
    pub recall: f64,
    pub precision: f64,
    pub answerable_pred: bool,
    pub answerability_correct: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisScore {
    pub answer_text: String,
    pub ground_truth: String,
    pub correct: bool,
    /// Why the answer was not accepted, if it was not.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    pub steps: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub terminated_by: Option<TerminatedBy>,
    pub judge: JudgeMode,
    /// The LLM judge failed and the deterministic judge was used instead.
    #[serde(default)]
    pub judge_fallback: bool,
}

/// Recall and precision of one retrieval, with the negative-case convention.
pub fn retrieval_scores(relevant: &[String], retrieved: &[String]) -> (f64, f64) {
    if relevant.is_empty() {
        let s = if retrieved.is_empty() { 1.0 } else { 0.0 };
        return (s, s);
    }
    let mut uniq: Vec<&String> = retrieved.iter().collect();
    uniq.sort();
    uniq.dedup();
    let hits = uniq.iter().filter(|id| relevant.contains(id)).count() as f64;
    let mut rel: Vec<&String> = relevant.iter().collect();
    rel.sort();
    rel.dedup();
    let recall = hits / rel.len() as f64;
    let precision = if uniq.is_empty() { 0.0 } else { hits / uniq.len() as f64 };
    (recall, precision)
}

impl RetrievalScore {
    pub fn score(relevant: &[String], retrieved: Vec<String>, reformulations: Vec<String>, warnings: Vec<String>) -> Self {
        let (recall, precision) = retrieval_scores(relevant, &retrieved);
        let answerable_pred = !retrieved.is_empty();
        RetrievalScore {
            answerability_correct: answerable_pred != relevant.is_empty(),
            retrieved,
            reformulations,
            recall,
            precision,
            answerable_pred,
            warnings,
        }
    }

    pub fn failed() -> Self {
        RetrievalScore {
            retrieved: Vec::new(),
            reformulations: Vec::new(),
            recall: 0.0,
            precision: 0.0,
            answerable_pred: false,
            answerability_correct: false,
            warnings: Vec::new(),
        }
    }
}

/// Lower-middle median: for an even count the smaller of the two middle
/// values.
pub fn median_lower<T: PartialOrd + Copy>(values: &[T]) -> Option<T> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    Some(v[(v.len() - 1) / 2])
}

/// Mean summed in sorted order so the result does not depend on record order.
fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let mut v: Vec<f64> = values.collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    Some(v.iter().sum::<f64>() / v.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TokenMedians {
    pub input: u64,
    pub output: u64,
    pub reasoning: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageAggregate {
    pub questions: usize,
    pub failed: usize,
    pub latency_median_ms: f64,
    /// Each component is the median of that component on its own.
    pub tokens_median: TokenMedians,
    /// `None` when some record has no price.
    pub cost_median_usd: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub schema_version: u32,
    pub model_id: String,
    pub config_hash: String,
    pub negative_convention: String,
    pub recall_mean: Option<f64>,
    pub precision_mean: Option<f64>,
    pub answerability_accuracy: Option<f64>,
    /// Over non-negative questions of the analysis stage only.
    pub correctness_rate: Option<f64>,
    pub correctness_denominator: usize,
    pub retrieval: Option<StageAggregate>,
    pub analysis: Option<StageAggregate>,
    pub records: Vec<BenchRecord>,
}

fn stage_aggregate(records: &[&BenchRecord]) -> Option<StageAggregate> {
    if records.is_empty() {
        return None;
    }
    let lat: Vec<f64> = records.iter().map(|r| r.latency_ms).collect();
    let pick = |f: fn(&Usage) -> u64| median_lower(&records.iter().map(|r| f(&r.usage)).collect::<Vec<_>>()).unwrap();
    let costs: Option<Vec<f64>> = records.iter().map(|r| r.cost_usd).collect();
    Some(StageAggregate {
        questions: records.len(),
        failed: records.iter().filter(|r| r.failed.is_some()).count(),
        latency_median_ms: median_lower(&lat).unwrap(),
        tokens_median: TokenMedians {
            input: pick(|u| u.input_tokens),
            output: pick(|u| u.output_tokens),
            reasoning: pick(|u| u.reasoning_tokens),
        },
        cost_median_usd: costs.and_then(|c| median_lower(&c)),
    })
}

/// Aggregates the records of one model (either or both stages).
pub fn aggregate(records: &[BenchRecord]) -> Result<MetricsReport, BenchError> {
    let first = records.first().ok_or(BenchError::Empty)?;
    if let Some(other) = records.iter().find(|r| r.model != first.model) {
        return Err(BenchError::MixedModels(first.model.clone(), other.model.clone()));
    }
    let mut sorted = records.to_vec();
    sorted.sort_by(|a, b| (a.stage, &a.question_id).cmp(&(b.stage, &b.question_id)));
    let ret: Vec<&BenchRecord> = sorted.iter().filter(|r| r.stage == Stage::Retrieval).collect();
    let ana: Vec<&BenchRecord> = sorted.iter().filter(|r| r.stage == Stage::Analysis && !r.negative).collect();
    let scores: Vec<RetrievalScore> =
        ret.iter().map(|r| r.retrieval.clone().unwrap_or_else(RetrievalScore::failed)).collect();
    let correct = |r: &&&BenchRecord| r.analysis.as_ref().is_some_and(|a| a.correct);
    let mut hashes: Vec<&str> = sorted.iter().map(|r| r.config_hash.as_str()).collect();
    hashes.sort();
    hashes.dedup();
    Ok(MetricsReport {
        schema_version: REPORT_SCHEMA_VERSION,
        model_id: first.model.clone(),
        config_hash: hashes.join(","),
        negative_convention: NEGATIVE_CONVENTION.into(),
        recall_mean: mean(scores.iter().map(|s| s.recall)),
        precision_mean: mean(scores.iter().map(|s| s.precision)),
        answerability_accuracy: mean(scores.iter().map(|s| if s.answerability_correct { 1.0 } else { 0.0 })),
        correctness_rate: if ana.is_empty() {
            None
        } else {
            Some(ana.iter().filter(correct).count() as f64 / ana.len() as f64)
        },
        correctness_denominator: ana.len(),
        retrieval: stage_aggregate(&ret),
        analysis: stage_aggregate(&sorted.iter().filter(|r| r.stage == Stage::Analysis).collect::<Vec<_>>()),
        records: sorted,
    })
}

/// One report per model, ordered by model id.
pub fn aggregate_by_model(records: &[BenchRecord]) -> Result<Vec<MetricsReport>, BenchError> {
    let mut groups: BTreeMap<&str, Vec<BenchRecord>> = BTreeMap::new();
    for r in records {
        groups.entry(r.model.as_str()).or_default().push(r.clone());
    }
    if groups.is_empty() {
        return Err(BenchError::Empty);
    }
    groups.values().map(|g| aggregate(g)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn definitional_scores() {
        let (r, p) = retrieval_scores(&ids(&["A", "B", "C"]), &ids(&["A", "B", "D"]));
        assert!((r - 2.0 / 3.0).abs() < 1e-12 && (p - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(retrieval_scores(&[], &[]), (1.0, 1.0));
        assert_eq!(retrieval_scores(&[], &ids(&["A"])), (0.0, 0.0));
        assert_eq!(retrieval_scores(&ids(&["A"]), &[]), (0.0, 0.0));
        let s = RetrievalScore::score(&ids(&["A"]), vec![], vec![], vec![]);
        assert!(!s.answerability_correct);
        let s = RetrievalScore::score(&[], vec![], vec![], vec![]);
        assert!(s.answerability_correct);
    }

    #[test]
    fn lower_median() {
        assert_eq!(median_lower(&[1, 2, 100]), Some(2));
        assert_eq!(median_lower(&[4, 1, 3, 2]), Some(2));
        assert_eq!(median_lower::<u64>(&[]), None);
    }
}
