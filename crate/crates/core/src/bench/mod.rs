//! Benchmark harness: suite expansion, per-question runs, judging and
//! aggregated metrics per model.

pub mod judge;
pub mod metrics;
pub mod report;
pub mod runner;
pub mod suite;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use judge::{judge_deterministic, Judge, JudgeOutcome};
pub use metrics::{
    aggregate, aggregate_by_model, median_lower, retrieval_scores, AnalysisScore, BenchRecord, MetricsReport, RetrievalScore,
    StageAggregate,
};
pub use report::{render, ReportDocument, ReportFormat};
pub use runner::{read_records, run_analysis, run_retrieval, write_records, RunManifest};
pub use suite::{expand, BenchQuestion, QuestionTemplate, Suite};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("template {template}: placeholder {{{name}}} has no binding")]
    UnboundPlaceholder { template: String, name: String },
    #[error("template {template}: {reason}")]
    InvalidTemplate { template: String, reason: String },
    #[error("{0}: {1}")]
    Io(PathBuf, std::io::Error),
    #[error("{0}: {1}")]
    Parse(PathBuf, String),
    #[error("no records to aggregate")]
    Empty,
    #[error("records mix models {0} and {1}")]
    MixedModels(String, String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Retrieval,
    Analysis,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Retrieval => "retrieval",
            Stage::Analysis => "analysis",
        }
    }
}

impl std::str::FromStr for Stage {
    type Err = String;
    fn from_str(s: &str) -> Result<Stage, String> {
        match s {
            "retrieval" => Ok(Stage::Retrieval),
            "analysis" => Ok(Stage::Analysis),
            _ => Err(format!("unknown stage {s:?} (expected retrieval or analysis)")),
        }
    }
}
