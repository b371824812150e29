//! Report rendering: versioned JSON, a markdown comparison table and a
//! plot spec for a grouped bar chart of the rate metrics.

use serde::{Deserialize, Serialize};
use serde_json::{json, Value as Json};

use super::metrics::{MetricsReport, StageAggregate, NEGATIVE_CONVENTION, REPORT_SCHEMA_VERSION};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Markdown,
    PlotSpec,
}

impl std::str::FromStr for ReportFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<ReportFormat, String> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "md" | "markdown" => Ok(ReportFormat::Markdown),
            "plot" | "plot_spec" => Ok(ReportFormat::PlotSpec),
            _ => Err(format!("unknown report format {s:?} (expected json, md or plot_spec)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportDocument {
    pub schema_version: u32,
    pub negative_convention: String,
    pub models: Vec<MetricsReport>,
}

pub fn document(reports: &[MetricsReport]) -> ReportDocument {
    ReportDocument {
        schema_version: REPORT_SCHEMA_VERSION,
        negative_convention: NEGATIVE_CONVENTION.into(),
        models: reports.to_vec(),
    }
}

pub fn parse_json(text: &str) -> Result<ReportDocument, String> {
    let doc: ReportDocument = serde_json::from_str(text).map_err(|e| e.to_string())?;
    if doc.schema_version != REPORT_SCHEMA_VERSION {
        return Err(format!("unsupported report schema version {}", doc.schema_version));
    }
    Ok(doc)
}

fn pct(v: Option<f64>) -> String {
    v.map(|x| format!("{:.1}%", x * 100.0)).unwrap_or_else(|| "n/a".into())
}

fn secs(s: &Option<StageAggregate>) -> String {
    s.as_ref().map(|a| format!("{:.2}", a.latency_median_ms / 1000.0)).unwrap_or_else(|| "n/a".into())
}

fn toks(s: &Option<StageAggregate>) -> String {
    s.as_ref()
        .map(|a| format!("{}/{}/{}", a.tokens_median.input, a.tokens_median.output, a.tokens_median.reasoning))
        .unwrap_or_else(|| "n/a".into())
}

fn usd(s: &Option<StageAggregate>) -> String {
    match s {
        Some(StageAggregate { cost_median_usd: Some(c), .. }) => format!("{c:.4}"),
        _ => "n/a".into(),
    }
}

pub fn markdown(reports: &[MetricsReport]) -> String {
    let mut out = String::from("# Benchmark report\n\n");
    out.push_str(&format!("> {NEGATIVE_CONVENTION}\n\n"));
    out.push_str("Latency, tokens (input/output/reasoning) and cost are per-question medians (lower middle for even counts).\n\n");
    out.push_str(
        "| Model | Recall | Precision | Answerability | Correctness | Latency s (ret / ana) | Tokens ret | Tokens ana | Cost USD (ret / ana) |\n",
    );
    out.push_str("|---|---|---|---|---|---|---|---|---|\n");
    for r in reports {
        out.push_str(&format!(
            "| {} | {} | {} | {} | {} | {} / {} | {} | {} | {} / {} |\n",
            r.model_id,
            pct(r.recall_mean),
            pct(r.precision_mean),
            pct(r.answerability_accuracy),
            pct(r.correctness_rate),
            secs(&r.retrieval),
            secs(&r.analysis),
            toks(&r.retrieval),
            toks(&r.analysis),
            usd(&r.retrieval),
            usd(&r.analysis),
        ));
    }
    out
}

/// Grouped bar chart: one bar per model and rate metric.
pub fn plot_spec(reports: &[MetricsReport]) -> Json {
    let mut data = Vec::new();
    for r in reports {
        for (name, v) in [
            ("recall", r.recall_mean),
            ("precision", r.precision_mean),
            ("answerability", r.answerability_accuracy),
            ("correctness", r.correctness_rate),
        ] {
            if let Some(v) = v {
                data.push(json!({"metric": name, "value": v, "model": r.model_id}));
            }
        }
    }
    json!({
        "mark": "bar",
        "title": "Benchmark metrics per model",
        "x": {"field": "metric"},
        "y": {"field": "value", "title": "rate"},
        "series": {"field": "model"},
        "data": data,
    })
}

pub fn render(reports: &[MetricsReport], format: ReportFormat) -> String {
    match format {
        ReportFormat::Json => serde_json::to_string_pretty(&document(reports)).expect("report serializes") + "\n",
        ReportFormat::Markdown => markdown(reports),
        ReportFormat::PlotSpec => serde_json::to_string_pretty(&plot_spec(reports)).expect("plot serializes") + "\n",
    }
}
