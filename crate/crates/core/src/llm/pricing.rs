use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{LlmError, Usage};

/// The bundled per-model price list (USD per million tokens).
pub const BUNDLED_PRICING: &str = include_str!("../../assets/pricing.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelPricing {
    pub model_id: String,
    pub usd_per_m_input: f64,
    pub usd_per_m_output: f64,
    pub thinking: bool,
    #[serde(default)]
    pub developer: Option<String>,
    #[serde(default)]
    pub display_name: Option<String>,
    /// Parameter count as published; `None` where undisclosed.
    #[serde(default)]
    pub params: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PricingTable {
    pub models: Vec<ModelPricing>,
}

impl PricingTable {
    pub fn bundled() -> PricingTable {
        Self::parse(BUNDLED_PRICING).expect("bundled pricing table is valid")
    }

    pub fn parse(json: &str) -> Result<PricingTable, LlmError> {
        let table: PricingTable =
            serde_json::from_str(json).map_err(|e| LlmError::InvalidRequest(format!("pricing table: {e}")))?;
        for m in &table.models {
            if !(m.usd_per_m_input >= 0.0 && m.usd_per_m_output >= 0.0) {
                return Err(LlmError::InvalidRequest(format!("negative price for {}", m.model_id)));
            }
        }
        Ok(table)
    }

    pub fn load(path: &Path) -> Result<PricingTable, LlmError> {
        let s = std::fs::read_to_string(path)
            .map_err(|e| LlmError::InvalidRequest(format!("pricing table {}: {e}", path.display())))?;
        Self::parse(&s)
    }

    pub fn get(&self, model_id: &str) -> Result<&ModelPricing, LlmError> {
        self.models
            .iter()
            .find(|m| m.model_id == model_id)
            .ok_or_else(|| LlmError::UnknownModel(model_id.to_string()))
    }

    pub fn cost(&self, model_id: &str, usage: Usage) -> Result<f64, LlmError> {
        Ok(estimate_cost(usage, self.get(model_id)?))
    }
}

/// Reasoning tokens are billed at the output rate.
pub fn estimate_cost(usage: Usage, pricing: &ModelPricing) -> f64 {
    let input = usage.input_tokens as f64 * pricing.usd_per_m_input;
    let output = (usage.output_tokens + usage.reasoning_tokens) as f64 * pricing.usd_per_m_output;
    (input + output) / 1e6
}
