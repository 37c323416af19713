use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PricingError {
    #[error("no price configured for model `{0}`")]
    UnknownModel(String),
    #[error("malformed price table: {0}")]
    Parse(String),
}

/// Dollars per million tokens.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Price {
    pub input: f64,
    pub output: f64,
}

/// Per-model token prices.
///
/// Text form, one table per model:
///
/// ```text
/// [models."gpt-4o-2024-08-06"]
/// input = 2.5
/// output = 10.0
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceTable {
    pub models: BTreeMap<String, Price>,
}

impl PriceTable {
    pub fn builtin() -> Self {
        let models = [
            ("gpt-4o-2024-08-06", 2.50, 10.00),
            ("gpt-4o-mini", 0.15, 0.60),
            ("claude-3-5-sonnet-20240620", 3.00, 15.00),
        ]
        .into_iter()
        .map(|(m, input, output)| (m.to_string(), Price { input, output }))
        .collect();
        PriceTable { models }
    }

    pub fn from_text(text: &str) -> Result<Self, PricingError> {
        toml::from_str(text).map_err(|e| PricingError::Parse(e.message().to_string()))
    }

    pub fn to_text(&self) -> String {
        toml::to_string(self).expect("price table serializes")
    }

    pub fn dollars(&self, model: &str, prompt_tokens: u64, completion_tokens: u64) -> Result<f64, PricingError> {
        let p = self.models.get(model).ok_or_else(|| PricingError::UnknownModel(model.to_string()))?;
        Ok((prompt_tokens as f64 * p.input + completion_tokens as f64 * p.output) / 1e6)
    }
}
