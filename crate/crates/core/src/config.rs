//! Engine configuration shared by the command-line front end.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::projection::RelationConfig;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    #[default]
    Json,
    Text,
}

impl std::str::FromStr for OutputFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "json" => Ok(OutputFormat::Json),
            "text" => Ok(OutputFormat::Text),
            other => Err(format!("unknown output format {other:?} (expected json or text)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineConfig {
    pub relation: RelationConfig,
    /// Reject unknown words in queries instead of skipping them.
    pub grammar_strict: bool,
    pub output_format: OutputFormat,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self { relation: RelationConfig::default(), grammar_strict: true, output_format: OutputFormat::Json }
    }
}

impl EngineConfig {
    pub fn from_json(text: &str) -> Result<Self, String> {
        let cfg: EngineConfig = serde_json::from_str(text).map_err(|e| e.to_string())?;
        cfg.relation.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        Self::from_json(&text).map_err(|e| format!("{}: {e}", path.display()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_documents_fill_defaults() {
        let cfg = EngineConfig::from_json(r#"{"relation":{"close_max_m":1.0},"output_format":"text"}"#).unwrap();
        assert_eq!(cfg.relation.close_max_m, 1.0);
        assert_eq!(cfg.relation.medium_max_m, 5.0);
        assert_eq!(cfg.output_format, OutputFormat::Text);
        assert!(cfg.grammar_strict);
        assert!(EngineConfig::from_json(r#"{"relation":{"close_max_m":9.0}}"#).is_err());
        assert!(EngineConfig::from_json(r#"{"colour":1}"#).is_err());
    }
}
