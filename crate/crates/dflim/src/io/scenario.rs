//! `dflim-scn-v1` scenario documents.

use std::fs;
use std::path::Path;

use dflim_core::simulate::ScenarioConfig;
use serde::{Deserialize, Serialize};

use crate::error::{AppResult, IoContext, ParseError};

pub const SCN_SCHEMA: &str = "dflim-scn-v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioDoc {
    schema: String,
    scenario: ScenarioConfig,
}

pub fn scenario_to_json(cfg: &ScenarioConfig) -> String {
    let doc = ScenarioDoc { schema: SCN_SCHEMA.into(), scenario: cfg.clone() };
    serde_json::to_string_pretty(&doc).expect("scenario serialises")
}

pub fn scenario_from_json(text: &str, path: &Path) -> AppResult<ScenarioConfig> {
    let doc: ScenarioDoc =
        serde_json::from_str(text).map_err(|e| ParseError::at_row(path, e.line() as u64, e.to_string()))?;
    if doc.schema != SCN_SCHEMA {
        return Err(ParseError::whole(path, format!("schema `{}`, expected `{SCN_SCHEMA}`", doc.schema)).into());
    }
    doc.scenario.validate().map_err(|e| ParseError::whole(path, e.to_string()))?;
    Ok(doc.scenario)
}

pub fn load_scenario(path: &Path) -> AppResult<ScenarioConfig> {
    let text = fs::read_to_string(path).at(path)?;
    scenario_from_json(&text, path)
}

pub fn save_scenario(cfg: &ScenarioConfig, path: &Path) -> AppResult<()> {
    fs::write(path, scenario_to_json(cfg)).at(path)
}
