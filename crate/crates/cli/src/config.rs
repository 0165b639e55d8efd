use std::path::Path;

use cavity_cs::experiments::ExperimentConfig;
use serde_json::Value;

use crate::CliError;

/// Reads a JSON experiment config, fills defaults and validates it.
///
/// `"protocol"` may be a bare name (`"square"`, `"random"`) or an object with
/// a `"type"` tag; relative tabulated-drive paths resolve against the config
/// file's directory.
pub fn parse_config(path: &Path) -> Result<ExperimentConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut cfg = parse_config_str(&text)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    if let Some(dir) = path.parent() {
        cfg.protocol.resolve_paths(dir);
    }
    Ok(cfg)
}

pub fn parse_config_str(text: &str) -> Result<ExperimentConfig, String> {
    let mut value: Value =
        serde_json::from_str(text).map_err(|e| format!("malformed JSON: {e}"))?;
    let Some(obj) = value.as_object_mut() else {
        return Err("top level must be a JSON object".into());
    };
    if let Some(Value::String(name)) = obj.get("protocol") {
        let tagged = serde_json::json!({ "type": name });
        obj.insert("protocol".into(), tagged);
    }
    let cfg: ExperimentConfig = serde_path_to_error::deserialize(value).map_err(|e| {
        let at = e.path().to_string();
        if at == "." {
            e.inner().to_string()
        } else {
            format!("{at}: {}", e.inner())
        }
    })?;
    cfg.validate().map_err(validation_message)?;
    Ok(cfg)
}

pub(crate) fn validation_message(e: cavity_cs::Error) -> String {
    match e {
        cavity_cs::Error::Config(msg) => msg,
        other => other.to_string(),
    }
}
