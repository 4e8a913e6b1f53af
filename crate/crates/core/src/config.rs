//! TOML sensor configuration files.

use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::geometry::{build_flat_baseline_config, build_omnitact_config, SensorConfig};

/// Parses and validates a configuration document.
pub fn from_toml_str(text: &str) -> Result<SensorConfig> {
    let config: SensorConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    config.validate()?;
    Ok(config)
}

pub fn to_toml_string(config: &SensorConfig) -> Result<String> {
    toml::to_string(config).map_err(|e| Error::Config(e.to_string()))
}

pub fn load(path: &Path) -> Result<SensorConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    from_toml_str(&text).map_err(|e| match e {
        Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn save(config: &SensorConfig, path: &Path) -> Result<()> {
    std::fs::write(path, to_toml_string(config)?).map_err(|e| Error::io(path, e))
}

/// Named preset: `omnitact` or `flat`.
pub fn preset(name: &str) -> Result<SensorConfig> {
    match name {
        "omnitact" => Ok(build_omnitact_config()),
        "flat" => Ok(build_flat_baseline_config()),
        _ => Err(Error::Input(format!(
            "unknown preset {name:?} (expected omnitact or flat)"
        ))),
    }
}

/// SHA-256 of the canonical TOML serialisation, lowercase hex.
pub fn config_hash(config: &SensorConfig) -> Result<String> {
    Ok(hex(&Sha256::digest(to_toml_string(config)?.as_bytes())))
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
