//! TOML config files for training, synthetic data and the task battery.
//! Unknown keys are rejected.

use std::path::Path;

use serde::de::DeserializeOwned;

use crate::battery::BatteryConfig;
use crate::data::SynthSpec;
use crate::error::{MpaError, Result};
use crate::pipeline::HyperParams;

fn parse<T: DeserializeOwned>(text: &str) -> Result<T> {
    toml::from_str(text).map_err(|e| MpaError::Config(e.message().to_string()))
}

fn read(path: &Path) -> Result<String> {
    Ok(std::fs::read_to_string(path)?)
}

/// Validation failures from the data layer surface as config errors here.
fn as_config(e: MpaError) -> MpaError {
    match e {
        MpaError::Parameter(msg) => MpaError::Config(msg),
        other => other,
    }
}

pub fn parse_hyper(text: &str) -> Result<HyperParams> {
    let h: HyperParams = parse(text)?;
    h.validate()?;
    Ok(h)
}

pub fn load_hyper(path: impl AsRef<Path>) -> Result<HyperParams> {
    parse_hyper(&read(path.as_ref())?)
}

pub fn parse_synth(text: &str) -> Result<SynthSpec> {
    let s: SynthSpec = parse(text)?;
    s.validate().map_err(as_config)?;
    Ok(s)
}

pub fn load_synth(path: impl AsRef<Path>) -> Result<SynthSpec> {
    parse_synth(&read(path.as_ref())?)
}

pub fn parse_battery(text: &str) -> Result<BatteryConfig> {
    let b: BatteryConfig = parse(text)?;
    b.validate().map_err(as_config)?;
    Ok(b)
}

pub fn load_battery(path: impl AsRef<Path>) -> Result<BatteryConfig> {
    parse_battery(&read(path.as_ref())?)
}

/// Serializes any config back to TOML.
pub fn to_toml<T: serde::Serialize>(value: &T) -> Result<String> {
    toml::to_string(value).map_err(|e| MpaError::Config(e.to_string()))
}
