//! Models, task presets and scenarios shipped with the crate.
//!
//! Scenario files refer to these by bare name (`model = "biped"`); anything
//! else is read from disk relative to the referring file.

use crate::costs::CostSpec;
use crate::dynamics::ModelSpec;
use crate::error::{Error, Result};

pub const MODELS: &[(&str, &str)] = &[
    ("pendulum", include_str!("../data/models/pendulum.toml")),
    ("arm", include_str!("../data/models/arm.toml")),
    ("biped", include_str!("../data/models/biped.toml")),
];

pub const PRESETS: &[(&str, &str)] = &[
    ("stand", include_str!("../data/presets/stand.toml")),
    ("walk", include_str!("../data/presets/walk.toml")),
    ("rough", include_str!("../data/presets/rough.toml")),
    ("slope", include_str!("../data/presets/slope.toml")),
    ("clearance", include_str!("../data/presets/clearance.toml")),
    ("lean-recovery", include_str!("../data/presets/lean-recovery.toml")),
    ("reach", include_str!("../data/presets/reach.toml")),
    ("hold", include_str!("../data/presets/hold.toml")),
    ("walker-speed-true", include_str!("../data/presets/walker-speed-true.toml")),
];

pub const SCENARIOS: &[(&str, &str)] = &[
    ("stand", include_str!("../data/scenarios/stand.toml")),
    ("walk", include_str!("../data/scenarios/walk.toml")),
    ("lean-recovery", include_str!("../data/scenarios/lean-recovery.toml")),
    ("failure", include_str!("../data/scenarios/failure.toml")),
    ("walk-failure", include_str!("../data/scenarios/walk-failure.toml")),
    ("walker-speed", include_str!("../data/scenarios/walker-speed.toml")),
    ("rough", include_str!("../data/scenarios/rough.toml")),
    ("slope", include_str!("../data/scenarios/slope.toml")),
    ("clearance", include_str!("../data/scenarios/clearance.toml")),
    ("reach", include_str!("../data/scenarios/reach.toml")),
    ("hold", include_str!("../data/scenarios/hold.toml")),
];

fn find(table: &[(&str, &'static str)], name: &str) -> Option<&'static str> {
    table.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}

pub fn model_text(name: &str) -> Option<&'static str> {
    find(MODELS, name)
}

pub fn preset_text(name: &str) -> Option<&'static str> {
    find(PRESETS, name)
}

pub fn scenario_text(name: &str) -> Option<&'static str> {
    find(SCENARIOS, name)
}

pub fn model(name: &str) -> Result<ModelSpec> {
    let text = model_text(name).ok_or_else(|| Error::validation(format!("no bundled model named `{name}`")))?;
    ModelSpec::from_toml_named(name, text)
}

pub fn preset(name: &str) -> Result<CostSpec> {
    let text = preset_text(name).ok_or_else(|| Error::validation(format!("no bundled task preset named `{name}`")))?;
    CostSpec::from_toml_named(name, text)
}
