//! Configured experiments and their outputs.

mod config;
mod output;
mod run;

pub use config::{
    load_config, parse_config, GaugeConfig, GridConfig, InitialConfig, OutputConfig, PotentialConfig, Profile,
    RotationConfig, SamplerConfig, ScenarioConfig, ScenarioKind,
};
pub use output::emit_outputs;
pub use run::*;
