#![allow(dead_code)]

use std::path::PathBuf;

use mfcache::scenario::{load_scenario, Scenario};

/// Small static-popularity scenario that solves in well under a second.
pub const SMALL: &str = r#"
schema_version = 1
id = "small"
horizon_hours = 6.0

[[files]]
id = 1
size_bits = 1.0

[[files]]
id = 2
size_bits = 1.0

[popularity]
kind = "static-zipf"
zipf_beta = 1.0

[storage]
capacity = 0.4
sigma_s = 0.1
removal_beta = 0.3

[backhaul]
budget = 1.0

[grid]
num_s_points = 41
num_time_steps = 1200

[sim]
num_agents = 50
request_rate = 2.0
time_stride = 4
"#;

pub fn small(overrides: &[&str]) -> Scenario {
    let o: Vec<String> = overrides.iter().map(|s| s.to_string()).collect();
    Scenario::from_toml_str(SMALL, &o).expect("valid test scenario")
}

pub fn scenario_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(name)
}

pub fn shipped(name: &str) -> Scenario {
    load_scenario(scenario_path(name)).expect("shipped scenario loads")
}
