#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::Arc;

use dmoe::loader::{self, KernelSources};
use dmoe::LiveKernel;
use dmoe_core::expert::InlineExecutor;
use dmoe_core::kernel::{Kernel, KernelConfig};
use dmoe_core::scenario::{run_scenario, ScenarioReport, ScenarioScript};

pub fn fixtures_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

pub fn scenario_path(name: &str) -> PathBuf {
    fixtures_dir().join("scenarios").join(format!("{name}.scenario.json"))
}

pub fn load(name: &str) -> (ScenarioScript, Kernel) {
    let path = scenario_path(name);
    let script = loader::load_scenario(&path).unwrap();
    let kernel = loader::scenario_sources(&script, &path).build().unwrap();
    (script, kernel)
}

pub fn replay(name: &str) -> (ScenarioReport, Kernel) {
    let (script, mut kernel) = load(name);
    let report = run_scenario(&script, &mut kernel, &InlineExecutor);
    (report, kernel)
}

pub fn sources() -> KernelSources {
    KernelSources {
        registry: fixtures_dir().join("registry"),
        rules: fixtures_dir().join("rules.json"),
        config: KernelConfig::default(),
        journal: None,
    }
}

pub fn live() -> LiveKernel {
    LiveKernel::new(sources().build().unwrap(), Arc::new(InlineExecutor))
}

pub const SPORTS: [&str; 4] = [
    "What is the score of the India vs Australia match?",
    "How many wickets has India lost?",
    "What is India's required run rate?",
    "Who won the toss?",
];
pub const TOP_SCORER: &str = "Who is the top scorer?";
pub const SEND_EMAIL: &str = "Send an email to the team regarding the meeting.";
pub const FOLLOW_UP: &str = "Did you send it?";
pub const FLIGHT: &str = "Book a flight to London for next Tuesday";
