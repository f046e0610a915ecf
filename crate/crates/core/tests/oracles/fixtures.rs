use std::sync::Arc;

use dmoe_core::provider::ScriptRule;
use dmoe_core::tools::{ToolFixture, ToolFixtures};
use dmoe_core::{ColdStorage, Kernel, KernelConfig, ScriptedProvider, ToolsetRecord};

pub fn bundled_cold() -> ColdStorage {
    let files = [
        include_str!("../../../../fixtures/registry/Cricket_MCP.mcp.json"),
        include_str!("../../../../fixtures/registry/Email_MCP.mcp.json"),
        include_str!("../../../../fixtures/registry/Weather_MCP.mcp.json"),
    ];
    ColdStorage::from_records(files.iter().map(|f| serde_json::from_str::<ToolsetRecord>(f).unwrap())).unwrap()
}

pub fn bundled_rules() -> (ScriptedProvider, ToolFixtures) {
    let v: serde_json::Value = serde_json::from_str(include_str!("../../../../fixtures/rules.json")).unwrap();
    let rules: Vec<ScriptRule> = serde_json::from_value(v["rules"].clone()).unwrap();
    let tools: Vec<ToolFixture> = serde_json::from_value(v["tool_results"].clone()).unwrap();
    (ScriptedProvider::new(rules).unwrap(), ToolFixtures::new(tools).unwrap())
}

pub fn bundled_kernel(config: KernelConfig) -> Kernel {
    let (provider, tools) = bundled_rules();
    Kernel::new(config, bundled_cold(), Arc::new(provider), tools).unwrap()
}

pub fn provider(rules: serde_json::Value) -> ScriptedProvider {
    ScriptedProvider::new(serde_json::from_value(rules).unwrap()).unwrap()
}

pub fn fixtures(entries: serde_json::Value) -> ToolFixtures {
    ToolFixtures::new(serde_json::from_value(entries).unwrap()).unwrap()
}
