//! Active expert registry with a hard capacity and least-recently-used
//! eviction, plus composition of the concierge's dynamic manifest.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::clock::LogicalTime;
use crate::cold_storage::ToolsetRecord;

pub const DEFAULT_CAPACITY: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExpertStatus {
    Idle,
    Busy,
}

impl fmt::Display for ExpertStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ExpertStatus::Idle => "idle",
            ExpertStatus::Busy => "busy",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExpertInstance {
    pub name: String,
    pub description: String,
    pub toolset: ToolsetRecord,
    pub system_prompt: String,
    pub routing_tags: Vec<String>,
    pub last_interaction: LogicalTime,
    pub created_at: LogicalTime,
    pub status: ExpertStatus,
}

impl ExpertInstance {
    /// Builds an idle expert from a dormant toolset.
    pub fn from_toolset(record: &ToolsetRecord, now: LogicalTime) -> Self {
        let name = expert_name_for(&record.name);
        let system_prompt = render_prompt(&record.prompt_template, &name, record);
        Self {
            description: record.description.clone(),
            routing_tags: record.capability_tags.clone(),
            toolset: record.clone(),
            system_prompt,
            last_interaction: now,
            created_at: now,
            status: ExpertStatus::Idle,
            name,
        }
    }

    /// Case-insensitive membership of `label` in the routing tags.
    pub fn handles(&self, label: &str) -> bool {
        !label.is_empty() && self.routing_tags.iter().any(|t| t.eq_ignore_ascii_case(label))
    }

    pub fn manifest_line(&self) -> String {
        alloc::format!(
            "- {}: {} (handles: {})",
            self.name,
            self.description,
            self.routing_tags.join(", ")
        )
    }
}

/// `Cricket_MCP` -> `CricketExpert`, `stock_prices_mcp` -> `StockPricesExpert`.
pub fn expert_name_for(toolset_name: &str) -> String {
    let lower = toolset_name.to_ascii_lowercase();
    let stem = if lower.ends_with("_mcp") {
        &toolset_name[..toolset_name.len() - 4]
    } else {
        toolset_name
    };
    let mut name = String::new();
    for part in stem.split(|c: char| !c.is_alphanumeric()).filter(|p| !p.is_empty()) {
        let mut chars = part.chars();
        if let Some(first) = chars.next() {
            name.extend(first.to_uppercase());
            name.push_str(chars.as_str());
        }
    }
    name.push_str("Expert");
    name
}

/// Fills `{expert_name}`, `{description}` and `{tools}` in a toolset's prompt
/// template.
pub fn render_prompt(template: &str, expert_name: &str, record: &ToolsetRecord) -> String {
    let tools: Vec<&str> = record.tool_names().collect();
    template
        .replace("{expert_name}", expert_name)
        .replace("{description}", &record.description)
        .replace("{tools}", &tools.join(", "))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestSection {
    pub name: String,
    pub description: String,
    pub routing_tags: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestDocument {
    pub base_instruction: String,
    pub expert_sections: Vec<ManifestSection>,
    pub rendered: String,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RegistryError {
    #[error("capacity must be at least 1")]
    ZeroCapacity,
    #[error("expert `{0}` is already active")]
    Duplicate(String),
    #[error("registry full and every expert is busy; hydration deferred")]
    Deferred,
    #[error("no idle expert to evict")]
    NoCandidate,
    #[error("unknown expert `{0}`")]
    Unknown(String),
    #[error("expert `{0}` is busy")]
    Busy(String),
    #[error("clock regression for `{name}`: {attempted} < {current}")]
    ClockRegression {
        name: String,
        attempted: LogicalTime,
        current: LogicalTime,
    },
}

impl RegistryError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, RegistryError::Deferred)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hydration {
    pub expert: ExpertInstance,
    pub evicted: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ExpertSnapshot {
    pub name: String,
    pub last_interaction: LogicalTime,
    pub created_at: LogicalTime,
    pub status: ExpertStatus,
    pub toolset: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RegistrySnapshot {
    pub capacity: usize,
    pub experts: Vec<ExpertSnapshot>,
    pub manifest: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExpertRegistry {
    capacity: usize,
    // Insertion order is manifest order.
    experts: Vec<ExpertInstance>,
}

impl Default for ExpertRegistry {
    fn default() -> Self {
        Self {
            capacity: DEFAULT_CAPACITY,
            experts: Vec::new(),
        }
    }
}

impl ExpertRegistry {
    pub fn new(capacity: usize) -> Result<Self, RegistryError> {
        if capacity == 0 {
            return Err(RegistryError::ZeroCapacity);
        }
        Ok(Self {
            capacity,
            experts: Vec::new(),
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.experts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.experts.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.experts.len() >= self.capacity
    }

    pub fn experts(&self) -> &[ExpertInstance] {
        &self.experts
    }

    pub fn get(&self, name: &str) -> Option<&ExpertInstance> {
        self.experts.iter().find(|e| e.name == name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.get(name).is_some()
    }

    /// First active expert (in manifest order) whose routing tags contain the
    /// topic or the action.
    pub fn route_for(&self, action: &str, topic: &str) -> Option<&ExpertInstance> {
        self.experts
            .iter()
            .find(|e| e.handles(action) || e.handles(topic))
    }

    pub fn hydrate(
        &mut self,
        record: &ToolsetRecord,
        now: LogicalTime,
    ) -> Result<Hydration, RegistryError> {
        let expert = ExpertInstance::from_toolset(record, now);
        if self.contains(&expert.name) {
            return Err(RegistryError::Duplicate(expert.name));
        }
        let evicted = if self.is_full() {
            match self.evict_lru(now) {
                Ok(name) => Some(name),
                Err(RegistryError::NoCandidate) => return Err(RegistryError::Deferred),
                Err(e) => return Err(e),
            }
        } else {
            None
        };
        self.experts.push(expert.clone());
        Ok(Hydration { expert, evicted })
    }

    /// Removes the idle expert with the oldest last interaction. Ties go to
    /// the older `created_at`, then the smaller name. Busy experts are never
    /// candidates.
    pub fn evict_lru(&mut self, _now: LogicalTime) -> Result<String, RegistryError> {
        let victim = self
            .experts
            .iter()
            .enumerate()
            .filter(|(_, e)| e.status == ExpertStatus::Idle)
            .min_by(|(_, a), (_, b)| {
                (a.last_interaction, a.created_at, &a.name).cmp(&(
                    b.last_interaction,
                    b.created_at,
                    &b.name,
                ))
            })
            .map(|(i, _)| i)
            .ok_or(RegistryError::NoCandidate)?;
        Ok(self.experts.remove(victim).name)
    }

    /// Removes a specific expert regardless of recency. Busy experts stay.
    pub fn remove(&mut self, name: &str) -> Result<ExpertInstance, RegistryError> {
        let i = self.index_of(name)?;
        if self.experts[i].status == ExpertStatus::Busy {
            return Err(RegistryError::Busy(name.into()));
        }
        Ok(self.experts.remove(i))
    }

    pub fn touch(&mut self, name: &str, now: LogicalTime) -> Result<LogicalTime, RegistryError> {
        let i = self.index_of(name)?;
        let expert = &mut self.experts[i];
        if now < expert.last_interaction {
            return Err(RegistryError::ClockRegression {
                name: name.into(),
                attempted: now,
                current: expert.last_interaction,
            });
        }
        expert.last_interaction = now;
        Ok(now)
    }

    pub fn mark_busy(&mut self, name: &str) -> Result<(), RegistryError> {
        let i = self.index_of(name)?;
        if self.experts[i].status == ExpertStatus::Busy {
            return Err(RegistryError::Busy(name.into()));
        }
        self.experts[i].status = ExpertStatus::Busy;
        Ok(())
    }

    pub fn mark_idle(&mut self, name: &str) -> Result<(), RegistryError> {
        let i = self.index_of(name)?;
        self.experts[i].status = ExpertStatus::Idle;
        Ok(())
    }

    fn index_of(&self, name: &str) -> Result<usize, RegistryError> {
        self.experts
            .iter()
            .position(|e| e.name == name)
            .ok_or_else(|| RegistryError::Unknown(name.into()))
    }

    pub fn render_manifest(&self, base_instruction: &str) -> ManifestDocument {
        let mut rendered = String::from(base_instruction);
        for expert in &self.experts {
            rendered.push('\n');
            rendered.push_str(&expert.manifest_line());
        }
        ManifestDocument {
            base_instruction: base_instruction.into(),
            expert_sections: self
                .experts
                .iter()
                .map(|e| ManifestSection {
                    name: e.name.clone(),
                    description: e.description.clone(),
                    routing_tags: e.routing_tags.clone(),
                })
                .collect(),
            rendered,
        }
    }

    pub fn snapshot(&self, base_instruction: &str) -> RegistrySnapshot {
        RegistrySnapshot {
            capacity: self.capacity,
            experts: self
                .experts
                .iter()
                .map(|e| ExpertSnapshot {
                    name: e.name.clone(),
                    last_interaction: e.last_interaction,
                    created_at: e.created_at,
                    status: e.status,
                    toolset: e.toolset.name.to_string(),
                })
                .collect(),
            manifest: self.render_manifest(base_instruction).rendered,
        }
    }
}
