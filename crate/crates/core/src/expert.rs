//! Expert execution under isolation.
//!
//! A dispatch packages everything an expert needs into an owned
//! [`ExpertJob`]; the job never borrows router state, so an executor may run
//! it on another thread (or inline) without the router being re-entered.
//! Tools that consult a nested agent submit a child job to the same executor.

use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;

use crate::cold_storage::ToolSchema;
use crate::event_log::EventRecord;
use crate::provider::{AgentRole, Provider, ProviderRequest, ProviderResponse};
use crate::tools::{FixtureOutcome, ToolFixtures};

pub const MAX_NESTING: u8 = 4;

/// Simulated costs and budget for one dispatch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DispatchBudget {
    pub deadline_ms: u64,
    pub provider_call_ms: u64,
    pub api_call_ms: u64,
}

#[derive(Clone)]
pub struct ExpertJob {
    pub agent: String,
    pub system_prompt: String,
    pub context: Vec<EventRecord>,
    pub user_text: String,
    pub tools: Vec<ToolSchema>,
    pub provider: Arc<dyn Provider>,
    pub fixtures: Arc<ToolFixtures>,
    pub budget: DispatchBudget,
    pub depth: u8,
}

impl core::fmt::Debug for ExpertJob {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("ExpertJob")
            .field("agent", &self.agent)
            .field("user_text", &self.user_text)
            .field("depth", &self.depth)
            .finish_non_exhaustive()
    }
}

/// Something an expert did, in execution order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum OutcomeStep {
    Tool {
        tool_name: String,
        arguments: serde_json::Value,
        result: String,
        failed: bool,
    },
    Reply {
        agent: String,
        text: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExpertOutcome {
    /// Every step including nested agents; the final step is this agent's
    /// reply.
    pub steps: Vec<OutcomeStep>,
    pub response: ProviderResponse,
    pub simulated_ms: u64,
}

impl ExpertOutcome {
    pub fn reply_text(&self) -> &str {
        match self.steps.last() {
            Some(OutcomeStep::Reply { text, .. }) => text,
            _ => &self.response.text,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DispatchError {
    #[error("expert exceeded its deadline ({elapsed_ms} ms > {deadline_ms} ms)")]
    DeadlineExceeded { elapsed_ms: u64, deadline_ms: u64 },
    #[error("nested agent depth {0} exceeds the limit")]
    TooDeep(u8),
    #[error("expert execution failed: {0}")]
    Crashed(String),
}

/// Runs expert jobs in an execution context isolated from the router.
pub trait ExpertExecutor: Send + Sync {
    fn execute(&self, job: ExpertJob) -> Result<ExpertOutcome, DispatchError>;
}

/// Runs jobs on the caller's stack. Used by deterministic runs.
#[derive(Debug, Default, Clone, Copy)]
pub struct InlineExecutor;

impl ExpertExecutor for InlineExecutor {
    fn execute(&self, job: ExpertJob) -> Result<ExpertOutcome, DispatchError> {
        run_expert_job(job, self)
    }
}

/// Body of a dispatch: one provider completion, then each tool invocation
/// against the fixture corpus. Nested agents go through `executor`.
pub fn run_expert_job(
    job: ExpertJob,
    executor: &dyn ExpertExecutor,
) -> Result<ExpertOutcome, DispatchError> {
    if job.depth > MAX_NESTING {
        return Err(DispatchError::TooDeep(job.depth));
    }
    let request = ProviderRequest {
        agent: AgentRole::Expert(job.agent.clone()),
        system_prompt: job.system_prompt.clone(),
        context: job.context.clone(),
        latest_user_text: job.user_text.clone(),
        available_tools: job.tools.clone(),
    };
    let response = job.provider.complete(&request);
    let mut elapsed = job.budget.provider_call_ms;
    let mut steps = Vec::new();
    let mut failure: Option<String> = None;

    for inv in &response.tool_invocations {
        elapsed += job.budget.api_call_ms;
        let (result, failed) = match job.fixtures.lookup(&inv.tool_name, &inv.arguments) {
            Some(FixtureOutcome::Result(r)) => (String::from(r), false),
            Some(FixtureOutcome::Error(e)) => (format!("Error: {e}"), true),
            Some(FixtureOutcome::Delegate(d)) => {
                let child = ExpertJob {
                    agent: d.agent.clone(),
                    system_prompt: d.system_prompt.clone(),
                    context: job.context.clone(),
                    user_text: d.text.clone(),
                    tools: job.tools.clone(),
                    provider: job.provider.clone(),
                    fixtures: job.fixtures.clone(),
                    budget: DispatchBudget {
                        deadline_ms: job.budget.deadline_ms.saturating_sub(elapsed),
                        ..job.budget
                    },
                    depth: job.depth + 1,
                };
                let nested = executor.execute(child)?;
                elapsed += nested.simulated_ms;
                let text = String::from(nested.reply_text());
                steps.extend(nested.steps);
                (text, false)
            }
            None => (format!("Error: no fixture for `{}`", inv.tool_name), true),
        };
        if failed && failure.is_none() {
            failure = Some(format!("The {} call failed: {}", inv.tool_name, result));
        }
        steps.push(OutcomeStep::Tool {
            tool_name: inv.tool_name.clone(),
            arguments: inv.arguments.clone(),
            result,
            failed,
        });
    }

    if elapsed > job.budget.deadline_ms {
        return Err(DispatchError::DeadlineExceeded {
            elapsed_ms: elapsed,
            deadline_ms: job.budget.deadline_ms,
        });
    }
    let text = match failure {
        Some(f) => f,
        None if response.text.is_empty() => steps
            .iter()
            .rev()
            .find_map(|s| match s {
                OutcomeStep::Tool { result, .. } => Some(result.clone()),
                OutcomeStep::Reply { .. } => None,
            })
            .unwrap_or_default(),
        None => response.text.clone(),
    };
    steps.push(OutcomeStep::Reply {
        agent: job.agent.clone(),
        text,
    });
    Ok(ExpertOutcome {
        steps,
        response,
        simulated_ms: elapsed,
    })
}
