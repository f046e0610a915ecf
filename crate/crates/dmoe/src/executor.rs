//! Thread-backed expert execution.

use std::sync::mpsc;
use std::thread;
use std::time::Duration;

use dmoe_core::expert::{run_expert_job, DispatchError, ExpertExecutor, ExpertJob, ExpertOutcome};

/// Runs every job, nested ones included, on a fresh OS thread. The router
/// only waits on a channel, so nested agents never re-enter its state.
/// An optional wall-clock limit turns a hung expert into a dispatch error.
#[derive(Debug, Clone, Copy, Default)]
pub struct ThreadExecutor {
    pub wall_clock_limit: Option<Duration>,
}

impl ThreadExecutor {
    pub fn with_limit(limit: Duration) -> Self {
        Self {
            wall_clock_limit: Some(limit),
        }
    }
}

impl ExpertExecutor for ThreadExecutor {
    fn execute(&self, job: ExpertJob) -> Result<ExpertOutcome, DispatchError> {
        let (tx, rx) = mpsc::channel();
        let me = *self;
        let agent = job.agent.clone();
        thread::Builder::new()
            .name(format!("expert-{agent}"))
            .spawn(move || {
                let _ = tx.send(run_expert_job(job, &me));
            })
            .map_err(|e| DispatchError::Crashed(e.to_string()))?;
        let received = match self.wall_clock_limit {
            Some(limit) => rx.recv_timeout(limit).map_err(|e| match e {
                mpsc::RecvTimeoutError::Timeout => DispatchError::DeadlineExceeded {
                    elapsed_ms: limit.as_millis() as u64,
                    deadline_ms: limit.as_millis() as u64,
                },
                mpsc::RecvTimeoutError::Disconnected => {
                    DispatchError::Crashed(format!("{agent} panicked"))
                }
            }),
            None => rx
                .recv()
                .map_err(|_| DispatchError::Crashed(format!("{agent} panicked"))),
        };
        received?
    }
}
