//! A kernel shared between turn handlers, a background listener and
//! observers.
//!
//! The kernel lock is released while an expert job runs, so other sessions
//! keep moving and a listener pass can land between a dispatch and its
//! completion. Every state change is published to subscribers in notice
//! order; a subscriber that falls behind resumes from the kernel's notice
//! log by sequence number.

use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex, MutexGuard};
use std::thread::{self, JoinHandle};
use std::time::Duration;

use dmoe_core::expert::ExpertExecutor;
use dmoe_core::kernel::{Kernel, KernelError, Notice, TurnStart};
use dmoe_core::listener::EvolutionAction;
use dmoe_core::TurnResult;
use tokio::sync::broadcast;

use crate::journal;

const CHANNEL_CAPACITY: usize = 1024;

struct Shared {
    kernel: Kernel,
    published: u64,
    gap_lines_written: usize,
}

#[derive(Clone)]
pub struct LiveKernel {
    shared: Arc<Mutex<Shared>>,
    executor: Arc<dyn ExpertExecutor>,
    sender: broadcast::Sender<Notice>,
    gap_log: Option<PathBuf>,
}

impl LiveKernel {
    pub fn new(kernel: Kernel, executor: Arc<dyn ExpertExecutor>) -> Self {
        let (sender, _) = broadcast::channel(CHANNEL_CAPACITY);
        let published = kernel.notices().last().map_or(0, |n| n.seq);
        let gap_lines_written = kernel.gaps().len();
        Self {
            shared: Arc::new(Mutex::new(Shared {
                kernel,
                published,
                gap_lines_written,
            })),
            executor,
            sender,
            gap_log: None,
        }
    }

    /// Also appends every new gap-report line to `path`.
    pub fn with_gap_log(mut self, path: PathBuf) -> Self {
        self.gap_log = Some(path);
        self
    }

    fn lock(&self) -> MutexGuard<'_, Shared> {
        self.shared.lock().unwrap_or_else(|e| e.into_inner())
    }

    fn publish(&self, shared: &mut Shared) {
        for n in shared.kernel.notices_since(shared.published) {
            // No subscribers is fine; late joiners replay from the log.
            let _ = self.sender.send(n.clone());
        }
        shared.published = shared.kernel.notices().last().map_or(0, |n| n.seq);
        if let Some(path) = &self.gap_log {
            let lines = shared.kernel.gaps().lines();
            if let Err(e) = journal::append_lines(path, &lines[shared.gap_lines_written..]) {
                eprintln!("gap log: {e}");
            } else {
                shared.gap_lines_written = lines.len();
            }
        }
    }

    /// Read-only access to the kernel under its lock.
    pub fn read<R>(&self, f: impl FnOnce(&Kernel) -> R) -> R {
        f(&self.lock().kernel)
    }

    pub fn create_session(&self) -> String {
        self.lock().kernel.create_session()
    }

    pub fn subscribe(&self) -> broadcast::Receiver<Notice> {
        self.sender.subscribe()
    }

    pub fn notices_since(&self, cursor: u64) -> Vec<Notice> {
        self.read(|k| k.notices_since(cursor).to_vec())
    }

    pub fn handle_turn(&self, session_id: &str, text: &str) -> Result<TurnResult, KernelError> {
        let start = {
            let mut shared = self.lock();
            let start = shared.kernel.begin_turn(session_id, text);
            self.publish(&mut shared);
            start?
        };
        match start {
            TurnStart::Done(result) => Ok(result),
            TurnStart::Dispatch(pending) => {
                let outcome = self.executor.execute(pending.job);
                let mut shared = self.lock();
                let result = shared.kernel.finish_dispatch(pending.ticket, outcome);
                self.publish(&mut shared);
                result
            }
        }
    }

    pub fn run_listener(&self) -> Result<Vec<EvolutionAction>, KernelError> {
        let mut shared = self.lock();
        let actions = shared.kernel.run_listener();
        self.publish(&mut shared);
        actions
    }

    pub fn hydrate(&self, toolset: &str) -> Result<String, KernelError> {
        let mut shared = self.lock();
        let name = shared.kernel.hydrate(toolset);
        self.publish(&mut shared);
        name
    }

    /// Runs a listener pass every `interval` until the handle is dropped.
    pub fn spawn_listener(&self, interval: Duration) -> ListenerHandle {
        let stop = Arc::new(AtomicBool::new(false));
        let flag = stop.clone();
        let live = self.clone();
        let handle = thread::Builder::new()
            .name("listener".into())
            .spawn(move || {
                let tick = interval.min(Duration::from_millis(50)).max(Duration::from_millis(1));
                let mut waited = Duration::ZERO;
                while !flag.load(Ordering::Relaxed) {
                    thread::sleep(tick);
                    waited += tick;
                    if waited >= interval {
                        waited = Duration::ZERO;
                        if let Err(e) = live.run_listener() {
                            eprintln!("listener: {e}");
                        }
                    }
                }
            })
            .expect("spawn listener thread");
        ListenerHandle {
            stop,
            handle: Some(handle),
        }
    }
}

pub struct ListenerHandle {
    stop: Arc<AtomicBool>,
    handle: Option<JoinHandle<()>>,
}

impl ListenerHandle {
    pub fn stop(mut self) {
        self.shutdown();
    }

    fn shutdown(&mut self) {
        self.stop.store(true, Ordering::Relaxed);
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

impl Drop for ListenerHandle {
    fn drop(&mut self) {
        self.shutdown();
    }
}
