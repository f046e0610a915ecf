//! Runtime for the `dmoe-core` kernel: on-disk journals, fixture loading,
//! thread-backed expert execution, a shared live kernel with a background
//! listener, the REPL, the HTTP/WebSocket service and the CLI.

pub mod cli;
pub mod executor;
pub mod journal;
pub mod live;
pub mod loader;
pub mod repl;
pub mod report;
pub mod service;

pub use executor::ThreadExecutor;
pub use live::LiveKernel;
pub use loader::{KernelSources, SetupError};
