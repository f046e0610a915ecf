//! Command-line entry points: `run`, `repl` and `serve`.

use std::ffi::OsString;
use std::io::{BufRead, Write};
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use dmoe_core::expert::{ExpertExecutor, InlineExecutor};
use dmoe_core::kernel::KernelConfig;
use dmoe_core::scenario::{render_text, run_scenario};

use crate::executor::ThreadExecutor;
use crate::live::LiveKernel;
use crate::loader::{self, KernelSources, SetupError};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_ASSERTION_FAILED: i32 = 1;
pub const EXIT_SETUP: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "dmoe", version, about = "Self-evolving concierge: scenario runner, REPL and HTTP service")]
pub struct Cli {
    /// Run everything on one logical timeline; the listener only runs when
    /// asked. Always on for `run`.
    #[arg(long, global = true)]
    pub deterministic: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Replay a scenario script and check its assertions.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, value_enum, default_value_t = ReportFormat::Text)]
        report: ReportFormat,
    },
    /// Talk to the concierge interactively.
    Repl(KernelArgs),
    /// Serve the HTTP and WebSocket API.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[command(flatten)]
        kernel: KernelArgs,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReportFormat {
    Text,
    Csv,
}

#[derive(Debug, Clone, Args)]
pub struct KernelArgs {
    /// Provider rule file.
    #[arg(long, default_value = "fixtures/rules.json")]
    pub rules: PathBuf,
    /// Directory of `*.mcp.json` toolsets.
    #[arg(long, default_value = "fixtures/registry")]
    pub registry: PathBuf,
    #[arg(long, default_value_t = 5)]
    pub capacity: usize,
    #[arg(long, default_value_t = 0.35)]
    pub tau: f64,
    #[arg(long, default_value_t = 3)]
    pub opt_threshold: u32,
    /// Persist the event log (and gap reports) in this directory.
    #[arg(long)]
    pub journal: Option<PathBuf>,
    /// Background listener period.
    #[arg(long, default_value_t = 2000)]
    pub listener_interval_ms: u64,
}

impl KernelArgs {
    pub fn sources(&self) -> Result<KernelSources, String> {
        if self.capacity == 0 {
            return Err("--capacity must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return Err("--tau must be within [0, 1]".into());
        }
        Ok(KernelSources {
            registry: self.registry.clone(),
            rules: self.rules.clone(),
            config: KernelConfig {
                capacity: self.capacity,
                tau: self.tau,
                opt_threshold: self.opt_threshold,
                ..KernelConfig::default()
            },
            journal: self.journal.clone(),
        })
    }

    fn live(&self, deterministic: bool) -> Result<LiveKernel, String> {
        let kernel = self.sources()?.build().map_err(|e| e.to_string())?;
        let executor: Arc<dyn ExpertExecutor> = if deterministic {
            Arc::new(InlineExecutor)
        } else {
            Arc::new(ThreadExecutor::with_limit(Duration::from_secs(10)))
        };
        let mut live = LiveKernel::new(kernel, executor);
        if let Some(dir) = &self.journal {
            live = live.with_gap_log(dir.join("gap_reports.log"));
        }
        Ok(live)
    }
}

/// Parses `args` and runs the command; returns the process exit code.
pub fn run_cli<I, T>(args: I, input: impl BufRead, out: &mut impl Write, err: &mut impl Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_SETUP } else { EXIT_PASS };
            let _ = write!(if e.use_stderr() { err as &mut dyn Write } else { out as &mut dyn Write }, "{e}");
            return code;
        }
    };
    match cli.command {
        Command::Run { scenario, report } => run_command(&scenario, report, out, err),
        Command::Repl(args) => {
            let live = match args.live(cli.deterministic) {
                Ok(l) => l,
                Err(e) => return setup_failed(err, &e),
            };
            let _listener = (!cli.deterministic)
                .then(|| live.spawn_listener(Duration::from_millis(args.listener_interval_ms)));
            match crate::repl::run_repl(&live, input, out) {
                Ok(()) => EXIT_PASS,
                Err(e) => setup_failed(err, &e.to_string()),
            }
        }
        Command::Serve { port, host, kernel } => {
            let addr: SocketAddr = match format!("{host}:{port}").parse() {
                Ok(a) => a,
                Err(e) => return setup_failed(err, &format!("bad address: {e}")),
            };
            let live = match kernel.live(cli.deterministic) {
                Ok(l) => l,
                Err(e) => return setup_failed(err, &e),
            };
            let _listener = (!cli.deterministic)
                .then(|| live.spawn_listener(Duration::from_millis(kernel.listener_interval_ms)));
            let runtime = match tokio::runtime::Runtime::new() {
                Ok(r) => r,
                Err(e) => return setup_failed(err, &e.to_string()),
            };
            let _ = writeln!(out, "listening on http://{addr}");
            let _ = out.flush();
            match runtime.block_on(crate::service::serve(live, addr)) {
                Ok(()) => EXIT_PASS,
                Err(e) => setup_failed(err, &format!("cannot serve on {addr}: {e}")),
            }
        }
    }
}

fn setup_failed(err: &mut impl Write, message: &str) -> i32 {
    let _ = writeln!(err, "error: {message}");
    EXIT_SETUP
}

fn run_command(path: &std::path::Path, format: ReportFormat, out: &mut impl Write, err: &mut impl Write) -> i32 {
    let prepared = loader::load_scenario(path).and_then(|script| {
        let kernel = loader::scenario_sources(&script, path).build()?;
        Ok::<_, SetupError>((script, kernel))
    });
    let (script, mut kernel) = match prepared {
        Ok(p) => p,
        Err(e) => return setup_failed(err, &e.to_string()),
    };
    let report = run_scenario(&script, &mut kernel, &InlineExecutor);
    let rendered = match format {
        ReportFormat::Text => render_text(&report),
        ReportFormat::Csv => match crate::report::render_csv(&report) {
            Ok(s) => s,
            Err(e) => return setup_failed(err, &e.to_string()),
        },
    };
    let _ = out.write_all(rendered.as_bytes());
    if report.passed {
        EXIT_PASS
    } else {
        EXIT_ASSERTION_FAILED
    }
}
