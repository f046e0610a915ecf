//! Line-oriented interactive front end over a [`LiveKernel`].

use std::io::{self, BufRead, Write};

use dmoe_core::kernel::{Notice, NoticeKind};

use crate::live::LiveKernel;

pub const HELP: &str = "commands: :registry :cold :manifest :events :gaps :metrics :listener :help :quit";

/// Human-readable evolution lines for a run of notices. Turn and manifest
/// notices are skipped; an eviction is folded into the hydration it made
/// room for.
pub fn evolution_lines(notices: &[Notice]) -> Vec<String> {
    let mut out = Vec::new();
    let mut evicted: Option<&str> = None;
    for n in notices {
        match &n.kind {
            NoticeKind::Evicted { expert } => evicted = Some(expert),
            NoticeKind::Hydrated { expert, score, .. } => {
                out.push(format!(
                    "hydrated {expert}, evicted {} (score {score:.4})",
                    evicted.take().unwrap_or("none")
                ));
            }
            NoticeKind::Pruned {
                session_id,
                event_ids,
            } => {
                for id in event_ids {
                    out.push(format!("pruned event {id} from {session_id}"));
                }
            }
            NoticeKind::GapReport { line } => out.push(format!("gap report: {line}")),
            NoticeKind::Turn { .. } | NoticeKind::ManifestUpdated { .. } => {}
        }
    }
    out
}

/// Reads lines from `input` until EOF or `:quit`. Kernel errors are printed
/// and the loop continues.
pub fn run_repl<R: BufRead, W: Write>(live: &LiveKernel, input: R, out: &mut W) -> io::Result<()> {
    let session = live.create_session();
    let mut cursor = live.read(|k| k.notices().last().map_or(0, |n| n.seq));
    writeln!(out, "session {session}")?;
    writeln!(out, "{HELP}")?;
    for line in input.lines() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        match line {
            ":quit" | ":q" => break,
            ":help" => writeln!(out, "{HELP}")?,
            ":registry" => live.read(|k| -> io::Result<()> {
                let r = k.registry();
                writeln!(out, "active {}/{}", r.len(), r.capacity())?;
                for e in r.experts() {
                    writeln!(
                        out,
                        "  {} ({}) {} last={} created={}",
                        e.name, e.toolset.name, e.status, e.last_interaction, e.created_at
                    )?;
                }
                Ok(())
            })?,
            ":cold" => live.read(|k| -> io::Result<()> {
                for r in k.cold().iter() {
                    writeln!(out, "  {}: {} [{}]", r.name, r.description, r.capability_tags.join(", "))?;
                }
                Ok(())
            })?,
            ":manifest" => {
                let m = live.read(|k| k.manifest().rendered);
                writeln!(out, "{m}")?;
            }
            ":events" => live.read(|k| -> io::Result<()> {
                for e in k.context(&session) {
                    let mark = if e.refusal.is_some() { " (refusal)" } else { "" };
                    writeln!(out, "  {} [{}]{mark} {}", e.id, e.author, dmoe_core::tools::summarize(&e.content))?;
                }
                Ok(())
            })?,
            ":gaps" => {
                let lines = live.read(|k| k.gaps().lines());
                if lines.is_empty() {
                    writeln!(out, "no gap reports")?;
                }
                for l in lines {
                    writeln!(out, "{l}")?;
                }
            }
            ":metrics" => live.read(|k| -> io::Result<()> {
                for m in k.session_metrics(&session) {
                    writeln!(
                        out,
                        "  turn {} {} tokens={} latency_ms={}",
                        m.turn_index, m.metrics.route, m.metrics.tokens_out, m.metrics.simulated_latency_ms
                    )?;
                }
                Ok(())
            })?,
            ":listener" => {
                if let Err(e) = live.run_listener() {
                    writeln!(out, "error: {e}")?;
                }
            }
            cmd if cmd.starts_with(':') => writeln!(out, "unknown command {cmd}; {HELP}")?,
            text => match live.handle_turn(&session, text) {
                Ok(r) => writeln!(out, "[{}] {}", r.route, r.reply_text)?,
                Err(e) => writeln!(out, "error: {e}")?,
            },
        }
        let fresh = live.notices_since(cursor);
        if let Some(last) = fresh.last() {
            cursor = last.seq;
        }
        for l in evolution_lines(&fresh) {
            writeln!(out, "{l}")?;
        }
        out.flush()?;
    }
    Ok(())
}
