//! CSV rendering of scenario reports.

use dmoe_core::scenario::{describe_notice, ScenarioReport};

/// One row per turn, timeline notice, metrics row and assertion, with the
/// columns `section, index, subject, detail, status`.
pub fn render_csv(report: &ScenarioReport) -> Result<String, csv::Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["section", "index", "subject", "detail", "status"])?;
    let verdict = if report.passed { "pass" } else { "fail" };
    w.write_record(["scenario", "0", &report.name, "", verdict])?;
    for (i, t) in report.turns.iter().enumerate() {
        w.write_record([
            "turn",
            &(i + 1).to_string(),
            &t.reference,
            &format!("{} {:?} -> {:?}", t.session_id, t.user_text, t.reply_text),
            &t.route.to_string(),
        ])?;
    }
    for n in &report.timeline {
        w.write_record([
            "timeline",
            &n.seq.to_string(),
            n.kind.name(),
            describe_notice(n).trim(),
            "",
        ])?;
    }
    for (i, m) in report.metrics.iter().enumerate() {
        w.write_record([
            "metrics",
            &(i + 1).to_string(),
            &format!("{}#{}", m.session_id, m.turn_index),
            &format!(
                "tokens_out={} simulated_latency_ms={}",
                m.metrics.tokens_out, m.metrics.simulated_latency_ms
            ),
            &m.metrics.route.to_string(),
        ])?;
    }
    for a in &report.assertions {
        w.write_record([
            "assertion",
            &a.step.to_string(),
            &a.assertion,
            &a.detail,
            if a.passed { "pass" } else { "fail" },
        ])?;
    }
    for (i, e) in report.errors.iter().enumerate() {
        w.write_record(["error", &(i + 1).to_string(), "", e, "fail"])?;
    }
    let bytes = w.into_inner().map_err(|e| e.into_error())?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}
