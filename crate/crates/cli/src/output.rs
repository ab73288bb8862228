use serde_json::json;
use std::fmt::Write as _;

use crate::config::Violation;

#[derive(Debug)]
pub enum CliError {
    /// The configuration is unusable; every violated field is listed.
    Config(Vec<Violation>),
    /// A phase failed while running.
    Run { phase: &'static str, message: String },
}

impl CliError {
    pub fn run(phase: &'static str, e: impl std::fmt::Display) -> Self {
        CliError::Run {
            phase,
            message: e.to_string(),
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Run { .. } => 1,
        }
    }

    /// One-line JSON error report for standard error.
    pub fn report(&self) -> String {
        let v = match self {
            CliError::Config(violations) => json!({
                "error": "invalid_config",
                "violations": violations,
            }),
            CliError::Run { phase, message } => json!({
                "error": "phase_failed",
                "phase": phase,
                "message": message,
            }),
        };
        v.to_string()
    }
}

/// Left-aligned first column, right-aligned others, two-space gutters.
pub fn table(header: &[&str], rows: &[Vec<String>]) -> String {
    let widths: Vec<usize> = (0..header.len())
        .map(|i| rows.iter().map(|r| r[i].len()).chain([header[i].len()]).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    let line = |cols: Vec<&str>, out: &mut String| {
        let cells: Vec<String> = cols
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(i, (c, w))| if i == 0 { format!("{c:<w$}") } else { format!("{c:>w$}") })
            .collect();
        let _ = writeln!(out, "{}", cells.join("  ").trim_end());
    };
    line(header.to_vec(), &mut out);
    let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
    let _ = writeln!(out, "{}", rule.join("  "));
    for r in rows {
        line(r.iter().map(String::as_str).collect(), &mut out);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_report_lists_fields() {
        let e = CliError::Config(vec![Violation::new("beam.k", "must be >= 1"), Violation::new("seed", "bad")]);
        let v: serde_json::Value = serde_json::from_str(&e.report()).unwrap();
        assert_eq!(v["violations"][1]["field"], "seed");
        assert_eq!(e.exit_code(), 2);
    }

    #[test]
    fn aligned_table() {
        let t = table(&["a", "bb"], &[vec!["xyz".into(), "1".into()]]);
        assert_eq!(t, "a    bb\n---  --\nxyz   1\n");
    }
}
