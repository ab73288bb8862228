use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

use super::{btp_loop, LoopConfig, TrainerError};
use crate::beam::ToyLm;
use crate::harness::CodeTask;

/// Mixing-weight grid 0, 0.05, ..., 1.0.
pub fn default_alpha_grid() -> Vec<f64> {
    (0..=20).map(|i| i as f64 / 20.0).collect()
}

/// Beam widths 1 through 10.
pub fn default_k_grid() -> Vec<usize> {
    (1..=10).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub label: String,
    pub value: f64,
    /// Final mean best-of-k pass rate per task group, in `groups` order.
    pub cells: Vec<f64>,
}

/// One row per swept value, one column per task group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub parameter: String,
    pub groups: Vec<String>,
    pub rows: Vec<SweepRow>,
}

/// Grid label: `0`, `0.05`, ..., `1.0`; integers keep one decimal except 0.
pub fn format_grid_value(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.fract() == 0.0 {
        format!("{v:.1}")
    } else {
        format!("{v}")
    }
}

fn groups_of(tasks: &[CodeTask]) -> Vec<String> {
    let mut groups: Vec<String> = Vec::new();
    for t in tasks {
        if !groups.iter().any(|g| g == t.group_name()) {
            groups.push(t.group_name().to_string());
        }
    }
    groups
}

fn run_row(
    model: &ToyLm,
    tasks: &[CodeTask],
    eval_tasks: &[CodeTask],
    groups: &[String],
    config: &LoopConfig,
    label: String,
    value: f64,
) -> Result<SweepRow, TrainerError> {
    let report = btp_loop(model, tasks, eval_tasks, config)?;
    if let Some(f) = &report.failure {
        return Err(TrainerError::Sweep {
            value: label,
            message: format!("iteration {} {} phase: {}", f.iteration, f.phase, f.message),
        });
    }
    let eval = report.final_eval.expect("loop always records an evaluation");
    let cells = groups
        .iter()
        .map(|g| {
            let scores: Vec<f64> = eval_tasks
                .iter()
                .zip(&eval.per_task)
                .filter(|(t, _)| t.group_name() == g)
                .map(|(_, s)| *s)
                .collect();
            scores.iter().sum::<f64>() / scores.len() as f64
        })
        .collect();
    Ok(SweepRow { label, value, cells })
}

fn check_eval_tasks(eval_tasks: &[CodeTask]) -> Result<(), TrainerError> {
    if eval_tasks.is_empty() {
        return Err(TrainerError::InvalidGrid("sweeps need at least one evaluation task".into()));
    }
    Ok(())
}

/// Runs one loop per beam width, each from a fresh copy of `model`.
pub fn sweep_k(
    model: &ToyLm,
    tasks: &[CodeTask],
    eval_tasks: &[CodeTask],
    k_values: &[usize],
    base: &LoopConfig,
) -> Result<SweepTable, TrainerError> {
    if k_values.is_empty() {
        return Err(TrainerError::InvalidGrid("k grid is empty".into()));
    }
    if let Some(k) = k_values.iter().find(|&&k| k == 0) {
        return Err(TrainerError::InvalidGrid(format!("k = {k} is below 1")));
    }
    check_eval_tasks(eval_tasks)?;
    base.validate()?;
    let groups = groups_of(eval_tasks);
    let rows = k_values
        .iter()
        .map(|&k| {
            let mut cfg = *base;
            cfg.beam.k = k;
            run_row(model, tasks, eval_tasks, &groups, &cfg, k.to_string(), k as f64)
        })
        .collect::<Result<_, _>>()?;
    Ok(SweepTable {
        parameter: "k".into(),
        groups,
        rows,
    })
}

/// Runs one loop per mixing weight, each from a fresh copy of `model`.
pub fn sweep_alpha(
    model: &ToyLm,
    tasks: &[CodeTask],
    eval_tasks: &[CodeTask],
    alpha_values: &[f64],
    base: &LoopConfig,
) -> Result<SweepTable, TrainerError> {
    if alpha_values.is_empty() {
        return Err(TrainerError::InvalidGrid("alpha grid is empty".into()));
    }
    if let Some(a) = alpha_values.iter().find(|a| !(0.0..=1.0).contains(*a)) {
        return Err(TrainerError::InvalidGrid(format!("alpha = {a} outside [0,1]")));
    }
    check_eval_tasks(eval_tasks)?;
    base.validate()?;
    let groups = groups_of(eval_tasks);
    let rows = alpha_values
        .iter()
        .map(|&a| {
            let mut cfg = *base;
            cfg.priority.mix_weight = a;
            run_row(model, tasks, eval_tasks, &groups, &cfg, format_grid_value(a), a)
        })
        .collect::<Result<_, _>>()?;
    Ok(SweepTable {
        parameter: "alpha".into(),
        groups,
        rows,
    })
}

impl SweepTable {
    /// Aligned plain-text rendering, cells as percentages with two decimals.
    pub fn render(&self) -> String {
        let mut header = vec![self.parameter.clone()];
        header.extend(self.groups.iter().cloned());
        let body: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| {
                let mut cols = vec![r.label.clone()];
                cols.extend(r.cells.iter().map(|c| format!("{:.2}", c * 100.0)));
                cols
            })
            .collect();
        let widths: Vec<usize> = (0..header.len())
            .map(|i| {
                body.iter()
                    .map(|row| row[i].len())
                    .chain([header[i].len()])
                    .max()
                    .unwrap_or(0)
            })
            .collect();
        let mut out = String::new();
        let line = |cols: &[String], out: &mut String| {
            let cells: Vec<String> = cols
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(i, (c, w))| if i == 0 { format!("{c:<w$}") } else { format!("{c:>w$}") })
                .collect();
            let _ = writeln!(out, "{}", cells.join("  ").trim_end());
        };
        line(&header, &mut out);
        let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
        let _ = writeln!(out, "{}", rule.join("  "));
        for row in &body {
            line(row, &mut out);
        }
        out
    }
}
