use serde::{Deserialize, Serialize};
use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::Path;

use super::HarnessError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LanguageTag {
    Toy,
    External,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestCase {
    pub input: String,
    pub expected_output: String,
}

impl TestCase {
    pub fn new(input: impl Into<String>, expected_output: impl Into<String>) -> Self {
        Self {
            input: input.into(),
            expected_output: expected_output.into(),
        }
    }
}

/// A generation task: the prompt and the tests a program must pass.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CodeTask {
    pub task_id: String,
    pub prompt: String,
    pub language_tag: LanguageTag,
    pub tests: Vec<TestCase>,
    /// Column label used when reporting sweeps per task group.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group: Option<String>,
}

impl CodeTask {
    pub fn toy(task_id: impl Into<String>, prompt: impl Into<String>, tests: Vec<TestCase>) -> Self {
        Self {
            task_id: task_id.into(),
            prompt: prompt.into(),
            language_tag: LanguageTag::Toy,
            tests,
            group: None,
        }
    }

    pub fn with_group(mut self, group: impl Into<String>) -> Self {
        self.group = Some(group.into());
        self
    }

    pub fn group_name(&self) -> &str {
        self.group.as_deref().unwrap_or("all")
    }
}

/// Tasks keyed by id.
pub type TaskIndex = HashMap<String, CodeTask>;

pub fn index_tasks(tasks: &[CodeTask]) -> Result<TaskIndex, HarnessError> {
    validate_tasks(tasks)?;
    Ok(tasks.iter().map(|t| (t.task_id.clone(), t.clone())).collect())
}

pub fn validate_tasks(tasks: &[CodeTask]) -> Result<(), HarnessError> {
    let mut seen = HashSet::new();
    for t in tasks {
        if !seen.insert(t.task_id.as_str()) {
            return Err(HarnessError::DuplicateTask(t.task_id.clone()));
        }
    }
    Ok(())
}

pub fn parse_tasks(text: &str) -> Result<Vec<CodeTask>, HarnessError> {
    let tasks: Vec<CodeTask> = serde_json::from_str(text).map_err(|e| HarnessError::TaskFile(e.to_string()))?;
    validate_tasks(&tasks)?;
    Ok(tasks)
}

pub fn load_tasks(path: &Path) -> Result<Vec<CodeTask>, HarnessError> {
    let text = fs::read_to_string(path).map_err(|e| HarnessError::TaskFile(format!("{}: {e}", path.display())))?;
    parse_tasks(&text).map_err(|e| match e {
        HarnessError::TaskFile(m) => HarnessError::TaskFile(format!("{}: {m}", path.display())),
        other => other,
    })
}

/// Judge normalisation: trailing whitespace removed from every line and
/// trailing blank lines dropped.
pub fn normalize_output(s: &str) -> String {
    let lines: Vec<&str> = s.lines().map(str::trim_end).collect();
    let keep = lines.iter().rposition(|l| !l.is_empty()).map_or(0, |i| i + 1);
    lines[..keep].join("\n")
}
