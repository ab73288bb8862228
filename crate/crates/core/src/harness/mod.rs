//! Program execution against task test sets and pass-rate annotation.

mod phase;
mod subprocess;
mod task;
mod toy;

use serde::{Deserialize, Serialize};
use std::time::Instant;
use thiserror::Error;

pub use phase::{test_phase, TestPhaseOptions, TestPhaseReport};
pub use subprocess::{SubprocessRunner, FILE_PLACEHOLDER};
pub use task::{
    index_tasks, load_tasks, normalize_output, parse_tasks, validate_tasks, CodeTask, LanguageTag,
    TaskIndex, TestCase,
};
pub use toy::{evaluate, parse_binding, ToyError, ToyRunner};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("no tests")]
    NoTests,
    #[error("task {0:?} not found")]
    MissingTask(String),
    #[error("duplicate task id {0:?}")]
    DuplicateTask(String),
    #[error("runner for {runner:?} cannot execute {task:?} programs")]
    LanguageMismatch { runner: LanguageTag, task: LanguageTag },
    #[error("task file: {0}")]
    TaskFile(String),
    #[error("runner: {0}")]
    Runner(String),
}

/// What a runner observed, before comparison with the expected output.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Outcome {
    Completed(String),
    RuntimeError(String),
    Timeout,
}

/// Executes programs of one language.
pub trait Runner: Sync {
    fn language(&self) -> LanguageTag;

    fn execute(&self, program: &str, input: &str) -> Outcome;
}

impl<R: Runner + ?Sized> Runner for &R {
    fn language(&self) -> LanguageTag {
        (**self).language()
    }

    fn execute(&self, program: &str, input: &str) -> Outcome {
        (**self).execute(program, input)
    }
}

impl<R: Runner + ?Sized> Runner for Box<R> {
    fn language(&self) -> LanguageTag {
        (**self).language()
    }

    fn execute(&self, program: &str, input: &str) -> Outcome {
        (**self).execute(program, input)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExecutionStatus {
    Pass,
    WrongOutput,
    RuntimeError,
    Timeout,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutionResult {
    pub status: ExecutionStatus,
    pub observed_output: String,
    pub duration_ms: u64,
}

/// Runs one program on one test and judges the result.
///
/// The toy runner reports a zero duration so its results stay reproducible.
pub fn run_one<R: Runner + ?Sized>(program: &str, test: &TestCase, runner: &R) -> ExecutionResult {
    let start = Instant::now();
    let outcome = runner.execute(program, &test.input);
    let duration_ms = match runner.language() {
        LanguageTag::Toy => 0,
        LanguageTag::External => start.elapsed().as_millis() as u64,
    };
    let (status, observed_output) = match outcome {
        Outcome::Completed(out) => {
            let status = if normalize_output(&out) == normalize_output(&test.expected_output) {
                ExecutionStatus::Pass
            } else {
                ExecutionStatus::WrongOutput
            };
            (status, out)
        }
        Outcome::RuntimeError(msg) => (ExecutionStatus::RuntimeError, msg),
        Outcome::Timeout => (ExecutionStatus::Timeout, String::new()),
    };
    ExecutionResult {
        status,
        observed_output,
        duration_ms,
    }
}

/// Fraction of `tests` the program passes. Runtime errors and timeouts count
/// as failures.
pub fn pass_rate<R: Runner + ?Sized>(program: &str, tests: &[TestCase], runner: &R) -> Result<f64, HarnessError> {
    if tests.is_empty() {
        return Err(HarnessError::NoTests);
    }
    let passed = tests
        .iter()
        .filter(|t| run_one(program, t, runner).status == ExecutionStatus::Pass)
        .count();
    Ok(passed as f64 / tests.len() as f64)
}

/// Pass rate of a program on a task, checking the runner fits the task.
pub fn task_pass_rate<R: Runner + ?Sized>(program: &str, task: &CodeTask, runner: &R) -> Result<f64, HarnessError> {
    if runner.language() != task.language_tag {
        return Err(HarnessError::LanguageMismatch {
            runner: runner.language(),
            task: task.language_tag,
        });
    }
    pass_rate(program, &task.tests, runner)
}
