use rayon::prelude::*;

use super::{run_one, ExecutionStatus, HarnessError, Runner, TaskIndex};
use crate::replay::{PassRate, ReplayBuffer};

#[derive(Debug, Clone, Copy)]
pub struct TestPhaseOptions {
    /// Upper bound on concurrently executing tests.
    pub workers: usize,
    /// Re-test entries that already carry a pass rate.
    pub retest: bool,
}

impl Default for TestPhaseOptions {
    fn default() -> Self {
        Self {
            workers: std::thread::available_parallelism().map_or(1, |n| n.get()),
            retest: false,
        }
    }
}

#[derive(Debug, Default)]
pub struct TestPhaseReport {
    pub tested: usize,
    /// Insertion index and reason for every entry marked untestable.
    pub failures: Vec<(u64, HarnessError)>,
}

/// Annotates buffer entries with their pass rate on their task's tests.
///
/// Entries whose task is missing, has no tests, or targets another language
/// are marked untestable and reported; the phase itself still succeeds.
pub fn test_phase<R: Runner>(
    buffer: &mut ReplayBuffer,
    tasks: &TaskIndex,
    runner: &R,
    options: TestPhaseOptions,
) -> Result<TestPhaseReport, HarnessError> {
    let mut report = TestPhaseReport::default();
    // (buffer position, test count) of every entry to run
    let mut plan: Vec<(usize, usize)> = Vec::new();
    let mut jobs: Vec<(usize, &str, &super::TestCase)> = Vec::new();

    for (pos, entry) in buffer.iter().enumerate() {
        let wanted = match entry.pass_rate {
            PassRate::Untested => true,
            PassRate::Tested(_) | PassRate::Untestable => options.retest,
        };
        if !wanted {
            continue;
        }
        let task = match tasks.get(&entry.task_id) {
            Some(t) => t,
            None => {
                report
                    .failures
                    .push((entry.insertion_index, HarnessError::MissingTask(entry.task_id.clone())));
                continue;
            }
        };
        if task.language_tag != runner.language() {
            report.failures.push((
                entry.insertion_index,
                HarnessError::LanguageMismatch {
                    runner: runner.language(),
                    task: task.language_tag,
                },
            ));
            continue;
        }
        if task.tests.is_empty() {
            report.failures.push((entry.insertion_index, HarnessError::NoTests));
            continue;
        }
        plan.push((pos, task.tests.len()));
        jobs.extend(task.tests.iter().map(|t| (pos, entry.program_text.as_str(), t)));
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(options.workers.max(1))
        .build()
        .map_err(|e| HarnessError::Runner(e.to_string()))?;
    let passed: Vec<usize> = pool.install(|| {
        jobs.par_iter()
            .filter(|(_, program, test)| run_one(program, test, runner).status == ExecutionStatus::Pass)
            .map(|(pos, _, _)| *pos)
            .collect()
    });

    let mut pass_counts = vec![0usize; buffer.len()];
    for pos in passed {
        pass_counts[pos] += 1;
    }
    let rates: Vec<(usize, f64)> = plan
        .iter()
        .map(|&(pos, total)| (pos, pass_counts[pos] as f64 / total as f64))
        .collect();
    let failed: std::collections::HashSet<u64> = report.failures.iter().map(|(i, _)| *i).collect();

    let mut rates = rates.into_iter().peekable();
    for (pos, entry) in buffer.entries_mut().enumerate() {
        if failed.contains(&entry.insertion_index) {
            entry.pass_rate = PassRate::Untestable;
        } else if rates.peek().is_some_and(|(p, _)| *p == pos) {
            let (_, rate) = rates.next().expect("peeked");
            entry.pass_rate = PassRate::Tested(rate);
            report.tested += 1;
        }
    }
    Ok(report)
}
