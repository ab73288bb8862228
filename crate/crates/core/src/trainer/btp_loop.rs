use serde::{Deserialize, Serialize};

use super::{build_minibatch, TrainerError};
use crate::beam::{beam_search, sample_phase, BeamConfig, TokenModel, ToyLm};
use crate::harness::{index_tasks, task_pass_rate, test_phase, CodeTask, LanguageTag, TestPhaseOptions, ToyRunner};
use crate::replay::{PriorityConfig, ReplayBuffer, SamplingMode};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoopConfig {
    pub iterations: usize,
    pub beam: BeamConfig,
    pub priority: PriorityConfig,
    pub minibatch_size: usize,
    /// Count added per sampled record when updating the model.
    pub update_weight: f64,
    /// Replay buffer bound; `None` keeps every entry.
    pub buffer_capacity: Option<usize>,
    pub seed: u64,
    pub workers: usize,
}

impl Default for LoopConfig {
    fn default() -> Self {
        Self {
            iterations: 5,
            beam: BeamConfig::default(),
            priority: PriorityConfig::default(),
            minibatch_size: 32,
            update_weight: 1.0,
            buffer_capacity: None,
            seed: 0,
            workers: 1,
        }
    }
}

impl LoopConfig {
    pub fn validate(&self) -> Result<(), TrainerError> {
        if self.iterations == 0 {
            return Err(TrainerError::InvalidConfig("iterations must be >= 1".into()));
        }
        if self.minibatch_size == 0 {
            return Err(TrainerError::InvalidConfig("minibatch_size must be >= 1".into()));
        }
        if !(self.update_weight.is_finite() && self.update_weight > 0.0) {
            return Err(TrainerError::InvalidConfig(format!(
                "update_weight must be positive, got {}",
                self.update_weight
            )));
        }
        if self.buffer_capacity == Some(0) {
            return Err(TrainerError::InvalidConfig("buffer_capacity must be positive".into()));
        }
        self.beam.validate()?;
        self.priority.validate()?;
        Ok(())
    }
}

/// Best-of-k quality of a model on a task set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    /// Mean over tasks of the best candidate's pass rate.
    pub mean_pass_rate: f64,
    /// Fraction of tasks where some candidate passes every test.
    pub accuracy_rate: f64,
    /// Best pass rate per task, in task order.
    pub per_task: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationMetrics {
    pub iteration: usize,
    pub mean_pass_rate: f64,
    pub accuracy_rate: f64,
    pub mean_p2value: f64,
    pub buffer_size: usize,
    pub minibatch_size: usize,
    pub sampling: SamplingMode,
    /// Records whose sequence probability rose across their own update.
    pub lifted_records: usize,
    /// Smallest log-probability gain of any record across its own update.
    pub min_logprob_gain: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationFailure {
    pub iteration: usize,
    pub phase: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopReport {
    /// Evaluation of the untouched model.
    pub baseline: EvalMetrics,
    /// One entry per completed iteration.
    pub history: Vec<IterationMetrics>,
    pub failure: Option<IterationFailure>,
    #[serde(skip)]
    pub model: Option<ToyLm>,
    #[serde(skip)]
    pub final_eval: Option<EvalMetrics>,
}

/// Best-of-k evaluation with beam search and the toy runner.
pub fn evaluate<M: TokenModel + ?Sized>(
    model: &M,
    tasks: &[CodeTask],
    beam: &BeamConfig,
    runner: &ToyRunner,
) -> Result<EvalMetrics, TrainerError> {
    let mut per_task = Vec::with_capacity(tasks.len());
    for task in tasks {
        let hyps = beam_search(model, &task.prompt, beam)?;
        let mut best: f64 = 0.0;
        for h in &hyps {
            let text = model.vocabulary().render(&h.tokens);
            best = best.max(task_pass_rate(&text, task, runner)?);
        }
        per_task.push(best);
    }
    let n = per_task.len().max(1) as f64;
    Ok(EvalMetrics {
        mean_pass_rate: per_task.iter().sum::<f64>() / n,
        accuracy_rate: per_task.iter().filter(|&&b| b == 1.0).count() as f64 / n,
        per_task,
    })
}

fn require_toy(tasks: &[CodeTask]) -> Result<(), TrainerError> {
    match tasks.iter().find(|t| t.language_tag != LanguageTag::Toy) {
        Some(t) => Err(TrainerError::InvalidConfig(format!(
            "task {:?} is not a toy-language task",
            t.task_id
        ))),
        None => Ok(()),
    }
}

/// Runs the sample / test / replay / update cycle on a toy model.
///
/// The replay buffer persists across iterations. A failing phase stops the
/// loop; metrics of completed iterations are kept in the report.
pub fn btp_loop(
    model: &ToyLm,
    tasks: &[CodeTask],
    eval_tasks: &[CodeTask],
    config: &LoopConfig,
) -> Result<LoopReport, TrainerError> {
    config.validate()?;
    if tasks.is_empty() {
        return Err(TrainerError::InvalidConfig("no training tasks".into()));
    }
    require_toy(tasks)?;
    require_toy(eval_tasks)?;
    let index = index_tasks(tasks)?;
    let runner = ToyRunner::default();
    let test_opts = TestPhaseOptions {
        workers: config.workers.max(1),
        retest: false,
    };

    let mut model = model.clone();
    let mut buffer = ReplayBuffer::new(config.buffer_capacity, seed::derive(config.seed, "buffer"))?;
    let baseline = evaluate(&model, eval_tasks, &config.beam, &runner)?;
    let mut report = LoopReport {
        baseline,
        history: Vec::new(),
        failure: None,
        model: None,
        final_eval: None,
    };

    for iteration in 1..=config.iterations {
        let fail = |phase: &str, e: &dyn std::fmt::Display| IterationFailure {
            iteration,
            phase: phase.to_string(),
            message: e.to_string(),
        };

        let sampled = match sample_phase(&model, tasks, &config.beam, &mut buffer) {
            Ok(r) if r.failures.is_empty() => r,
            Ok(r) => {
                let (task, e) = &r.failures[0];
                report.failure = Some(fail("sample", &format!("task {task:?}: {e}")));
                break;
            }
            Err(e) => {
                report.failure = Some(fail("sample", &e));
                break;
            }
        };
        log::debug!("iteration {iteration}: sampled {} programs", sampled.total_inserted());

        match test_phase(&mut buffer, &index, &runner, test_opts) {
            Ok(r) if r.failures.is_empty() => {}
            Ok(r) => {
                let (idx, e) = &r.failures[0];
                report.failure = Some(fail("test", &format!("entry {idx}: {e}")));
                break;
            }
            Err(e) => {
                report.failure = Some(fail("test", &e));
                break;
            }
        }

        let batch_seed = seed::derive_indexed(config.seed, "pper", iteration as u64);
        let batch = match build_minibatch(&buffer, &index, &config.priority, config.minibatch_size, batch_seed) {
            Ok(b) => b,
            Err(e) => {
                report.failure = Some(fail("pper", &e));
                break;
            }
        };
        let mean_p2value = match buffer.p2values(config.priority.mix_weight) {
            Ok(v) => v.iter().map(|(_, x)| x).sum::<f64>() / v.len() as f64,
            Err(e) => {
                report.failure = Some(fail("pper", &e));
                break;
            }
        };

        let mut lifted = 0;
        let mut min_gain = f64::INFINITY;
        let mut update_err = None;
        for record in &batch.entries {
            let weight = config.update_weight * record.sample_weight;
            let step = model
                .sequence_logprob(&record.program_tokens)
                .and_then(|before| {
                    model.update(&record.program_tokens, weight)?;
                    Ok(model.sequence_logprob(&record.program_tokens)? - before)
                });
            match step {
                Ok(gain) => {
                    if gain > 0.0 {
                        lifted += 1;
                    }
                    min_gain = min_gain.min(gain);
                }
                Err(e) => {
                    update_err = Some(e);
                    break;
                }
            }
        }
        if let Some(e) = update_err {
            report.failure = Some(fail("update", &e));
            break;
        }

        let eval = match evaluate(&model, eval_tasks, &config.beam, &runner) {
            Ok(m) => m,
            Err(e) => {
                report.failure = Some(fail("evaluate", &e));
                break;
            }
        };
        report.history.push(IterationMetrics {
            iteration,
            mean_pass_rate: eval.mean_pass_rate,
            accuracy_rate: eval.accuracy_rate,
            mean_p2value,
            buffer_size: buffer.len(),
            minibatch_size: batch.entries.len(),
            sampling: batch.provenance.sampling,
            lifted_records: lifted,
            min_logprob_gain: min_gain,
        });
        report.final_eval = Some(eval);
    }
    if report.final_eval.is_none() {
        report.final_eval = Some(report.baseline.clone());
    }
    report.model = Some(model);
    Ok(report)
}
