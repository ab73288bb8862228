use rayon::prelude::*;

use super::{beam_search, BeamConfig, BeamError, Hypothesis, TokenModel};
use crate::harness::CodeTask;
use crate::replay::{ReplayBuffer, ReplayEntry, ReplayError};

/// A finished program and its rendered text.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub hypothesis: Hypothesis,
    pub text: String,
}

/// Anything that can propose the top-k programs for a prompt.
pub trait CandidateSource: Sync {
    fn candidates(&self, prompt: &str, config: &BeamConfig) -> Result<Vec<Candidate>, BeamError>;
}

/// Engine-side beam search over a token model.
pub struct BeamSource<M>(pub M);

impl<M: TokenModel + Sync> CandidateSource for BeamSource<M> {
    fn candidates(&self, prompt: &str, config: &BeamConfig) -> Result<Vec<Candidate>, BeamError> {
        let vocab = self.0.vocabulary();
        Ok(beam_search(&self.0, prompt, config)?
            .into_iter()
            .map(|h| Candidate {
                text: vocab.render(&h.tokens),
                hypothesis: h,
            })
            .collect())
    }
}

/// Outcome of one sampling pass over a task set.
#[derive(Debug, Default)]
pub struct SamplePhaseReport {
    /// Entries inserted per task, in task order.
    pub inserted: Vec<(String, usize)>,
    /// Tasks that yielded fewer than k candidates: (task, requested, received).
    pub shortfalls: Vec<(String, usize, usize)>,
    pub failures: Vec<(String, BeamError)>,
}

impl SamplePhaseReport {
    pub fn total_inserted(&self) -> usize {
        self.inserted.iter().map(|(_, n)| n).sum()
    }
}

/// Converts a decoded hypothesis into an untested replay entry.
pub fn entry_from_hypothesis(
    task_id: &str,
    hypothesis: &Hypothesis,
    program_text: String,
) -> Result<ReplayEntry, ReplayError> {
    ReplayEntry::new(
        task_id,
        hypothesis.tokens.clone(),
        program_text,
        hypothesis.cum_logprob,
    )
}

/// Decodes every task with beam search and stores its top-k programs,
/// untested, in `buffer`.
pub fn sample_phase<M: TokenModel + Sync>(
    model: &M,
    tasks: &[CodeTask],
    config: &BeamConfig,
    buffer: &mut ReplayBuffer,
) -> Result<SamplePhaseReport, BeamError> {
    sample_from_source(&BeamSource(model), tasks, config, buffer)
}

/// Stores every task's candidates from `source` in `buffer`.
///
/// A failing task is reported and skipped; the others still run. Tasks are
/// decoded in parallel but inserted in task order.
pub fn sample_from_source<S: CandidateSource + ?Sized>(
    source: &S,
    tasks: &[CodeTask],
    config: &BeamConfig,
    buffer: &mut ReplayBuffer,
) -> Result<SamplePhaseReport, BeamError> {
    if tasks.is_empty() {
        return Err(BeamError::NoTasks);
    }
    config.validate()?;
    let decoded: Vec<Result<Vec<Candidate>, BeamError>> = tasks
        .par_iter()
        .map(|task| source.candidates(&task.prompt, config))
        .collect();

    let mut report = SamplePhaseReport::default();
    for (task, result) in tasks.iter().zip(decoded) {
        let candidates = match result {
            Ok(c) => c,
            Err(e) => {
                report.failures.push((task.task_id.clone(), e));
                continue;
            }
        };
        if candidates.len() < config.k {
            report.shortfalls.push((task.task_id.clone(), config.k, candidates.len()));
        }
        let mut count = 0;
        for c in candidates.into_iter().take(config.k) {
            let inserted = entry_from_hypothesis(&task.task_id, &c.hypothesis, c.text)
                .and_then(|e| buffer.insert(e));
            match inserted {
                Ok(_) => count += 1,
                Err(e) => report
                    .failures
                    .push((task.task_id.clone(), BeamError::InvalidModel(e.to_string()))),
            }
        }
        report.inserted.push((task.task_id.clone(), count));
    }
    Ok(report)
}
