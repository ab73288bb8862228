use serde::{Deserialize, Serialize};
use std::cmp::Ordering;

use super::{BeamError, TokenId, Vocabulary};

/// Autoregressive next-token model.
pub trait TokenModel {
    fn vocabulary(&self) -> &Vocabulary;

    /// Probability of every vocabulary token following `prefix` under `prompt`.
    fn next_distribution(&self, prefix: &[TokenId], prompt: &str) -> Result<Vec<f64>, BeamError>;
}

impl<M: TokenModel + ?Sized> TokenModel for &M {
    fn vocabulary(&self) -> &Vocabulary {
        (**self).vocabulary()
    }

    fn next_distribution(&self, prefix: &[TokenId], prompt: &str) -> Result<Vec<f64>, BeamError> {
        (**self).next_distribution(prefix, prompt)
    }
}

pub const DISTRIBUTION_TOLERANCE: f64 = 1e-9;

/// Candidate program from decoding, with its cumulative log-probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hypothesis {
    pub tokens: Vec<String>,
    pub cum_logprob: f64,
    pub finished: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BeamConfig {
    pub k: usize,
    pub max_len: usize,
}

impl Default for BeamConfig {
    fn default() -> Self {
        Self { k: 3, max_len: 8 }
    }
}

impl BeamConfig {
    pub fn new(k: usize, max_len: usize) -> Result<Self, BeamError> {
        let c = Self { k, max_len };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), BeamError> {
        if self.k == 0 {
            return Err(BeamError::InvalidConfig("beam width k must be >= 1".into()));
        }
        if self.max_len == 0 {
            return Err(BeamError::InvalidConfig("max_len must be >= 1".into()));
        }
        Ok(())
    }
}

/// Checks that `dist` is a probability vector over `vocab_len` tokens.
pub fn check_distribution(dist: &[f64], vocab_len: usize) -> Result<(), BeamError> {
    if dist.len() != vocab_len {
        return Err(BeamError::InvalidModel(format!(
            "distribution has {} entries for a vocabulary of {vocab_len}",
            dist.len()
        )));
    }
    if let Some(p) = dist.iter().find(|p| !(p.is_finite() && **p >= 0.0)) {
        return Err(BeamError::InvalidModel(format!("probability {p} is negative or not finite")));
    }
    let sum: f64 = dist.iter().sum();
    if (sum - 1.0).abs() > DISTRIBUTION_TOLERANCE {
        return Err(BeamError::InvalidModel(format!("distribution sums to {sum}")));
    }
    Ok(())
}

fn checked_distribution<M: TokenModel + ?Sized>(
    model: &M,
    prefix: &[TokenId],
    prompt: &str,
) -> Result<Vec<f64>, BeamError> {
    let dist = model.next_distribution(prefix, prompt)?;
    check_distribution(&dist, model.vocabulary().len())?;
    Ok(dist)
}

/// Sum of per-token log-probabilities of `tokens` under the model.
pub fn score_sequence<M: TokenModel + ?Sized>(model: &M, prompt: &str, tokens: &[TokenId]) -> Result<f64, BeamError> {
    let mut total = 0.0;
    for i in 0..tokens.len() {
        let dist = checked_distribution(model, &tokens[..i], prompt)?;
        total += dist[tokens[i] as usize].ln();
    }
    Ok(total)
}

#[derive(Debug, Clone)]
struct Partial {
    ids: Vec<TokenId>,
    logprob: f64,
}

/// Higher log-probability first, then lexicographically smaller token ids.
fn rank_order(a_lp: f64, a_ids: &[TokenId], b_lp: f64, b_ids: &[TokenId]) -> Ordering {
    b_lp.total_cmp(&a_lp).then_with(|| a_ids.cmp(b_ids))
}

struct Extension {
    parent: usize,
    token: TokenId,
    logprob: f64,
}

/// Beam search returning up to `k` finished hypotheses, best first.
///
/// Each step keeps the `k` best one-token extensions of the live beam.
/// Extensions ending in EOS or reaching `max_len` leave the beam and are
/// frozen; the final answer is the best `k` frozen hypotheses.
pub fn beam_search<M: TokenModel + ?Sized>(
    model: &M,
    prompt: &str,
    config: &BeamConfig,
) -> Result<Vec<Hypothesis>, BeamError> {
    config.validate()?;
    let vocab = model.vocabulary();
    let eos = vocab.eos();
    let k = config.k;

    let mut live = vec![Partial { ids: Vec::new(), logprob: 0.0 }];
    let mut finished: Vec<Partial> = Vec::new();

    for step in 1..=config.max_len {
        if live.is_empty() {
            break;
        }
        // log-probabilities only fall, so once the best live hypothesis is
        // strictly below the k-th frozen one nothing can enter the answer
        if finished.len() >= k {
            sort_partials(&mut finished);
            finished.truncate(k);
            if live[0].logprob < finished[k - 1].logprob {
                break;
            }
        }

        let mut extensions = Vec::with_capacity(live.len() * vocab.len());
        for (parent, hyp) in live.iter().enumerate() {
            let dist = checked_distribution(model, &hyp.ids, prompt)?;
            for (token, &p) in dist.iter().enumerate() {
                if p > 0.0 {
                    extensions.push(Extension {
                        parent,
                        token: token as TokenId,
                        logprob: hyp.logprob + p.ln(),
                    });
                }
            }
        }

        let cmp = |a: &Extension, b: &Extension| {
            b.logprob
                .total_cmp(&a.logprob)
                .then_with(|| live[a.parent].ids.cmp(&live[b.parent].ids))
                .then_with(|| a.token.cmp(&b.token))
        };
        if extensions.len() > k {
            extensions.select_nth_unstable_by(k - 1, cmp);
            extensions.truncate(k);
        }
        extensions.sort_by(cmp);

        let mut next_live = Vec::with_capacity(k);
        for ext in extensions {
            let mut ids = Vec::with_capacity(step);
            ids.extend_from_slice(&live[ext.parent].ids);
            ids.push(ext.token);
            let partial = Partial { ids, logprob: ext.logprob };
            if ext.token == eos || step == config.max_len {
                finished.push(partial);
            } else {
                next_live.push(partial);
            }
        }
        live = next_live;
    }

    sort_partials(&mut finished);
    finished.truncate(k);
    Ok(finished
        .into_iter()
        .map(|p| Hypothesis {
            tokens: vocab.decode(&p.ids),
            cum_logprob: p.logprob,
            finished: true,
        })
        .collect())
}

fn sort_partials(v: &mut [Partial]) {
    v.sort_by(|a, b| rank_order(a.logprob, &a.ids, b.logprob, &b.ids));
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Fixed chain: a -> b -> EOS with certainty.
    struct Chain {
        vocab: Vocabulary,
    }

    impl TokenModel for Chain {
        fn vocabulary(&self) -> &Vocabulary {
            &self.vocab
        }

        fn next_distribution(&self, prefix: &[TokenId], _prompt: &str) -> Result<Vec<f64>, BeamError> {
            let mut d = vec![0.0; 3];
            d[prefix.len().min(2)] = 1.0;
            Ok(d)
        }
    }

    struct Broken {
        vocab: Vocabulary,
        dist: Vec<f64>,
    }

    impl TokenModel for Broken {
        fn vocabulary(&self) -> &Vocabulary {
            &self.vocab
        }

        fn next_distribution(&self, _: &[TokenId], _: &str) -> Result<Vec<f64>, BeamError> {
            Ok(self.dist.clone())
        }
    }

    fn abe() -> Vocabulary {
        Vocabulary::new(vec!["a".into(), "b".into(), "<eos>".into()], "<eos>").unwrap()
    }

    #[test]
    fn deterministic_chain_returns_single_sequence() {
        let m = Chain { vocab: abe() };
        for k in [1, 2, 5] {
            let out = beam_search(&m, "", &BeamConfig::new(k, 6).unwrap()).unwrap();
            assert_eq!(out.len(), 1);
            assert_eq!(out[0].tokens, ["a", "b", "<eos>"]);
            assert_eq!(out[0].cum_logprob, 0.0);
            assert!(out[0].finished);
        }
    }

    #[test]
    fn max_len_forces_finish() {
        let m = Chain { vocab: abe() };
        let out = beam_search(&m, "", &BeamConfig::new(1, 2).unwrap()).unwrap();
        assert_eq!(out[0].tokens, ["a", "b"]);
    }

    #[test]
    fn invalid_distributions_rejected() {
        for dist in [vec![0.5, 0.4, 0.0], vec![1.2, -0.2, 0.0], vec![0.5, 0.5]] {
            let m = Broken { vocab: abe(), dist };
            assert!(matches!(
                beam_search(&m, "", &BeamConfig::default()),
                Err(BeamError::InvalidModel(_))
            ));
        }
    }

    #[test]
    fn equal_scores_break_lexicographically() {
        let m = Broken {
            vocab: abe(),
            dist: vec![0.25, 0.25, 0.5],
        };
        let out = beam_search(&m, "", &BeamConfig::new(3, 2).unwrap()).unwrap();
        let seqs: Vec<Vec<String>> = out.iter().map(|h| h.tokens.clone()).collect();
        assert_eq!(seqs[0], ["<eos>"]);
        // a,a / a,b / ... all share log(1/16); a,<eos> is log(1/8)
        assert_eq!(seqs[1], ["a", "<eos>"]);
        assert_eq!(seqs[2], ["b", "<eos>"]);
    }

    #[test]
    fn zero_config_rejected() {
        assert!(BeamConfig::new(0, 3).is_err());
        assert!(BeamConfig::new(2, 0).is_err());
    }
}
