use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use super::{score_sequence, BeamError, TokenId, TokenModel, Vocabulary};

const BOS: &str = "<s>";

/// Laplace-smoothed n-gram model over program tokens, trainable by count updates.
///
/// The context of a token is the previous `order - 1` generated tokens,
/// padded with a start marker. The prompt is not part of the context.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToyLm {
    order: usize,
    smoothing: f64,
    vocabulary: Vocabulary,
    /// Context key -> per-token counts, indexed like the vocabulary.
    counts: BTreeMap<String, Vec<f64>>,
}

/// Programs the default model is pretrained on; repeats weight the counts.
const PRETRAIN_CORPUS: &[&str] = &[
    "x 2 *", "x 2 *", "x 2 *", "x x *", "x x *", "x 1 +", "x 1 +",
    "x 3 *", "x 1 -", "x 2 +", "x x +", "x 5 +", "x 2 -", "x 9 *",
];

impl ToyLm {
    pub fn new(vocabulary: Vocabulary, order: usize, smoothing: f64) -> Result<Self, BeamError> {
        check_params(order, smoothing)?;
        Ok(Self {
            order,
            smoothing,
            vocabulary,
            counts: BTreeMap::new(),
        })
    }

    /// Bigram model over the toy vocabulary, trained once on a small corpus
    /// of arithmetic programs.
    pub fn pretrained() -> Self {
        let mut lm = Self::new(Vocabulary::toy(), 2, 0.1).expect("valid defaults");
        for program in PRETRAIN_CORPUS {
            let mut tokens: Vec<&str> = program.split_whitespace().collect();
            tokens.push(super::vocab::DEFAULT_EOS);
            lm.update(&tokens, 1.0).expect("corpus uses the toy vocabulary");
        }
        lm
    }

    /// Model with independent uniform counts in `[0, max_count)` for every
    /// context built from non-EOS tokens.
    pub fn random<R: Rng>(
        vocabulary: Vocabulary,
        order: usize,
        smoothing: f64,
        max_count: f64,
        rng: &mut R,
    ) -> Result<Self, BeamError> {
        let mut lm = Self::new(vocabulary, order, smoothing)?;
        let v = lm.vocabulary.len();
        let eos = lm.vocabulary.eos();
        let non_eos: Vec<TokenId> = (0..v as TokenId).filter(|&t| t != eos).collect();
        // every history of length < order made of non-EOS tokens
        let mut histories: Vec<Vec<TokenId>> = vec![Vec::new()];
        let mut frontier = histories.clone();
        for _ in 1..order {
            frontier = frontier
                .iter()
                .flat_map(|h| {
                    non_eos.iter().map(move |&t| {
                        let mut n = h.clone();
                        n.push(t);
                        n
                    })
                })
                .collect();
            histories.extend(frontier.iter().cloned());
        }
        for h in histories {
            let key = lm.context_key(&h);
            let row = (0..v).map(|_| rng.gen::<f64>() * max_count).collect();
            lm.counts.insert(key, row);
        }
        Ok(lm)
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn smoothing(&self) -> f64 {
        self.smoothing
    }

    pub fn counts(&self) -> &BTreeMap<String, Vec<f64>> {
        &self.counts
    }

    fn context_key(&self, prefix: &[TokenId]) -> String {
        let width = self.order - 1;
        let start = prefix.len().saturating_sub(width);
        let pad = width - (prefix.len() - start);
        let mut parts: Vec<&str> = vec![BOS; pad];
        parts.extend(prefix[start..].iter().map(|&t| self.vocabulary.token(t)));
        parts.join(" ")
    }

    /// Smoothed conditional distribution for one context.
    pub fn distribution(&self, prefix: &[TokenId]) -> Vec<f64> {
        let v = self.vocabulary.len();
        let s = self.smoothing;
        match self.counts.get(&self.context_key(prefix)) {
            Some(row) => {
                let denom: f64 = row.iter().sum::<f64>() + s * v as f64;
                row.iter().map(|c| (c + s) / denom).collect()
            }
            None => vec![1.0 / v as f64; v],
        }
    }

    /// Log-probability of a token sequence given as strings.
    pub fn sequence_logprob<S: AsRef<str>>(&self, tokens: &[S]) -> Result<f64, BeamError> {
        let ids = self.vocabulary.encode(tokens)?;
        score_sequence(self, "", &ids)
    }

    /// Adds `weight` to the count of every (context, token) transition along `sequence`.
    pub fn update<S: AsRef<str>>(&mut self, sequence: &[S], weight: f64) -> Result<(), BeamError> {
        if !(weight.is_finite() && weight > 0.0) {
            return Err(BeamError::InvalidWeight(weight));
        }
        let ids = self.vocabulary.encode(sequence)?;
        let v = self.vocabulary.len();
        for i in 0..ids.len() {
            let key = self.context_key(&ids[..i]);
            self.counts.entry(key).or_insert_with(|| vec![0.0; v])[ids[i] as usize] += weight;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<(), BeamError> {
        let text = serde_json::to_string_pretty(self).expect("model serialises");
        fs::write(path, text).map_err(|e| BeamError::Io(format!("{}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> Result<Self, BeamError> {
        let text = fs::read_to_string(path).map_err(|e| BeamError::Io(format!("{}: {e}", path.display())))?;
        let lm: ToyLm = serde_json::from_str(&text).map_err(|e| BeamError::Io(format!("{}: {e}", path.display())))?;
        lm.check()?;
        Ok(lm)
    }

    fn check(&self) -> Result<(), BeamError> {
        check_params(self.order, self.smoothing)?;
        for (ctx, row) in &self.counts {
            if row.len() != self.vocabulary.len() || row.iter().any(|c| !(c.is_finite() && *c >= 0.0)) {
                return Err(BeamError::InvalidModel(format!("bad count row for context {ctx:?}")));
            }
        }
        Ok(())
    }
}

fn check_params(order: usize, smoothing: f64) -> Result<(), BeamError> {
    if order == 0 {
        return Err(BeamError::InvalidConfig("n-gram order must be >= 1".into()));
    }
    if !(smoothing.is_finite() && smoothing > 0.0) {
        return Err(BeamError::InvalidConfig(format!(
            "Laplace smoothing must be finite and > 0, got {smoothing}"
        )));
    }
    Ok(())
}

/// Count-based fine-tuning step: returns a copy of `model` updated on `sequence`.
pub fn toy_update<S: AsRef<str>>(model: &ToyLm, sequence: &[S], weight: f64) -> Result<ToyLm, BeamError> {
    let mut next = model.clone();
    next.update(sequence, weight)?;
    Ok(next)
}

impl TokenModel for ToyLm {
    fn vocabulary(&self) -> &Vocabulary {
        &self.vocabulary
    }

    fn next_distribution(&self, prefix: &[TokenId], _prompt: &str) -> Result<Vec<f64>, BeamError> {
        Ok(self.distribution(prefix))
    }
}
