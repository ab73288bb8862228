//! Adapters that let an external model process stand in for the token model
//! or for the whole candidate generator.

mod protocol;
mod transport;

use std::sync::Mutex;
use std::time::Duration;
use thiserror::Error;

use crate::beam::{
    BeamConfig, BeamError, Candidate, CandidateSource, Hypothesis, TokenId, TokenModel, Vocabulary,
};

pub use protocol::{
    encode_request, encode_response, parse_request, parse_response, BridgeRequest, BridgeResponse,
    SequenceCandidate, PROTOCOL_VERSION,
};
pub use transport::{ProcessTransport, Transport};

/// Token-mode distributions within this distance of 1 are renormalised.
pub const RENORMALIZE_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum BridgeError {
    #[error("protocol error: {message} (payload: {payload:?})")]
    Protocol { message: String, payload: String },
    #[error("invalid response: {0}")]
    InvalidResponse(String),
    #[error("bridge closed")]
    Closed,
    #[error("bridge did not answer within {0:?}")]
    Timeout(Duration),
    #[error("cannot start bridge: {0}")]
    Spawn(String),
}

impl From<BridgeError> for BeamError {
    fn from(e: BridgeError) -> Self {
        BeamError::Backend(e.to_string())
    }
}

fn exchange<T: Transport>(transport: &Mutex<T>, req: &BridgeRequest) -> Result<BridgeResponse, BridgeError> {
    let line = encode_request(req);
    let reply = {
        let mut t = transport.lock().unwrap_or_else(|p| p.into_inner());
        t.round_trip(&line)?
    };
    parse_response(&reply)
}

/// Wraps a token-mode server as a [`TokenModel`] so beam search runs engine-side.
pub struct TokenAdapter<T> {
    vocabulary: Vocabulary,
    transport: Mutex<T>,
}

impl<T: Transport> TokenAdapter<T> {
    pub fn new(vocabulary: Vocabulary, transport: T) -> Self {
        Self {
            vocabulary,
            transport: Mutex::new(transport),
        }
    }

    fn distribution(&self, prefix: &[TokenId], prompt: &str) -> Result<Vec<f64>, BridgeError> {
        let req = BridgeRequest::token(prompt, self.vocabulary.decode(prefix));
        let (tokens, logprobs) = match exchange(&self.transport, &req)? {
            BridgeResponse::Token { tokens, logprobs, .. } => (tokens, logprobs),
            other => {
                return Err(BridgeError::Protocol {
                    message: "expected a token-mode response".into(),
                    payload: encode_response(&other),
                })
            }
        };
        let mut dist = vec![0.0; self.vocabulary.len()];
        let mut seen = vec![false; self.vocabulary.len()];
        for (tok, lp) in tokens.iter().zip(&logprobs) {
            let id = self
                .vocabulary
                .id(tok)
                .map_err(|_| BridgeError::InvalidResponse(format!("token {tok:?} not in vocabulary")))?
                as usize;
            if std::mem::replace(&mut seen[id], true) {
                return Err(BridgeError::InvalidResponse(format!("token {tok:?} listed twice")));
            }
            dist[id] = lp.exp();
        }
        let sum: f64 = dist.iter().sum();
        // tolerance plus a little slack for exp/ln round-off
        if (sum - 1.0).abs() > RENORMALIZE_TOLERANCE + 1e-12 {
            return Err(BridgeError::InvalidResponse(format!("probabilities sum to {sum}")));
        }
        dist.iter_mut().for_each(|p| *p /= sum);
        Ok(dist)
    }
}

impl<T: Transport> TokenModel for TokenAdapter<T> {
    fn vocabulary(&self) -> &Vocabulary {
        &self.vocabulary
    }

    fn next_distribution(&self, prefix: &[TokenId], prompt: &str) -> Result<Vec<f64>, BeamError> {
        Ok(self.distribution(prefix, prompt)?)
    }
}

/// Candidates returned by a sequence-mode server for one prompt.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceFetch {
    pub candidates: Vec<Candidate>,
    /// How many of the requested `k` did not arrive.
    pub shortfall: usize,
}

/// Wraps a sequence-mode server that decodes whole programs itself.
pub struct SequenceAdapter<T> {
    transport: Mutex<T>,
}

impl<T: Transport> SequenceAdapter<T> {
    pub fn new(transport: T) -> Self {
        Self {
            transport: Mutex::new(transport),
        }
    }

    pub fn fetch(&self, prompt: &str, k: usize, max_tokens: usize) -> Result<SequenceFetch, BridgeError> {
        let req = BridgeRequest::sequence(prompt, k, max_tokens);
        let candidates = match exchange(&self.transport, &req)? {
            BridgeResponse::Sequence { candidates, .. } => candidates,
            other => {
                return Err(BridgeError::Protocol {
                    message: "expected a sequence-mode response".into(),
                    payload: encode_response(&other),
                })
            }
        };
        let shortfall = k.saturating_sub(candidates.len());
        if shortfall > 0 {
            log::warn!("bridge returned {} of {k} candidates", candidates.len());
        }
        let candidates = candidates
            .into_iter()
            .take(k)
            .map(|c| Candidate {
                hypothesis: Hypothesis {
                    tokens: c.tokens,
                    cum_logprob: c.seq_logprob,
                    finished: true,
                },
                text: c.text,
            })
            .collect();
        Ok(SequenceFetch { candidates, shortfall })
    }
}

impl<T: Transport> CandidateSource for SequenceAdapter<T> {
    fn candidates(&self, prompt: &str, config: &BeamConfig) -> Result<Vec<Candidate>, BeamError> {
        Ok(self.fetch(prompt, config.k, config.max_len)?.candidates)
    }
}
