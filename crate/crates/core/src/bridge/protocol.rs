//! Line-delimited JSON messages exchanged with an external model process.

use serde::{Deserialize, Serialize};

use super::BridgeError;

pub const PROTOCOL_VERSION: &str = "btp-bridge/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase", deny_unknown_fields)]
pub enum BridgeRequest {
    /// Next-token log-probabilities after `prefix`.
    Token {
        version: String,
        prompt: String,
        prefix: Vec<String>,
    },
    /// Up to `k` whole programs decoded server-side.
    Sequence {
        version: String,
        prompt: String,
        k: usize,
        max_tokens: usize,
    },
}

impl BridgeRequest {
    pub fn token(prompt: &str, prefix: Vec<String>) -> Self {
        BridgeRequest::Token {
            version: PROTOCOL_VERSION.into(),
            prompt: prompt.into(),
            prefix,
        }
    }

    pub fn sequence(prompt: &str, k: usize, max_tokens: usize) -> Self {
        BridgeRequest::Sequence {
            version: PROTOCOL_VERSION.into(),
            prompt: prompt.into(),
            k,
            max_tokens,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SequenceCandidate {
    pub text: String,
    pub tokens: Vec<String>,
    pub seq_logprob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase", deny_unknown_fields)]
pub enum BridgeResponse {
    Token {
        version: String,
        tokens: Vec<String>,
        logprobs: Vec<f64>,
    },
    Sequence {
        version: String,
        candidates: Vec<SequenceCandidate>,
    },
}

impl BridgeResponse {
    fn version(&self) -> &str {
        match self {
            BridgeResponse::Token { version, .. } | BridgeResponse::Sequence { version, .. } => version,
        }
    }

    /// Checks the message invariants: version, aligned non-positive
    /// log-probabilities, candidates best first.
    pub fn validate(&self) -> Result<(), BridgeError> {
        if self.version() != PROTOCOL_VERSION {
            return Err(BridgeError::Protocol {
                message: format!("unsupported version {:?}", self.version()),
                payload: String::new(),
            });
        }
        let invalid = |m: String| Err(BridgeError::InvalidResponse(m));
        match self {
            BridgeResponse::Token { tokens, logprobs, .. } => {
                if tokens.len() != logprobs.len() {
                    return invalid(format!("{} tokens but {} logprobs", tokens.len(), logprobs.len()));
                }
                if let Some(lp) = logprobs.iter().find(|lp| lp.is_nan() || **lp > 0.0) {
                    return invalid(format!("log-probability {lp} is positive or NaN"));
                }
            }
            BridgeResponse::Sequence { candidates, .. } => {
                for c in candidates {
                    if !(c.seq_logprob.is_finite() && c.seq_logprob <= 0.0) {
                        return invalid(format!(
                            "candidate {:?} has invalid log-probability {}",
                            c.text, c.seq_logprob
                        ));
                    }
                    if c.tokens.is_empty() {
                        return invalid(format!("candidate {:?} has no tokens", c.text));
                    }
                }
                if candidates.windows(2).any(|w| w[0].seq_logprob < w[1].seq_logprob) {
                    return invalid("candidates are not sorted by seq_logprob descending".into());
                }
            }
        }
        Ok(())
    }
}

pub fn encode_request(req: &BridgeRequest) -> String {
    serde_json::to_string(req).expect("request serialises")
}

pub fn parse_request(line: &str) -> Result<BridgeRequest, BridgeError> {
    serde_json::from_str(line.trim_end()).map_err(|e| BridgeError::Protocol {
        message: e.to_string(),
        payload: line.to_string(),
    })
}

pub fn encode_response(resp: &BridgeResponse) -> String {
    serde_json::to_string(resp).expect("response serialises")
}

pub fn parse_response(line: &str) -> Result<BridgeResponse, BridgeError> {
    let resp: BridgeResponse = serde_json::from_str(line.trim_end()).map_err(|e| BridgeError::Protocol {
        message: e.to_string(),
        payload: line.to_string(),
    })?;
    resp.validate().map_err(|e| match e {
        BridgeError::Protocol { message, .. } => BridgeError::Protocol {
            message,
            payload: line.to_string(),
        },
        other => other,
    })?;
    Ok(resp)
}
