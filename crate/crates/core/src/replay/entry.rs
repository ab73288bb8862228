use serde::de::{self, Deserializer, Visitor};
use serde::ser::Serializer;
use serde::{Deserialize, Serialize};
use std::fmt;

use super::ReplayError;

/// Test outcome attached to a stored program.
///
/// Persisted as a number (tested), `null` (not yet tested) or the string
/// `"untestable"` (its task could not be resolved during testing).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum PassRate {
    #[default]
    Untested,
    Tested(f64),
    Untestable,
}

impl PassRate {
    pub fn value(&self) -> Option<f64> {
        match self {
            PassRate::Tested(v) => Some(*v),
            _ => None,
        }
    }

    pub fn is_tested(&self) -> bool {
        matches!(self, PassRate::Tested(_))
    }
}

impl Serialize for PassRate {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            PassRate::Untested => s.serialize_none(),
            PassRate::Tested(v) => s.serialize_f64(*v),
            PassRate::Untestable => s.serialize_str("untestable"),
        }
    }
}

impl<'de> Deserialize<'de> for PassRate {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct PassRateVisitor;

        impl<'de> Visitor<'de> for PassRateVisitor {
            type Value = PassRate;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a pass rate in [0,1], null, or \"untestable\"")
            }

            fn visit_unit<E: de::Error>(self) -> Result<PassRate, E> {
                Ok(PassRate::Untested)
            }

            fn visit_none<E: de::Error>(self) -> Result<PassRate, E> {
                Ok(PassRate::Untested)
            }

            fn visit_f64<E: de::Error>(self, v: f64) -> Result<PassRate, E> {
                if (0.0..=1.0).contains(&v) {
                    Ok(PassRate::Tested(v))
                } else {
                    Err(E::custom(format!("pass rate {v} outside [0,1]")))
                }
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> Result<PassRate, E> {
                self.visit_f64(v as f64)
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> Result<PassRate, E> {
                self.visit_f64(v as f64)
            }

            fn visit_str<E: de::Error>(self, v: &str) -> Result<PassRate, E> {
                if v == "untestable" {
                    Ok(PassRate::Untestable)
                } else {
                    Err(E::custom(format!("unknown pass rate marker {v:?}")))
                }
            }
        }

        d.deserialize_any(PassRateVisitor)
    }
}

/// One stored program together with its model probability and test outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReplayEntry {
    pub task_id: String,
    /// Generated tokens, including the end-of-sequence token when the
    /// hypothesis terminated on it.
    pub program_tokens: Vec<String>,
    pub program_text: String,
    /// Natural log of the product of per-token probabilities.
    pub seq_logprob: f64,
    /// `exp(seq_logprob / token_count)`: per-token geometric mean probability.
    pub seq_prob_normalized: f64,
    pub pass_rate: PassRate,
    pub insertion_index: u64,
}

impl ReplayEntry {
    /// Builds an untested entry. The insertion index is assigned by the buffer.
    pub fn new(
        task_id: impl Into<String>,
        program_tokens: Vec<String>,
        program_text: impl Into<String>,
        seq_logprob: f64,
    ) -> Result<Self, ReplayError> {
        let seq_prob_normalized = normalized_probability(seq_logprob, program_tokens.len())?;
        Ok(Self {
            task_id: task_id.into(),
            program_tokens,
            program_text: program_text.into(),
            seq_logprob,
            seq_prob_normalized,
            pass_rate: PassRate::Untested,
            insertion_index: 0,
        })
    }

    pub fn token_count(&self) -> usize {
        self.program_tokens.len()
    }

    pub fn validate(&self) -> Result<(), ReplayError> {
        let expected = normalized_probability(self.seq_logprob, self.program_tokens.len())?;
        if expected.to_bits() != self.seq_prob_normalized.to_bits() {
            return Err(ReplayError::MalformedEntry(format!(
                "seq_prob_normalized {} does not match exp(seq_logprob / token_count) = {}",
                self.seq_prob_normalized, expected
            )));
        }
        if let PassRate::Tested(rate) = self.pass_rate {
            if !(0.0..=1.0).contains(&rate) {
                return Err(ReplayError::MalformedEntry(format!(
                    "pass rate {rate} outside [0,1]"
                )));
            }
        }
        Ok(())
    }
}

/// Length-normalised sequence probability, `exp(mean token log-probability)`.
pub fn normalized_probability(seq_logprob: f64, token_count: usize) -> Result<f64, ReplayError> {
    if token_count == 0 {
        return Err(ReplayError::MalformedEntry(
            "program has no tokens".to_string(),
        ));
    }
    if !seq_logprob.is_finite() || seq_logprob > 0.0 {
        return Err(ReplayError::MalformedEntry(format!(
            "sequence log-probability {seq_logprob} must be finite and <= 0"
        )));
    }
    Ok((seq_logprob / token_count as f64).exp())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalized_probability_is_geometric_mean() {
        let lp = (0.5f64).ln() + (0.125f64).ln();
        let p = normalized_probability(lp, 2).unwrap();
        assert!((p - 0.25).abs() < 1e-15);
    }

    #[test]
    fn rejects_positive_logprob_and_empty_program() {
        assert!(normalized_probability(0.1, 3).is_err());
        assert!(normalized_probability(-1.0, 0).is_err());
        assert!(normalized_probability(f64::NEG_INFINITY, 2).is_err());
    }

    #[test]
    fn pass_rate_json_forms() {
        let s = serde_json::to_string(&[PassRate::Untested, PassRate::Tested(0.5), PassRate::Untestable]).unwrap();
        assert_eq!(s, r#"[null,0.5,"untestable"]"#);
        let back: Vec<PassRate> = serde_json::from_str(&s).unwrap();
        assert_eq!(back, vec![PassRate::Untested, PassRate::Tested(0.5), PassRate::Untestable]);
        assert!(serde_json::from_str::<PassRate>("1.5").is_err());
        assert!(serde_json::from_str::<PassRate>("1").unwrap().is_tested());
    }
}
