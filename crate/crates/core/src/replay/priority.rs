use serde::{Deserialize, Serialize};

use super::{ReplayEntry, ReplayError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorityScheme {
    /// Priority is the P2Value itself.
    Proportional,
    /// Priority is `1 / rank` of the P2Value, rank 1 being the largest.
    Rank,
}

/// Parameters of the P2Value priority and the prioritized sampling law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorityConfig {
    /// Weight of the model probability against the pass rate, in [0,1].
    pub mix_weight: f64,
    /// Exponent applied to priorities before normalisation, >= 0.
    pub prioritization_exponent: f64,
    pub scheme: PriorityScheme,
    /// Draw with replacement (the default) or without.
    #[serde(default = "default_replacement")]
    pub with_replacement: bool,
}

fn default_replacement() -> bool {
    true
}

impl Default for PriorityConfig {
    fn default() -> Self {
        Self {
            mix_weight: 0.5,
            prioritization_exponent: 1.0,
            scheme: PriorityScheme::Rank,
            with_replacement: true,
        }
    }
}

impl PriorityConfig {
    pub fn validate(&self) -> Result<(), ReplayError> {
        check_mix_weight(self.mix_weight)?;
        if !(self.prioritization_exponent.is_finite() && self.prioritization_exponent >= 0.0) {
            return Err(ReplayError::InvalidConfig(format!(
                "prioritization_exponent must be finite and >= 0, got {}",
                self.prioritization_exponent
            )));
        }
        Ok(())
    }
}

fn check_mix_weight(mix_weight: f64) -> Result<(), ReplayError> {
    if (0.0..=1.0).contains(&mix_weight) {
        Ok(())
    } else {
        Err(ReplayError::InvalidConfig(format!(
            "mix_weight must lie in [0,1], got {mix_weight}"
        )))
    }
}

/// P2Value of a tested entry: `mix_weight * P(t) + (1 - mix_weight) * pass_rate`.
pub fn p2value(entry: &ReplayEntry, mix_weight: f64) -> Result<f64, ReplayError> {
    check_mix_weight(mix_weight)?;
    let pass_rate = entry
        .pass_rate
        .value()
        .ok_or(ReplayError::UntestedEntry(entry.insertion_index))?;
    Ok(mix_weight * entry.seq_prob_normalized + (1.0 - mix_weight) * pass_rate)
}

/// Priorities for a sequence of P2Values, in input order.
///
/// Position in the slice doubles as insertion order for rank tie-breaks.
pub fn priorities_from_values(values: &[f64], scheme: PriorityScheme) -> Result<Vec<f64>, ReplayError> {
    if values.is_empty() {
        return Err(ReplayError::EmptyBuffer);
    }
    match scheme {
        PriorityScheme::Proportional => Ok(values.to_vec()),
        PriorityScheme::Rank => {
            let ranks = descending_ranks(values);
            Ok(ranks.into_iter().map(|r| 1.0 / r as f64).collect())
        }
    }
}

/// 1-based ranks by descending value; equal values rank earlier-first.
pub fn descending_ranks(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    // stable sort keeps lower positions first among ties
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    let mut ranks = vec![0; values.len()];
    for (rank, idx) in order.into_iter().enumerate() {
        ranks[idx] = rank + 1;
    }
    ranks
}

/// `P(i) = p_i^beta / sum_k p_k^beta`.
pub fn sampling_distribution(priorities: &[f64], exponent: f64) -> Result<Vec<f64>, ReplayError> {
    let powered = powered_priorities(priorities, exponent)?;
    let total: f64 = powered.iter().sum();
    Ok(powered.into_iter().map(|w| w / total).collect())
}

/// `p_i^beta` for every priority, checking positivity first.
pub(crate) fn powered_priorities(priorities: &[f64], exponent: f64) -> Result<Vec<f64>, ReplayError> {
    if priorities.is_empty() {
        return Err(ReplayError::EmptyBuffer);
    }
    if !(exponent.is_finite() && exponent >= 0.0) {
        return Err(ReplayError::InvalidConfig(format!(
            "prioritization_exponent must be finite and >= 0, got {exponent}"
        )));
    }
    if let Some((i, p)) = priorities
        .iter()
        .enumerate()
        .find(|(_, p)| !(p.is_finite() && **p > 0.0))
    {
        return Err(ReplayError::NonPositivePriority { position: i, value: *p });
    }
    let powered: Vec<f64> = priorities.iter().map(|p| p.powf(exponent)).collect();
    if let Some((i, w)) = powered.iter().enumerate().find(|(_, w)| !(w.is_finite() && **w > 0.0)) {
        return Err(ReplayError::NonPositivePriority { position: i, value: *w });
    }
    Ok(powered)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::replay::PassRate;

    fn entry(prob: f64, pass: f64) -> ReplayEntry {
        ReplayEntry {
            task_id: "t".into(),
            program_tokens: vec!["x".into()],
            program_text: "x".into(),
            seq_logprob: prob.ln(),
            seq_prob_normalized: prob,
            pass_rate: PassRate::Tested(pass),
            insertion_index: 0,
        }
    }

    #[test]
    fn p2value_examples() {
        assert!((p2value(&entry(0.8, 0.4), 0.5).unwrap() - 0.6).abs() < 1e-15);
        assert_eq!(p2value(&entry(0.3, 0.7), 1.0).unwrap(), 0.3);
        assert_eq!(p2value(&entry(0.3, 0.7), 0.0).unwrap(), 0.7);
    }

    #[test]
    fn p2value_rejects_untested_and_bad_weight() {
        let mut e = entry(0.5, 0.5);
        e.pass_rate = PassRate::Untested;
        assert!(matches!(p2value(&e, 0.5), Err(ReplayError::UntestedEntry(_))));
        assert!(p2value(&entry(0.5, 0.5), 1.5).is_err());
    }

    #[test]
    fn rank_and_proportional_examples() {
        let v = [0.9, 0.5, 0.7];
        assert_eq!(priorities_from_values(&v, PriorityScheme::Rank).unwrap(), vec![1.0, 1.0 / 3.0, 0.5]);
        assert_eq!(priorities_from_values(&v, PriorityScheme::Proportional).unwrap(), v.to_vec());
        assert_eq!(
            priorities_from_values(&[0.4, 0.4], PriorityScheme::Rank).unwrap(),
            vec![1.0, 0.5]
        );
        assert!(matches!(
            priorities_from_values(&[], PriorityScheme::Rank),
            Err(ReplayError::EmptyBuffer)
        ));
    }

    #[test]
    fn distribution_examples() {
        let d = sampling_distribution(&[2.0, 1.0, 1.0], 1.0).unwrap();
        assert_eq!(d, vec![0.5, 0.25, 0.25]);
        let d = sampling_distribution(&[4.0, 1.0], 0.5).unwrap();
        assert!((d[0] - 2.0 / 3.0).abs() < 1e-15 && (d[1] - 1.0 / 3.0).abs() < 1e-15);
        let d = sampling_distribution(&[0.9, 0.1, 0.5], 0.0).unwrap();
        assert!(d.iter().all(|p| (p - 1.0 / 3.0).abs() < 1e-15));
    }

    #[test]
    fn distribution_rejects_non_positive() {
        assert!(matches!(
            sampling_distribution(&[1.0, 0.0], 1.0),
            Err(ReplayError::NonPositivePriority { position: 1, .. })
        ));
        assert!(sampling_distribution(&[1.0, -2.0], 0.0).is_err());
    }
}
