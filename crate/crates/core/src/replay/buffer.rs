use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::VecDeque;

use super::priority::{p2value, powered_priorities, priorities_from_values};
use super::sum_tree::SumTree;
use super::{PassRate, PriorityConfig, ReplayEntry, ReplayError};

/// Ordered, optionally bounded store of replay entries.
///
/// Entries iterate in insertion order. A bounded buffer evicts its oldest
/// entry when a new one arrives at capacity.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayBuffer {
    entries: VecDeque<ReplayEntry>,
    capacity: Option<usize>,
    rng_seed: u64,
    next_index: u64,
}

impl ReplayBuffer {
    pub fn new(capacity: Option<usize>, rng_seed: u64) -> Result<Self, ReplayError> {
        if capacity == Some(0) {
            return Err(ReplayError::InvalidConfig("capacity must be positive".into()));
        }
        Ok(Self {
            entries: VecDeque::new(),
            capacity,
            rng_seed,
            next_index: 0,
        })
    }

    pub fn unbounded(rng_seed: u64) -> Self {
        Self::new(None, rng_seed).expect("unbounded buffer is always valid")
    }

    pub(crate) fn from_parts(
        entries: Vec<ReplayEntry>,
        capacity: Option<usize>,
        rng_seed: u64,
    ) -> Result<Self, ReplayError> {
        let mut buffer = Self::new(capacity, rng_seed)?;
        let mut last: Option<u64> = None;
        for entry in &entries {
            entry.validate()?;
            if last.is_some_and(|l| entry.insertion_index <= l) {
                return Err(ReplayError::MalformedEntry(format!(
                    "insertion_index {} is not increasing",
                    entry.insertion_index
                )));
            }
            last = Some(entry.insertion_index);
        }
        if capacity.is_some_and(|c| entries.len() > c) {
            return Err(ReplayError::MalformedEntry(format!(
                "{} entries exceed capacity {}",
                entries.len(),
                capacity.unwrap_or_default()
            )));
        }
        buffer.next_index = last.map_or(0, |l| l + 1);
        buffer.entries = entries.into();
        Ok(buffer)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn capacity(&self) -> Option<usize> {
        self.capacity
    }

    pub fn rng_seed(&self) -> u64 {
        self.rng_seed
    }

    pub fn iter(&self) -> impl Iterator<Item = &ReplayEntry> {
        self.entries.iter()
    }

    pub fn get(&self, position: usize) -> Option<&ReplayEntry> {
        self.entries.get(position)
    }

    pub(crate) fn entries_mut(&mut self) -> impl Iterator<Item = &mut ReplayEntry> {
        self.entries.iter_mut()
    }

    /// Appends an entry, assigning it the next insertion index.
    ///
    /// Returns the evicted entry when the buffer was full.
    pub fn insert(&mut self, mut entry: ReplayEntry) -> Result<Option<ReplayEntry>, ReplayError> {
        entry.insertion_index = self.next_index;
        entry.validate()?;
        self.next_index += 1;
        let evicted = match self.capacity {
            Some(cap) if self.entries.len() >= cap => self.entries.pop_front(),
            _ => None,
        };
        self.entries.push_back(entry);
        Ok(evicted)
    }

    /// Number of entries carrying no pass rate yet.
    pub fn untested_count(&self) -> usize {
        self.entries
            .iter()
            .filter(|e| e.pass_rate == PassRate::Untested)
            .count()
    }

    /// Positions and P2Values of every entry eligible for replay.
    ///
    /// Untestable entries are skipped; any untested entry is an error.
    pub fn p2values(&self, mix_weight: f64) -> Result<Vec<(usize, f64)>, ReplayError> {
        if self.entries.is_empty() {
            return Err(ReplayError::EmptyBuffer);
        }
        let mut out = Vec::with_capacity(self.entries.len());
        for (pos, entry) in self.entries.iter().enumerate() {
            match entry.pass_rate {
                PassRate::Untestable => continue,
                _ => out.push((pos, p2value(entry, mix_weight)?)),
            }
        }
        if out.is_empty() {
            return Err(ReplayError::NoEligibleEntries);
        }
        Ok(out)
    }

    /// Priorities of every eligible entry, paired with its buffer position.
    pub fn priorities(&self, config: &PriorityConfig) -> Result<Vec<(usize, f64)>, ReplayError> {
        config.validate()?;
        let values = self.p2values(config.mix_weight)?;
        let raw: Vec<f64> = values.iter().map(|(_, v)| *v).collect();
        let prios = priorities_from_values(&raw, config.scheme)?;
        Ok(values.into_iter().map(|(p, _)| p).zip(prios).collect())
    }

    /// Exact sampling probability of every eligible entry.
    pub fn sampling_distribution(&self, config: &PriorityConfig) -> Result<Vec<(usize, f64)>, ReplayError> {
        let sampler = PrioritySampler::new(self, config)?;
        Ok(sampler.distribution())
    }

    /// Draws `n` entries according to the prioritized distribution.
    pub fn sample(
        &self,
        config: &PriorityConfig,
        n: usize,
        seed: u64,
    ) -> Result<Vec<&ReplayEntry>, ReplayError> {
        let sampler = PrioritySampler::new(self, config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let positions = sampler.draw(n, config.with_replacement, &mut rng)?;
        Ok(positions.into_iter().map(|p| &self.entries[p]).collect())
    }
}

/// How a sampler's distribution was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingMode {
    /// Every eligible entry weighted by its powered priority.
    Prioritized,
    /// Entries with zero P2Value (proportional scheme) were left out.
    ZeroPriorityExcluded,
    /// Every P2Value was zero; entries are drawn uniformly.
    UniformFallback,
}

/// Immutable snapshot of the prioritized distribution over a buffer.
#[derive(Debug, Clone)]
pub struct PrioritySampler {
    positions: Vec<usize>,
    tree: SumTree,
}

impl PrioritySampler {
    pub fn new(buffer: &ReplayBuffer, config: &PriorityConfig) -> Result<Self, ReplayError> {
        let prios = buffer.priorities(config)?;
        let (positions, values): (Vec<usize>, Vec<f64>) = prios.into_iter().unzip();
        let weights = powered_priorities(&values, config.prioritization_exponent)?;
        Ok(Self::from_weights(positions, &weights))
    }

    /// Prioritized sampler that tolerates zero P2Values.
    ///
    /// All-zero P2Values fall back to uniform sampling over the eligible
    /// entries. Under the proportional scheme, zero-priority entries among
    /// positive ones get probability zero, the limit of `p^beta` for `beta > 0`.
    pub fn with_fallback(buffer: &ReplayBuffer, config: &PriorityConfig) -> Result<(Self, SamplingMode), ReplayError> {
        config.validate()?;
        let values = buffer.p2values(config.mix_weight)?;
        if values.iter().all(|(_, v)| *v == 0.0) {
            let positions = values.into_iter().map(|(p, _)| p).collect();
            return Ok((Self::uniform(positions), SamplingMode::UniformFallback));
        }
        let prios = buffer.priorities(config)?;
        let total = prios.len();
        let (positions, values): (Vec<usize>, Vec<f64>) = prios.into_iter().filter(|(_, p)| *p > 0.0).unzip();
        let mode = if positions.len() < total {
            SamplingMode::ZeroPriorityExcluded
        } else {
            SamplingMode::Prioritized
        };
        let weights = powered_priorities(&values, config.prioritization_exponent)?;
        Ok((Self::from_weights(positions, &weights), mode))
    }

    /// Equal probability for every position, for degenerate priority sets.
    pub fn uniform(positions: Vec<usize>) -> Self {
        let weights = vec![1.0; positions.len()];
        Self::from_weights(positions, &weights)
    }

    pub(crate) fn from_weights(positions: Vec<usize>, weights: &[f64]) -> Self {
        Self {
            tree: SumTree::new(weights),
            positions,
        }
    }

    pub fn distribution(&self) -> Vec<(usize, f64)> {
        let total = self.tree.total();
        self.positions
            .iter()
            .enumerate()
            .map(|(i, &pos)| (pos, self.tree.weight(i) / total))
            .collect()
    }

    /// Buffer positions of `n` draws.
    pub fn draw<R: Rng>(&self, n: usize, with_replacement: bool, rng: &mut R) -> Result<Vec<usize>, ReplayError> {
        if self.positions.is_empty() {
            return Err(ReplayError::EmptyBuffer);
        }
        if with_replacement {
            let total = self.tree.total();
            return Ok((0..n)
                .map(|_| self.positions[self.tree.find(rng.gen::<f64>() * total)])
                .collect());
        }
        if n > self.positions.len() {
            return Err(ReplayError::NotEnoughEntries {
                requested: n,
                available: self.positions.len(),
            });
        }
        let mut tree = self.tree.clone();
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            let idx = tree.find(rng.gen::<f64>() * tree.total());
            out.push(self.positions[idx]);
            tree.set(idx, 0.0);
        }
        Ok(out)
    }
}
