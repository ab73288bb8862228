use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::TrainerError;
use crate::harness::TaskIndex;
use crate::replay::{persist, PriorityConfig, PrioritySampler, ReplayBuffer, SamplingMode};

pub const MINIBATCH_FORMAT: &str = "btp-minibatch/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinibatchRecord {
    pub task_id: String,
    pub prompt: String,
    pub program_text: String,
    pub program_tokens: Vec<String>,
    pub sample_weight: f64,
    /// Buffer entry this record was drawn from.
    pub insertion_index: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: u64,
    pub priority: PriorityConfig,
    /// SHA-256 of the buffer's persisted form at sampling time.
    pub buffer_version: String,
    pub sampling: SamplingMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Minibatch {
    pub entries: Vec<MinibatchRecord>,
    pub provenance: Provenance,
}

pub fn buffer_version(buffer: &ReplayBuffer) -> String {
    hex::encode(Sha256::digest(persist::to_ndjson(buffer).as_bytes()))
}

/// Draws `n` records from a tested buffer by prioritized sampling.
///
/// Duplicated draws are kept as separate records of weight 1.
pub fn build_minibatch(
    buffer: &ReplayBuffer,
    tasks: &TaskIndex,
    config: &PriorityConfig,
    n: usize,
    seed: u64,
) -> Result<Minibatch, TrainerError> {
    if n == 0 {
        return Err(TrainerError::InvalidConfig("minibatch size must be >= 1".into()));
    }
    let (sampler, sampling) = PrioritySampler::with_fallback(buffer, config)?;
    if sampling == SamplingMode::UniformFallback {
        log::warn!("degenerate priorities: every P2Value is zero, sampling uniformly");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let positions = sampler.draw(n, config.with_replacement, &mut rng)?;
    let mut entries = Vec::with_capacity(n);
    for pos in positions {
        let e = buffer.get(pos).expect("sampler positions index the buffer");
        let task = tasks
            .get(&e.task_id)
            .ok_or_else(|| TrainerError::MissingTask(e.task_id.clone()))?;
        entries.push(MinibatchRecord {
            task_id: e.task_id.clone(),
            prompt: task.prompt.clone(),
            program_text: e.program_text.clone(),
            program_tokens: e.program_tokens.clone(),
            sample_weight: 1.0,
            insertion_index: e.insertion_index,
        });
    }
    Ok(Minibatch {
        entries,
        provenance: Provenance {
            seed,
            priority: *config,
            buffer_version: buffer_version(buffer),
            sampling,
        },
    })
}

/// One fine-tuning example as exported.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExportRecord {
    pub prompt: String,
    pub completion: String,
    pub weight: f64,
    pub task_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExportManifest {
    pub format: String,
    pub records: usize,
    pub provenance: Provenance,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestLine {
    manifest: ExportManifest,
}

/// JSONL text: one record per line, then a manifest line.
pub fn to_jsonl(batch: &Minibatch) -> Result<String, TrainerError> {
    if batch.entries.is_empty() {
        return Err(TrainerError::EmptyBatch);
    }
    let mut out = String::new();
    for r in &batch.entries {
        let rec = ExportRecord {
            prompt: r.prompt.clone(),
            completion: r.program_text.clone(),
            weight: r.sample_weight,
            task_id: r.task_id.clone(),
        };
        out.push_str(&serde_json::to_string(&rec).expect("record serialises"));
        out.push('\n');
    }
    let manifest = ManifestLine {
        manifest: ExportManifest {
            format: MINIBATCH_FORMAT.into(),
            records: batch.entries.len(),
            provenance: batch.provenance.clone(),
        },
    };
    out.push_str(&serde_json::to_string(&manifest).expect("manifest serialises"));
    out.push('\n');
    Ok(out)
}

pub fn export_jsonl(batch: &Minibatch, path: &Path) -> Result<(), TrainerError> {
    let text = to_jsonl(batch)?;
    let io = |e: std::io::Error| TrainerError::Io(format!("{}: {e}", path.display()));
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    w.write_all(text.as_bytes()).map_err(io)?;
    w.flush().map_err(io)
}

/// Reads an exported file back into its records and manifest.
pub fn read_jsonl(path: &Path) -> Result<(Vec<ExportRecord>, ExportManifest), TrainerError> {
    let io = |e: std::io::Error| TrainerError::Io(format!("{}: {e}", path.display()));
    let lines: Vec<String> = BufReader::new(File::open(path).map_err(io)?)
        .lines()
        .collect::<Result<_, _>>()
        .map_err(io)?;
    let (last, body) = lines
        .split_last()
        .ok_or_else(|| TrainerError::Io(format!("{}: empty file", path.display())))?;
    let parse = |i: usize, e: serde_json::Error| TrainerError::Io(format!("{}:{}: {e}", path.display(), i + 1));
    let records = body
        .iter()
        .enumerate()
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| parse(i, e)))
        .collect::<Result<Vec<ExportRecord>, _>>()?;
    let manifest: ManifestLine = serde_json::from_str(last).map_err(|e| parse(body.len(), e))?;
    Ok((records, manifest.manifest))
}
