//! Run configuration: one JSON document, overridable field by field with
//! dotted command-line flags.

use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::path::{Path, PathBuf};

use btp_core::beam::{BeamConfig, Vocabulary};
use btp_core::replay::PriorityConfig;
use btp_core::trainer::{default_alpha_grid, default_k_grid};

pub const CONFIG_VERSION: &str = "btp-config/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub version: String,
    pub seed: u64,
    pub workers: usize,
    pub beam: BeamConfig,
    pub priority: PriorityConfig,
    #[serde(rename = "loop")]
    pub loop_: LoopSection,
    #[serde(default)]
    pub sweep: SweepSection,
    pub paths: Paths,
    pub runner: RunnerConfig,
    #[serde(default)]
    pub bridge: Option<BridgeConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoopSection {
    pub iterations: usize,
    pub minibatch_size: usize,
    pub update_weight: f64,
    #[serde(default)]
    pub buffer_capacity: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub k_values: Vec<usize>,
    pub alpha_values: Vec<f64>,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            k_values: default_k_grid(),
            alpha_values: default_alpha_grid(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    pub tasks: PathBuf,
    #[serde(default)]
    pub eval_tasks: Option<PathBuf>,
    pub buffer: PathBuf,
    pub batch_out: PathBuf,
    pub metrics_out: PathBuf,
    /// Saved toy model; the built-in pretrained model when absent.
    #[serde(default)]
    pub model: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunnerKind {
    Toy,
    Subprocess,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunnerConfig {
    pub kind: RunnerKind,
    #[serde(default)]
    pub command_template: Option<String>,
    #[serde(default = "default_runner_timeout")]
    pub timeout_ms: u64,
    #[serde(default = "default_output_cap")]
    pub output_cap: usize,
}

fn default_runner_timeout() -> u64 {
    5_000
}

fn default_output_cap() -> usize {
    64 * 1024
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BridgeMode {
    Token,
    Sequence,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BridgeConfig {
    pub command: String,
    pub mode: BridgeMode,
    #[serde(default = "default_bridge_timeout")]
    pub timeout_ms: u64,
    /// Token-mode vocabulary; the toy vocabulary when absent.
    #[serde(default)]
    pub vocabulary: Option<Vocabulary>,
}

fn default_bridge_timeout() -> u64 {
    60_000
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            version: CONFIG_VERSION.into(),
            seed: 0,
            workers: 1,
            beam: BeamConfig::default(),
            priority: PriorityConfig::default(),
            loop_: LoopSection {
                iterations: 5,
                minibatch_size: 32,
                update_weight: 1.0,
                buffer_capacity: None,
            },
            sweep: SweepSection::default(),
            paths: Paths {
                tasks: "data/toy_tasks.json".into(),
                eval_tasks: Some("data/toy_eval_tasks.json".into()),
                buffer: "out/buffer.ndjson".into(),
                batch_out: "out/batch.jsonl".into(),
                metrics_out: "out/metrics.json".into(),
                model: None,
            },
            runner: RunnerConfig {
                kind: RunnerKind::Toy,
                command_template: None,
                timeout_ms: default_runner_timeout(),
                output_cap: default_output_cap(),
            },
            bridge: None,
        }
    }
}

/// A field that failed validation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub field: String,
    pub message: String,
}

impl Violation {
    pub fn new(field: &str, message: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            message: message.into(),
        }
    }
}

/// Sets `value` at a dotted path inside a JSON object, creating objects on the way.
pub fn set_dotted(doc: &mut Value, path: &str, value: Value) {
    let mut cur = doc;
    let parts: Vec<&str> = path.split('.').collect();
    for part in &parts[..parts.len() - 1] {
        if !cur.get(*part).is_some_and(Value::is_object) {
            cur[*part] = Value::Object(Default::default());
        }
        cur = cur.get_mut(*part).expect("just inserted");
    }
    cur[parts[parts.len() - 1]] = value;
}

/// Base document: the config file when given, otherwise the defaults.
pub fn base_document(path: Option<&Path>) -> Result<Value, Vec<Violation>> {
    let Some(path) = path else {
        return Ok(serde_json::to_value(RunConfig::default()).expect("defaults serialise"));
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| vec![Violation::new("config", format!("{}: {e}", path.display()))])?;
    let doc: Value = serde_json::from_str(&text)
        .map_err(|e| vec![Violation::new("config", format!("{}: {e}", path.display()))])?;
    match doc.get("version").and_then(Value::as_str) {
        Some(CONFIG_VERSION) => Ok(doc),
        Some(other) => Err(vec![Violation::new(
            "version",
            format!("unsupported config version {other:?}, expected {CONFIG_VERSION:?}"),
        )]),
        None => Err(vec![Violation::new("version", format!("missing; expected {CONFIG_VERSION:?}"))]),
    }
}

/// Typed config from a JSON document; type errors are reported per section.
pub fn from_document(doc: Value) -> Result<RunConfig, Vec<Violation>> {
    fn check<T: serde::de::DeserializeOwned>(doc: &Value, key: &str, v: &mut Vec<Violation>) {
        if let Some(section) = doc.get(key) {
            if let Err(e) = serde_json::from_value::<T>(section.clone()) {
                v.push(Violation::new(key, e.to_string()));
            }
        }
    }
    let mut v = Vec::new();
    check::<u64>(&doc, "seed", &mut v);
    check::<usize>(&doc, "workers", &mut v);
    check::<BeamConfig>(&doc, "beam", &mut v);
    check::<PriorityConfig>(&doc, "priority", &mut v);
    check::<LoopSection>(&doc, "loop", &mut v);
    check::<SweepSection>(&doc, "sweep", &mut v);
    check::<Paths>(&doc, "paths", &mut v);
    check::<RunnerConfig>(&doc, "runner", &mut v);
    check::<Option<BridgeConfig>>(&doc, "bridge", &mut v);
    if !v.is_empty() {
        return Err(v);
    }
    serde_json::from_value(doc).map_err(|e| vec![Violation::new("config", e.to_string())])
}

impl RunConfig {
    /// Every violated field, not just the first.
    pub fn violations(&self) -> Vec<Violation> {
        let mut v = Vec::new();
        if self.version != CONFIG_VERSION {
            v.push(Violation::new("version", format!("expected {CONFIG_VERSION:?}")));
        }
        if self.workers == 0 {
            v.push(Violation::new("workers", "must be >= 1"));
        }
        if self.beam.k == 0 {
            v.push(Violation::new("beam.k", "must be >= 1"));
        }
        if self.beam.max_len == 0 {
            v.push(Violation::new("beam.max_len", "must be >= 1"));
        }
        let p = &self.priority;
        if !(0.0..=1.0).contains(&p.mix_weight) {
            v.push(Violation::new("priority.mix_weight", format!("{} is outside [0, 1]", p.mix_weight)));
        }
        if !(p.prioritization_exponent.is_finite() && p.prioritization_exponent >= 0.0) {
            v.push(Violation::new(
                "priority.prioritization_exponent",
                format!("{} must be finite and >= 0", p.prioritization_exponent),
            ));
        }
        let l = &self.loop_;
        if l.iterations == 0 {
            v.push(Violation::new("loop.iterations", "must be >= 1"));
        }
        if l.minibatch_size == 0 {
            v.push(Violation::new("loop.minibatch_size", "must be >= 1"));
        }
        if !(l.update_weight.is_finite() && l.update_weight > 0.0) {
            v.push(Violation::new("loop.update_weight", format!("{} must be > 0", l.update_weight)));
        }
        if l.buffer_capacity == Some(0) {
            v.push(Violation::new("loop.buffer_capacity", "must be positive or null"));
        }
        if self.sweep.k_values.is_empty() || self.sweep.k_values.contains(&0) {
            v.push(Violation::new("sweep.k_values", "must be a non-empty list of widths >= 1"));
        }
        if self.sweep.alpha_values.is_empty() || self.sweep.alpha_values.iter().any(|a| !(0.0..=1.0).contains(a)) {
            v.push(Violation::new("sweep.alpha_values", "must be a non-empty list of values in [0, 1]"));
        }
        let r = &self.runner;
        if r.kind == RunnerKind::Subprocess && r.command_template.as_deref().map_or(true, |c| c.trim().is_empty()) {
            v.push(Violation::new("runner.command_template", "required for the subprocess runner"));
        }
        if r.timeout_ms == 0 {
            v.push(Violation::new("runner.timeout_ms", "must be >= 1"));
        }
        if r.output_cap == 0 {
            v.push(Violation::new("runner.output_cap", "must be >= 1"));
        }
        if let Some(b) = &self.bridge {
            if b.command.trim().is_empty() {
                v.push(Violation::new("bridge.command", "must not be empty"));
            }
            if b.timeout_ms == 0 {
                v.push(Violation::new("bridge.timeout_ms", "must be >= 1"));
            }
        }
        v
    }
}
