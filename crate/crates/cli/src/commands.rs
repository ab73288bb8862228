//! One function per subcommand; each performs one pipeline operation and
//! writes its artifact.

use serde::Serialize;
use std::path::Path;
use std::time::Duration;

use btp_core::beam::{sample_from_source, sample_phase, BeamSource, SamplePhaseReport, ToyLm, Vocabulary};
use btp_core::bridge::{ProcessTransport, SequenceAdapter, TokenAdapter};
use btp_core::harness::{
    index_tasks, load_tasks, test_phase, CodeTask, Runner, SubprocessRunner, TestPhaseOptions, ToyRunner,
};
use btp_core::replay::{self, PassRate, PrioritySampler, ReplayBuffer};
use btp_core::seed;
use btp_core::trainer::{btp_loop, build_minibatch, export_jsonl, sweep_alpha, sweep_k, LoopConfig, LoopReport};

use crate::config::{BridgeMode, RunConfig, RunnerKind, Violation};
use crate::output::{table, CliError};

/// Which existing files a command reads.
pub enum Inputs {
    Sample { append: bool },
    BufferAndTasks,
    Buffer,
    Loop,
}

/// Missing inputs and settings a command cannot use, checked before it starts.
pub fn input_violations(cfg: &RunConfig, inputs: Inputs) -> Vec<Violation> {
    let p = &cfg.paths;
    let mut v = Vec::new();
    let mut files: Vec<(&str, &Path)> = Vec::new();
    match inputs {
        Inputs::Sample { append } => {
            files.push(("paths.tasks", &p.tasks));
            if append {
                files.push(("paths.buffer", &p.buffer));
            }
            if cfg.bridge.is_none() {
                files.extend(p.model.as_deref().map(|m| ("paths.model", m)));
            }
        }
        Inputs::BufferAndTasks => {
            files.push(("paths.buffer", &p.buffer));
            files.push(("paths.tasks", &p.tasks));
        }
        Inputs::Buffer => files.push(("paths.buffer", &p.buffer)),
        Inputs::Loop => {
            files.push(("paths.tasks", &p.tasks));
            files.extend(p.eval_tasks.as_deref().map(|e| ("paths.eval_tasks", e)));
            files.extend(p.model.as_deref().map(|m| ("paths.model", m)));
            if cfg.runner.kind != RunnerKind::Toy {
                v.push(Violation::new("runner.kind", "the loop trains the toy model and needs the toy runner"));
            }
            if cfg.bridge.is_some() {
                v.push(Violation::new("bridge", "the loop trains the toy model; remove the bridge"));
            }
        }
    }
    for (field, path) in files {
        if !path.is_file() {
            v.push(Violation::new(field, format!("{} does not exist", path.display())));
        }
    }
    v
}

fn prepare_output(path: &Path) -> Result<(), CliError> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => {
            std::fs::create_dir_all(dir).map_err(|e| CliError::run("output", format!("{}: {e}", dir.display())))
        }
        _ => Ok(()),
    }
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<(), CliError> {
    prepare_output(path)?;
    let mut text = serde_json::to_string_pretty(value).expect("metrics serialise");
    text.push('\n');
    std::fs::write(path, text).map_err(|e| CliError::run("output", format!("{}: {e}", path.display())))
}

fn init_pool(cfg: &RunConfig) {
    // a second initialisation in the same process is harmless
    let _ = rayon::ThreadPoolBuilder::new().num_threads(cfg.workers).build_global();
}

fn tasks(path: &Path) -> Result<Vec<CodeTask>, CliError> {
    load_tasks(path).map_err(|e| CliError::run("load", e))
}

fn model(cfg: &RunConfig) -> Result<ToyLm, CliError> {
    match &cfg.paths.model {
        Some(p) => ToyLm::load(p).map_err(|e| CliError::run("load", e)),
        None => Ok(ToyLm::pretrained()),
    }
}

fn load_buffer(path: &Path) -> Result<ReplayBuffer, CliError> {
    replay::load(path).map_err(|e| CliError::run("load", e))
}

fn persist_buffer(buffer: &ReplayBuffer, path: &Path) -> Result<(), CliError> {
    prepare_output(path)?;
    replay::persist(buffer, path).map_err(|e| CliError::run("output", e))
}

fn emit<T: Serialize>(json: bool, value: &T, text: impl FnOnce() -> String) {
    if json {
        println!("{}", serde_json::to_string_pretty(value).expect("summary serialises"));
    } else {
        print!("{}", text());
    }
}

#[derive(Serialize)]
struct SampleSummary {
    buffer: String,
    inserted: usize,
    tasks: usize,
    shortfalls: Vec<(String, usize, usize)>,
    failures: Vec<(String, String)>,
}

pub fn sample(cfg: &RunConfig, append: bool, json: bool) -> Result<(), CliError> {
    init_pool(cfg);
    let tasks = tasks(&cfg.paths.tasks)?;
    let mut buffer = if append {
        load_buffer(&cfg.paths.buffer)?
    } else {
        ReplayBuffer::new(cfg.loop_.buffer_capacity, seed::derive(cfg.seed, "buffer"))
            .map_err(|e| CliError::run("sample", e))?
    };

    let report: SamplePhaseReport = match &cfg.bridge {
        None => sample_phase(&model(cfg)?, &tasks, &cfg.beam, &mut buffer),
        Some(b) => {
            let transport = ProcessTransport::spawn(&b.command, Duration::from_millis(b.timeout_ms))
                .map_err(|e| CliError::run("bridge", e))?;
            match b.mode {
                BridgeMode::Sequence => {
                    sample_from_source(&SequenceAdapter::new(transport), &tasks, &cfg.beam, &mut buffer)
                }
                BridgeMode::Token => {
                    let vocab = b.vocabulary.clone().unwrap_or_else(Vocabulary::toy);
                    let adapter = TokenAdapter::new(vocab, transport);
                    sample_from_source(&BeamSource(adapter), &tasks, &cfg.beam, &mut buffer)
                }
            }
        }
    }
    .map_err(|e| CliError::run("sample", e))?;

    persist_buffer(&buffer, &cfg.paths.buffer)?;
    let summary = SampleSummary {
        buffer: cfg.paths.buffer.display().to_string(),
        inserted: report.total_inserted(),
        tasks: tasks.len(),
        shortfalls: report.shortfalls.clone(),
        failures: report.failures.iter().map(|(t, e)| (t.clone(), e.to_string())).collect(),
    };
    emit(json, &summary, || {
        let mut s = format!(
            "sampled {} programs for {} tasks into {}\n",
            summary.inserted, summary.tasks, summary.buffer
        );
        for (task, want, got) in &summary.shortfalls {
            s += &format!("shortfall: {task} returned {got} of {want}\n");
        }
        s
    });
    if let Some((task, e)) = summary.failures.first() {
        return Err(CliError::run(
            "sample",
            format!("{} task(s) failed; first {task}: {e}", summary.failures.len()),
        ));
    }
    Ok(())
}

#[derive(Serialize)]
struct TestSummary {
    buffer: String,
    tested: usize,
    untestable: Vec<(u64, String)>,
}

pub fn test(cfg: &RunConfig, retest: bool, json: bool) -> Result<(), CliError> {
    let tasks = tasks(&cfg.paths.tasks)?;
    let index = index_tasks(&tasks).map_err(|e| CliError::run("load", e))?;
    let mut buffer = load_buffer(&cfg.paths.buffer)?;
    let runner: Box<dyn Runner> = match cfg.runner.kind {
        RunnerKind::Toy => Box::new(ToyRunner::default()),
        RunnerKind::Subprocess => Box::new(
            SubprocessRunner::new(cfg.runner.command_template.as_deref().unwrap_or_default())
                .map_err(|e| CliError::run("test", e))?
                .with_limits(Duration::from_millis(cfg.runner.timeout_ms), cfg.runner.output_cap),
        ),
    };
    let opts = TestPhaseOptions {
        workers: cfg.workers,
        retest,
    };
    let report = test_phase(&mut buffer, &index, &runner, opts).map_err(|e| CliError::run("test", e))?;
    persist_buffer(&buffer, &cfg.paths.buffer)?;
    let summary = TestSummary {
        buffer: cfg.paths.buffer.display().to_string(),
        tested: report.tested,
        untestable: report.failures.iter().map(|(i, e)| (*i, e.to_string())).collect(),
    };
    for (i, e) in &summary.untestable {
        log::warn!("entry {i} marked untestable: {e}");
    }
    emit(json, &summary, || {
        format!(
            "tested {} entries ({} untestable) in {}\n",
            summary.tested,
            summary.untestable.len(),
            summary.buffer
        )
    });
    Ok(())
}

pub fn export(cfg: &RunConfig, json: bool) -> Result<(), CliError> {
    let tasks = tasks(&cfg.paths.tasks)?;
    let index = index_tasks(&tasks).map_err(|e| CliError::run("load", e))?;
    let buffer = load_buffer(&cfg.paths.buffer)?;
    let batch = build_minibatch(
        &buffer,
        &index,
        &cfg.priority,
        cfg.loop_.minibatch_size,
        seed::derive(cfg.seed, "export"),
    )
    .map_err(|e| CliError::run("export", e))?;
    prepare_output(&cfg.paths.batch_out)?;
    export_jsonl(&batch, &cfg.paths.batch_out).map_err(|e| CliError::run("export", e))?;
    emit(json, &batch.provenance, || {
        format!(
            "exported {} records to {} (sampling: {:?})\n",
            batch.entries.len(),
            cfg.paths.batch_out.display(),
            batch.provenance.sampling
        )
    });
    Ok(())
}

fn loop_config(cfg: &RunConfig) -> LoopConfig {
    LoopConfig {
        iterations: cfg.loop_.iterations,
        beam: cfg.beam,
        priority: cfg.priority,
        minibatch_size: cfg.loop_.minibatch_size,
        update_weight: cfg.loop_.update_weight,
        buffer_capacity: cfg.loop_.buffer_capacity,
        seed: cfg.seed,
        workers: cfg.workers,
    }
}

fn loop_inputs(cfg: &RunConfig) -> Result<(Vec<CodeTask>, Vec<CodeTask>), CliError> {
    init_pool(cfg);
    let eval_path = cfg.paths.eval_tasks.as_deref().unwrap_or(&cfg.paths.tasks);
    Ok((tasks(&cfg.paths.tasks)?, tasks(eval_path)?))
}

fn fmt_rate(x: f64) -> String {
    format!("{:.4}", x)
}

fn loop_table(report: &LoopReport) -> String {
    let mut rows = vec![vec![
        "0".to_string(),
        fmt_rate(report.baseline.mean_pass_rate),
        fmt_rate(report.baseline.accuracy_rate),
        "-".into(),
        "0".into(),
        "-".into(),
        "-".into(),
        "-".into(),
    ]];
    for h in &report.history {
        rows.push(vec![
            h.iteration.to_string(),
            fmt_rate(h.mean_pass_rate),
            fmt_rate(h.accuracy_rate),
            fmt_rate(h.mean_p2value),
            h.buffer_size.to_string(),
            h.minibatch_size.to_string(),
            format!("{}/{}", h.lifted_records, h.minibatch_size),
            format!("{:?}", h.sampling),
        ]);
    }
    table(
        &["iter", "pass_rate", "accuracy", "mean_p2value", "buffer", "batch", "lifted", "sampling"],
        &rows,
    )
}

pub fn run_loop(cfg: &RunConfig, json: bool) -> Result<(), CliError> {
    let (tasks, eval) = loop_inputs(cfg)?;
    let report = btp_loop(&model(cfg)?, &tasks, &eval, &loop_config(cfg)).map_err(|e| CliError::run("loop", e))?;
    write_json(&report, &cfg.paths.metrics_out)?;
    emit(json, &report, || loop_table(&report));
    match &report.failure {
        Some(f) => Err(CliError::Run {
            phase: "loop",
            message: format!("iteration {} failed in the {} phase: {}", f.iteration, f.phase, f.message),
        }),
        None => Ok(()),
    }
}

pub enum SweepKind {
    K,
    Alpha,
}

pub fn sweep(cfg: &RunConfig, kind: SweepKind, json: bool) -> Result<(), CliError> {
    let (tasks, eval) = loop_inputs(cfg)?;
    let model = model(cfg)?;
    let base = loop_config(cfg);
    let table = match kind {
        SweepKind::K => sweep_k(&model, &tasks, &eval, &cfg.sweep.k_values, &base),
        SweepKind::Alpha => sweep_alpha(&model, &tasks, &eval, &cfg.sweep.alpha_values, &base),
    }
    .map_err(|e| CliError::run("sweep", e))?;
    write_json(&table, &cfg.paths.metrics_out)?;
    emit(json, &table, || table.render());
    Ok(())
}

#[derive(Serialize)]
struct EntryStats {
    position: usize,
    insertion_index: u64,
    task_id: String,
    p2value: Option<f64>,
    priority: Option<f64>,
    probability: f64,
}

#[derive(Serialize)]
struct Stats {
    size: usize,
    capacity: Option<usize>,
    tested: usize,
    untested: usize,
    untestable: usize,
    /// Ten equal-width P2Value bins over [0, 1]; the last includes 1.
    histogram: Vec<usize>,
    sampling: Option<btp_core::replay::SamplingMode>,
    distribution: Vec<EntryStats>,
}

fn histogram(values: &[f64]) -> Vec<usize> {
    let mut bins = vec![0; 10];
    for v in values {
        bins[((v * 10.0) as usize).min(9)] += 1;
    }
    bins
}

pub fn stats(cfg: &RunConfig, json: bool) -> Result<(), CliError> {
    let buffer = load_buffer(&cfg.paths.buffer)?;
    let count = |f: fn(&PassRate) -> bool| buffer.iter().filter(|e| f(&e.pass_rate)).count();
    let untested = count(|p| matches!(p, PassRate::Untested));
    let mut stats = Stats {
        size: buffer.len(),
        capacity: buffer.capacity(),
        tested: count(|p| matches!(p, PassRate::Tested(_))),
        untested,
        untestable: count(|p| matches!(p, PassRate::Untestable)),
        histogram: vec![0; 10],
        sampling: None,
        distribution: Vec::new(),
    };
    if untested == 0 && stats.tested > 0 {
        let values = buffer
            .p2values(cfg.priority.mix_weight)
            .map_err(|e| CliError::run("stats", e))?;
        stats.histogram = histogram(&values.iter().map(|(_, v)| *v).collect::<Vec<_>>());
        let (sampler, mode) =
            PrioritySampler::with_fallback(&buffer, &cfg.priority).map_err(|e| CliError::run("stats", e))?;
        let priorities = buffer.priorities(&cfg.priority).map_err(|e| CliError::run("stats", e))?;
        let dist = sampler.distribution();
        stats.sampling = Some(mode);
        stats.distribution = values
            .iter()
            .map(|&(pos, v)| {
                let e = buffer.get(pos).expect("position from buffer");
                EntryStats {
                    position: pos,
                    insertion_index: e.insertion_index,
                    task_id: e.task_id.clone(),
                    p2value: Some(v),
                    priority: priorities.iter().find(|(p, _)| *p == pos).map(|(_, x)| *x),
                    probability: dist.iter().find(|(p, _)| *p == pos).map_or(0.0, |(_, x)| *x),
                }
            })
            .collect();
    }
    emit(json, &stats, || stats_text(&stats));
    Ok(())
}

fn stats_text(s: &Stats) -> String {
    let cap = s.capacity.map_or("unbounded".to_string(), |c| c.to_string());
    let mut out = format!(
        "entries: {} (capacity {cap}); tested {}, untested {}, untestable {}\n",
        s.size, s.tested, s.untested, s.untestable
    );
    if s.untested > 0 {
        out += "sampling distribution unavailable: run `btp test` first\n";
        return out;
    }
    if s.distribution.is_empty() {
        return out;
    }
    out += "\nP2Value histogram\n";
    let rows: Vec<Vec<String>> = s
        .histogram
        .iter()
        .enumerate()
        .map(|(i, n)| {
            let close = if i == 9 { ']' } else { ')' };
            vec![
                format!("[{:.1}, {:.1}{close}", i as f64 / 10.0, (i + 1) as f64 / 10.0),
                n.to_string(),
            ]
        })
        .collect();
    out += &table(&["bin", "count"], &rows);
    out += &format!("\nsampling distribution ({:?})\n", s.sampling.expect("set with distribution"));
    let rows: Vec<Vec<String>> = s
        .distribution
        .iter()
        .map(|e| {
            vec![
                e.insertion_index.to_string(),
                e.task_id.clone(),
                e.p2value.map_or("-".into(), |v| format!("{v:.6}")),
                e.priority.map_or("-".into(), |v| format!("{v:.6}")),
                format!("{:.6}", e.probability),
            ]
        })
        .collect();
    out += &table(&["entry", "task", "p2value", "priority", "probability"], &rows);
    out
}
