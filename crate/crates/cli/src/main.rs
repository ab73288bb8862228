//! `btp`: runs the sampling, testing and replay phases one at a time or as a
//! closed loop on the toy model.

mod commands;
mod config;
mod output;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::Value;
use std::path::PathBuf;
use std::process::ExitCode;

use config::{base_document, from_document, set_dotted, RunConfig, Violation};
use output::CliError;

#[derive(Parser)]
#[command(name = "btp", version, about = "Beam search sampling, testing and prioritized replay")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    global: Global,
}

#[derive(Subcommand)]
enum Command {
    /// Decode every task and write its top-k programs to a fresh buffer.
    Sample {
        /// Add to the existing buffer instead of replacing it.
        #[arg(long)]
        append: bool,
    },
    /// Annotate untested buffer entries with their pass rate.
    Test {
        /// Re-run entries that already have a pass rate.
        #[arg(long)]
        retest: bool,
    },
    /// Draw a prioritized minibatch and export it as JSONL.
    Export,
    /// Run the full sample / test / replay / update loop on the toy model.
    Loop,
    /// Loop once per beam width and tabulate final pass rates per task group.
    SweepK,
    /// Loop once per mixing weight and tabulate final pass rates per task group.
    SweepAlpha,
    /// Buffer size, P2Value histogram and exact sampling distribution.
    Stats,
}

impl Command {
    fn inputs(&self) -> commands::Inputs {
        use commands::Inputs;
        match self {
            Command::Sample { append } => Inputs::Sample { append: *append },
            Command::Test { .. } | Command::Export => Inputs::BufferAndTasks,
            Command::Loop | Command::SweepK | Command::SweepAlpha => Inputs::Loop,
            Command::Stats => Inputs::Buffer,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Args)]
struct Global {
    /// Run configuration file (JSON); built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Top-level seed every phase seed is derived from.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Upper bound on parallel workers.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Replay buffer file (same as --paths.buffer).
    #[arg(long, global = true)]
    buffer: Option<PathBuf>,
    /// Task file (same as --paths.tasks).
    #[arg(long, global = true)]
    tasks: Option<PathBuf>,
    /// Standard-output format for tables and summaries.
    #[arg(long, global = true, value_enum, default_value = "text")]
    format: Format,
    /// Print the effective configuration and exit.
    #[arg(long, global = true)]
    print_config: bool,

    /// Beam width: programs kept per step and stored per task.
    #[arg(long = "beam.k", global = true, value_name = "N")]
    beam_k: Option<usize>,
    /// Maximum program length in tokens, EOS included.
    #[arg(long = "beam.max_len", global = true, value_name = "N")]
    beam_max_len: Option<usize>,
    /// Weight of model probability against pass rate in the P2Value, in [0, 1].
    #[arg(long = "priority.mix_weight", global = true, value_name = "X")]
    mix_weight: Option<f64>,
    /// Exponent applied to priorities before normalising, >= 0.
    #[arg(long = "priority.prioritization_exponent", global = true, value_name = "X")]
    exponent: Option<f64>,
    /// Priority scheme: rank | proportional.
    #[arg(long = "priority.scheme", global = true, value_name = "SCHEME")]
    scheme: Option<String>,
    /// Draw minibatch entries with replacement.
    #[arg(long = "priority.with_replacement", global = true, value_name = "BOOL")]
    with_replacement: Option<bool>,
    /// Closed-loop iterations.
    #[arg(long = "loop.iterations", global = true, value_name = "N")]
    iterations: Option<usize>,
    /// Records per minibatch (export and loop).
    #[arg(long = "loop.minibatch_size", global = true, value_name = "N")]
    minibatch_size: Option<usize>,
    /// Count added per replayed record when updating the toy model.
    #[arg(long = "loop.update_weight", global = true, value_name = "X")]
    update_weight: Option<f64>,
    /// Buffer bound; 0 is rejected, omit for unbounded.
    #[arg(long = "loop.buffer_capacity", global = true, value_name = "N")]
    buffer_capacity: Option<usize>,
    /// Comma-separated beam widths.
    #[arg(long = "sweep.k_values", global = true, value_name = "LIST", value_delimiter = ',')]
    k_values: Option<Vec<usize>>,
    /// Comma-separated mixing weights.
    #[arg(long = "sweep.alpha_values", global = true, value_name = "LIST", value_delimiter = ',')]
    alpha_values: Option<Vec<f64>>,
    /// Training task file.
    #[arg(long = "paths.tasks", global = true, value_name = "PATH")]
    paths_tasks: Option<PathBuf>,
    /// Evaluation task file for loop and sweeps; the training tasks when unset.
    #[arg(long = "paths.eval_tasks", global = true, value_name = "PATH")]
    paths_eval_tasks: Option<PathBuf>,
    /// Replay buffer file (NDJSON).
    #[arg(long = "paths.buffer", global = true, value_name = "PATH")]
    paths_buffer: Option<PathBuf>,
    /// Exported minibatch file (JSONL).
    #[arg(long = "paths.batch_out", global = true, value_name = "PATH")]
    paths_batch_out: Option<PathBuf>,
    /// Loop and sweep metrics file (JSON).
    #[arg(long = "paths.metrics_out", global = true, value_name = "PATH")]
    paths_metrics_out: Option<PathBuf>,
    /// Saved toy model; the built-in pretrained model when unset.
    #[arg(long = "paths.model", global = true, value_name = "PATH")]
    paths_model: Option<PathBuf>,
    /// Test runner: toy | subprocess.
    #[arg(long = "runner.kind", global = true, value_name = "KIND")]
    runner_kind: Option<String>,
    /// Command for the subprocess runner; {file} is replaced by the program path.
    #[arg(long = "runner.command_template", global = true, value_name = "CMD")]
    command_template: Option<String>,
    /// Per-test wall-clock limit for the subprocess runner.
    #[arg(long = "runner.timeout_ms", global = true, value_name = "MS")]
    runner_timeout_ms: Option<u64>,
    /// Standard-output limit for the subprocess runner.
    #[arg(long = "runner.output_cap", global = true, value_name = "BYTES")]
    output_cap: Option<usize>,
    /// External model process speaking the bridge protocol.
    #[arg(long = "bridge.command", global = true, value_name = "CMD")]
    bridge_command: Option<String>,
    /// Bridge protocol mode: token | sequence.
    #[arg(long = "bridge.mode", global = true, value_name = "MODE")]
    bridge_mode: Option<String>,
    /// Per-request limit for the bridge.
    #[arg(long = "bridge.timeout_ms", global = true, value_name = "MS")]
    bridge_timeout_ms: Option<u64>,
}

impl Global {
    fn overrides(&self) -> Vec<(&'static str, Value)> {
        fn path(p: &Option<PathBuf>) -> Option<Value> {
            p.as_ref().map(|p| Value::String(p.display().to_string()))
        }
        let mut o: Vec<(&'static str, Option<Value>)> = vec![
            ("seed", self.seed.map(Value::from)),
            ("workers", self.workers.map(Value::from)),
            ("beam.k", self.beam_k.map(Value::from)),
            ("beam.max_len", self.beam_max_len.map(Value::from)),
            ("priority.mix_weight", self.mix_weight.map(Value::from)),
            ("priority.prioritization_exponent", self.exponent.map(Value::from)),
            ("priority.scheme", self.scheme.clone().map(Value::from)),
            ("priority.with_replacement", self.with_replacement.map(Value::from)),
            ("loop.iterations", self.iterations.map(Value::from)),
            ("loop.minibatch_size", self.minibatch_size.map(Value::from)),
            ("loop.update_weight", self.update_weight.map(Value::from)),
            ("loop.buffer_capacity", self.buffer_capacity.map(Value::from)),
            ("sweep.k_values", self.k_values.clone().map(Value::from)),
            ("sweep.alpha_values", self.alpha_values.clone().map(Value::from)),
            ("paths.tasks", path(&self.paths_tasks)),
            ("paths.eval_tasks", path(&self.paths_eval_tasks)),
            ("paths.buffer", path(&self.paths_buffer)),
            ("paths.batch_out", path(&self.paths_batch_out)),
            ("paths.metrics_out", path(&self.paths_metrics_out)),
            ("paths.model", path(&self.paths_model)),
            ("runner.kind", self.runner_kind.clone().map(Value::from)),
            ("runner.command_template", self.command_template.clone().map(Value::from)),
            ("runner.timeout_ms", self.runner_timeout_ms.map(Value::from)),
            ("runner.output_cap", self.output_cap.map(Value::from)),
            ("bridge.command", self.bridge_command.clone().map(Value::from)),
            ("bridge.mode", self.bridge_mode.clone().map(Value::from)),
            ("bridge.timeout_ms", self.bridge_timeout_ms.map(Value::from)),
        ];
        // the short aliases win over their dotted forms
        o.push(("paths.buffer", path(&self.buffer)));
        o.push(("paths.tasks", path(&self.tasks)));
        o.into_iter().filter_map(|(k, v)| v.map(|v| (k, v))).collect()
    }

    fn resolve(&self, command: &Command) -> Result<RunConfig, CliError> {
        let mut doc = base_document(self.config.as_deref()).map_err(CliError::Config)?;
        for (field, value) in self.overrides() {
            set_dotted(&mut doc, field, value);
        }
        let cfg = from_document(doc).map_err(CliError::Config)?;
        let mut violations: Vec<Violation> = cfg.violations();
        violations.extend(commands::input_violations(&cfg, command.inputs()));
        if violations.is_empty() {
            Ok(cfg)
        } else {
            Err(CliError::Config(violations))
        }
    }
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let cfg = cli.global.resolve(&cli.command)?;
    if cli.global.print_config {
        println!("{}", serde_json::to_string_pretty(&cfg).expect("config serialises"));
        return Ok(());
    }
    let json = cli.global.format == Format::Json;
    match &cli.command {
        Command::Sample { append } => commands::sample(&cfg, *append, json),
        Command::Test { retest } => commands::test(&cfg, *retest, json),
        Command::Export => commands::export(&cfg, json),
        Command::Loop => commands::run_loop(&cfg, json),
        Command::SweepK => commands::sweep(&cfg, commands::SweepKind::K, json),
        Command::SweepAlpha => commands::sweep(&cfg, commands::SweepKind::Alpha, json),
        Command::Stats => commands::stats(&cfg, json),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.report());
            ExitCode::from(e.exit_code())
        }
    }
}
