//! `dialogsweep` — command-line front end for the dialogue-coding benchmark.
//!
//! Verbs:
//!
//! * `sweep`    — run the prompt-design × batch-size grid against a chat
//!   endpoint (or an offline mock) and write records plus reports.
//! * `report`   — rebuild the summary tables from a finished sweep directory.
//! * `pareto`   — trade-off analysis from a sweep directory or a raw
//!   objectives CSV.
//! * `validate` — run the built-in self-checks against hand-computed values.
//! * `stats`    — print corpus summary statistics.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 transport error.

mod selfcheck;

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::rc::Rc;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use dialogsweep_core::batchrunner::{
    ClassifyError, HttpTransport, MockLatency, MockTransport, ModelConfig,
};
use dialogsweep_core::corpus::{corpus_stats, filter_coded, load_corpus, Corpus};
use dialogsweep_core::promptkit::{Renderer, UtteranceKey};
use dialogsweep_core::report::{
    emit_pareto_report, emit_tables, objective_points, pareto_report, per_label_rows,
    read_objectives_csv, ParetoOptions, ParetoReport,
};
use dialogsweep_core::sweep::{load_sweep, run_sweep, SweepConfig, SweepError, SweepResult};
use dialogsweep_core::telemetry::{
    Clock, MeterMode, MonotonicClock, NvidiaSmiSource, RaplMeter, SampledPowerProbe,
    SimulatedMeter, TestClock, MIN_PROBE_HZ, POWERCAP_ROOT,
};
use dialogsweep_core::tradeoff::{
    ConfigId, DEFAULT_MAX_SESSION_TIME_S, DEFAULT_REDUCTION_THRESHOLD,
};
use dialogsweep_core::{Code, PromptVariant, CODE_COUNT, PAPER_BATCH_SIZES};
use serde::Deserialize;

/// Environment variable that overrides the endpoint URL from the config
/// file. A `--endpoint` flag overrides both.
const ENDPOINT_ENV: &str = "DIALOGSWEEP_ENDPOINT";

/// Wall-clock model for mock sweeps: fixed cost per request plus a cost per
/// utterance in the batch, advanced on a virtual clock so runs are exactly
/// reproducible.
const MOCK_LATENCY_PER_REQUEST_S: f64 = 2.0;
const MOCK_LATENCY_PER_UTTERANCE_S: f64 = 0.5;

#[derive(Parser)]
#[command(
    name = "dialogsweep",
    version,
    about = "Benchmark multi-label dialogue coding across prompt designs and batch sizes"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the design × batch-size grid and write records plus reports.
    Sweep(SweepArgs),
    /// Rebuild the summary tables from a finished sweep directory.
    Report(ReportArgs),
    /// Trade-off analysis from a sweep directory or an objectives CSV.
    Pareto(ParetoArgs),
    /// Run the built-in self-checks against hand-computed values.
    Validate,
    /// Print corpus summary statistics.
    Stats(StatsArgs),
}

#[derive(Args)]
struct SweepArgs {
    /// TOML configuration file ([sweep], [model], [meter] sections).
    #[arg(long, value_name = "FILE")]
    config: PathBuf,
    /// Replace the live endpoint with an offline transport:
    /// echo-gold, script:<path>, or garbage:<rate>.
    #[arg(long, value_name = "SPEC")]
    mock: Option<MockSpec>,
    /// Override the corpus path from the config file.
    #[arg(long, value_name = "FILE")]
    corpus: Option<PathBuf>,
    /// Override the output directory from the config file.
    #[arg(long, value_name = "DIR")]
    output_dir: Option<PathBuf>,
    /// Override the session count the totals are normalized by.
    #[arg(long, value_name = "N")]
    session_count: Option<usize>,
    /// Override the endpoint URL (also: DIALOGSWEEP_ENDPOINT).
    #[arg(long, value_name = "URL")]
    endpoint: Option<String>,
}

#[derive(Args)]
struct ReportArgs {
    /// Finished sweep directory (holds manifest.json and records/).
    #[arg(long, value_name = "DIR")]
    runs: PathBuf,
    /// Where to write the tables (default: <runs>/reports).
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ParetoArgs {
    /// Finished sweep directory to read run records from.
    #[arg(
        long,
        value_name = "DIR",
        required_unless_present = "objectives",
        conflicts_with = "objectives"
    )]
    runs: Option<PathBuf>,
    /// Objectives CSV with design,batch_size,f1,time_s[,energy_j] columns.
    #[arg(long, value_name = "FILE")]
    objectives: Option<PathBuf>,
    /// Per-session time bound for the feasibility filter, seconds.
    #[arg(long, value_name = "SECONDS")]
    max_time: Option<f64>,
    /// Rank-correlation threshold at which the energy axis is dropped.
    #[arg(long, value_name = "RHO")]
    reduce_threshold: Option<f64>,
    /// Also write pareto.csv and pareto.md into this directory.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct StatsArgs {
    /// JSONL corpus to summarize.
    #[arg(long, value_name = "FILE")]
    corpus: PathBuf,
}

/// Offline transport selector for `sweep --mock`.
#[derive(Clone, Debug)]
enum MockSpec {
    /// Echo every utterance's gold vector (upper-bound run).
    EchoGold,
    /// Serve rows from a JSON map of "session_id:utterance_id" → row text.
    Script(PathBuf),
    /// Garble the given fraction of batches (their utterances end up as
    /// zero-vector fallbacks after the failed retry).
    Garbage(f64),
}

impl FromStr for MockSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<MockSpec, String> {
        if s == "echo-gold" {
            return Ok(MockSpec::EchoGold);
        }
        if let Some(path) = s.strip_prefix("script:") {
            if path.is_empty() {
                return Err("script: needs a file path".into());
            }
            return Ok(MockSpec::Script(PathBuf::from(path)));
        }
        if let Some(rate) = s.strip_prefix("garbage:") {
            let rate: f64 = rate
                .parse()
                .map_err(|_| format!("garbage rate {rate:?} is not a number"))?;
            if !(0.0..=1.0).contains(&rate) {
                return Err(format!("garbage rate {rate} is outside [0, 1]"));
            }
            return Ok(MockSpec::Garbage(rate));
        }
        Err(format!(
            "unknown mock {s:?}; expected echo-gold, script:<path>, or garbage:<rate>"
        ))
    }
}

/// Errors surfaced to the shell, bucketed by exit code.
#[derive(Debug)]
enum CliError {
    /// Bad invocation or configuration (exit 1).
    Usage(String),
    /// Unreadable, inconsistent, or missing data (exit 2).
    Data(String),
    /// The model endpoint failed (exit 3).
    Transport(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Transport(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Transport(m) => f.write_str(m),
        }
    }
}

fn usage(message: impl Into<String>) -> CliError {
    CliError::Usage(message.into())
}

fn data(error: impl fmt::Display) -> CliError {
    CliError::Data(error.to_string())
}

fn from_classify(error: ClassifyError) -> CliError {
    match &error {
        ClassifyError::Transport(_) | ClassifyError::ModelRefusal { .. } => {
            CliError::Transport(error.to_string())
        }
        ClassifyError::InvalidModelConfig(_) => CliError::Usage(error.to_string()),
        ClassifyError::Prompt(_) => CliError::Data(error.to_string()),
    }
}

fn from_sweep(error: SweepError) -> CliError {
    match error {
        SweepError::Config(_) => CliError::Usage(error.to_string()),
        SweepError::Classify(inner) => from_classify(inner),
        other => CliError::Data(other.to_string()),
    }
}

/// On-disk configuration: a `[sweep]` section for the grid, plus optional
/// `[model]` and `[meter]` sections. Fields absent from `[sweep]` fall back
/// to the full published grid and defaults.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    sweep: SweepSection,
    #[serde(default)]
    model: ModelConfig,
    #[serde(default = "default_meter")]
    meter: MeterMode,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SweepSection {
    corpus_path: PathBuf,
    output_dir: PathBuf,
    designs: Option<Vec<PromptVariant>>,
    batch_sizes: Option<Vec<usize>>,
    /// Sessions the totals are normalized by; defaults to the number of
    /// sessions in the corpus.
    session_count: Option<usize>,
    feasibility_max_time_s: Option<f64>,
}

fn default_meter() -> MeterMode {
    MeterMode::Simulated {
        cpu_w: 65.0,
        gpu_w: 250.0,
        dram_w: 5.0,
    }
}

fn read_config_file(path: &Path) -> Result<ConfigFile, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| usage(format!("cannot read config file {}: {e}", path.display())))?;
    toml::from_str(&text)
        .map_err(|e| usage(format!("cannot parse config file {}: {e}", path.display())))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // --help and --version surface as clap "errors" but are
            // successful invocations to the shell.
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let outcome = match cli.command {
        Command::Sweep(args) => cmd_sweep(args),
        Command::Report(args) => cmd_report(args),
        Command::Pareto(args) => cmd_pareto(args),
        Command::Validate => selfcheck::run().map_err(CliError::Data),
        Command::Stats(args) => cmd_stats(args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn cmd_sweep(args: SweepArgs) -> Result<(), CliError> {
    let file = read_config_file(&args.config)?;
    let corpus_path = args.corpus.unwrap_or(file.sweep.corpus_path);
    let output_dir = args.output_dir.unwrap_or(file.sweep.output_dir);
    let corpus = load_corpus(&corpus_path).map_err(data)?;
    let coded = filter_coded(&corpus).map_err(data)?;
    let session_count = args
        .session_count
        .or(file.sweep.session_count)
        .unwrap_or_else(|| coded.sessions().len());

    let mut model = file.model;
    if let Some(url) = args.endpoint {
        model.endpoint_url = url;
    } else if let Ok(url) = std::env::var(ENDPOINT_ENV) {
        if !url.is_empty() {
            model.endpoint_url = url;
        }
    }

    let config = SweepConfig {
        corpus_path,
        designs: file
            .sweep
            .designs
            .unwrap_or_else(|| PromptVariant::ALL.to_vec()),
        batch_sizes: file
            .sweep
            .batch_sizes
            .unwrap_or_else(|| PAPER_BATCH_SIZES.to_vec()),
        model,
        session_count,
        meter_mode: file.meter,
        feasibility_max_time_s: file
            .sweep
            .feasibility_max_time_s
            .unwrap_or(DEFAULT_MAX_SESSION_TIME_S),
        output_dir,
    };
    config.validate().map_err(from_sweep)?;

    let renderer = Renderer::with_defaults();
    let result = match args.mock {
        Some(spec) => run_mock_sweep(&config, &coded, &spec, &renderer)?,
        None => run_live_sweep(&config, &renderer)?,
    };

    println!(
        "sweep complete: {} configurations over {} coded utterances in {} sessions",
        result.records.len(),
        coded.utterances().count(),
        coded.sessions().len()
    );
    for r in &result.records {
        println!(
            "  {:<8} f1={:.3}  time={:.1}s  energy={:.1}J  fallbacks={}",
            ConfigId::new(r.design.variant(), r.batch_size).to_string(),
            r.metrics.f1_macro,
            r.total_time_s,
            r.energy.total_j,
            r.fallback_count
        );
    }

    let reports_dir = config.output_dir.join("reports");
    let mut written = emit_tables(&result.records, &reports_dir).map_err(data)?;
    let points = objective_points(&result.records).map_err(data)?;
    let options = ParetoOptions {
        max_time_s: config.feasibility_max_time_s,
        reduction_threshold: DEFAULT_REDUCTION_THRESHOLD,
    };
    let analysis = pareto_report(points, &options).map_err(data)?;
    let labels = per_label_rows(&result.records);
    written.extend(emit_pareto_report(&analysis, Some(&labels), &reports_dir).map_err(data)?);
    print_front_summary(&analysis);
    println!("artifacts:");
    println!("  {}", config.output_dir.join("manifest.json").display());
    for path in &written {
        println!("  {}", path.display());
    }
    Ok(())
}

fn run_mock_sweep(
    config: &SweepConfig,
    coded: &Corpus,
    spec: &MockSpec,
    renderer: &Renderer,
) -> Result<SweepResult, CliError> {
    let MeterMode::Simulated {
        cpu_w,
        gpu_w,
        dram_w,
    } = config.meter_mode
    else {
        return Err(usage(
            "mock sweeps need `mode = \"simulated\"` in the [meter] section: \
             there is no real work for a hardware meter to measure",
        ));
    };
    let clock = Rc::new(TestClock::new(0.0));
    let shared: Rc<dyn Clock> = Rc::clone(&clock) as Rc<dyn Clock>;
    let mut meter = SimulatedMeter::new(cpu_w, gpu_w, dram_w, shared);
    let base = match spec {
        MockSpec::EchoGold => MockTransport::echo_gold(coded),
        MockSpec::Script(path) => MockTransport::script(read_script(path)?),
        MockSpec::Garbage(rate) => MockTransport::garbage(coded, *rate, config.model.seed as u64),
    };
    let mut transport = base.with_latency(MockLatency {
        clock: Rc::clone(&clock),
        per_request_s: MOCK_LATENCY_PER_REQUEST_S,
        per_utterance_s: MOCK_LATENCY_PER_UTTERANCE_S,
    });
    run_sweep(config, &mut transport, &mut meter, clock.as_ref(), renderer).map_err(from_sweep)
}

fn run_live_sweep(config: &SweepConfig, renderer: &Renderer) -> Result<SweepResult, CliError> {
    let mut transport = HttpTransport::new().map_err(|e| CliError::Transport(e.to_string()))?;
    match config.meter_mode {
        MeterMode::Simulated {
            cpu_w,
            gpu_w,
            dram_w,
        } => {
            let clock: Rc<dyn Clock> = Rc::new(MonotonicClock::new());
            let mut meter = SimulatedMeter::new(cpu_w, gpu_w, dram_w, Rc::clone(&clock));
            run_sweep(config, &mut transport, &mut meter, clock.as_ref(), renderer)
                .map_err(from_sweep)
        }
        MeterMode::Hardware => {
            let clock = MonotonicClock::new();
            let mut meter = RaplMeter::probe(Path::new(POWERCAP_ROOT)).map_err(data)?;
            match NvidiaSmiSource::probe() {
                Ok(source) => {
                    let probe =
                        SampledPowerProbe::start(Box::new(source), MIN_PROBE_HZ).map_err(data)?;
                    meter = meter.with_gpu(Box::new(probe));
                    log::info!("sampling GPU power via nvidia-smi");
                }
                Err(e) => log::warn!("no GPU probe attached, counting CPU/DRAM only: {e}"),
            }
            run_sweep(config, &mut transport, &mut meter, &clock, renderer).map_err(from_sweep)
        }
    }
}

/// Reads a script-mock file: a JSON object whose keys are
/// `"session_id:utterance_id"` and whose values are seven-token label rows.
fn read_script(path: &Path) -> Result<HashMap<UtteranceKey, String>, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Data(format!("cannot read script {}: {e}", path.display())))?;
    let raw: HashMap<String, String> = serde_json::from_str(&text).map_err(|e| {
        CliError::Data(format!(
            "script {} is not a JSON object of \"session_id:utterance_id\" → row entries: {e}",
            path.display()
        ))
    })?;
    raw.into_iter()
        .map(|(key, row)| {
            let (session_id, utterance_id) = key.rsplit_once(':').ok_or_else(|| {
                CliError::Data(format!(
                    "script key {key:?} is missing the ':' between session and utterance id"
                ))
            })?;
            let utterance_id = utterance_id.parse().map_err(|_| {
                CliError::Data(format!("script key {key:?} has a non-numeric utterance id"))
            })?;
            Ok((
                UtteranceKey {
                    session_id: session_id.to_string(),
                    utterance_id,
                },
                row,
            ))
        })
        .collect()
}

fn cmd_report(args: ReportArgs) -> Result<(), CliError> {
    let result = load_sweep(&args.runs).map_err(from_sweep)?;
    let out = args.out.unwrap_or_else(|| args.runs.join("reports"));
    let written = emit_tables(&result.records, &out).map_err(data)?;
    println!(
        "rebuilt {} tables from {} run records",
        written.len(),
        result.records.len()
    );
    for path in &written {
        println!("  {}", path.display());
    }
    Ok(())
}

fn cmd_pareto(args: ParetoArgs) -> Result<(), CliError> {
    let (points, labels) = match (&args.runs, &args.objectives) {
        (Some(dir), None) => {
            let result = load_sweep(dir).map_err(from_sweep)?;
            let points = objective_points(&result.records).map_err(data)?;
            (points, Some(per_label_rows(&result.records)))
        }
        (None, Some(csv)) => (read_objectives_csv(csv).map_err(data)?, None),
        // clap enforces exactly one of --runs / --objectives.
        _ => unreachable!("argument parser allows exactly one input source"),
    };
    let options = ParetoOptions {
        max_time_s: args.max_time.unwrap_or(DEFAULT_MAX_SESSION_TIME_S),
        reduction_threshold: args.reduce_threshold.unwrap_or(DEFAULT_REDUCTION_THRESHOLD),
    };
    let report = pareto_report(points, &options).map_err(data)?;
    print_front_summary(&report);
    if let Some(out) = args.out {
        let written = emit_pareto_report(&report, labels.as_deref(), &out).map_err(data)?;
        println!("artifacts:");
        for path in &written {
            println!("  {}", path.display());
        }
    }
    Ok(())
}

fn print_front_summary(report: &ParetoReport) {
    if let Some(note) = &report.front_all.reduction {
        println!("objective reduction: {}", note.describe());
    }
    let members: Vec<String> = report
        .front_all
        .members
        .iter()
        .map(|p| p.config.to_string())
        .collect();
    println!(
        "pareto front, all {} configurations: {}",
        report.rows.len(),
        members.join(", ")
    );
    println!(
        "feasibility: {} of {} configurations within {:.0} s per session",
        report.split.feasible.len(),
        report.rows.len(),
        report.split.max_time_s
    );
    match &report.front_feasible {
        Some(front) => {
            let members: Vec<String> = front.members.iter().map(|p| p.config.to_string()).collect();
            println!("pareto front, feasible only: {}", members.join(", "));
        }
        None => println!("pareto front, feasible only: none — no configuration meets the bound"),
    }
}

fn cmd_stats(args: StatsArgs) -> Result<(), CliError> {
    let corpus = load_corpus(&args.corpus).map_err(data)?;
    let stats = corpus_stats(&corpus).map_err(data)?;
    println!("sessions:               {}", stats.session_count);
    println!("utterances:             {}", stats.utterance_count);
    println!(
        "utterances per session: {:.2} mean, {:.2} sd",
        stats.mean_per_session, stats.sd_per_session
    );

    let mut counts = [0u64; CODE_COUNT];
    let mut none = 0u64;
    let mut coded = 0u64;
    let mut uncoded = 0u64;
    for u in corpus.utterances() {
        match u.gold {
            None => uncoded += 1,
            Some(v) => {
                coded += 1;
                if v.is_none() {
                    none += 1;
                }
                for code in Code::ALL {
                    if v.contains(code) {
                        counts[code.index()] += 1;
                    }
                }
            }
        }
    }
    println!("gold-coded utterances:  {coded}");
    if uncoded > 0 {
        println!("uncoded utterances:     {uncoded}");
    }
    let pct = |n: u64| 100.0 * n as f64 / coded.max(1) as f64;
    println!("code distribution (multi-label, over coded utterances):");
    for code in Code::ALL {
        let n = counts[code.index()];
        println!("  {:<20} {:>6}  {:>5.1}%", code.name(), n, pct(n));
    }
    println!("  {:<20} {:>6}  {:>5.1}%", "none", none, pct(none));
    Ok(())
}
