//! Shared helpers for the integration suites: a synthetic annotated corpus,
//! sweep scaffolding around the mock transport, and byte-level directory
//! snapshots for determinism checks.

// Each integration test binary compiles its own copy of this module and
// uses a different subset of it.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::rc::Rc;

use dialogsweep_core::batchrunner::{MockLatency, MockStats, MockTransport};
use dialogsweep_core::codes::{Code, CodeVector, Role};
use dialogsweep_core::corpus::{write_corpus, Corpus, Utterance};
use dialogsweep_core::promptkit::{PromptVariant, Renderer};
use dialogsweep_core::report::{
    emit_pareto_report, emit_tables, objective_points, pareto_report, per_label_rows, ParetoOptions,
};
use dialogsweep_core::sweep::{run_sweep, SweepConfig, SweepResult};
use dialogsweep_core::telemetry::{MeterMode, SimulatedMeter, TestClock};

/// Simulated package power used by every mock sweep, watts.
pub const SIM_CPU_W: f64 = 65.0;
/// Simulated GPU power, watts.
pub const SIM_GPU_W: f64 = 250.0;
/// Simulated DRAM power, watts.
pub const SIM_DRAM_W: f64 = 5.0;

/// Simulated seconds of fixed overhead per request.
pub const LATENCY_PER_REQUEST_S: f64 = 2.0;
/// Simulated seconds per utterance inside a request.
pub const LATENCY_PER_UTTERANCE_S: f64 = 0.5;

const PHRASES: [&str; 10] = [
    "check the airway and tell me what you find",
    "I am handing compressions over to you now",
    "blood pressure is eighty over fifty and falling",
    "we need the attending in here right away",
    "what did the last gas come back as",
    "understood, I have the airway",
    "you two take over documentation and timing",
    "switching roles: I take the monitor, you bag",
    "the patient opened her eyes for a moment",
    "call the lab and push the results to us",
];

fn meter_mode() -> MeterMode {
    MeterMode::Simulated {
        cpu_w: SIM_CPU_W,
        gpu_w: SIM_GPU_W,
        dram_w: SIM_DRAM_W,
    }
}

/// Two sessions of thirty utterances each, every utterance gold-annotated.
///
/// The six codes cycle through the corpus (with an occasional second code),
/// so each one occurs in gold and a perfect prediction scores macro-F1 = 1.
pub fn synthetic_corpus() -> Corpus {
    let mut utterances = Vec::with_capacity(60);
    for (s, session_id) in ["sim-01", "sim-02"].into_iter().enumerate() {
        for i in 0..30u64 {
            let g = s as u64 * 30 + i;
            let mut gold = CodeVector::from_codes([Code::ALL[(g % 6) as usize]]);
            if g % 7 == 3 {
                gold.insert(Code::ALL[((g + 2) % 6) as usize]);
            }
            let speaker = Role::ALL[(g % 8) as usize];
            let receiver = Role::ALL[((g + 3) % 8) as usize];
            utterances.push(
                Utterance::new(
                    session_id,
                    i + 1,
                    i as f64 * 6.0,
                    i as f64 * 6.0 + 4.5,
                    speaker,
                    Some(receiver),
                    PHRASES[(g % 10) as usize],
                    Some(gold),
                )
                .expect("synthetic utterance is valid"),
            );
        }
    }
    Corpus::from_utterances(utterances).expect("synthetic corpus is valid")
}

/// Writes the synthetic corpus as JSONL under `dir` and returns its path.
pub fn write_synthetic_corpus(dir: &Path) -> PathBuf {
    let path = dir.join("corpus.jsonl");
    write_corpus(&synthetic_corpus(), &path).expect("corpus written");
    path
}

/// The standard mock-sweep configuration: all four designs, batch sizes
/// {1, 10, 20}, two sessions, simulated meter.
pub fn mock_sweep_config(corpus_path: PathBuf, output_dir: PathBuf) -> SweepConfig {
    SweepConfig {
        corpus_path,
        designs: PromptVariant::ALL.to_vec(),
        batch_sizes: vec![1, 10, 20],
        model: Default::default(),
        session_count: 2,
        meter_mode: meter_mode(),
        feasibility_max_time_s: 600.0,
        output_dir,
    }
}

/// Simulated latency wired to the given clock.
pub fn mock_latency(clock: Rc<TestClock>) -> MockLatency {
    MockLatency {
        clock,
        per_request_s: LATENCY_PER_REQUEST_S,
        per_utterance_s: LATENCY_PER_UTTERANCE_S,
    }
}

/// Runs a sweep plus the full report emission with a mock transport.
///
/// The clock starts at zero and only moves when the transport's simulated
/// latency advances it, so repeated executions are exactly reproducible.
/// Reports land in `<output_dir>/reports`.
pub fn run_mock_pipeline(
    config: &SweepConfig,
    make_transport: impl FnOnce(Rc<TestClock>) -> MockTransport,
) -> (SweepResult, MockStats) {
    let clock = Rc::new(TestClock::new(0.0));
    let mut meter = SimulatedMeter::new(SIM_CPU_W, SIM_GPU_W, SIM_DRAM_W, clock.clone());
    let mut transport = make_transport(clock.clone());
    let renderer = Renderer::with_defaults();
    let result = run_sweep(
        config,
        &mut transport,
        &mut meter,
        clock.as_ref(),
        &renderer,
    )
    .expect("mock sweep completes");
    let stats = transport.stats();

    let reports_dir = config.output_dir.join("reports");
    emit_tables(&result.records, &reports_dir).expect("tables written");
    let points = objective_points(&result.records).expect("objective points");
    let options = ParetoOptions {
        max_time_s: config.feasibility_max_time_s,
        ..ParetoOptions::default()
    };
    let report = pareto_report(points, &options).expect("trade-off analysis");
    let per_label = per_label_rows(&result.records);
    emit_pareto_report(&report, Some(&per_label), &reports_dir).expect("trade-off artifacts");
    (result, stats)
}

/// Reads every file under `root` into a map of `relative/path` → bytes.
pub fn snapshot_tree(root: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
        for entry in fs::read_dir(dir).expect("directory readable") {
            let path = entry.expect("directory entry").path();
            if path.is_dir() {
                walk(root, &path, out);
            } else {
                let rel = path
                    .strip_prefix(root)
                    .expect("path under root")
                    .components()
                    .map(|c| c.as_os_str().to_string_lossy())
                    .collect::<Vec<_>>()
                    .join("/");
                out.insert(rel, fs::read(&path).expect("file readable"));
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}
