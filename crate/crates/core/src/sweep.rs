//! Sweep orchestration: runs every (design, batch size) configuration over
//! a corpus, measures each one as a single time/energy span, and persists
//! records incrementally so an interrupted sweep resumes where it stopped.
//!
//! Configurations execute strictly sequentially in lexicographic
//! (design, batch size) order — both for reproducibility and because
//! concurrent requests would corrupt the latency and energy attribution.
//!
//! Persistence layout under `output_dir`:
//!
//! ```text
//! manifest.json           sweep identity: config hash, version, meter mode
//! records/P1_b1.json      one RunRecord per completed configuration
//! records/P1_b10.json     …
//! ```
//!
//! Resume is keyed by a content hash over the *semantic* configuration
//! (designs, batch sizes, model settings, session count, meter mode,
//! feasibility bound) plus the canonical JSONL text of the coded corpus.
//! Paths are deliberately excluded, so the same sweep written to two
//! different directories (or fed the same corpus from a different location)
//! produces identical artifacts; a mismatched hash in an existing output
//! directory is a [`SweepError::ResumeConflict`] rather than silent mixing.

use crate::batchrunner::{
    classify, plan_batches, ClassifyError, ModelConfig, ModelTransport, PlanError,
    PAPER_BATCH_SIZES,
};
use crate::corpus::{corpus_to_jsonl, filter_coded, load_corpus, CorpusError};
use crate::metrics::{multilabel_metrics, MetricsError};
use crate::promptkit::{PromptDesign, PromptVariant, Renderer};
use crate::telemetry::{
    measure, Clock, EnergyMeter, MeterError, MeterMode, RunRecord, TelemetryError,
};
use crate::CodeVector;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fs;
use std::path::{Path, PathBuf};

/// Errors from sweep orchestration and artifact handling.
#[derive(Debug, thiserror::Error)]
pub enum SweepError {
    /// The sweep configuration itself is unusable.
    #[error("invalid sweep configuration: {0}")]
    Config(String),
    /// Filesystem failure while reading or writing artifacts.
    #[error("i/o failure at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    /// An artifact exists but does not parse or validate.
    #[error("malformed artifact {path}: {message}")]
    Artifact { path: PathBuf, message: String },
    /// The output directory holds a sweep with a different configuration.
    #[error(
        "output directory {dir} holds a different sweep (manifest hash {found}, \
         this configuration hashes to {expected})"
    )]
    ResumeConflict {
        dir: PathBuf,
        expected: String,
        found: String,
    },
    /// A directory was expected to contain a finished sweep but does not.
    #[error("no completed sweep in {dir}: {reason}")]
    IncompleteSweep { dir: PathBuf, reason: String },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Classify(#[from] ClassifyError),
    #[error(transparent)]
    Meter(#[from] MeterError),
    #[error(transparent)]
    Telemetry(#[from] TelemetryError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

fn default_designs() -> Vec<PromptVariant> {
    PromptVariant::ALL.to_vec()
}

fn default_batch_sizes() -> Vec<usize> {
    PAPER_BATCH_SIZES.to_vec()
}

fn default_session_count() -> usize {
    35
}

fn default_feasibility() -> f64 {
    crate::tradeoff::DEFAULT_MAX_SESSION_TIME_S
}

fn default_meter_mode() -> MeterMode {
    MeterMode::Simulated {
        cpu_w: 65.0,
        gpu_w: 250.0,
        dram_w: 5.0,
    }
}

/// Everything that defines one sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    /// JSONL corpus with gold annotations.
    pub corpus_path: PathBuf,
    /// Prompt designs to run (deduplicated and sorted before execution).
    #[serde(default = "default_designs")]
    pub designs: Vec<PromptVariant>,
    /// Batch sizes to run (deduplicated and sorted before execution).
    #[serde(default = "default_batch_sizes")]
    pub batch_sizes: Vec<usize>,
    /// Endpoint and decoding settings.
    #[serde(default)]
    pub model: ModelConfig,
    /// Sessions the totals are normalized by.
    #[serde(default = "default_session_count")]
    pub session_count: usize,
    /// How energy is measured.
    #[serde(default = "default_meter_mode")]
    pub meter_mode: MeterMode,
    /// Per-session time bound used by the feasibility filter in reports.
    #[serde(default = "default_feasibility")]
    pub feasibility_max_time_s: f64,
    /// Where manifest, records, and reports are written.
    pub output_dir: PathBuf,
}

impl SweepConfig {
    /// Checks field invariants.
    pub fn validate(&self) -> Result<(), SweepError> {
        if self.designs.is_empty() {
            return Err(SweepError::Config("designs must be non-empty".into()));
        }
        if self.batch_sizes.is_empty() {
            return Err(SweepError::Config("batch_sizes must be non-empty".into()));
        }
        if let Some(bad) = self.batch_sizes.iter().find(|&&b| b == 0) {
            return Err(SweepError::Config(format!(
                "batch size {bad} is not positive"
            )));
        }
        if self.session_count == 0 {
            return Err(SweepError::Config(
                "session_count must be at least 1".into(),
            ));
        }
        if !self.feasibility_max_time_s.is_finite() || self.feasibility_max_time_s <= 0.0 {
            return Err(SweepError::Config(format!(
                "feasibility_max_time_s {} must be a positive finite number",
                self.feasibility_max_time_s
            )));
        }
        if let MeterMode::Simulated {
            cpu_w,
            gpu_w,
            dram_w,
        } = self.meter_mode
        {
            for (label, w) in [("cpu_w", cpu_w), ("gpu_w", gpu_w), ("dram_w", dram_w)] {
                if !w.is_finite() || w < 0.0 {
                    return Err(SweepError::Config(format!(
                        "simulated power {label} = {w} must be finite and ≥ 0"
                    )));
                }
            }
        }
        self.model.validate().map_err(SweepError::Config)
    }

    /// Execution grid: designs and batch sizes, sorted and deduplicated.
    pub fn grid(&self) -> (Vec<PromptVariant>, Vec<usize>) {
        let mut designs = self.designs.clone();
        designs.sort();
        designs.dedup();
        let mut batch_sizes = self.batch_sizes.clone();
        batch_sizes.sort_unstable();
        batch_sizes.dedup();
        (designs, batch_sizes)
    }
}

/// The semantic slice of a [`SweepConfig`] that identifies a sweep. Paths
/// are excluded on purpose: where the corpus lives and where artifacts are
/// written must not change what the sweep *is*.
#[derive(Serialize)]
struct HashedConfig<'a> {
    designs: &'a [PromptVariant],
    batch_sizes: &'a [usize],
    model: &'a ModelConfig,
    session_count: usize,
    meter_mode: &'a MeterMode,
    feasibility_max_time_s: f64,
}

/// Content hash identifying a sweep: semantic configuration plus the
/// canonical JSONL text of the coded corpus it runs over.
pub fn config_hash(config: &SweepConfig, coded_corpus_jsonl: &str) -> String {
    let (designs, batch_sizes) = config.grid();
    let semantic = serde_json::to_string(&HashedConfig {
        designs: &designs,
        batch_sizes: &batch_sizes,
        model: &config.model,
        session_count: config.session_count,
        meter_mode: &config.meter_mode,
        feasibility_max_time_s: config.feasibility_max_time_s,
    })
    .expect("config serialization is infallible");
    let mut hasher = Sha256::new();
    hasher.update(semantic.as_bytes());
    hasher.update(b"\n");
    hasher.update(coded_corpus_jsonl.as_bytes());
    hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Sweep identity and bookkeeping, persisted as `manifest.json`.
///
/// Holds no filesystem paths, so artifacts are byte-identical regardless of
/// where the sweep ran.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepManifest {
    /// Hash from [`config_hash`].
    pub config_hash: String,
    /// Version of this harness that produced the records.
    pub harness_version: String,
    /// How energy was measured.
    pub meter_mode: MeterMode,
    /// Designs of the execution grid.
    pub designs: Vec<PromptVariant>,
    /// Batch sizes of the execution grid.
    pub batch_sizes: Vec<usize>,
    /// Normalization denominator.
    pub session_count: usize,
    /// Clock reading when the sweep first started.
    pub started_at_s: f64,
    /// Clock reading when the sweep finished; `None` while in progress.
    pub finished_at_s: Option<f64>,
    /// Completed configurations.
    pub record_count: usize,
}

/// A completed sweep: every record plus the finalized manifest.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    /// One record per configuration, in (design, batch size) order.
    pub records: Vec<RunRecord>,
    /// The finalized manifest.
    pub manifest: SweepManifest,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> SweepError + '_ {
    move |source| SweepError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Serializes pretty JSON, writing through a temp file so interrupted runs
/// never leave a half-written artifact behind.
fn write_json_atomic<T: Serialize>(path: &Path, value: &T) -> Result<(), SweepError> {
    let mut body = serde_json::to_vec_pretty(value).map_err(|e| SweepError::Artifact {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    body.push(b'\n');
    let mut tmp = path.to_path_buf();
    tmp.set_extension("json.tmp");
    fs::write(&tmp, &body).map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, SweepError> {
    let body = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&body).map_err(|e| SweepError::Artifact {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

fn record_path(records_dir: &Path, design: PromptVariant, batch_size: usize) -> PathBuf {
    records_dir.join(format!("{}_b{}.json", design.name(), batch_size))
}

/// Reads a persisted record back, accepting it only if it parses, passes
/// validation, and matches the configuration slot it is stored under.
fn reusable_record(
    path: &Path,
    design: PromptVariant,
    batch_size: usize,
    meter_mode: MeterMode,
) -> Option<RunRecord> {
    let record: RunRecord = match read_json(path) {
        Ok(r) => r,
        Err(e) => {
            log::warn!("ignoring unreadable record {}: {e}", path.display());
            return None;
        }
    };
    if let Err(e) = record.validate() {
        log::warn!("ignoring invalid record {}: {e}", path.display());
        return None;
    }
    if record.design.variant() != design
        || record.batch_size != batch_size
        || record.meter_mode != meter_mode
    {
        log::warn!(
            "ignoring record {} that does not match its configuration slot",
            path.display()
        );
        return None;
    }
    Some(record)
}

/// Runs (or resumes) a sweep.
///
/// The corpus is loaded from `config.corpus_path` and reduced to its coded
/// utterances. Configurations run in lexicographic (design, batch size)
/// order; each one classifies the whole corpus inside a single measured
/// span and is persisted before the next starts. Configurations whose
/// record file already exists and validates are not re-executed.
pub fn run_sweep(
    config: &SweepConfig,
    transport: &mut dyn ModelTransport,
    meter: &mut dyn EnergyMeter,
    clock: &dyn Clock,
    renderer: &Renderer,
) -> Result<SweepResult, SweepError> {
    config.validate()?;
    if meter.mode() != config.meter_mode {
        return Err(SweepError::Config(format!(
            "configured meter mode ({}) does not match the supplied meter ({})",
            config.meter_mode.label(),
            meter.mode().label()
        )));
    }
    let corpus = filter_coded(&load_corpus(&config.corpus_path)?)?;
    if corpus.is_empty() {
        return Err(SweepError::Config(
            "corpus contains no coded utterances".into(),
        ));
    }
    if corpus.session_count() != config.session_count {
        log::warn!(
            "session_count is {} but the coded corpus has {} sessions; \
             per-session figures use the configured value",
            config.session_count,
            corpus.session_count()
        );
    }
    let gold: Vec<CodeVector> = corpus
        .utterances()
        .map(|u| {
            u.gold
                .expect("filter_coded keeps only annotated utterances")
        })
        .collect();
    let hash = config_hash(config, &corpus_to_jsonl(&corpus));
    let (designs, batch_sizes) = config.grid();

    let records_dir = config.output_dir.join("records");
    fs::create_dir_all(&records_dir).map_err(io_err(&records_dir))?;
    let manifest_path = config.output_dir.join("manifest.json");
    let existing: Option<SweepManifest> = if manifest_path.exists() {
        let found: SweepManifest = read_json(&manifest_path)?;
        if found.config_hash != hash {
            return Err(SweepError::ResumeConflict {
                dir: config.output_dir.clone(),
                expected: hash,
                found: found.config_hash,
            });
        }
        Some(found)
    } else {
        None
    };
    let mut manifest = SweepManifest {
        config_hash: hash,
        harness_version: env!("CARGO_PKG_VERSION").to_string(),
        meter_mode: config.meter_mode,
        designs: designs.clone(),
        batch_sizes: batch_sizes.clone(),
        session_count: config.session_count,
        started_at_s: existing
            .as_ref()
            .map_or_else(|| clock.now_s(), |m| m.started_at_s),
        finished_at_s: None,
        record_count: 0,
    };

    let mut computed_any = false;
    let mut records = Vec::with_capacity(designs.len() * batch_sizes.len());
    for &design in &designs {
        for &batch_size in &batch_sizes {
            let path = record_path(&records_dir, design, batch_size);
            if path.exists() {
                if let Some(record) = reusable_record(&path, design, batch_size, config.meter_mode)
                {
                    records.push(record);
                    continue;
                }
            }
            if !computed_any {
                // First real work: mark the sweep in progress on disk so an
                // interrupt is detectable. A rerun over a directory whose
                // records all reload never reaches this point, leaving a
                // finalized manifest finalized.
                write_json_atomic(&manifest_path, &manifest)?;
                computed_any = true;
            }
            let plan = plan_batches(&corpus, batch_size, PromptDesign::of(design))?;
            let measured = measure(meter, clock, || {
                classify(&plan, &config.model, renderer, transport)
            })?;
            let outcome = measured.value?;
            let report = multilabel_metrics(&gold, &outcome.predictions.per_utterance)?;
            let record = RunRecord::new(
                PromptDesign::of(design),
                batch_size,
                measured.time_s,
                measured.energy,
                report,
                outcome.predictions.fallback_count,
                outcome.request_count,
                outcome.retry_count,
                config.session_count,
                config.meter_mode,
            )?;
            write_json_atomic(&path, &record)?;
            records.push(record);
        }
    }

    if !computed_any {
        if let Some(found) = existing {
            if found.finished_at_s.is_some() && found.record_count == records.len() {
                // Every record was reused from a finalized sweep: keep the
                // original manifest byte-for-byte instead of re-stamping it.
                return Ok(SweepResult {
                    records,
                    manifest: found,
                });
            }
        }
    }
    manifest.finished_at_s = Some(clock.now_s());
    manifest.record_count = records.len();
    write_json_atomic(&manifest_path, &manifest)?;
    Ok(SweepResult { records, manifest })
}

/// Loads a finished sweep back from its output directory.
///
/// Fails with [`SweepError::IncompleteSweep`] when the manifest is missing
/// or not finalized, or when any record of the grid is absent.
pub fn load_sweep(dir: &Path) -> Result<SweepResult, SweepError> {
    let manifest_path = dir.join("manifest.json");
    if !manifest_path.exists() {
        return Err(SweepError::IncompleteSweep {
            dir: dir.to_path_buf(),
            reason: "manifest.json is missing".into(),
        });
    }
    let manifest: SweepManifest = read_json(&manifest_path)?;
    if manifest.finished_at_s.is_none() {
        return Err(SweepError::IncompleteSweep {
            dir: dir.to_path_buf(),
            reason: "the sweep was never finalized".into(),
        });
    }
    let records_dir = dir.join("records");
    let mut records = Vec::new();
    for &design in &manifest.designs {
        for &batch_size in &manifest.batch_sizes {
            let path = record_path(&records_dir, design, batch_size);
            if !path.exists() {
                return Err(SweepError::IncompleteSweep {
                    dir: dir.to_path_buf(),
                    reason: format!("record for {} b={batch_size} is missing", design.name()),
                });
            }
            let record: RunRecord = read_json(&path)?;
            record.validate().map_err(|e| SweepError::Artifact {
                path: path.clone(),
                message: e.to_string(),
            })?;
            records.push(record);
        }
    }
    if records.len() != manifest.record_count {
        return Err(SweepError::IncompleteSweep {
            dir: dir.to_path_buf(),
            reason: format!(
                "manifest promises {} records, found {}",
                manifest.record_count,
                records.len()
            ),
        });
    }
    Ok(SweepResult { records, manifest })
}
