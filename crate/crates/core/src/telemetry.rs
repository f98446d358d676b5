//! Wall-clock and energy telemetry for classification runs.
//!
//! Time comes from a [`Clock`] — the real [`MonotonicClock`] in production,
//! a manually advanced [`TestClock`] in tests so measured spans are exactly
//! reproducible. Energy comes from an [`EnergyMeter`]:
//!
//! * [`SimulatedMeter`] integrates constant configured power over the
//!   clock, giving deterministic joules for mock runs.
//! * [`RaplMeter`] reads the kernel's powercap counters (CPU package and
//!   DRAM domains, with wraparound correction) and can attach a
//!   [`GpuEnergyProbe`] — typically a [`SampledPowerProbe`] polling
//!   `nvidia-smi` at ≥ 10 Hz — for GPU energy.
//!
//! Meter selection is always explicit: when hardware counters are absent,
//! construction fails with [`MeterError::Unavailable`] rather than silently
//! degrading to simulation. At most one hardware meter may exist per
//! process (the counters are system-global); a process-wide token enforces
//! this.
//!
//! [`measure`] wraps a closure in paired clock and meter readings and
//! yields a [`Measured`] span. [`RunRecord`] is the persisted, per-session
//! normalized result of one sweep configuration.

use crate::batchrunner::PAPER_BATCH_SIZES;
use crate::metrics::MetricsReport;
use crate::promptkit::PromptDesign;
use serde::{Deserialize, Serialize};
use std::cell::Cell;
use std::fs;
use std::path::{Path, PathBuf};
use std::rc::Rc;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

/// Errors produced by meters and probes.
#[derive(Debug, thiserror::Error)]
pub enum MeterError {
    /// The requested hardware counters do not exist on this machine.
    /// The caller must select the simulated meter explicitly; there is no
    /// silent fallback.
    #[error("energy meter unavailable: {0}")]
    Unavailable(String),
    /// A hardware meter is already active in this process.
    #[error("a hardware energy meter is already acquired by this process")]
    AlreadyAcquired,
    /// Reading a counter file failed.
    #[error("energy counter I/O at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    /// A counter file held something other than a number.
    #[error("energy counter parse at {path}: {message}")]
    Parse { path: PathBuf, message: String },
    /// The GPU sampling probe stopped with an error.
    #[error("power probe failed: {0}")]
    ProbeFailed(String),
    /// Probe configuration was invalid (e.g. sampling rate too low).
    #[error("invalid probe configuration: {0}")]
    InvalidProbe(String),
}

/// Errors produced by record construction and normalization.
#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum TelemetryError {
    /// Per-session normalization needs at least one session.
    #[error("cannot normalize by zero sessions")]
    ZeroSessions,
    /// A run record violated an internal consistency invariant.
    #[error("invalid run record: {0}")]
    InvalidRecord(String),
}

/// A monotonic time source, in seconds.
pub trait Clock {
    /// Seconds since an arbitrary fixed origin; never decreases.
    fn now_s(&self) -> f64;
}

/// Real monotonic clock.
#[derive(Debug)]
pub struct MonotonicClock {
    origin: Instant,
}

impl MonotonicClock {
    /// A clock whose origin is now.
    pub fn new() -> MonotonicClock {
        MonotonicClock {
            origin: Instant::now(),
        }
    }
}

impl Default for MonotonicClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for MonotonicClock {
    fn now_s(&self) -> f64 {
        self.origin.elapsed().as_secs_f64()
    }
}

/// Manually advanced clock for deterministic tests.
///
/// Reading the clock never changes it; time moves only through
/// [`TestClock::advance`]. Spans measured against it are therefore exactly
/// additive: tiled inner spans sum to their enclosing span.
#[derive(Debug)]
pub struct TestClock {
    t: Cell<f64>,
}

impl TestClock {
    /// A test clock starting at `start_s`.
    pub fn new(start_s: f64) -> TestClock {
        TestClock {
            t: Cell::new(start_s),
        }
    }

    /// Moves time forward by `delta_s` (must be non-negative).
    pub fn advance(&self, delta_s: f64) {
        assert!(
            delta_s >= 0.0,
            "test clock cannot move backwards (delta {delta_s})"
        );
        self.t.set(self.t.get() + delta_s);
    }
}

impl Clock for TestClock {
    fn now_s(&self) -> f64 {
        self.t.get()
    }
}

/// Cumulative energy counters, joules since meter construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyReading {
    /// CPU package domains.
    pub cpu_j: f64,
    /// GPU (from the attached probe; 0 when absent).
    pub gpu_j: f64,
    /// DRAM domains (0 when absent).
    pub dram_j: f64,
}

/// How energy was measured, persisted alongside every run record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum MeterMode {
    /// Kernel powercap counters plus optional GPU probe.
    Hardware,
    /// Constant configured power integrated over the clock.
    Simulated {
        /// Modeled CPU power draw, watts.
        cpu_w: f64,
        /// Modeled GPU power draw, watts.
        gpu_w: f64,
        /// Modeled DRAM power draw, watts.
        dram_w: f64,
    },
}

impl MeterMode {
    /// Stable one-token description for CSV cells.
    pub fn label(&self) -> String {
        match self {
            MeterMode::Hardware => "hardware".to_string(),
            MeterMode::Simulated {
                cpu_w,
                gpu_w,
                dram_w,
            } => format!("simulated(cpu={cpu_w}W,gpu={gpu_w}W,dram={dram_w}W)"),
        }
    }
}

/// Source of cumulative energy counters.
pub trait EnergyMeter {
    /// Current cumulative counters. Monotone non-decreasing per component.
    fn read(&mut self) -> Result<EnergyReading, MeterError>;
    /// How this meter measures.
    fn mode(&self) -> MeterMode;
}

/// Deterministic meter: constant configured power integrated over a clock.
pub struct SimulatedMeter {
    cpu_w: f64,
    gpu_w: f64,
    dram_w: f64,
    clock: Rc<dyn Clock>,
    origin_s: f64,
}

impl SimulatedMeter {
    /// A simulated meter drawing the given constant powers, timed by `clock`.
    pub fn new(cpu_w: f64, gpu_w: f64, dram_w: f64, clock: Rc<dyn Clock>) -> SimulatedMeter {
        let origin_s = clock.now_s();
        SimulatedMeter {
            cpu_w,
            gpu_w,
            dram_w,
            clock,
            origin_s,
        }
    }
}

impl EnergyMeter for SimulatedMeter {
    fn read(&mut self) -> Result<EnergyReading, MeterError> {
        let elapsed = (self.clock.now_s() - self.origin_s).max(0.0);
        Ok(EnergyReading {
            cpu_j: self.cpu_w * elapsed,
            gpu_j: self.gpu_w * elapsed,
            dram_j: self.dram_w * elapsed,
        })
    }

    fn mode(&self) -> MeterMode {
        MeterMode::Simulated {
            cpu_w: self.cpu_w,
            gpu_w: self.gpu_w,
            dram_w: self.dram_w,
        }
    }
}

/// Source of instantaneous power readings, polled by [`SampledPowerProbe`].
pub trait PowerSource: Send {
    /// Current power draw in watts.
    fn power_w(&mut self) -> Result<f64, MeterError>;
}

/// Cumulative GPU energy source attachable to a [`RaplMeter`].
pub trait GpuEnergyProbe {
    /// Joules accumulated since the probe started.
    fn energy_j(&mut self) -> Result<f64, MeterError>;
}

/// Minimum sampling rate for power integration; below this, short
/// inference spans would be invisible to the probe.
pub const MIN_PROBE_HZ: f64 = 10.0;

struct ProbeState {
    joules: f64,
    error: Option<String>,
}

/// Background thread that polls a [`PowerSource`] at a fixed rate and
/// integrates power into cumulative energy (rectangle rule over measured
/// intervals).
pub struct SampledPowerProbe {
    state: Arc<Mutex<ProbeState>>,
    stop: Arc<AtomicBool>,
    handle: Option<std::thread::JoinHandle<()>>,
}

impl SampledPowerProbe {
    /// Starts sampling `source` at `sample_hz` (must be ≥ 10 Hz).
    pub fn start(
        mut source: Box<dyn PowerSource>,
        sample_hz: f64,
    ) -> Result<SampledPowerProbe, MeterError> {
        if !sample_hz.is_finite() || sample_hz < MIN_PROBE_HZ {
            return Err(MeterError::InvalidProbe(format!(
                "sampling rate {sample_hz} Hz is below the {MIN_PROBE_HZ} Hz minimum"
            )));
        }
        let state = Arc::new(Mutex::new(ProbeState {
            joules: 0.0,
            error: None,
        }));
        let stop = Arc::new(AtomicBool::new(false));
        let thread_state = Arc::clone(&state);
        let thread_stop = Arc::clone(&stop);
        let interval = Duration::from_secs_f64(1.0 / sample_hz);
        let handle = std::thread::spawn(move || {
            let mut prev = Instant::now();
            while !thread_stop.load(Ordering::Relaxed) {
                std::thread::sleep(interval);
                let now = Instant::now();
                match source.power_w() {
                    Ok(watts) => {
                        let mut s = thread_state.lock().expect("probe state");
                        s.joules += watts * now.duration_since(prev).as_secs_f64();
                    }
                    Err(e) => {
                        let mut s = thread_state.lock().expect("probe state");
                        s.error = Some(e.to_string());
                        break;
                    }
                }
                prev = now;
            }
        });
        Ok(SampledPowerProbe {
            state,
            stop,
            handle: Some(handle),
        })
    }
}

impl GpuEnergyProbe for SampledPowerProbe {
    fn energy_j(&mut self) -> Result<f64, MeterError> {
        let s = self.state.lock().expect("probe state");
        if let Some(e) = &s.error {
            return Err(MeterError::ProbeFailed(e.clone()));
        }
        Ok(s.joules)
    }
}

impl Drop for SampledPowerProbe {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::Relaxed);
        if let Some(handle) = self.handle.take() {
            let _ = handle.join();
        }
    }
}

/// Power source backed by `nvidia-smi --query-gpu=power.draw`.
pub struct NvidiaSmiSource;

impl NvidiaSmiSource {
    /// Verifies `nvidia-smi` answers before accepting the source.
    pub fn probe() -> Result<NvidiaSmiSource, MeterError> {
        let mut source = NvidiaSmiSource;
        source.power_w()?;
        Ok(source)
    }
}

/// Parses `nvidia-smi` power output: one watts value per GPU line, summed.
fn parse_power_sum(output: &str) -> Result<f64, MeterError> {
    let mut total = 0.0;
    let mut any = false;
    for line in output.lines() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let watts: f64 = line
            .parse()
            .map_err(|_| MeterError::ProbeFailed(format!("unparseable power value {line:?}")))?;
        total += watts;
        any = true;
    }
    if !any {
        return Err(MeterError::ProbeFailed("no power readings returned".into()));
    }
    Ok(total)
}

impl PowerSource for NvidiaSmiSource {
    fn power_w(&mut self) -> Result<f64, MeterError> {
        let output = std::process::Command::new("nvidia-smi")
            .args(["--query-gpu=power.draw", "--format=csv,noheader,nounits"])
            .output()
            .map_err(|e| MeterError::Unavailable(format!("nvidia-smi not runnable: {e}")))?;
        if !output.status.success() {
            return Err(MeterError::Unavailable(format!(
                "nvidia-smi exited with {}",
                output.status
            )));
        }
        parse_power_sum(&String::from_utf8_lossy(&output.stdout))
    }
}

/// Process-global ownership token for hardware meters. The underlying
/// counters are system-wide, so two concurrent hardware meters would
/// double-count each other's spans.
static HARDWARE_METER_ACQUIRED: AtomicBool = AtomicBool::new(false);

struct HardwareToken;

impl HardwareToken {
    fn acquire() -> Result<HardwareToken, MeterError> {
        if HARDWARE_METER_ACQUIRED.swap(true, Ordering::SeqCst) {
            return Err(MeterError::AlreadyAcquired);
        }
        Ok(HardwareToken)
    }
}

impl Drop for HardwareToken {
    fn drop(&mut self) {
        HARDWARE_METER_ACQUIRED.store(false, Ordering::SeqCst);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum DomainKind {
    Package,
    Dram,
}

struct RaplDomain {
    kind: DomainKind,
    energy_path: PathBuf,
    max_range_uj: u64,
    last_raw_uj: u64,
    accumulated_uj: u128,
}

fn read_counter(path: &Path) -> Result<u64, MeterError> {
    let text = fs::read_to_string(path).map_err(|source| MeterError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    text.trim().parse().map_err(|_| MeterError::Parse {
        path: path.to_path_buf(),
        message: format!("expected integer microjoules, got {:?}", text.trim()),
    })
}

/// Hardware meter over the kernel powercap (RAPL) counters.
///
/// Scans a powercap directory for `intel-rapl:*` domains; `package*`
/// domains are summed as CPU energy and `dram` domains as DRAM energy.
/// Counters wrap at each domain's advertised range; wraps are corrected as
/// long as the counter wraps at most once between reads. GPU energy comes
/// from an optionally attached [`GpuEnergyProbe`].
pub struct RaplMeter {
    domains: Vec<RaplDomain>,
    gpu: Option<Box<dyn GpuEnergyProbe>>,
    origin: EnergyReading,
    // Held for its Drop; releases the process-global hardware slot.
    _token: HardwareToken,
}

/// Default location of the powercap tree on Linux.
pub const POWERCAP_ROOT: &str = "/sys/class/powercap";

impl RaplMeter {
    /// Probes `sysfs_root` (normally [`POWERCAP_ROOT`]) for RAPL domains.
    ///
    /// Fails with [`MeterError::Unavailable`] when no CPU package domain
    /// exists — callers that want simulation must choose it explicitly.
    pub fn probe(sysfs_root: &Path) -> Result<RaplMeter, MeterError> {
        let token = HardwareToken::acquire()?;
        let entries = fs::read_dir(sysfs_root).map_err(|source| MeterError::Io {
            path: sysfs_root.to_path_buf(),
            source,
        })?;
        let mut dirs: Vec<PathBuf> = entries
            .filter_map(|e| e.ok())
            .map(|e| e.path())
            .filter(|p| {
                p.file_name()
                    .and_then(|n| n.to_str())
                    .is_some_and(|n| n.starts_with("intel-rapl:"))
            })
            .collect();
        dirs.sort();
        let mut domains = Vec::new();
        for dir in dirs {
            let name_path = dir.join("name");
            if !name_path.exists() {
                continue;
            }
            let name = fs::read_to_string(&name_path)
                .map_err(|source| MeterError::Io {
                    path: name_path.clone(),
                    source,
                })?
                .trim()
                .to_string();
            let kind = if name.starts_with("package") {
                DomainKind::Package
            } else if name == "dram" {
                DomainKind::Dram
            } else {
                continue;
            };
            let energy_path = dir.join("energy_uj");
            let max_range_uj = read_counter(&dir.join("max_energy_range_uj"))?;
            let last_raw_uj = read_counter(&energy_path)?;
            domains.push(RaplDomain {
                kind,
                energy_path,
                max_range_uj,
                last_raw_uj,
                accumulated_uj: 0,
            });
        }
        if !domains.iter().any(|d| d.kind == DomainKind::Package) {
            return Err(MeterError::Unavailable(format!(
                "no RAPL package domain under {}",
                sysfs_root.display()
            )));
        }
        let mut meter = RaplMeter {
            domains,
            gpu: None,
            origin: EnergyReading {
                cpu_j: 0.0,
                gpu_j: 0.0,
                dram_j: 0.0,
            },
            _token: token,
        };
        meter.origin = meter.read_raw()?;
        Ok(meter)
    }

    /// Attaches a GPU energy probe.
    pub fn with_gpu(mut self, probe: Box<dyn GpuEnergyProbe>) -> RaplMeter {
        self.gpu = Some(probe);
        self
    }

    fn read_raw(&mut self) -> Result<EnergyReading, MeterError> {
        let mut cpu_uj: u128 = 0;
        let mut dram_uj: u128 = 0;
        for domain in &mut self.domains {
            let raw = read_counter(&domain.energy_path)?;
            let delta = if raw >= domain.last_raw_uj {
                (raw - domain.last_raw_uj) as u128
            } else {
                // Counter wrapped: remainder to the wrap point plus the new value.
                (domain.max_range_uj - domain.last_raw_uj) as u128 + raw as u128
            };
            domain.accumulated_uj += delta;
            domain.last_raw_uj = raw;
            match domain.kind {
                DomainKind::Package => cpu_uj += domain.accumulated_uj,
                DomainKind::Dram => dram_uj += domain.accumulated_uj,
            }
        }
        let gpu_j = match &mut self.gpu {
            Some(probe) => probe.energy_j()?,
            None => 0.0,
        };
        Ok(EnergyReading {
            cpu_j: cpu_uj as f64 / 1e6,
            gpu_j,
            dram_j: dram_uj as f64 / 1e6,
        })
    }
}

impl EnergyMeter for RaplMeter {
    fn read(&mut self) -> Result<EnergyReading, MeterError> {
        let raw = self.read_raw()?;
        Ok(EnergyReading {
            cpu_j: raw.cpu_j - self.origin.cpu_j,
            gpu_j: raw.gpu_j - self.origin.gpu_j,
            dram_j: raw.dram_j - self.origin.dram_j,
        })
    }

    fn mode(&self) -> MeterMode {
        MeterMode::Hardware
    }
}

/// Energy spent in one measured span, joules.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergySample {
    /// CPU package joules.
    pub cpu_j: f64,
    /// GPU joules.
    pub gpu_j: f64,
    /// DRAM joules.
    pub dram_j: f64,
    /// Sum of the components.
    pub total_j: f64,
}

impl EnergySample {
    /// Builds a sample; the total is always derived from the components.
    pub fn new(cpu_j: f64, gpu_j: f64, dram_j: f64) -> EnergySample {
        EnergySample {
            cpu_j,
            gpu_j,
            dram_j,
            total_j: cpu_j + gpu_j + dram_j,
        }
    }
}

/// A measured span: the closure result plus elapsed time and energy.
#[derive(Debug)]
pub struct Measured<T> {
    /// Whatever the measured closure returned.
    pub value: T,
    /// Elapsed wall-clock seconds.
    pub time_s: f64,
    /// Energy spent during the span.
    pub energy: EnergySample,
}

/// Runs `work` between paired clock and meter readings.
///
/// The time readings are taken inside the energy readings, so a span's time
/// window is contained in its energy window; with counters that only grow,
/// nested spans never report more than their enclosing span.
pub fn measure<T>(
    meter: &mut dyn EnergyMeter,
    clock: &dyn Clock,
    work: impl FnOnce() -> T,
) -> Result<Measured<T>, MeterError> {
    let e0 = meter.read()?;
    let t0 = clock.now_s();
    let value = work();
    let t1 = clock.now_s();
    let e1 = meter.read()?;
    Ok(Measured {
        value,
        time_s: (t1 - t0).max(0.0),
        energy: EnergySample::new(
            (e1.cpu_j - e0.cpu_j).max(0.0),
            (e1.gpu_j - e0.gpu_j).max(0.0),
            (e1.dram_j - e0.dram_j).max(0.0),
        ),
    })
}

/// Divides a run total evenly across sessions.
pub fn per_session(total: f64, session_count: usize) -> Result<f64, TelemetryError> {
    if session_count == 0 {
        return Err(TelemetryError::ZeroSessions);
    }
    Ok(total / session_count as f64)
}

/// Persisted result of one sweep configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    /// The prompt design that was run.
    pub design: PromptDesign,
    /// Utterances per request.
    pub batch_size: usize,
    /// Whether `batch_size` lies outside the standard sweep grid.
    pub non_paper_batch_size: bool,
    /// Total wall-clock seconds for the whole configuration.
    pub total_time_s: f64,
    /// `total_time_s / session_count`.
    pub per_session_time_s: f64,
    /// Energy spent over the whole configuration.
    pub energy: EnergySample,
    /// `energy.total_j / session_count`.
    pub per_session_energy_j: f64,
    /// Coding quality against gold.
    pub metrics: MetricsReport<f64>,
    /// Utterances that received the zero-vector fallback after a failed
    /// retry.
    pub fallback_count: u64,
    /// Primary requests issued (= number of batches).
    pub request_count: u64,
    /// Retry requests issued on top of the primary ones.
    pub retry_count: u64,
    /// Sessions the totals are normalized by.
    pub session_count: usize,
    /// How energy was measured.
    pub meter_mode: MeterMode,
}

impl RunRecord {
    /// Builds a record, deriving the per-session normalizations and the
    /// non-standard-batch flag, then checking all consistency invariants.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        design: PromptDesign,
        batch_size: usize,
        total_time_s: f64,
        energy: EnergySample,
        metrics: MetricsReport<f64>,
        fallback_count: u64,
        request_count: u64,
        retry_count: u64,
        session_count: usize,
        meter_mode: MeterMode,
    ) -> Result<RunRecord, TelemetryError> {
        let record = RunRecord {
            design,
            batch_size,
            non_paper_batch_size: !PAPER_BATCH_SIZES.contains(&batch_size),
            total_time_s,
            per_session_time_s: per_session(total_time_s, session_count)?,
            energy,
            per_session_energy_j: per_session(energy.total_j, session_count)?,
            metrics,
            fallback_count,
            request_count,
            retry_count,
            session_count,
            meter_mode,
        };
        record.validate()?;
        Ok(record)
    }

    /// Checks internal consistency; also applied to records loaded from
    /// disk before they are trusted for resume.
    pub fn validate(&self) -> Result<(), TelemetryError> {
        let fail = |reason: String| Err(TelemetryError::InvalidRecord(reason));
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0);
        if self.batch_size == 0 {
            return fail("batch_size must be at least 1".into());
        }
        if self.session_count == 0 {
            return fail("session_count must be at least 1".into());
        }
        if !(self.total_time_s.is_finite() && self.total_time_s >= 0.0) {
            return fail(format!("total_time_s {} invalid", self.total_time_s));
        }
        for (name, v) in [
            ("cpu_j", self.energy.cpu_j),
            ("gpu_j", self.energy.gpu_j),
            ("dram_j", self.energy.dram_j),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return fail(format!("energy component {name} {v} invalid"));
            }
        }
        if !close(
            self.energy.total_j,
            self.energy.cpu_j + self.energy.gpu_j + self.energy.dram_j,
        ) {
            return fail("energy total does not equal the sum of its components".into());
        }
        if !close(
            self.per_session_time_s * self.session_count as f64,
            self.total_time_s,
        ) {
            return fail("per-session time does not renormalize to the total".into());
        }
        if !close(
            self.per_session_energy_j * self.session_count as f64,
            self.energy.total_j,
        ) {
            return fail("per-session energy does not renormalize to the total".into());
        }
        if self.non_paper_batch_size == PAPER_BATCH_SIZES.contains(&self.batch_size) {
            return fail("non_paper_batch_size flag contradicts the batch size".into());
        }
        if self.retry_count > self.request_count {
            return fail(format!(
                "retry_count {} exceeds request_count {}",
                self.retry_count, self.request_count
            ));
        }
        for (name, v) in [
            ("f1_macro", self.metrics.f1_macro),
            ("precision_macro", self.metrics.precision_macro),
            ("recall_macro", self.metrics.recall_macro),
            ("subset_accuracy", self.metrics.subset_accuracy),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return fail(format!("metric {name} {v} outside [0, 1]"));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn test_clock_only_moves_when_advanced() {
        let clock = TestClock::new(5.0);
        assert_relative_eq!(clock.now_s(), 5.0);
        assert_relative_eq!(clock.now_s(), 5.0);
        clock.advance(2.5);
        assert_relative_eq!(clock.now_s(), 7.5);
    }

    #[test]
    fn simulated_meter_integrates_constant_power() {
        let clock = Rc::new(TestClock::new(0.0));
        let mut meter = SimulatedMeter::new(60.0, 30.0, 10.0, clock.clone());
        clock.advance(10.0);
        let reading = meter.read().unwrap();
        assert_relative_eq!(reading.cpu_j, 600.0);
        assert_relative_eq!(reading.gpu_j, 300.0);
        assert_relative_eq!(reading.dram_j, 100.0);
    }

    #[test]
    fn measure_captures_span_time_and_energy() {
        let clock = Rc::new(TestClock::new(0.0));
        let mut meter = SimulatedMeter::new(100.0, 0.0, 0.0, clock.clone());
        clock.advance(3.0); // outside the span; must not be attributed
        let span = measure(&mut meter, clock.as_ref(), || clock.advance(10.0)).unwrap();
        assert_relative_eq!(span.time_s, 10.0);
        assert_relative_eq!(span.energy.cpu_j, 1000.0);
        assert_relative_eq!(span.energy.total_j, 1000.0);
    }

    #[test]
    fn tiled_spans_sum_exactly_to_the_enclosing_span() {
        let clock = Rc::new(TestClock::new(0.0));
        let mut outer_meter = SimulatedMeter::new(50.0, 25.0, 5.0, clock.clone());
        let mut inner_meter = SimulatedMeter::new(50.0, 25.0, 5.0, clock.clone());
        let deltas = [1.0, 2.5, 0.5, 4.0];
        let clock_for_outer = clock.clone();
        let outer = measure(&mut outer_meter, clock.as_ref(), || {
            let mut inner_sum_t = 0.0;
            let mut inner_sum_j = 0.0;
            for d in deltas {
                let span = measure(&mut inner_meter, clock_for_outer.as_ref(), || {
                    clock_for_outer.advance(d)
                })
                .unwrap();
                inner_sum_t += span.time_s;
                inner_sum_j += span.energy.total_j;
            }
            (inner_sum_t, inner_sum_j)
        })
        .unwrap();
        let (inner_t, inner_j) = outer.value;
        assert_relative_eq!(outer.time_s, 8.0);
        assert_relative_eq!(inner_t, outer.time_s);
        assert_relative_eq!(inner_j, outer.energy.total_j);
    }

    #[test]
    fn sampled_probe_accumulates_energy_from_constant_power() {
        struct Constant(f64);
        impl PowerSource for Constant {
            fn power_w(&mut self) -> Result<f64, MeterError> {
                Ok(self.0)
            }
        }
        let mut probe = SampledPowerProbe::start(Box::new(Constant(100.0)), 50.0).unwrap();
        std::thread::sleep(Duration::from_millis(120));
        let j = probe.energy_j().unwrap();
        // 100 W for ~0.12 s ≈ 12 J; allow a very wide scheduling margin.
        assert!(j > 1.0 && j < 120.0, "joules: {j}");
    }

    #[test]
    fn probe_rejects_slow_sampling_and_surfaces_source_errors() {
        struct Broken;
        impl PowerSource for Broken {
            fn power_w(&mut self) -> Result<f64, MeterError> {
                Err(MeterError::Unavailable("gone".into()))
            }
        }
        assert!(matches!(
            SampledPowerProbe::start(Box::new(Broken), 1.0),
            Err(MeterError::InvalidProbe(_))
        ));
        let mut probe = SampledPowerProbe::start(Box::new(Broken), 100.0).unwrap();
        std::thread::sleep(Duration::from_millis(60));
        assert!(matches!(probe.energy_j(), Err(MeterError::ProbeFailed(_))));
    }

    #[test]
    fn power_parse_sums_gpu_lines() {
        assert_relative_eq!(parse_power_sum("38.5\n41.0\n").unwrap(), 79.5);
        assert!(matches!(
            parse_power_sum("n/a\n"),
            Err(MeterError::ProbeFailed(_))
        ));
        assert!(matches!(
            parse_power_sum(""),
            Err(MeterError::ProbeFailed(_))
        ));
    }

    /// All RAPL behaviors in one test: the meter holds a process-global
    /// token, so splitting these into parallel tests would make them race
    /// for it.
    #[test]
    fn rapl_meter_reads_counters_with_wraparound_and_exclusive_ownership() {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path();
        let pkg = root.join("intel-rapl:0");
        let dram = root.join("intel-rapl:0:0");
        std::fs::create_dir_all(&pkg).unwrap();
        std::fs::create_dir_all(&dram).unwrap();
        std::fs::write(pkg.join("name"), "package-0\n").unwrap();
        std::fs::write(pkg.join("max_energy_range_uj"), "1000000\n").unwrap();
        std::fs::write(pkg.join("energy_uj"), "900000\n").unwrap();
        std::fs::write(dram.join("name"), "dram\n").unwrap();
        std::fs::write(dram.join("max_energy_range_uj"), "1000000\n").unwrap();
        std::fs::write(dram.join("energy_uj"), "100000\n").unwrap();

        let mut meter = RaplMeter::probe(root).unwrap();
        assert_eq!(meter.mode(), MeterMode::Hardware);

        // Second hardware meter in the same process is refused.
        assert!(matches!(
            RaplMeter::probe(root),
            Err(MeterError::AlreadyAcquired)
        ));

        let r0 = meter.read().unwrap();
        assert_relative_eq!(r0.cpu_j, 0.0);
        assert_relative_eq!(r0.dram_j, 0.0);

        // Plain increase on dram; wrap on the package counter:
        // 900000 → 150000 with range 1000000 means 100000 to the wrap
        // point plus 150000 after it = 250000 µJ = 0.25 J.
        std::fs::write(pkg.join("energy_uj"), "150000\n").unwrap();
        std::fs::write(dram.join("energy_uj"), "400000\n").unwrap();
        let r1 = meter.read().unwrap();
        assert_relative_eq!(r1.cpu_j, 0.25);
        assert_relative_eq!(r1.dram_j, 0.3);

        // Garbage in a counter file surfaces as a parse error.
        std::fs::write(pkg.join("energy_uj"), "not-a-number\n").unwrap();
        assert!(matches!(meter.read(), Err(MeterError::Parse { .. })));

        // Token release on drop lets a new meter acquire.
        drop(meter);
        std::fs::write(pkg.join("energy_uj"), "1\n").unwrap();
        assert!(RaplMeter::probe(root).is_ok());

        // A tree without a package domain is unavailable (never a silent
        // fallback to simulation).
        let empty = tempfile::tempdir().unwrap();
        assert!(matches!(
            RaplMeter::probe(empty.path()),
            Err(MeterError::Unavailable(_))
        ));
    }

    #[test]
    fn per_session_normalization_and_record_invariants() {
        assert_relative_eq!(per_session(70.0, 35).unwrap(), 2.0);
        assert_eq!(
            per_session(70.0, 0).unwrap_err(),
            TelemetryError::ZeroSessions
        );

        let metrics = MetricsReport {
            f1_macro: 0.6,
            precision_macro: 0.65,
            recall_macro: 0.58,
            subset_accuracy: 0.4,
            per_label_f1: [0.6; 6],
        };
        let record = RunRecord::new(
            PromptDesign::of(crate::promptkit::PromptVariant::P2),
            20,
            700.0,
            EnergySample::new(500.0, 400.0, 100.0),
            metrics.clone(),
            3,
            100,
            2,
            35,
            MeterMode::Simulated {
                cpu_w: 60.0,
                gpu_w: 30.0,
                dram_w: 10.0,
            },
        )
        .unwrap();
        assert_relative_eq!(record.per_session_time_s, 20.0);
        assert_relative_eq!(record.per_session_energy_j, 1000.0 / 35.0);
        assert!(!record.non_paper_batch_size);

        let odd = RunRecord::new(
            PromptDesign::of(crate::promptkit::PromptVariant::P2),
            25,
            700.0,
            EnergySample::new(1.0, 0.0, 0.0),
            metrics.clone(),
            0,
            10,
            0,
            35,
            MeterMode::Hardware,
        )
        .unwrap();
        assert!(odd.non_paper_batch_size);

        // Tampered records fail validation.
        let mut bad = record.clone();
        bad.per_session_time_s = 1.0;
        assert!(bad.validate().is_err());
        let mut bad = record.clone();
        bad.energy.total_j = 5.0;
        assert!(bad.validate().is_err());
        let mut bad = record.clone();
        bad.retry_count = bad.request_count + 1;
        assert!(bad.validate().is_err());
        let mut bad = record;
        bad.non_paper_batch_size = true;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn run_record_serde_round_trips() {
        let record = RunRecord::new(
            PromptDesign::of(crate::promptkit::PromptVariant::P3),
            10,
            350.0,
            EnergySample::new(100.0, 200.0, 50.0),
            MetricsReport {
                f1_macro: 0.61,
                precision_macro: 0.68,
                recall_macro: 0.62,
                subset_accuracy: 0.35,
                per_label_f1: [0.5, 0.6, 0.7, 0.4, 0.65, 0.55],
            },
            0,
            406,
            0,
            35,
            MeterMode::Hardware,
        )
        .unwrap();
        let json = serde_json::to_string_pretty(&record).unwrap();
        let back: RunRecord = serde_json::from_str(&json).unwrap();
        assert_eq!(back, record);
        assert!(json.contains("\"design\": \"P3\""));
        assert!(json.contains("\"mode\": \"hardware\""));
    }
}
