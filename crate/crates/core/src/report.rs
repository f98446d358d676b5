//! Report emission: per-run tables, correlation summaries, plot-data
//! series, and the Pareto trade-off report.
//!
//! Two precision regimes apply deliberately. `runs.csv` and the
//! `plotdata/` series carry full precision (shortest round-trip decimal),
//! because downstream analysis must see exactly what was measured. The
//! matrix and per-label CSVs and the Markdown report display 2 decimals,
//! the same rounding the published-style tables use — which is also why
//! dominance near-ties within [`ROUNDING_TIE_EPS`] are annotated instead
//! of silently resolved: at display precision those pairs are ties, and
//! which one "wins" at full precision is measurement noise.

use crate::codes::Code;
use crate::metrics::{spearman, MetricsError};
use crate::promptkit::PromptVariant;
use crate::telemetry::RunRecord;
use crate::tradeoff::{
    dominates, feasibility_filter, pareto_front, reduce_objectives, ConfigId, Direction,
    FeasibilitySplit, ObjectivePoint, ParetoFront, ReductionNote, TradeoffError,
    DEFAULT_MAX_SESSION_TIME_S, DEFAULT_REDUCTION_THRESHOLD, ROUNDING_TIE_EPS,
};
use crate::Scalar;
use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

/// Slack added to [`ROUNDING_TIE_EPS`] comparisons so values that sit
/// exactly on the tolerance are still counted as ties.
const TIE_SLOP: f64 = 1e-9;

/// Errors from report emission and artifact reading.
#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    /// Filesystem failure.
    #[error("i/o failure at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    /// A CSV could not be written or parsed.
    #[error("csv error in {path}: {message}")]
    Csv { path: PathBuf, message: String },
    /// A requested column or objective does not exist.
    #[error("missing column {column:?} in {context}")]
    MissingColumn { column: String, context: String },
    /// Nothing to report.
    #[error("no records to report")]
    EmptyInput,
    #[error(transparent)]
    Tradeoff(#[from] TradeoffError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ReportError + '_ {
    move |source| ReportError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> ReportError + '_ {
    move |e| ReportError::Csv {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

/// Full-precision decimal: the shortest string that round-trips the value.
fn full(x: f64) -> String {
    format!("{x}")
}

/// Display precision used by the matrix CSVs and Markdown tables.
fn two(x: f64) -> String {
    format!("{x:.2}")
}

fn sorted_records(records: &[RunRecord]) -> Vec<&RunRecord> {
    let mut sorted: Vec<&RunRecord> = records.iter().collect();
    sorted.sort_by_key(|r| (r.design.variant(), r.batch_size));
    sorted
}

/// Converts run records into trade-off points: macro-F1 versus per-session
/// time and per-session energy.
pub fn objective_points(records: &[RunRecord]) -> Result<Vec<ObjectivePoint<Scalar>>, ReportError> {
    sorted_records(records)
        .iter()
        .map(|r| {
            ObjectivePoint::new(
                ConfigId::new(r.design.variant(), r.batch_size),
                r.metrics.f1_macro,
                r.per_session_time_s,
                Some(r.per_session_energy_j),
            )
            .map_err(ReportError::from)
        })
        .collect()
}

/// Per-label F1 rows keyed by configuration, in grid order.
pub fn per_label_rows(records: &[RunRecord]) -> Vec<(ConfigId, [Scalar; 6])> {
    sorted_records(records)
        .iter()
        .map(|r| {
            (
                ConfigId::new(r.design.variant(), r.batch_size),
                r.metrics.per_label_f1,
            )
        })
        .collect()
}

/// One point of a plot-data series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesPoint {
    /// The configuration the value belongs to.
    pub config: ConfigId,
    /// The objective value.
    pub value: Scalar,
}

/// Extracts a named objective series from records, for plotting value
/// against batch size per design. Known objectives: `time` (per-session
/// seconds), `f1` (macro-F1), `energy` (per-session joules).
pub fn plot_series(
    records: &[RunRecord],
    objective: &str,
) -> Result<Vec<SeriesPoint>, ReportError> {
    if records.is_empty() {
        return Err(ReportError::EmptyInput);
    }
    let pick: fn(&RunRecord) -> f64 = match objective {
        "time" => |r| r.per_session_time_s,
        "f1" => |r| r.metrics.f1_macro,
        "energy" => |r| r.per_session_energy_j,
        _ => {
            return Err(ReportError::MissingColumn {
                column: objective.to_string(),
                context: "plot series (known objectives: time, f1, energy)".to_string(),
            })
        }
    };
    Ok(sorted_records(records)
        .iter()
        .map(|r| SeriesPoint {
            config: ConfigId::new(r.design.variant(), r.batch_size),
            value: pick(r),
        })
        .collect())
}

fn write_matrix(
    path: &Path,
    records: &[&RunRecord],
    pick: fn(&RunRecord) -> f64,
) -> Result<(), ReportError> {
    let designs: BTreeSet<PromptVariant> = records.iter().map(|r| r.design.variant()).collect();
    let batch_sizes: BTreeSet<usize> = records.iter().map(|r| r.batch_size).collect();
    let mut writer = csv::Writer::from_path(path).map_err(csv_err(path))?;
    let mut header = vec!["batch_size".to_string()];
    header.extend(designs.iter().map(|d| d.name().to_string()));
    writer.write_record(&header).map_err(csv_err(path))?;
    for &batch in &batch_sizes {
        let mut row = vec![batch.to_string()];
        for &design in &designs {
            let cell = records
                .iter()
                .find(|r| r.design.variant() == design && r.batch_size == batch)
                .map(|r| two(pick(r)))
                .unwrap_or_default();
            row.push(cell);
        }
        writer.write_record(&row).map_err(csv_err(path))?;
    }
    writer.flush().map_err(io_err(path))?;
    Ok(())
}

fn write_runs_csv(path: &Path, records: &[&RunRecord]) -> Result<(), ReportError> {
    let mut writer = csv::Writer::from_path(path).map_err(csv_err(path))?;
    let mut header = vec![
        "design".to_string(),
        "batch_size".to_string(),
        "non_paper_batch_size".to_string(),
        "f1_macro".to_string(),
        "precision_macro".to_string(),
        "recall_macro".to_string(),
        "subset_accuracy".to_string(),
    ];
    header.extend(Code::ALL.iter().map(|c| format!("f1_{}", c.name())));
    header.extend(
        [
            "total_time_s",
            "per_session_time_s",
            "cpu_j",
            "gpu_j",
            "dram_j",
            "total_energy_j",
            "per_session_energy_j",
            "fallback_count",
            "request_count",
            "retry_count",
            "session_count",
            "meter_mode",
        ]
        .map(String::from),
    );
    writer.write_record(&header).map_err(csv_err(path))?;
    for r in records {
        let mut row = vec![
            r.design.variant().name().to_string(),
            r.batch_size.to_string(),
            r.non_paper_batch_size.to_string(),
            full(r.metrics.f1_macro),
            full(r.metrics.precision_macro),
            full(r.metrics.recall_macro),
            full(r.metrics.subset_accuracy),
        ];
        row.extend(r.metrics.per_label_f1.iter().map(|&v| full(v)));
        row.extend([
            full(r.total_time_s),
            full(r.per_session_time_s),
            full(r.energy.cpu_j),
            full(r.energy.gpu_j),
            full(r.energy.dram_j),
            full(r.energy.total_j),
            full(r.per_session_energy_j),
            r.fallback_count.to_string(),
            r.request_count.to_string(),
            r.retry_count.to_string(),
            r.session_count.to_string(),
            r.meter_mode.label(),
        ]);
        writer.write_record(&row).map_err(csv_err(path))?;
    }
    writer.flush().map_err(io_err(path))?;
    Ok(())
}

fn write_per_label_csv(path: &Path, records: &[&RunRecord]) -> Result<(), ReportError> {
    let mut writer = csv::Writer::from_path(path).map_err(csv_err(path))?;
    let mut header = vec!["design".to_string(), "batch_size".to_string()];
    header.extend(Code::ALL.iter().map(|c| c.name().to_string()));
    writer.write_record(&header).map_err(csv_err(path))?;
    for r in records {
        let mut row = vec![
            r.design.variant().name().to_string(),
            r.batch_size.to_string(),
        ];
        row.extend(r.metrics.per_label_f1.iter().map(|&v| two(v)));
        writer.write_record(&row).map_err(csv_err(path))?;
    }
    writer.flush().map_err(io_err(path))?;
    Ok(())
}

/// One correlation row of `correlations.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationRow {
    /// Which pair of quantities was correlated.
    pub pair: &'static str,
    /// Spearman's rho; `None` when undefined on this data.
    pub rho: Option<Scalar>,
    /// Number of configurations that entered the correlation.
    pub n: usize,
    /// Set when the correlation is undefined (e.g. a constant column).
    pub note: Option<&'static str>,
}

fn correlation(pair: &'static str, xs: &[f64], ys: &[f64]) -> Result<CorrelationRow, ReportError> {
    match spearman(xs, ys) {
        Ok(rho) => Ok(CorrelationRow {
            pair,
            rho: Some(rho),
            n: xs.len(),
            note: None,
        }),
        Err(MetricsError::ConstantInput) => Ok(CorrelationRow {
            pair,
            rho: None,
            n: xs.len(),
            note: Some("constant input: rank correlation undefined"),
        }),
        Err(e) => Err(e.into()),
    }
}

/// The three sweep-level correlations: batch size versus per-session time,
/// batch size versus macro-F1, and per-session time versus energy.
pub fn sweep_correlations(records: &[RunRecord]) -> Result<Vec<CorrelationRow>, ReportError> {
    if records.is_empty() {
        return Err(ReportError::EmptyInput);
    }
    let sorted = sorted_records(records);
    let batches: Vec<f64> = sorted.iter().map(|r| r.batch_size as f64).collect();
    let times: Vec<f64> = sorted.iter().map(|r| r.per_session_time_s).collect();
    let f1s: Vec<f64> = sorted.iter().map(|r| r.metrics.f1_macro).collect();
    let energies: Vec<f64> = sorted.iter().map(|r| r.per_session_energy_j).collect();
    Ok(vec![
        correlation("batch_size_vs_time", &batches, &times)?,
        correlation("batch_size_vs_f1", &batches, &f1s)?,
        correlation("time_vs_energy", &times, &energies)?,
    ])
}

fn write_correlations_csv(path: &Path, rows: &[CorrelationRow]) -> Result<(), ReportError> {
    let mut writer = csv::Writer::from_path(path).map_err(csv_err(path))?;
    writer
        .write_record(["pair", "spearman_rho", "n", "note"])
        .map_err(csv_err(path))?;
    for row in rows {
        writer
            .write_record([
                row.pair.to_string(),
                row.rho.map(full).unwrap_or_default(),
                row.n.to_string(),
                row.note.unwrap_or_default().to_string(),
            ])
            .map_err(csv_err(path))?;
    }
    writer.flush().map_err(io_err(path))?;
    Ok(())
}

fn write_series_csv(path: &Path, series: &[SeriesPoint]) -> Result<(), ReportError> {
    let mut writer = csv::Writer::from_path(path).map_err(csv_err(path))?;
    writer
        .write_record(["design", "batch_size", "value"])
        .map_err(csv_err(path))?;
    for point in series {
        writer
            .write_record([
                point.config.variant.name().to_string(),
                point.config.batch_size.to_string(),
                full(point.value),
            ])
            .map_err(csv_err(path))?;
    }
    writer.flush().map_err(io_err(path))?;
    Ok(())
}

/// Writes the full table set for a sweep into `out_dir`:
///
/// * `runs.csv` — every record field at full precision;
/// * `time_by_config.csv`, `f1_by_config.csv`, `energy_by_config.csv` —
///   batch-size × design matrices at display precision;
/// * `per_label_f1.csv` — per-code F1 at display precision;
/// * `correlations.csv` — the three sweep-level Spearman correlations;
/// * `plotdata/{time,f1,energy}_vs_batch.csv` — long-format series at full
///   precision.
///
/// Returns the written paths.
pub fn emit_tables(records: &[RunRecord], out_dir: &Path) -> Result<Vec<PathBuf>, ReportError> {
    if records.is_empty() {
        return Err(ReportError::EmptyInput);
    }
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let plot_dir = out_dir.join("plotdata");
    fs::create_dir_all(&plot_dir).map_err(io_err(&plot_dir))?;
    let sorted = sorted_records(records);
    let mut written = Vec::new();

    let path = out_dir.join("runs.csv");
    write_runs_csv(&path, &sorted)?;
    written.push(path);

    for (name, pick) in [
        (
            "time_by_config.csv",
            (|r| r.per_session_time_s) as fn(&RunRecord) -> f64,
        ),
        ("f1_by_config.csv", |r| r.metrics.f1_macro),
        ("energy_by_config.csv", |r| r.per_session_energy_j),
    ] {
        let path = out_dir.join(name);
        write_matrix(&path, &sorted, pick)?;
        written.push(path);
    }

    let path = out_dir.join("per_label_f1.csv");
    write_per_label_csv(&path, &sorted)?;
    written.push(path);

    let path = out_dir.join("correlations.csv");
    write_correlations_csv(&path, &sweep_correlations(records)?)?;
    written.push(path);

    for objective in ["time", "f1", "energy"] {
        let path = plot_dir.join(format!("{objective}_vs_batch.csv"));
        write_series_csv(&path, &plot_series(records, objective)?)?;
        written.push(path);
    }
    Ok(written)
}

/// Options for the trade-off analysis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParetoOptions {
    /// Per-session time bound for the feasibility filter.
    pub max_time_s: Scalar,
    /// Spearman threshold at which the energy axis is dropped.
    pub reduction_threshold: Scalar,
}

impl Default for ParetoOptions {
    fn default() -> ParetoOptions {
        ParetoOptions {
            max_time_s: DEFAULT_MAX_SESSION_TIME_S,
            reduction_threshold: DEFAULT_REDUCTION_THRESHOLD,
        }
    }
}

/// One configuration's trade-off standing.
#[derive(Debug, Clone, PartialEq)]
pub struct ParetoRow {
    /// The configuration.
    pub config: ConfigId,
    /// Macro-F1.
    pub f1: Scalar,
    /// Per-session seconds.
    pub time_s: Scalar,
    /// Per-session joules as measured (kept for display even when the
    /// energy axis was dropped from the dominance computation).
    pub energy_j: Option<Scalar>,
    /// Within the feasibility bound.
    pub feasible: bool,
    /// On the front over all configurations.
    pub in_front_all: bool,
    /// On the front over feasible configurations.
    pub in_front_feasible: bool,
    /// Front members that dominate this configuration (empty for front
    /// members themselves).
    pub dominated_by: Vec<ConfigId>,
    /// Configurations this one ties within display rounding across a
    /// dominance relation; such pairs are display-precision ties and their
    /// dominance order is not meaningful at 2 decimals.
    pub rounding_ties: Vec<ConfigId>,
}

/// The complete trade-off analysis.
#[derive(Debug, Clone, PartialEq)]
pub struct ParetoReport {
    /// Reduction decision, when the energy axis was dropped.
    pub reduction: Option<ReductionNote<Scalar>>,
    /// Feasibility split at the configured bound.
    pub split: FeasibilitySplit<Scalar>,
    /// Front over all configurations.
    pub front_all: ParetoFront<Scalar>,
    /// Front over feasible configurations; `None` when nothing is feasible.
    pub front_feasible: Option<ParetoFront<Scalar>>,
    /// Per-configuration standing, in input order.
    pub rows: Vec<ParetoRow>,
}

/// Whether a dominance pair is a display-precision tie: the two points
/// agree within [`ROUNDING_TIE_EPS`] on F1 or on time, so 2-decimal
/// rounding can hide or invert the dominance.
fn rounding_tie(a: &ObjectivePoint<Scalar>, b: &ObjectivePoint<Scalar>) -> bool {
    (a.f1 - b.f1).abs() <= ROUNDING_TIE_EPS + TIE_SLOP
        || (a.time_s - b.time_s).abs() <= ROUNDING_TIE_EPS + TIE_SLOP
}

/// Runs the full trade-off analysis: objective reduction, the feasibility
/// split, both fronts, dominance attribution, and rounding-tie annotation.
pub fn pareto_report(
    points: Vec<ObjectivePoint<Scalar>>,
    options: &ParetoOptions,
) -> Result<ParetoReport, ReportError> {
    let original_energy: Vec<Option<Scalar>> = points.iter().map(|p| p.energy_j).collect();
    let (reduced, reduction) = reduce_objectives(points, options.reduction_threshold)?;
    let split = feasibility_filter(&reduced, options.max_time_s)?;
    let mut front_all = pareto_front(&reduced)?;
    front_all.reduction = reduction;
    let front_feasible = if split.feasible.is_empty() {
        None
    } else {
        let mut front = pareto_front(&split.feasible)?;
        front.reduction = reduction;
        Some(front)
    };

    let mut rows = Vec::with_capacity(reduced.len());
    for (point, &energy) in reduced.iter().zip(&original_energy) {
        let mut dominated_by = Vec::new();
        let mut rounding_ties = Vec::new();
        for member in &front_all.members {
            if member.config == point.config {
                continue;
            }
            if dominates(member, point)? {
                dominated_by.push(member.config);
                if rounding_tie(member, point) {
                    rounding_ties.push(member.config);
                }
            }
        }
        let in_front_all = front_all.contains(point.config);
        if in_front_all {
            // A front member involved in a near-tie dominance over another
            // point is annotated symmetrically: at display precision the
            // pair is a tie, not a strict ordering.
            for other in &reduced {
                if other.config != point.config
                    && dominates(point, other)?
                    && rounding_tie(point, other)
                {
                    rounding_ties.push(other.config);
                }
            }
        }
        rows.push(ParetoRow {
            config: point.config,
            f1: point.f1,
            time_s: point.time_s,
            energy_j: energy,
            feasible: point.time_s <= options.max_time_s,
            in_front_all,
            in_front_feasible: front_feasible
                .as_ref()
                .is_some_and(|f| f.contains(point.config)),
            dominated_by,
            rounding_ties,
        });
    }
    Ok(ParetoReport {
        reduction,
        split,
        front_all,
        front_feasible,
        rows,
    })
}

fn join_configs(configs: &[ConfigId]) -> String {
    configs
        .iter()
        .map(ConfigId::to_string)
        .collect::<Vec<_>>()
        .join(";")
}

fn write_pareto_csv(path: &Path, report: &ParetoReport) -> Result<(), ReportError> {
    let mut writer = csv::Writer::from_path(path).map_err(csv_err(path))?;
    writer
        .write_record([
            "design",
            "batch_size",
            "f1",
            "time_s",
            "energy_j",
            "feasible",
            "in_front_all",
            "in_front_feasible",
            "dominated_by",
            "rounding_ties",
        ])
        .map_err(csv_err(path))?;
    for row in &report.rows {
        writer
            .write_record([
                row.config.variant.name().to_string(),
                row.config.batch_size.to_string(),
                full(row.f1),
                full(row.time_s),
                row.energy_j.map(full).unwrap_or_default(),
                row.feasible.to_string(),
                row.in_front_all.to_string(),
                row.in_front_feasible.to_string(),
                join_configs(&row.dominated_by),
                join_configs(&row.rounding_ties),
            ])
            .map_err(csv_err(path))?;
    }
    writer.flush().map_err(io_err(path))?;
    Ok(())
}

fn front_table(
    out: &mut String,
    front: &ParetoFront<Scalar>,
    rows: &[ParetoRow],
    with_energy: bool,
) {
    out.push_str("| configuration | F1 | time (s/session) |");
    if with_energy {
        out.push_str(" energy (J/session) |");
    }
    out.push('\n');
    out.push_str("| --- | --- | --- |");
    if with_energy {
        out.push_str(" --- |");
    }
    out.push('\n');
    for member in &front.members {
        let row = rows
            .iter()
            .find(|r| r.config == member.config)
            .expect("front members come from the same point set");
        out.push_str(&format!(
            "| {} | {} | {} |",
            member.config.display_label(),
            two(member.f1),
            two(member.time_s)
        ));
        if with_energy {
            let cell = row.energy_j.map(two).unwrap_or_else(|| "—".to_string());
            out.push_str(&format!(" {cell} |"));
        }
        out.push('\n');
    }
}

fn write_pareto_md(
    path: &Path,
    report: &ParetoReport,
    per_label: Option<&[(ConfigId, [Scalar; 6])]>,
) -> Result<(), ReportError> {
    let with_energy = report.rows.iter().any(|r| r.energy_j.is_some());
    let mut md = String::new();
    md.push_str("# Trade-off report\n\n");

    md.push_str("## Objectives\n\n");
    for (objective, direction) in &report.front_all.directions {
        let dir = match direction {
            Direction::Maximize => "maximize",
            Direction::Minimize => "minimize",
        };
        md.push_str(&format!("- `{}` ({dir})\n", objective.name()));
    }
    md.push('\n');
    if let Some(note) = &report.reduction {
        md.push_str(&format!("{}\n\n", note.describe()));
    }

    md.push_str("## Feasibility\n\n");
    md.push_str(&format!(
        "Bound: {:.0} s per session. {} of {} configurations feasible.\n\n",
        report.split.max_time_s,
        report.split.feasible.len(),
        report.rows.len()
    ));
    if !report.split.excluded.is_empty() {
        md.push_str("Excluded:\n\n");
        for excluded in &report.split.excluded {
            md.push_str(&format!(
                "- {} — {}\n",
                excluded.point.config.display_label(),
                excluded.reason
            ));
        }
        md.push('\n');
    }

    md.push_str("## Pareto front (all configurations)\n\n");
    front_table(&mut md, &report.front_all, &report.rows, with_energy);
    md.push('\n');

    md.push_str("## Pareto front (feasible configurations)\n\n");
    match &report.front_feasible {
        Some(front) => {
            front_table(&mut md, front, &report.rows, with_energy);
            md.push('\n');
        }
        None => md.push_str("No configuration satisfies the feasibility bound.\n\n"),
    }

    let dominated: Vec<&ParetoRow> = report.rows.iter().filter(|r| !r.in_front_all).collect();
    if !dominated.is_empty() {
        md.push_str("## Dominated configurations\n\n");
        md.push_str("| configuration | dominated by | note |\n| --- | --- | --- |\n");
        for row in &dominated {
            let by = row
                .dominated_by
                .iter()
                .map(|c| c.display_label())
                .collect::<Vec<_>>()
                .join(", ");
            let note = if row.rounding_ties.is_empty() {
                String::new()
            } else {
                format!(
                    "rounding tie with {}",
                    row.rounding_ties
                        .iter()
                        .map(|c| c.display_label())
                        .collect::<Vec<_>>()
                        .join(", ")
                )
            };
            md.push_str(&format!(
                "| {} | {} | {} |\n",
                row.config.display_label(),
                by,
                note
            ));
        }
        md.push('\n');
    }

    let tied_front: Vec<&ParetoRow> = report
        .rows
        .iter()
        .filter(|r| r.in_front_all && !r.rounding_ties.is_empty())
        .collect();
    if !tied_front.is_empty() {
        md.push_str("## Rounding-sensitive front members\n\n");
        md.push_str(
            "These front members dominate another configuration only within \
             display rounding; at 2 decimals the pair is a tie.\n\n",
        );
        for row in &tied_front {
            md.push_str(&format!(
                "- {} — rounding tie with {}\n",
                row.config.display_label(),
                row.rounding_ties
                    .iter()
                    .map(|c| c.display_label())
                    .collect::<Vec<_>>()
                    .join(", ")
            ));
        }
        md.push('\n');
    }

    if let Some(table) = per_label {
        md.push_str("## Per-label F1 of front members\n\n");
        let mut header = String::from("| configuration |");
        let mut rule = String::from("| --- |");
        for code in Code::ALL {
            header.push_str(&format!(" {} |", code.display_name()));
            rule.push_str(" --- |");
        }
        md.push_str(&header);
        md.push('\n');
        md.push_str(&rule);
        md.push('\n');
        for member in &report.front_all.members {
            if let Some((_, scores)) = table.iter().find(|(c, _)| *c == member.config) {
                md.push_str(&format!("| {} |", member.config.display_label()));
                for s in scores {
                    md.push_str(&format!(" {} |", two(*s)));
                }
                md.push('\n');
            }
        }
        md.push('\n');
    }

    fs::write(path, md).map_err(io_err(path))
}

/// Writes `pareto.csv` and `pareto.md` for a finished analysis. The
/// optional per-label table adds a per-code F1 section restricted to front
/// members. Returns the written paths.
pub fn emit_pareto_report(
    report: &ParetoReport,
    per_label: Option<&[(ConfigId, [Scalar; 6])]>,
    out_dir: &Path,
) -> Result<Vec<PathBuf>, ReportError> {
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let csv_path = out_dir.join("pareto.csv");
    write_pareto_csv(&csv_path, report)?;
    let md_path = out_dir.join("pareto.md");
    write_pareto_md(&md_path, report, per_label)?;
    Ok(vec![csv_path, md_path])
}

fn header_index(
    headers: &csv::StringRecord,
    column: &str,
    path: &Path,
) -> Result<usize, ReportError> {
    headers
        .iter()
        .position(|h| h == column)
        .ok_or_else(|| ReportError::MissingColumn {
            column: column.to_string(),
            context: path.display().to_string(),
        })
}

fn parse_cell<T: std::str::FromStr>(
    record: &csv::StringRecord,
    index: usize,
    column: &str,
    line: u64,
    path: &Path,
) -> Result<T, ReportError>
where
    T::Err: std::fmt::Display,
{
    let raw = record.get(index).unwrap_or_default();
    raw.parse().map_err(|e| ReportError::Csv {
        path: path.to_path_buf(),
        message: format!("line {line}: column {column:?} value {raw:?}: {e}"),
    })
}

/// Reads objective points from a CSV with columns `design`, `batch_size`,
/// `f1`, `time_s`, and optionally `energy_j` (column absent, or cells left
/// empty, mean no energy axis for those rows).
pub fn read_objectives_csv(path: &Path) -> Result<Vec<ObjectivePoint<Scalar>>, ReportError> {
    let mut reader = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let headers = reader.headers().map_err(csv_err(path))?.clone();
    let design_i = header_index(&headers, "design", path)?;
    let batch_i = header_index(&headers, "batch_size", path)?;
    let f1_i = header_index(&headers, "f1", path)?;
    let time_i = header_index(&headers, "time_s", path)?;
    let energy_i = headers.iter().position(|h| h == "energy_j");
    let mut points = Vec::new();
    for (row_no, record) in reader.records().enumerate() {
        let record = record.map_err(csv_err(path))?;
        let line = row_no as u64 + 2;
        let design_raw = record.get(design_i).unwrap_or_default();
        let variant = PromptVariant::from_name(design_raw).ok_or_else(|| ReportError::Csv {
            path: path.to_path_buf(),
            message: format!("line {line}: unknown design {design_raw:?}"),
        })?;
        let batch_size: usize = parse_cell(&record, batch_i, "batch_size", line, path)?;
        let f1: f64 = parse_cell(&record, f1_i, "f1", line, path)?;
        let time_s: f64 = parse_cell(&record, time_i, "time_s", line, path)?;
        let energy_j = match energy_i {
            Some(i) if !record.get(i).unwrap_or_default().trim().is_empty() => {
                Some(parse_cell(&record, i, "energy_j", line, path)?)
            }
            _ => None,
        };
        points.push(ObjectivePoint::new(
            ConfigId::new(variant, batch_size),
            f1,
            time_s,
            energy_j,
        )?);
    }
    if points.is_empty() {
        return Err(ReportError::EmptyInput);
    }
    Ok(points)
}

/// Reads a per-label F1 table from a CSV with columns `design`,
/// `batch_size`, and one column per code name.
pub fn read_per_label_csv(path: &Path) -> Result<Vec<(ConfigId, [Scalar; 6])>, ReportError> {
    let mut reader = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let headers = reader.headers().map_err(csv_err(path))?.clone();
    let design_i = header_index(&headers, "design", path)?;
    let batch_i = header_index(&headers, "batch_size", path)?;
    let mut code_is = [0usize; 6];
    for (slot, code) in code_is.iter_mut().zip(Code::ALL) {
        *slot = header_index(&headers, code.name(), path)?;
    }
    let mut rows = Vec::new();
    for (row_no, record) in reader.records().enumerate() {
        let record = record.map_err(csv_err(path))?;
        let line = row_no as u64 + 2;
        let design_raw = record.get(design_i).unwrap_or_default();
        let variant = PromptVariant::from_name(design_raw).ok_or_else(|| ReportError::Csv {
            path: path.to_path_buf(),
            message: format!("line {line}: unknown design {design_raw:?}"),
        })?;
        let batch_size: usize = parse_cell(&record, batch_i, "batch_size", line, path)?;
        let mut scores = [0.0f64; 6];
        for (slot, (&i, code)) in scores.iter_mut().zip(code_is.iter().zip(Code::ALL)) {
            *slot = parse_cell(&record, i, code.name(), line, path)?;
        }
        rows.push((ConfigId::new(variant, batch_size), scores));
    }
    if rows.is_empty() {
        return Err(ReportError::EmptyInput);
    }
    Ok(rows)
}
