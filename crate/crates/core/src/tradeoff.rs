//! Pareto trade-off analysis over sweep configurations.
//!
//! Each configuration of the grid is summarized as an [`ObjectivePoint`]:
//! macro-F1 (maximized), per-session time (minimized), and optionally
//! per-session energy (minimized). Dominance is the weak product order
//! with at least one strict improvement; the [`pareto_front`] keeps every
//! non-dominated point, including duplicates of the same objective values.
//!
//! When time and energy are rank-correlated at or above a threshold
//! (default 0.99) the energy axis adds no ordering information, so
//! [`reduce_objectives`] drops it and records a [`ReductionNote`] instead
//! of silently changing the geometry. [`feasibility_filter`] removes
//! configurations whose per-session time exceeds a deployment bound
//! (default 600 s) before the front is recomputed.

use crate::metrics::{spearman, MetricsError};
use crate::promptkit::PromptVariant;
use crate::Float;
use std::fmt;

/// Default per-session wall-clock bound for the feasibility filter:
/// a configuration that cannot keep up with a 10-minute simulation session
/// is not deployable for near-live feedback.
pub const DEFAULT_MAX_SESSION_TIME_S: f64 = 600.0;

/// Default rank-correlation threshold above which the energy objective is
/// treated as redundant with time.
pub const DEFAULT_REDUCTION_THRESHOLD: f64 = 0.99;

/// Two objective values that differ by no more than this are treated as a
/// rounding tie when annotating dominated points: values published at
/// two-decimal precision cannot be distinguished below half a unit in the
/// last place.
pub const ROUNDING_TIE_EPS: f64 = 0.005;

/// Errors produced by the trade-off kernels.
#[derive(Debug, thiserror::Error, PartialEq)]
pub enum TradeoffError {
    /// An objective value was non-finite or out of range.
    #[error("invalid objective value for {config}: {reason}")]
    InvalidPoint { config: String, reason: String },
    /// An operation that needs at least one point was given none.
    #[error("no objective points")]
    EmptyInput,
    /// Points disagree about whether the energy objective is present.
    #[error("points mix present and absent energy objectives")]
    MixedEnergyPresence,
    /// The reduction correlation could not be computed.
    #[error("objective-reduction correlation failed: {0}")]
    Correlation(MetricsError),
    /// The feasibility bound must be a positive, finite number of seconds.
    #[error("feasibility bound must be positive and finite, got {0}")]
    InvalidBound(String),
}

/// Identifies one sweep configuration: prompt design × batch size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ConfigId {
    /// Prompt design variant.
    pub variant: PromptVariant,
    /// Utterances per request.
    pub batch_size: usize,
}

impl ConfigId {
    /// Builds a config id.
    pub fn new(variant: PromptVariant, batch_size: usize) -> ConfigId {
        ConfigId {
            variant,
            batch_size,
        }
    }

    /// Human-readable label for Markdown reports, e.g. `P.4 b=1`.
    pub fn display_label(&self) -> String {
        format!("{} b={}", self.variant.display_name(), self.batch_size)
    }
}

impl fmt::Display for ConfigId {
    /// Machine token, e.g. `P4-b1`, used in CSV cells and file names.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-b{}", self.variant.name(), self.batch_size)
    }
}

/// An objective axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Objective {
    /// Macro-F1 (maximize).
    F1,
    /// Per-session wall-clock seconds (minimize).
    TimeS,
    /// Per-session energy in joules (minimize).
    EnergyJ,
}

impl Objective {
    /// Column-style name.
    pub fn name(self) -> &'static str {
        match self {
            Objective::F1 => "f1",
            Objective::TimeS => "time_s",
            Objective::EnergyJ => "energy_j",
        }
    }

    /// Optimization direction for this axis.
    pub fn direction(self) -> Direction {
        match self {
            Objective::F1 => Direction::Maximize,
            Objective::TimeS | Objective::EnergyJ => Direction::Minimize,
        }
    }
}

/// Optimization direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Maximize,
    Minimize,
}

/// One configuration's objective values.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectivePoint<F> {
    /// The configuration these objectives belong to.
    pub config: ConfigId,
    /// Macro-F1 over the six codes, in [0, 1].
    pub f1: F,
    /// Per-session wall-clock seconds (non-negative).
    pub time_s: F,
    /// Per-session energy in joules, when the energy axis is in play.
    pub energy_j: Option<F>,
}

impl<F: Float> ObjectivePoint<F> {
    /// Builds a validated point.
    pub fn new(
        config: ConfigId,
        f1: F,
        time_s: F,
        energy_j: Option<F>,
    ) -> Result<ObjectivePoint<F>, TradeoffError> {
        let invalid = |reason: String| TradeoffError::InvalidPoint {
            config: config.to_string(),
            reason,
        };
        if !f1.is_finite() || f1 < F::zero() || f1 > F::one() {
            return Err(invalid(format!("f1 {f1} outside [0, 1]")));
        }
        if !time_s.is_finite() || time_s < F::zero() {
            return Err(invalid(format!(
                "time_s {time_s} must be finite and non-negative"
            )));
        }
        if let Some(e) = energy_j {
            if !e.is_finite() || e < F::zero() {
                return Err(invalid(format!(
                    "energy_j {e} must be finite and non-negative"
                )));
            }
        }
        Ok(ObjectivePoint {
            config,
            f1,
            time_s,
            energy_j,
        })
    }

    /// The active objectives of this point, with directions.
    pub fn objectives(&self) -> Vec<(Objective, Direction)> {
        let mut axes = vec![
            (Objective::F1, Direction::Maximize),
            (Objective::TimeS, Direction::Minimize),
        ];
        if self.energy_j.is_some() {
            axes.push((Objective::EnergyJ, Direction::Minimize));
        }
        axes
    }
}

/// Whether `a` Pareto-dominates `b`: at least as good on every active
/// objective and strictly better on at least one. Both points must agree on
/// whether the energy axis is present.
pub fn dominates<F: Float>(
    a: &ObjectivePoint<F>,
    b: &ObjectivePoint<F>,
) -> Result<bool, TradeoffError> {
    let energy = match (a.energy_j, b.energy_j) {
        (Some(ea), Some(eb)) => Some((ea, eb)),
        (None, None) => None,
        _ => return Err(TradeoffError::MixedEnergyPresence),
    };
    let mut at_least_as_good = a.f1 >= b.f1 && a.time_s <= b.time_s;
    let mut strictly_better = a.f1 > b.f1 || a.time_s < b.time_s;
    if let Some((ea, eb)) = energy {
        at_least_as_good = at_least_as_good && ea <= eb;
        strictly_better = strictly_better || ea < eb;
    }
    Ok(at_least_as_good && strictly_better)
}

/// A non-dominated front.
#[derive(Debug, Clone, PartialEq)]
pub struct ParetoFront<F> {
    /// Non-dominated points, in input order; duplicates of equal objective
    /// values are all retained.
    pub members: Vec<ObjectivePoint<F>>,
    /// Active objectives with their directions.
    pub directions: Vec<(Objective, Direction)>,
    /// Set when the energy axis was dropped by [`reduce_objectives`] before
    /// this front was computed.
    pub reduction: Option<ReductionNote<F>>,
}

impl<F: Float> ParetoFront<F> {
    /// Whether a configuration is on the front.
    pub fn contains(&self, config: ConfigId) -> bool {
        self.members.iter().any(|p| p.config == config)
    }

    /// Config ids of the members, in member order.
    pub fn config_ids(&self) -> Vec<ConfigId> {
        self.members.iter().map(|p| p.config).collect()
    }
}

/// Computes the non-dominated front of a point set.
///
/// A point is kept unless some other point dominates it. Equal points do
/// not dominate each other, so duplicated optima all survive.
pub fn pareto_front<F: Float>(
    points: &[ObjectivePoint<F>],
) -> Result<ParetoFront<F>, TradeoffError> {
    if points.is_empty() {
        return Err(TradeoffError::EmptyInput);
    }
    let mut members = Vec::new();
    for (i, candidate) in points.iter().enumerate() {
        let mut dominated = false;
        for (j, other) in points.iter().enumerate() {
            if i != j && dominates(other, candidate)? {
                dominated = true;
                break;
            }
        }
        if !dominated {
            members.push(candidate.clone());
        }
    }
    Ok(ParetoFront {
        directions: points[0].objectives(),
        members,
        reduction: None,
    })
}

/// Records an objective-reduction decision.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReductionNote<F> {
    /// The dropped objective.
    pub dropped: Objective,
    /// The objective that carries the dropped one's ordering information.
    pub kept: Objective,
    /// Observed Spearman correlation between the two.
    pub correlation: F,
    /// The threshold the correlation was compared against.
    pub threshold: F,
}

impl<F: Float> ReductionNote<F> {
    /// One-line description for reports.
    pub fn describe(&self) -> String {
        format!(
            "{} dropped: Spearman correlation with {} is {:.5} (threshold {}), so the \
             axis adds no ordering information",
            self.dropped.name(),
            self.kept.name(),
            self.correlation,
            self.threshold
        )
    }
}

/// Drops the energy objective when it is rank-redundant with time.
///
/// Computes the Spearman correlation between `time_s` and `energy_j`
/// across the points; when it reaches `threshold` the energy values are
/// removed from every point and a [`ReductionNote`] records the decision.
/// Points without energy pass through unchanged. A constant axis (no
/// ordering information to compare) leaves the points unreduced.
pub fn reduce_objectives<F: Float>(
    mut points: Vec<ObjectivePoint<F>>,
    threshold: F,
) -> Result<(Vec<ObjectivePoint<F>>, Option<ReductionNote<F>>), TradeoffError> {
    if points.is_empty() {
        return Err(TradeoffError::EmptyInput);
    }
    let with_energy = points.iter().filter(|p| p.energy_j.is_some()).count();
    if with_energy == 0 {
        return Ok((points, None));
    }
    if with_energy != points.len() {
        return Err(TradeoffError::MixedEnergyPresence);
    }
    let times: Vec<F> = points.iter().map(|p| p.time_s).collect();
    let energies: Vec<F> = points
        .iter()
        .map(|p| p.energy_j.expect("checked above"))
        .collect();
    let rho = match spearman(&times, &energies) {
        Ok(rho) => rho,
        Err(MetricsError::ConstantInput) => return Ok((points, None)),
        Err(e) => return Err(TradeoffError::Correlation(e)),
    };
    if rho >= threshold {
        for p in &mut points {
            p.energy_j = None;
        }
        let note = ReductionNote {
            dropped: Objective::EnergyJ,
            kept: Objective::TimeS,
            correlation: rho,
            threshold,
        };
        Ok((points, Some(note)))
    } else {
        Ok((points, None))
    }
}

/// A point removed by the feasibility filter, with the reason.
#[derive(Debug, Clone, PartialEq)]
pub struct ExcludedPoint<F> {
    /// The excluded point.
    pub point: ObjectivePoint<F>,
    /// Human-readable exclusion reason.
    pub reason: String,
}

/// Result of feasibility filtering.
#[derive(Debug, Clone, PartialEq)]
pub struct FeasibilitySplit<F> {
    /// Points within the bound, in input order.
    pub feasible: Vec<ObjectivePoint<F>>,
    /// Points over the bound, with reasons.
    pub excluded: Vec<ExcludedPoint<F>>,
    /// The bound that was applied (seconds per session).
    pub max_time_s: F,
}

/// Splits points into feasible and excluded by a per-session time bound.
///
/// An empty feasible set is legal (every configuration was too slow); it is
/// reported via the split and logged as a warning rather than treated as an
/// error.
pub fn feasibility_filter<F: Float>(
    points: &[ObjectivePoint<F>],
    max_time_s: F,
) -> Result<FeasibilitySplit<F>, TradeoffError> {
    if !max_time_s.is_finite() || max_time_s <= F::zero() {
        return Err(TradeoffError::InvalidBound(max_time_s.to_string()));
    }
    let mut feasible = Vec::new();
    let mut excluded = Vec::new();
    for p in points {
        if p.time_s <= max_time_s {
            feasible.push(p.clone());
        } else {
            let reason = format!(
                "per-session time {:.2} s exceeds the {:.0} s bound",
                p.time_s, max_time_s
            );
            excluded.push(ExcludedPoint {
                point: p.clone(),
                reason,
            });
        }
    }
    if feasible.is_empty() {
        log::warn!(
            "feasibility filter at {:.0} s leaves no configuration",
            max_time_s
        );
    }
    Ok(FeasibilitySplit {
        feasible,
        excluded,
        max_time_s,
    })
}
