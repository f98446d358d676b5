//! Benchmarking harness for coding team-dialogue transcripts with a locally
//! served chat model.
//!
//! The library covers the full measurement pipeline:
//!
//! * [`corpus`] — loading, validating, and summarizing JSONL utterance
//!   corpora with multi-label gold annotations ([`codes`] defines the label
//!   vocabulary and the seven-slot binary label vector).
//! * [`promptkit`] — deterministic rendering of the four prompt designs
//!   (few-shot, plus decision rules, plus conversational context, plus
//!   speaker metadata) over utterance batches.
//! * [`batchrunner`] — partitioning a corpus into session-bounded batches,
//!   sending prompts through a [`batchrunner::ModelTransport`], and parsing
//!   completions back into label vectors with a bounded retry/fallback
//!   policy.
//! * [`metrics`] — multi-label precision/recall/F1, subset accuracy,
//!   Cohen's kappa with agreement bands, word error rate, and Spearman rank
//!   correlation.
//! * [`telemetry`] — wall-clock and energy measurement of classification
//!   spans, with a simulated meter for reproducible runs and an RAPL/GPU
//!   meter for hardware runs.
//! * [`tradeoff`] — Pareto dominance, non-dominated fronts, correlation-based
//!   objective reduction, and feasibility filtering over
//!   (F1, time, energy) points.
//! * [`sweep`] / [`report`] — orchestration of the full design × batch-size
//!   grid with incremental persistence and resume, and emission of CSV/
//!   Markdown analysis artifacts.
//!
//! Numeric kernels ([`metrics`], [`tradeoff`]) are generic over the scalar
//! type via the [`Float`] trait; the orchestration layer fixes [`Scalar`]
//! (`f64`) and the crate root exports concrete aliases for the common
//! report types.

pub mod batchrunner;
pub mod codes;
pub mod corpus;
pub mod metrics;
pub mod promptkit;
pub mod report;
pub mod sweep;
pub mod telemetry;
pub mod tradeoff;

use std::fmt::{Debug, Display};

/// Scalar abstraction for the numeric kernels.
///
/// Blanket-implemented for any IEEE float that `num-traits` knows how to
/// convert primitives into — in practice `f32` and `f64`. Generic code in
/// [`metrics`] and [`tradeoff`] is written against this trait; everything
/// else uses the concrete [`Scalar`].
pub trait Float:
    num_traits::Float
    + num_traits::FromPrimitive
    + num_traits::ToPrimitive
    + Debug
    + Display
    + Copy
    + 'static
{
}

impl<T> Float for T where
    T: num_traits::Float
        + num_traits::FromPrimitive
        + num_traits::ToPrimitive
        + Debug
        + Display
        + Copy
        + 'static
{
}

/// Concrete scalar used by the orchestration layer (sweeps, records, reports).
pub type Scalar = f64;

/// Coding-quality report at the default precision.
pub type MetricsReport = metrics::MetricsReport<Scalar>;
/// Inter-rater agreement report at the default precision.
pub type AgreementReport = metrics::AgreementReport<Scalar>;
/// Word-error-rate report at the default precision.
pub type WerReport = metrics::WerReport<Scalar>;
/// Objective point at the default precision.
pub type ObjectivePoint = tradeoff::ObjectivePoint<Scalar>;
/// Non-dominated front at the default precision.
pub type ParetoFront = tradeoff::ParetoFront<Scalar>;

pub use batchrunner::PAPER_BATCH_SIZES;
pub use codes::{Code, CodeVector, Role, CODE_COUNT, VECTOR_WIDTH};
pub use corpus::{Corpus, Session, Utterance};
pub use promptkit::{PromptDesign, PromptVariant, RenderedPrompt};
