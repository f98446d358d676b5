//! Coding-quality metrics.
//!
//! All kernels are generic over the scalar type via [`Float`](crate::Float)
//! and deterministic. Counting is done in exact integer arithmetic
//! ([`confusion_counts`]); ratios are formed only at the edge.
//!
//! Conventions:
//!
//! * Per-label precision, recall, and F1 treat `0/0` as `0` (a label that
//!   is never predicted and never present contributes zeros, not `NaN`).
//! * Macro metrics average over the six communication codes; the derived
//!   *none* slot is excluded.
//! * Subset accuracy compares the full seven-slot vectors for exact
//!   equality.
//! * Word error rate uses unit-cost edit distance over whitespace-split
//!   tokens, normalized by reference length, with substitutions/deletions/
//!   insertions recovered by a deterministic backtrace.
//! * Spearman correlation assigns average ranks to ties.

use crate::codes::{Code, CodeVector, CODE_COUNT};
use crate::Float;
use serde::{Deserialize, Serialize};

/// Cohen's kappa value above which agreement counts as *substantial* on the
/// Landis–Koch scale; used as the acceptance gate for inter-rater checks.
pub const KAPPA_SUBSTANTIAL_THRESHOLD: f64 = 0.61;

/// Errors produced by the metric kernels.
#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum MetricsError {
    /// Paired inputs had different lengths.
    #[error("paired inputs differ in length: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    /// An operation that needs at least one element was given none.
    #[error("metric input is empty")]
    EmptyInput,
    /// Cohen's kappa is undefined: expected agreement is exactly 1 while
    /// observed agreement is not (cannot arise from paired ratings, but a
    /// hand-built contingency table may hit it).
    #[error("kappa undefined: expected agreement equals 1 without perfect observed agreement")]
    DegenerateTable,
    /// Rank correlation is undefined for a constant input.
    #[error("correlation undefined: an input is constant")]
    ConstantInput,
    /// Correlation inputs must be finite.
    #[error("correlation input contains a non-finite value")]
    NonFiniteInput,
    /// Word error rate needs a non-empty reference.
    #[error("word error rate reference is empty")]
    EmptyReference,
}

/// Exact per-label confusion counts for one code.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LabelCounts {
    /// Gold 1, predicted 1.
    pub true_pos: u64,
    /// Gold 0, predicted 1.
    pub false_pos: u64,
    /// Gold 1, predicted 0.
    pub false_neg: u64,
    /// Gold 0, predicted 0.
    pub true_neg: u64,
}

impl LabelCounts {
    /// Total pairs counted for this label.
    pub fn total(&self) -> u64 {
        self.true_pos + self.false_pos + self.false_neg + self.true_neg
    }
}

/// Exact confusion counts over all six codes plus exact-match bookkeeping.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionCounts {
    /// Counts per code, in canonical order.
    pub per_code: [LabelCounts; CODE_COUNT],
    /// Number of gold/prediction pairs.
    pub pairs: u64,
    /// Pairs whose full seven-slot vectors match exactly.
    pub exact_matches: u64,
}

/// Tallies per-label confusion counts between gold and predicted vectors.
pub fn confusion_counts(
    gold: &[CodeVector],
    pred: &[CodeVector],
) -> Result<ConfusionCounts, MetricsError> {
    if gold.len() != pred.len() {
        return Err(MetricsError::LengthMismatch {
            left: gold.len(),
            right: pred.len(),
        });
    }
    if gold.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let mut per_code = [LabelCounts::default(); CODE_COUNT];
    let mut exact_matches = 0u64;
    for (g, p) in gold.iter().zip(pred.iter()) {
        if g == p {
            exact_matches += 1;
        }
        for code in Code::ALL {
            let cell = &mut per_code[code.index()];
            match (g.contains(code), p.contains(code)) {
                (true, true) => cell.true_pos += 1,
                (false, true) => cell.false_pos += 1,
                (true, false) => cell.false_neg += 1,
                (false, false) => cell.true_neg += 1,
            }
        }
    }
    Ok(ConfusionCounts {
        per_code,
        pairs: gold.len() as u64,
        exact_matches,
    })
}

/// Multi-label coding-quality report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport<F> {
    /// Mean per-code F1 over the six codes.
    pub f1_macro: F,
    /// Mean per-code precision over the six codes.
    pub precision_macro: F,
    /// Mean per-code recall over the six codes.
    pub recall_macro: F,
    /// Fraction of utterances whose full seven-slot vector matches exactly.
    pub subset_accuracy: F,
    /// Per-code F1, in canonical code order.
    pub per_label_f1: [F; CODE_COUNT],
}

impl<F: Float> MetricsReport<F> {
    /// F1 for a single code.
    pub fn f1_for(&self, code: Code) -> F {
        self.per_label_f1[code.index()]
    }
}

fn ratio<F: Float>(num: u64, den: u64) -> F {
    if den == 0 {
        F::zero()
    } else {
        F::from_u64(num).expect("count fits scalar") / F::from_u64(den).expect("count fits scalar")
    }
}

fn f1_from<F: Float>(precision: F, recall: F) -> F {
    let denom = precision + recall;
    if denom == F::zero() {
        F::zero()
    } else {
        let two = F::from_u8(2).expect("small constant");
        two * precision * recall / denom
    }
}

/// Computes the full multi-label report from gold and predicted vectors.
pub fn multilabel_metrics<F: Float>(
    gold: &[CodeVector],
    pred: &[CodeVector],
) -> Result<MetricsReport<F>, MetricsError> {
    let counts = confusion_counts(gold, pred)?;
    report_from_counts(&counts)
}

/// Derives the report from already-tallied confusion counts.
pub fn report_from_counts<F: Float>(
    counts: &ConfusionCounts,
) -> Result<MetricsReport<F>, MetricsError> {
    if counts.pairs == 0 {
        return Err(MetricsError::EmptyInput);
    }
    let mut precision_sum = F::zero();
    let mut recall_sum = F::zero();
    let mut f1_sum = F::zero();
    let mut per_label_f1 = [F::zero(); CODE_COUNT];
    for code in Code::ALL {
        let c = counts.per_code[code.index()];
        let precision: F = ratio(c.true_pos, c.true_pos + c.false_pos);
        let recall: F = ratio(c.true_pos, c.true_pos + c.false_neg);
        let f1 = f1_from(precision, recall);
        precision_sum = precision_sum + precision;
        recall_sum = recall_sum + recall;
        f1_sum = f1_sum + f1;
        per_label_f1[code.index()] = f1;
    }
    let k = F::from_usize(CODE_COUNT).expect("small constant");
    Ok(MetricsReport {
        f1_macro: f1_sum / k,
        precision_macro: precision_sum / k,
        recall_macro: recall_sum / k,
        subset_accuracy: ratio(counts.exact_matches, counts.pairs),
        per_label_f1,
    })
}

/// Cohen's kappa from a 2×2 contingency table.
///
/// `both_yes` and `both_no` are the agreement cells; `only_first` /
/// `only_second` count items marked positive by exactly one rater.
pub fn kappa_from_table<F: Float>(
    both_yes: u64,
    only_first: u64,
    only_second: u64,
    both_no: u64,
) -> Result<F, MetricsError> {
    let n = both_yes + only_first + only_second + both_no;
    if n == 0 {
        return Err(MetricsError::EmptyInput);
    }
    let observed: F = ratio(both_yes + both_no, n);
    let first_yes: F = ratio(both_yes + only_first, n);
    let second_yes: F = ratio(both_yes + only_second, n);
    let expected = first_yes * second_yes + (F::one() - first_yes) * (F::one() - second_yes);
    if expected == F::one() {
        // Expected agreement can only reach 1 when both marginals are
        // constant. If the observed agreement is also perfect (always the
        // case for tables built from paired ratings), kappa is 1 by
        // convention; otherwise chance correction is undefined.
        return if observed == F::one() {
            Ok(F::one())
        } else {
            Err(MetricsError::DegenerateTable)
        };
    }
    Ok((observed - expected) / (F::one() - expected))
}

/// Cohen's kappa between two binary ratings of the same items.
pub fn cohens_kappa<F: Float>(first: &[bool], second: &[bool]) -> Result<F, MetricsError> {
    if first.len() != second.len() {
        return Err(MetricsError::LengthMismatch {
            left: first.len(),
            right: second.len(),
        });
    }
    let mut both_yes = 0u64;
    let mut only_first = 0u64;
    let mut only_second = 0u64;
    let mut both_no = 0u64;
    for (&a, &b) in first.iter().zip(second.iter()) {
        match (a, b) {
            (true, true) => both_yes += 1,
            (true, false) => only_first += 1,
            (false, true) => only_second += 1,
            (false, false) => both_no += 1,
        }
    }
    kappa_from_table(both_yes, only_first, only_second, both_no)
}

/// Landis–Koch interpretation band for a kappa value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum KappaBand {
    /// κ < 0.
    Poor,
    /// 0 ≤ κ ≤ 0.20.
    Slight,
    /// 0.20 < κ ≤ 0.40.
    Fair,
    /// 0.40 < κ ≤ 0.60.
    Moderate,
    /// 0.60 < κ ≤ 0.80.
    Substantial,
    /// κ > 0.80.
    AlmostPerfect,
}

impl KappaBand {
    /// Bands a kappa value.
    pub fn from_kappa<F: Float>(kappa: F) -> KappaBand {
        let k = kappa.to_f64().unwrap_or(f64::NAN);
        if k < 0.0 {
            KappaBand::Poor
        } else if k <= 0.20 {
            KappaBand::Slight
        } else if k <= 0.40 {
            KappaBand::Fair
        } else if k <= 0.60 {
            KappaBand::Moderate
        } else if k <= 0.80 {
            KappaBand::Substantial
        } else {
            KappaBand::AlmostPerfect
        }
    }

    /// Human-readable band label.
    pub fn label(self) -> &'static str {
        match self {
            KappaBand::Poor => "poor",
            KappaBand::Slight => "slight",
            KappaBand::Fair => "fair",
            KappaBand::Moderate => "moderate",
            KappaBand::Substantial => "substantial",
            KappaBand::AlmostPerfect => "almost perfect",
        }
    }
}

/// Agreement summary for one code.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CodeAgreement<F> {
    /// The code under test.
    pub code: Code,
    /// Cohen's kappa between the two raters for this code; `None` only in
    /// the defensive case where chance correction is undefined
    /// ([`MetricsError::DegenerateTable`]).
    pub kappa: Option<F>,
    /// Landis–Koch band of `kappa`, when defined.
    pub band: Option<KappaBand>,
    /// Whether `kappa` is defined and reaches the substantial-agreement
    /// threshold (0.61).
    pub meets_threshold: bool,
}

/// Per-code inter-rater agreement over the six communication codes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AgreementReport<F> {
    /// One entry per code, in canonical order.
    pub per_code: Vec<CodeAgreement<F>>,
}

/// Computes per-code Cohen's kappa between two raters' full annotations.
pub fn agreement_report<F: Float>(
    first: &[CodeVector],
    second: &[CodeVector],
) -> Result<AgreementReport<F>, MetricsError> {
    if first.len() != second.len() {
        return Err(MetricsError::LengthMismatch {
            left: first.len(),
            right: second.len(),
        });
    }
    if first.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let threshold = F::from_f64(KAPPA_SUBSTANTIAL_THRESHOLD).expect("small constant");
    let mut per_code = Vec::with_capacity(CODE_COUNT);
    for code in Code::ALL {
        let a: Vec<bool> = first.iter().map(|v| v.contains(code)).collect();
        let b: Vec<bool> = second.iter().map(|v| v.contains(code)).collect();
        let kappa = match cohens_kappa::<F>(&a, &b) {
            Ok(k) => Some(k),
            Err(MetricsError::DegenerateTable) => None,
            Err(e) => return Err(e),
        };
        per_code.push(CodeAgreement {
            code,
            kappa,
            band: kappa.map(KappaBand::from_kappa),
            meets_threshold: kappa.is_some_and(|k| k >= threshold),
        });
    }
    Ok(AgreementReport { per_code })
}

/// Word-error-rate breakdown.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WerReport<F> {
    /// Substituted words.
    pub substitutions: u64,
    /// Reference words missing from the hypothesis.
    pub deletions: u64,
    /// Hypothesis words absent from the reference.
    pub insertions: u64,
    /// Number of reference words (the normalizer).
    pub reference_words: u64,
    /// `(substitutions + deletions + insertions) / reference_words`;
    /// may exceed 1 when insertions dominate.
    pub wer: F,
}

/// Word error rate between a reference and a hypothesis token sequence.
///
/// Unit-cost edit distance; the backtrace resolves cost ties in the fixed
/// order match/substitution, then deletion, then insertion, so the
/// S/D/I split is deterministic. Their sum always equals the edit distance.
pub fn wer<F: Float>(
    reference: &[&str],
    hypothesis: &[&str],
) -> Result<WerReport<F>, MetricsError> {
    if reference.is_empty() {
        return Err(MetricsError::EmptyReference);
    }
    let n = reference.len();
    let m = hypothesis.len();
    let mut dp = vec![vec![0usize; m + 1]; n + 1];
    for (i, row) in dp.iter_mut().enumerate() {
        row[0] = i;
    }
    for j in 0..=m {
        dp[0][j] = j;
    }
    for i in 1..=n {
        for j in 1..=m {
            let sub_cost = usize::from(reference[i - 1] != hypothesis[j - 1]);
            dp[i][j] = (dp[i - 1][j - 1] + sub_cost)
                .min(dp[i - 1][j] + 1)
                .min(dp[i][j - 1] + 1);
        }
    }
    let (mut i, mut j) = (n, m);
    let (mut substitutions, mut deletions, mut insertions) = (0u64, 0u64, 0u64);
    while i > 0 || j > 0 {
        if i > 0 && j > 0 {
            let sub_cost = usize::from(reference[i - 1] != hypothesis[j - 1]);
            if dp[i][j] == dp[i - 1][j - 1] + sub_cost {
                substitutions += sub_cost as u64;
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if i > 0 && dp[i][j] == dp[i - 1][j] + 1 {
            deletions += 1;
            i -= 1;
        } else {
            insertions += 1;
            j -= 1;
        }
    }
    let errors = substitutions + deletions + insertions;
    Ok(WerReport {
        substitutions,
        deletions,
        insertions,
        reference_words: n as u64,
        wer: ratio(errors, n as u64),
    })
}

/// Word error rate between two whitespace-tokenized transcripts.
pub fn wer_str<F: Float>(reference: &str, hypothesis: &str) -> Result<WerReport<F>, MetricsError> {
    let r: Vec<&str> = reference.split_whitespace().collect();
    let h: Vec<&str> = hypothesis.split_whitespace().collect();
    wer(&r, &h)
}

fn average_ranks<F: Float>(values: &[F]) -> Vec<F> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).expect("finite input"));
    let mut ranks = vec![F::zero(); n];
    let two = F::from_u8(2).expect("small constant");
    let mut start = 0;
    while start < n {
        let mut end = start;
        while end + 1 < n && values[order[end + 1]] == values[order[start]] {
            end += 1;
        }
        // 1-based positions start+1 ..= end+1 share the average rank.
        let avg = F::from_usize(start + end + 2).expect("length fits scalar") / two;
        for k in start..=end {
            ranks[order[k]] = avg;
        }
        start = end + 1;
    }
    ranks
}

fn pearson<F: Float>(x: &[F], y: &[F]) -> Result<F, MetricsError> {
    let n = F::from_usize(x.len()).expect("length fits scalar");
    let mean = |v: &[F]| v.iter().fold(F::zero(), |acc, &e| acc + e) / n;
    let mx = mean(x);
    let my = mean(y);
    let mut cov = F::zero();
    let mut sxx = F::zero();
    let mut syy = F::zero();
    for (&a, &b) in x.iter().zip(y.iter()) {
        let dx = a - mx;
        let dy = b - my;
        cov = cov + dx * dy;
        sxx = sxx + dx * dx;
        syy = syy + dy * dy;
    }
    if sxx == F::zero() || syy == F::zero() {
        return Err(MetricsError::ConstantInput);
    }
    Ok(cov / (sxx.sqrt() * syy.sqrt()))
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman<F: Float>(x: &[F], y: &[F]) -> Result<F, MetricsError> {
    if x.len() != y.len() {
        return Err(MetricsError::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    if x.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
        return Err(MetricsError::NonFiniteInput);
    }
    let rx = average_ranks(x);
    let ry = average_ranks(y);
    pearson(&rx, &ry)
}
