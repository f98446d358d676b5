//! Built-in self-checks for the `validate` verb.
//!
//! Every numeric kernel is exercised against values small enough to verify
//! by hand: confusion counts tallied on paper, a 2×2 agreement table, edit
//! distances over four-word sentences, rank correlations with ties, and a
//! three-point dominance structure. Failures carry the observed value so a
//! broken build is diagnosable from the shell.

use dialogsweep_core::batchrunner::{format_rows, parse_completion, ParseError};
use dialogsweep_core::metrics::{
    cohens_kappa, kappa_from_table, multilabel_metrics, spearman, wer_str,
};
use dialogsweep_core::tradeoff::{
    dominates, feasibility_filter, pareto_front, reduce_objectives, ConfigId,
};
use dialogsweep_core::{Code, CodeVector, MetricsReport, ObjectivePoint, PromptVariant};

type Check = fn() -> Result<(), String>;

/// Runs every check, printing one `ok — …` line per pass. The first failure
/// aborts with a description of what disagreed.
pub fn run() -> Result<(), String> {
    let checks: [(&str, Check); 8] = [
        (
            "multilabel confusion counts and macro averaging",
            check_multilabel,
        ),
        ("perfect prediction scores 1.0 everywhere", check_perfect),
        ("cohen's kappa against a hand-tallied table", check_kappa),
        ("word error rate edit-operation counts", check_wer),
        ("spearman rank correlation with ties", check_spearman),
        ("pareto dominance and both fronts", check_dominance),
        (
            "energy-axis reduction at the correlation threshold",
            check_reduction,
        ),
        ("label-row formatting round trip", check_rows),
    ];
    for (name, check) in &checks {
        check().map_err(|detail| format!("self-check failed — {name}: {detail}"))?;
        println!("ok — {name}");
    }
    println!("all {} self-checks passed", checks.len());
    Ok(())
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12
}

fn ensure(condition: bool, detail: String) -> Result<(), String> {
    if condition {
        Ok(())
    } else {
        Err(detail)
    }
}

/// Four utterances with one active code: tp = 1, fp = 1, fn = 1 for
/// questioning (precision = recall = F1 = 0.5), zero counts everywhere
/// else, and two exact vector matches out of four.
fn check_multilabel() -> Result<(), String> {
    let q = CodeVector::from_codes([Code::Questioning]);
    let gold = [q, q, CodeVector::NONE, CodeVector::NONE];
    let pred = [q, CodeVector::NONE, q, CodeVector::NONE];
    let report: MetricsReport = multilabel_metrics(&gold, &pred).map_err(|e| e.to_string())?;
    ensure(
        close(report.f1_for(Code::Questioning), 0.5),
        format!("questioning F1 {} ≠ 0.5", report.f1_for(Code::Questioning)),
    )?;
    ensure(
        close(report.f1_macro, 0.5 / 6.0),
        format!("macro F1 {} ≠ 1/12", report.f1_macro),
    )?;
    ensure(
        close(report.precision_macro, 0.5 / 6.0) && close(report.recall_macro, 0.5 / 6.0),
        format!(
            "macro precision/recall {}/{} ≠ 1/12",
            report.precision_macro, report.recall_macro
        ),
    )?;
    ensure(
        close(report.subset_accuracy, 0.5),
        format!("subset accuracy {} ≠ 0.5", report.subset_accuracy),
    )
}

fn check_perfect() -> Result<(), String> {
    let gold: Vec<CodeVector> = Code::ALL
        .into_iter()
        .map(|c| CodeVector::from_codes([c]))
        .collect();
    let report: MetricsReport = multilabel_metrics(&gold, &gold).map_err(|e| e.to_string())?;
    let all_one = close(report.f1_macro, 1.0)
        && close(report.precision_macro, 1.0)
        && close(report.recall_macro, 1.0)
        && close(report.subset_accuracy, 1.0)
        && report.per_label_f1.iter().all(|&f| close(f, 1.0));
    ensure(
        all_one,
        format!(
            "echoing gold should score 1.0 everywhere, got macro F1 {} subset {}",
            report.f1_macro, report.subset_accuracy
        ),
    )
}

/// Table (both-yes 20, only-first 5, only-second 10, both-no 15):
/// observed = 35/50 = 0.7, expected = 0.5·0.6 + 0.5·0.4 = 0.5,
/// kappa = (0.7 − 0.5)/(1 − 0.5) = 0.4.
fn check_kappa() -> Result<(), String> {
    let kappa: f64 = kappa_from_table(20, 5, 10, 15).map_err(|e| e.to_string())?;
    ensure(close(kappa, 0.4), format!("table kappa {kappa} ≠ 0.4"))?;

    let identical: f64 = cohens_kappa(&[true, true, false, false], &[true, true, false, false])
        .map_err(|e| e.to_string())?;
    ensure(
        close(identical, 1.0),
        format!("identical raters kappa {identical} ≠ 1.0"),
    )?;

    // Agreement 0.5 with expected agreement 0.5 → exactly chance level.
    let chance: f64 = cohens_kappa(&[true, true, false, false], &[true, false, true, false])
        .map_err(|e| e.to_string())?;
    ensure(
        close(chance, 0.0),
        format!("chance-level kappa {chance} ≠ 0.0"),
    )
}

fn check_wer() -> Result<(), String> {
    // One deletion against a four-word reference.
    let dropped =
        wer_str::<f64>("call for help now", "call help now").map_err(|e| e.to_string())?;
    ensure(
        (
            dropped.substitutions,
            dropped.deletions,
            dropped.insertions,
            dropped.reference_words,
        ) == (0, 1, 0, 4)
            && close(dropped.wer, 0.25),
        format!(
            "expected S=0 D=1 I=0 wer=0.25, got S={} D={} I={} wer={}",
            dropped.substitutions, dropped.deletions, dropped.insertions, dropped.wer
        ),
    )?;

    // Two insertions against a two-word reference: error rate above 1.
    let padded =
        wer_str::<f64>("give oxygen", "give the oxygen mask").map_err(|e| e.to_string())?;
    ensure(
        (padded.substitutions, padded.deletions, padded.insertions) == (0, 0, 2)
            && close(padded.wer, 1.0),
        format!(
            "expected S=0 D=0 I=2 wer=1.0, got S={} D={} I={} wer={}",
            padded.substitutions, padded.deletions, padded.insertions, padded.wer
        ),
    )
}

fn check_spearman() -> Result<(), String> {
    let x = [1.0, 2.0, 3.0, 4.0, 5.0];
    let squares = [1.0, 4.0, 9.0, 16.0, 25.0];
    let reversed = [25.0, 16.0, 9.0, 4.0, 1.0];
    let up = spearman(&x, &squares).map_err(|e| e.to_string())?;
    ensure(close(up, 1.0), format!("monotone rho {up} ≠ 1.0"))?;
    let down = spearman(&x, &reversed).map_err(|e| e.to_string())?;
    ensure(close(down, -1.0), format!("reversed rho {down} ≠ -1.0"))?;

    // One transposition among three ranks: rho = 1 − 6·2/(3·8) = 0.5.
    let swapped = spearman(&[1.0, 2.0, 3.0], &[1.0, 3.0, 2.0]).map_err(|e| e.to_string())?;
    ensure(close(swapped, 0.5), format!("swapped rho {swapped} ≠ 0.5"))?;

    // Tied values take average ranks on both sides, leaving rho at 1.
    let tied =
        spearman(&[1.0, 2.0, 2.0, 4.0], &[10.0, 20.0, 20.0, 40.0]).map_err(|e| e.to_string())?;
    ensure(close(tied, 1.0), format!("tied rho {tied} ≠ 1.0"))
}

fn point(
    batch: usize,
    f1: f64,
    time_s: f64,
    energy_j: Option<f64>,
) -> Result<ObjectivePoint, String> {
    ObjectivePoint::new(
        ConfigId::new(PromptVariant::P1, batch),
        f1,
        time_s,
        energy_j,
    )
    .map_err(|e| e.to_string())
}

fn front_ids(points: &[ObjectivePoint]) -> Result<Vec<String>, String> {
    let front = pareto_front(points).map_err(|e| e.to_string())?;
    let mut ids: Vec<String> = front.members.iter().map(|p| p.config.to_string()).collect();
    ids.sort();
    Ok(ids)
}

/// Three configurations: slow-but-accurate (b=1), fast (b=10), and one that
/// is worse than b=10 on both axes (b=20). Only the last is dominated; a
/// 600-second bound then excludes b=1, leaving b=10 alone on the feasible
/// front.
fn check_dominance() -> Result<(), String> {
    let slow_accurate = point(1, 0.61, 781.0, None)?;
    let fast = point(10, 0.56, 181.0, None)?;
    let dominated = point(20, 0.50, 200.0, None)?;

    let beats = dominates(&fast, &dominated).map_err(|e| e.to_string())?;
    ensure(beats, "P1-b10 should dominate P1-b20".into())?;
    for (a, b, label) in [
        (&dominated, &fast, "P1-b20 over P1-b10"),
        (&slow_accurate, &fast, "P1-b1 over P1-b10"),
        (&fast, &slow_accurate, "P1-b10 over P1-b1"),
    ] {
        let wrong = dominates(a, b).map_err(|e| e.to_string())?;
        ensure(!wrong, format!("unexpected dominance: {label}"))?;
    }

    let points = vec![slow_accurate, fast, dominated];
    let all = front_ids(&points)?;
    ensure(
        all == ["P1-b1", "P1-b10"],
        format!("front over all points is {all:?}, expected [P1-b1, P1-b10]"),
    )?;

    let split = feasibility_filter(&points, 600.0).map_err(|e| e.to_string())?;
    let feasible: Vec<String> = split
        .feasible
        .iter()
        .map(|p| p.config.to_string())
        .collect();
    ensure(
        feasible == ["P1-b10", "P1-b20"] && split.excluded.len() == 1,
        format!("feasible set {feasible:?}, expected [P1-b10, P1-b20] with one exclusion"),
    )?;
    let feasible_front = front_ids(&split.feasible)?;
    ensure(
        feasible_front == ["P1-b10"],
        format!("feasible front {feasible_front:?}, expected [P1-b10]"),
    )
}

fn check_reduction() -> Result<(), String> {
    // Energy ranks exactly mirror time ranks → rho = 1 ≥ 0.99, axis dropped.
    let aligned = vec![
        point(1, 0.61, 781.0, Some(1000.0))?,
        point(10, 0.56, 181.0, Some(400.0))?,
        point(20, 0.50, 200.0, Some(500.0))?,
    ];
    let (reduced, note) = reduce_objectives(aligned, 0.99).map_err(|e| e.to_string())?;
    let note = note.ok_or("perfect time/energy correlation should drop the energy axis")?;
    ensure(
        close(note.correlation, 1.0),
        format!("recorded correlation {} ≠ 1.0", note.correlation),
    )?;
    ensure(
        note.dropped.name() == "energy_j" && note.kept.name() == "time_s",
        format!("dropped {} kept {}", note.dropped.name(), note.kept.name()),
    )?;
    ensure(
        reduced.iter().all(|p| p.energy_j.is_none()),
        "energy values should be cleared after reduction".into(),
    )?;

    // Swapping two energy ranks breaks the correlation (rho = 0.5): kept.
    let divergent = vec![
        point(1, 0.61, 781.0, Some(500.0))?,
        point(10, 0.56, 181.0, Some(400.0))?,
        point(20, 0.50, 200.0, Some(1000.0))?,
    ];
    let (kept, no_note) = reduce_objectives(divergent, 0.99).map_err(|e| e.to_string())?;
    ensure(
        no_note.is_none() && kept.iter().all(|p| p.energy_j.is_some()),
        "uncorrelated energy axis should be kept".into(),
    )
}

fn check_rows() -> Result<(), String> {
    let vectors = vec![
        CodeVector::from_codes([Code::TaskAllocation, Code::Questioning]),
        CodeVector::NONE,
        CodeVector::from_codes([Code::Escalation]),
    ];
    let text = format_rows(&vectors);
    ensure(
        text == "1 0 0 0 1 0 0\n0 0 0 0 0 0 1\n0 0 0 1 0 0 0\n",
        format!("formatted rows {text:?}"),
    )?;
    let parsed = parse_completion(&text, vectors.len()).map_err(|e| e.to_string())?;
    ensure(
        parsed.per_utterance == vectors && parsed.fallback_count == 0,
        format!("round trip produced {:?}", parsed.per_utterance),
    )?;

    // A chatty preamble before the row block must not confuse the parser.
    let noisy = format!("Here are the labels you asked for:\n\n{text}");
    let parsed = parse_completion(&noisy, vectors.len()).map_err(|e| e.to_string())?;
    ensure(
        parsed.per_utterance == vectors,
        "preamble before the row block changed the parse".into(),
    )?;

    // Prose with no label rows at all must be rejected, not guessed at.
    let refused = parse_completion("I could not find any labels.", 1);
    ensure(
        matches!(
            refused,
            Err(ParseError::RowCountMismatch {
                expected: 1,
                found: 0
            })
        ),
        format!("expected a row-count mismatch, got {refused:?}"),
    )
}
