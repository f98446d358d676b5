//! Loading, validating, filtering, and summarizing utterance corpora.
//!
//! The on-disk format is JSON Lines: one utterance object per line with
//! keys `session_id`, `utterance_id`, `t_start`, `t_end`, `speaker`,
//! `receiver` (optional), `text`, and `codes` (optional list of code
//! names; absent means the utterance carries no gold annotation, an empty
//! list means it was annotated with none of the codes). Unknown keys are
//! rejected. Every structural or semantic problem is reported with its
//! 1-based line number.

use crate::codes::{Code, CodeVector, Role};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Write as IoWrite};
use std::path::Path;

/// Errors produced by corpus loading, validation, and summarization.
#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    /// Underlying file I/O failed.
    #[error("corpus I/O: {0}")]
    Io(#[from] std::io::Error),
    /// A line did not conform to the record schema (bad JSON, unknown or
    /// missing keys, unknown role or code names, inconsistent fields).
    #[error("corpus schema error at line {line}: {message}")]
    Schema { line: usize, message: String },
    /// A session contained two utterances with the same `utterance_id`.
    #[error("duplicate utterance_id {utterance_id} in session {session_id}")]
    Order {
        session_id: String,
        utterance_id: u64,
    },
    /// An utterance required a gold vector but carried none.
    #[error("utterance {utterance_id} in session {session_id} has no gold annotation")]
    MissingGold {
        session_id: String,
        utterance_id: u64,
    },
    /// An operation that needs at least one utterance was given none.
    #[error("corpus contains no utterances")]
    Empty,
    /// A programmatically constructed utterance violated a field invariant.
    #[error("invalid utterance {utterance_id} in session {session_id}: {reason}")]
    InvalidUtterance {
        session_id: String,
        utterance_id: u64,
        reason: String,
    },
}

/// One transcribed utterance.
#[derive(Debug, Clone, PartialEq)]
pub struct Utterance {
    /// Identifier of the simulation session this utterance belongs to.
    pub session_id: String,
    /// Position key within the session; unique per session, ascending in time.
    pub utterance_id: u64,
    /// Start of the utterance, seconds from session start.
    pub t_start: f64,
    /// End of the utterance, seconds from session start.
    pub t_end: f64,
    /// Speaking role.
    pub speaker: Role,
    /// Addressed role, when one could be identified.
    pub receiver: Option<Role>,
    /// Transcribed text (non-empty).
    pub text: String,
    /// Gold multi-label annotation, when the utterance has been coded.
    pub gold: Option<CodeVector>,
}

impl Utterance {
    /// Builds a validated utterance.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        session_id: impl Into<String>,
        utterance_id: u64,
        t_start: f64,
        t_end: f64,
        speaker: Role,
        receiver: Option<Role>,
        text: impl Into<String>,
        gold: Option<CodeVector>,
    ) -> Result<Utterance, CorpusError> {
        let u = Utterance {
            session_id: session_id.into(),
            utterance_id,
            t_start,
            t_end,
            speaker,
            receiver,
            text: text.into(),
            gold,
        };
        match u.check() {
            Ok(()) => Ok(u),
            Err(reason) => Err(CorpusError::InvalidUtterance {
                session_id: u.session_id,
                utterance_id: u.utterance_id,
                reason,
            }),
        }
    }

    /// Field-level invariants shared by the loader and the constructor.
    fn check(&self) -> Result<(), String> {
        if self.session_id.trim().is_empty() {
            return Err("session_id must be non-empty".into());
        }
        if self.text.trim().is_empty() {
            return Err("text must be non-empty".into());
        }
        if !self.t_start.is_finite() || !self.t_end.is_finite() {
            return Err("t_start and t_end must be finite".into());
        }
        if self.t_start < 0.0 {
            return Err("t_start must be non-negative".into());
        }
        if self.t_end < self.t_start {
            return Err(format!(
                "t_end ({}) precedes t_start ({})",
                self.t_end, self.t_start
            ));
        }
        if let Some(receiver) = self.receiver {
            if receiver == self.speaker {
                return Err(format!("speaker and receiver are both {}", receiver.name()));
            }
        }
        Ok(())
    }
}

/// All utterances of one simulation session, sorted by `utterance_id`.
#[derive(Debug, Clone, PartialEq)]
pub struct Session {
    /// Session identifier shared by every contained utterance.
    pub session_id: String,
    /// Utterances in ascending `utterance_id` order.
    pub utterances: Vec<Utterance>,
}

/// A validated collection of sessions, in first-appearance order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Corpus {
    sessions: Vec<Session>,
}

impl Corpus {
    /// Groups validated utterances into sessions.
    ///
    /// Sessions keep the order in which they first appear in the input;
    /// utterances within a session are sorted by `utterance_id`. Duplicate
    /// ids within a session are an [`CorpusError::Order`] error.
    pub fn from_utterances<I: IntoIterator<Item = Utterance>>(
        utterances: I,
    ) -> Result<Corpus, CorpusError> {
        let mut sessions: Vec<Session> = Vec::new();
        let mut index: HashMap<String, usize> = HashMap::new();
        for u in utterances {
            u.check().map_err(|reason| CorpusError::InvalidUtterance {
                session_id: u.session_id.clone(),
                utterance_id: u.utterance_id,
                reason,
            })?;
            let at = *index.entry(u.session_id.clone()).or_insert_with(|| {
                sessions.push(Session {
                    session_id: u.session_id.clone(),
                    utterances: Vec::new(),
                });
                sessions.len() - 1
            });
            sessions[at].utterances.push(u);
        }
        for session in &mut sessions {
            session.utterances.sort_by_key(|u| u.utterance_id);
            for pair in session.utterances.windows(2) {
                if pair[0].utterance_id == pair[1].utterance_id {
                    return Err(CorpusError::Order {
                        session_id: session.session_id.clone(),
                        utterance_id: pair[0].utterance_id,
                    });
                }
            }
        }
        Ok(Corpus { sessions })
    }

    /// Sessions in first-appearance order.
    pub fn sessions(&self) -> &[Session] {
        &self.sessions
    }

    /// Number of sessions.
    pub fn session_count(&self) -> usize {
        self.sessions.len()
    }

    /// Utterances across all sessions, in session order then id order.
    pub fn utterances(&self) -> impl Iterator<Item = &Utterance> {
        self.sessions.iter().flat_map(|s| s.utterances.iter())
    }

    /// Total utterance count.
    pub fn len(&self) -> usize {
        self.sessions.iter().map(|s| s.utterances.len()).sum()
    }

    /// Whether the corpus holds no utterances.
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Wire form of one utterance line. `deny_unknown_fields` turns stray keys
/// into schema errors instead of silently dropping data.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRecord {
    session_id: String,
    utterance_id: u64,
    t_start: f64,
    t_end: f64,
    speaker: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    receiver: Option<String>,
    text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    codes: Option<Vec<String>>,
}

impl RawRecord {
    fn into_utterance(self, line: usize) -> Result<Utterance, CorpusError> {
        let schema = |message: String| CorpusError::Schema { line, message };
        let speaker = Role::from_name(&self.speaker)
            .ok_or_else(|| schema(format!("unknown speaker role {:?}", self.speaker)))?;
        let receiver = match &self.receiver {
            None => None,
            Some(name) => Some(
                Role::from_name(name)
                    .ok_or_else(|| schema(format!("unknown receiver role {name:?}")))?,
            ),
        };
        let gold = match self.codes {
            None => None,
            Some(names) => {
                let mut v = CodeVector::NONE;
                for name in &names {
                    let code = Code::from_name(name)
                        .ok_or_else(|| schema(format!("unknown code name {name:?}")))?;
                    v.insert(code);
                }
                Some(v)
            }
        };
        Utterance::new(
            self.session_id,
            self.utterance_id,
            self.t_start,
            self.t_end,
            speaker,
            receiver,
            self.text,
            gold,
        )
        .map_err(|e| match e {
            CorpusError::InvalidUtterance { reason, .. } => schema(reason),
            other => other,
        })
    }

    fn from_utterance(u: &Utterance) -> RawRecord {
        RawRecord {
            session_id: u.session_id.clone(),
            utterance_id: u.utterance_id,
            t_start: u.t_start,
            t_end: u.t_end,
            speaker: u.speaker.name().to_string(),
            receiver: u.receiver.map(|r| r.name().to_string()),
            text: u.text.clone(),
            codes: u
                .gold
                .map(|g| g.codes().map(|c| c.name().to_string()).collect()),
        }
    }
}

/// Loads and validates a JSONL corpus file.
pub fn load_corpus(path: &Path) -> Result<Corpus, CorpusError> {
    let file = File::open(path)?;
    parse_corpus(BufReader::new(file))
}

/// Parses a JSONL corpus from any buffered reader.
///
/// Blank lines are skipped; every other line must hold exactly one record.
/// An input with no records at all is rejected as [`CorpusError::Empty`].
pub fn parse_corpus(reader: impl BufRead) -> Result<Corpus, CorpusError> {
    let mut utterances = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawRecord = serde_json::from_str(&line).map_err(|e| CorpusError::Schema {
            line: line_no,
            message: e.to_string(),
        })?;
        utterances.push(raw.into_utterance(line_no)?);
    }
    if utterances.is_empty() {
        return Err(CorpusError::Empty);
    }
    Corpus::from_utterances(utterances)
}

/// Serializes a corpus to its canonical JSONL text (one record per line,
/// trailing newline). Loading the result reproduces the corpus exactly.
pub fn corpus_to_jsonl(corpus: &Corpus) -> String {
    let mut out = String::new();
    for u in corpus.utterances() {
        let raw = RawRecord::from_utterance(u);
        // RawRecord contains only JSON-safe fields, so serialization is
        // infallible in practice.
        out.push_str(&serde_json::to_string(&raw).expect("record serialization"));
        out.push('\n');
    }
    out
}

/// Writes a corpus to a JSONL file in canonical form.
pub fn write_corpus(corpus: &Corpus, path: &Path) -> Result<(), CorpusError> {
    let mut file = File::create(path)?;
    file.write_all(corpus_to_jsonl(corpus).as_bytes())?;
    Ok(())
}

/// Keeps only utterances annotated with at least one of the six codes.
///
/// Every utterance must carry a gold vector (annotated corpora only);
/// an utterance with no annotation at all is a [`CorpusError::MissingGold`]
/// error, while utterances annotated as carrying none of the codes are
/// silently dropped. Sessions left empty by the filter are removed.
pub fn filter_coded(corpus: &Corpus) -> Result<Corpus, CorpusError> {
    let mut kept = Vec::new();
    for u in corpus.utterances() {
        match u.gold {
            None => {
                return Err(CorpusError::MissingGold {
                    session_id: u.session_id.clone(),
                    utterance_id: u.utterance_id,
                })
            }
            Some(g) if g.is_none() => {}
            Some(_) => kept.push(u.clone()),
        }
    }
    Corpus::from_utterances(kept)
}

/// Population summary of per-session utterance counts.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorpusStats {
    /// Total utterances.
    pub utterance_count: usize,
    /// Number of sessions.
    pub session_count: usize,
    /// Mean utterances per session.
    pub mean_per_session: f64,
    /// Population standard deviation of utterances per session.
    pub sd_per_session: f64,
}

/// Summarizes per-session utterance counts (population statistics).
pub fn corpus_stats(corpus: &Corpus) -> Result<CorpusStats, CorpusError> {
    if corpus.is_empty() {
        return Err(CorpusError::Empty);
    }
    let counts: Vec<f64> = corpus
        .sessions()
        .iter()
        .map(|s| s.utterances.len() as f64)
        .collect();
    let n = counts.len() as f64;
    let mean = counts.iter().sum::<f64>() / n;
    let var = counts.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / n;
    Ok(CorpusStats {
        utterance_count: corpus.len(),
        session_count: corpus.session_count(),
        mean_per_session: mean,
        sd_per_session: var.sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn utt(session: &str, id: u64, codes: &[Code]) -> Utterance {
        Utterance::new(
            session,
            id,
            id as f64,
            id as f64 + 1.0,
            Role::PrimaryNurse1,
            Some(Role::SecondaryNurse1),
            format!("utterance {id}"),
            Some(CodeVector::from_codes(codes.iter().copied())),
        )
        .unwrap()
    }

    #[test]
    fn parses_a_valid_line() {
        let line = r#"{"session_id":"s01","utterance_id":7,"t_start":12.5,"t_end":14.0,"speaker":"primary_nurse_1","receiver":"doctor","text":"His sats are dropping.","codes":["sharing_information"]}"#;
        let corpus = parse_corpus(line.as_bytes()).unwrap();
        let u = corpus.utterances().next().unwrap();
        assert_eq!(u.session_id, "s01");
        assert_eq!(u.utterance_id, 7);
        assert_eq!(u.speaker, Role::PrimaryNurse1);
        assert_eq!(u.receiver, Some(Role::Doctor));
        assert_eq!(
            u.gold,
            Some(CodeVector::from_codes([Code::SharingInformation]))
        );
    }

    #[test]
    fn unknown_key_is_a_schema_error_with_line_number() {
        let good = r#"{"session_id":"s01","utterance_id":1,"t_start":0.0,"t_end":1.0,"speaker":"doctor","text":"Hello.","codes":[]}"#;
        let bad = r#"{"session_id":"s01","utterance_id":2,"t_start":1.0,"t_end":2.0,"speaker":"doctor","text":"Hi.","codes":[],"mood":"calm"}"#;
        let input = format!("{good}\n{bad}\n");
        let err = parse_corpus(input.as_bytes()).unwrap_err();
        match err {
            CorpusError::Schema { line, message } => {
                assert_eq!(line, 2);
                assert!(message.contains("mood"), "message: {message}");
            }
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    #[test]
    fn missing_required_key_is_a_schema_error() {
        let bad = r#"{"session_id":"s01","utterance_id":1,"t_start":0.0,"t_end":1.0,"speaker":"doctor","codes":[]}"#;
        let err = parse_corpus(bad.as_bytes()).unwrap_err();
        match err {
            CorpusError::Schema { line, message } => {
                assert_eq!(line, 1);
                assert!(message.contains("text"), "message: {message}");
            }
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_code_and_role_names_are_schema_errors() {
        let bad_code = r#"{"session_id":"s01","utterance_id":1,"t_start":0.0,"t_end":1.0,"speaker":"doctor","text":"x","codes":["summoning"]}"#;
        assert!(matches!(
            parse_corpus(bad_code.as_bytes()),
            Err(CorpusError::Schema { line: 1, .. })
        ));
        let bad_role = r#"{"session_id":"s01","utterance_id":1,"t_start":0.0,"t_end":1.0,"speaker":"janitor","text":"x","codes":[]}"#;
        assert!(matches!(
            parse_corpus(bad_role.as_bytes()),
            Err(CorpusError::Schema { line: 1, .. })
        ));
    }

    #[test]
    fn temporal_and_role_invariants_are_enforced() {
        let backwards = r#"{"session_id":"s01","utterance_id":1,"t_start":5.0,"t_end":4.0,"speaker":"doctor","text":"x","codes":[]}"#;
        assert!(matches!(
            parse_corpus(backwards.as_bytes()),
            Err(CorpusError::Schema { line: 1, .. })
        ));
        let self_talk = r#"{"session_id":"s01","utterance_id":1,"t_start":0.0,"t_end":1.0,"speaker":"doctor","receiver":"doctor","text":"x","codes":[]}"#;
        assert!(matches!(
            parse_corpus(self_talk.as_bytes()),
            Err(CorpusError::Schema { line: 1, .. })
        ));
        let empty_text = r#"{"session_id":"s01","utterance_id":1,"t_start":0.0,"t_end":1.0,"speaker":"doctor","text":"  ","codes":[]}"#;
        assert!(matches!(
            parse_corpus(empty_text.as_bytes()),
            Err(CorpusError::Schema { line: 1, .. })
        ));
    }

    #[test]
    fn duplicate_utterance_id_is_an_order_error() {
        let err =
            Corpus::from_utterances(vec![utt("s01", 3, &[Code::Handover]), utt("s01", 3, &[])])
                .unwrap_err();
        match err {
            CorpusError::Order {
                session_id,
                utterance_id,
            } => {
                assert_eq!(session_id, "s01");
                assert_eq!(utterance_id, 3);
            }
            other => panic!("expected order error, got {other:?}"),
        }
    }

    #[test]
    fn sessions_keep_first_appearance_order_and_sort_utterances() {
        let corpus = Corpus::from_utterances(vec![
            utt("s02", 2, &[Code::Questioning]),
            utt("s01", 9, &[Code::Handover]),
            utt("s02", 1, &[Code::Acknowledging]),
        ])
        .unwrap();
        let ids: Vec<(&str, u64)> = corpus
            .utterances()
            .map(|u| (u.session_id.as_str(), u.utterance_id))
            .collect();
        assert_eq!(ids, [("s02", 1), ("s02", 2), ("s01", 9)]);
    }

    #[test]
    fn round_trip_preserves_every_field() {
        let original = Corpus::from_utterances(vec![
            Utterance::new(
                "s01",
                1,
                0.25,
                2.75,
                Role::Doctor,
                None,
                "How are the obs?",
                Some(CodeVector::from_codes([Code::Questioning])),
            )
            .unwrap(),
            Utterance::new(
                "s01",
                2,
                3.0,
                4.5,
                Role::PrimaryNurse2,
                Some(Role::Doctor),
                "Uncoded transcript line.",
                None,
            )
            .unwrap(),
            Utterance::new(
                "s02",
                1,
                0.0,
                1.0,
                Role::Patient,
                None,
                "It hurts.",
                Some(CodeVector::NONE),
            )
            .unwrap(),
        ])
        .unwrap();
        let text = corpus_to_jsonl(&original);
        let reloaded = parse_corpus(text.as_bytes()).unwrap();
        assert_eq!(original, reloaded);
        // Serialization is stable: a second round trip emits identical bytes.
        assert_eq!(text, corpus_to_jsonl(&reloaded));
    }

    #[test]
    fn filter_coded_drops_none_and_requires_gold() {
        let corpus = Corpus::from_utterances(vec![
            utt("s01", 1, &[Code::Handover]),
            utt("s01", 2, &[]),
            utt("s02", 3, &[]),
        ])
        .unwrap();
        let coded = filter_coded(&corpus).unwrap();
        assert_eq!(coded.len(), 1);
        assert_eq!(coded.session_count(), 1);

        let mut no_gold = utt("s03", 1, &[Code::Handover]);
        no_gold.gold = None;
        let corpus = Corpus::from_utterances(vec![no_gold]).unwrap();
        assert!(matches!(
            filter_coded(&corpus),
            Err(CorpusError::MissingGold { .. })
        ));
    }

    #[test]
    fn stats_use_population_standard_deviation() {
        // Session sizes 2, 4, and 6: mean 4, population variance 8/3.
        let mut utterances = Vec::new();
        for (session, n) in [("a", 2u64), ("b", 4), ("c", 6)] {
            for id in 0..n {
                utterances.push(utt(session, id, &[Code::Handover]));
            }
        }
        let corpus = Corpus::from_utterances(utterances).unwrap();
        let stats = corpus_stats(&corpus).unwrap();
        assert_eq!(stats.utterance_count, 12);
        assert_eq!(stats.session_count, 3);
        assert_relative_eq!(stats.mean_per_session, 4.0);
        assert_relative_eq!(stats.sd_per_session, 1.632_993_161_855_451_8);
    }

    #[test]
    fn empty_inputs_are_rejected() {
        assert!(matches!(
            parse_corpus("".as_bytes()),
            Err(CorpusError::Empty)
        ));
        assert!(matches!(
            corpus_stats(&Corpus::default()),
            Err(CorpusError::Empty)
        ));
    }
}
