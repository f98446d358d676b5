//! Prompt construction for the four prompt designs.
//!
//! A prompt is rendered from fixed blocks joined by single blank lines:
//! preamble, codebook, optional decision rules, optional conversational
//! context, optional speaker metadata, the output-format task statement,
//! and the numbered target utterances. Rendering is a pure function of its
//! inputs — identical inputs produce byte-identical prompts — and the
//! codebook block is shared verbatim by all designs, so richer designs
//! textually contain the simpler ones.
//!
//! The four designs:
//!
//! * **P1** — few-shot: codebook with three worked examples per code.
//! * **P2** — P1 plus explicit decision rules.
//! * **P3** — P2 plus a rolling window of up to three preceding utterances
//!   per target and a 95% confidence instruction.
//! * **P4** — P2 plus per-utterance speaker metadata (initiator and
//!   receiver roles).

use crate::codes::{Code, CODE_COUNT};
use crate::corpus::Utterance;
use serde::{Deserialize, Serialize};
use std::fmt;

/// Errors produced while assembling prompts.
#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum PromptError {
    /// A prompt cannot be rendered for zero utterances.
    #[error("prompt batch is empty")]
    EmptyBatch,
    /// The rule set does not match the design: rule-based designs need at
    /// least one rule, the few-shot design must not receive any.
    #[error("design {design} expects {expectation} decision rules")]
    RuleMismatch {
        design: &'static str,
        expectation: &'static str,
    },
    /// The codebook does not define every code exactly once.
    #[error("codebook incomplete: {0}")]
    CodebookIncomplete(String),
    /// A decision rule was structurally invalid.
    #[error("invalid decision rule: {0}")]
    InvalidRule(String),
    /// Batch (or history) utterances belong to more than one session.
    #[error("prompt batch mixes sessions {0} and {1}")]
    MixedSessions(String, String),
}

/// Codebook entry: one code with its definition and three worked examples.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodebookEntry {
    /// The code being defined.
    pub code: Code,
    /// Prose definition shown to the model.
    pub definition: String,
    /// Exactly three example utterances.
    pub examples: [String; 3],
}

/// Complete codebook: one entry per code, held in canonical order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Codebook {
    entries: [CodebookEntry; CODE_COUNT],
}

impl Codebook {
    /// Builds a codebook, requiring exactly one entry per code. Entries may
    /// arrive in any order; they are stored canonically.
    pub fn new(entries: Vec<CodebookEntry>) -> Result<Codebook, PromptError> {
        let mut slots: [Option<CodebookEntry>; CODE_COUNT] = Default::default();
        for entry in entries {
            if entry.definition.trim().is_empty() {
                return Err(PromptError::CodebookIncomplete(format!(
                    "empty definition for {}",
                    entry.code.name()
                )));
            }
            if entry.examples.iter().any(|e| e.trim().is_empty()) {
                return Err(PromptError::CodebookIncomplete(format!(
                    "empty example for {}",
                    entry.code.name()
                )));
            }
            let slot = &mut slots[entry.code.index()];
            if slot.is_some() {
                return Err(PromptError::CodebookIncomplete(format!(
                    "duplicate entry for {}",
                    entry.code.name()
                )));
            }
            *slot = Some(entry);
        }
        for (i, slot) in slots.iter().enumerate() {
            if slot.is_none() {
                return Err(PromptError::CodebookIncomplete(format!(
                    "missing entry for {}",
                    Code::ALL[i].name()
                )));
            }
        }
        Ok(Codebook {
            entries: slots.map(|s| s.expect("checked above")),
        })
    }

    /// Entries in canonical code order.
    pub fn entries(&self) -> &[CodebookEntry; CODE_COUNT] {
        &self.entries
    }

    /// The entry for one code.
    pub fn entry(&self, code: Code) -> &CodebookEntry {
        &self.entries[code.index()]
    }
}

/// A decision rule: a textual condition plus the codes it can imply.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecisionRule {
    /// Condition text rendered verbatim into the prompt.
    pub condition: String,
    /// Codes the rule assigns when its condition holds (non-empty).
    pub implied_codes: Vec<Code>,
}

impl DecisionRule {
    /// Builds a validated rule.
    pub fn new(
        condition: impl Into<String>,
        implied_codes: Vec<Code>,
    ) -> Result<DecisionRule, PromptError> {
        let rule = DecisionRule {
            condition: condition.into(),
            implied_codes,
        };
        rule.validate()?;
        Ok(rule)
    }

    /// Checks the structural invariants (used again after deserialization).
    pub fn validate(&self) -> Result<(), PromptError> {
        if self.condition.trim().is_empty() {
            return Err(PromptError::InvalidRule("empty condition".into()));
        }
        if self.implied_codes.is_empty() {
            return Err(PromptError::InvalidRule(format!(
                "rule {:?} implies no codes",
                self.condition
            )));
        }
        Ok(())
    }
}

/// The prompt design axis of the sweep grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PromptVariant {
    /// Few-shot codebook only.
    #[serde(rename = "P1")]
    P1,
    /// Codebook plus decision rules.
    #[serde(rename = "P2")]
    P2,
    /// Codebook, rules, and conversational context.
    #[serde(rename = "P3")]
    P3,
    /// Codebook, rules, and speaker metadata.
    #[serde(rename = "P4")]
    P4,
}

impl PromptVariant {
    /// All variants in sweep order.
    pub const ALL: [PromptVariant; 4] = [
        PromptVariant::P1,
        PromptVariant::P2,
        PromptVariant::P3,
        PromptVariant::P4,
    ];

    /// Machine-readable token (`P1`…`P4`), used in CSV and file names.
    pub fn name(self) -> &'static str {
        match self {
            PromptVariant::P1 => "P1",
            PromptVariant::P2 => "P2",
            PromptVariant::P3 => "P3",
            PromptVariant::P4 => "P4",
        }
    }

    /// Human-readable token (`P.1`…`P.4`), used in Markdown reports.
    pub fn display_name(self) -> &'static str {
        match self {
            PromptVariant::P1 => "P.1",
            PromptVariant::P2 => "P.2",
            PromptVariant::P3 => "P.3",
            PromptVariant::P4 => "P.4",
        }
    }

    /// Parses the machine-readable token.
    pub fn from_name(name: &str) -> Option<PromptVariant> {
        PromptVariant::ALL
            .iter()
            .copied()
            .find(|v| v.name() == name)
    }
}

impl fmt::Display for PromptVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A fully resolved prompt design: the variant plus its derived settings.
///
/// Constructed only through [`PromptDesign::of`], which keeps the derived
/// settings consistent: exactly the context design carries a non-zero
/// window (3) and a confidence threshold (95%).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PromptDesign {
    variant: PromptVariant,
    context_window: usize,
    confidence_threshold_pct: Option<f64>,
}

impl PromptDesign {
    /// Resolves a variant into its full design.
    pub fn of(variant: PromptVariant) -> PromptDesign {
        match variant {
            PromptVariant::P3 => PromptDesign {
                variant,
                context_window: 3,
                confidence_threshold_pct: Some(95.0),
            },
            _ => PromptDesign {
                variant,
                context_window: 0,
                confidence_threshold_pct: None,
            },
        }
    }

    /// The design variant.
    pub fn variant(&self) -> PromptVariant {
        self.variant
    }

    /// Number of preceding utterances rendered as context per target.
    pub fn context_window(&self) -> usize {
        self.context_window
    }

    /// Minimum confidence (percent) the model is instructed to require
    /// before marking a code.
    pub fn confidence_threshold_pct(&self) -> Option<f64> {
        self.confidence_threshold_pct
    }

    /// Whether this design renders decision rules.
    pub fn uses_rules(&self) -> bool {
        self.variant != PromptVariant::P1
    }

    /// Whether this design renders speaker metadata.
    pub fn uses_metadata(&self) -> bool {
        self.variant == PromptVariant::P4
    }
}

impl Serialize for PromptDesign {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.variant.name())
    }
}

impl<'de> Deserialize<'de> for PromptDesign {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let name = String::deserialize(deserializer)?;
        PromptVariant::from_name(&name)
            .map(PromptDesign::of)
            .ok_or_else(|| serde::de::Error::custom(format!("unknown prompt design {name:?}")))
    }
}

/// Identifies one utterance across the corpus.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct UtteranceKey {
    /// Session the utterance belongs to.
    pub session_id: String,
    /// Utterance id within the session.
    pub utterance_id: u64,
}

impl From<&Utterance> for UtteranceKey {
    fn from(u: &Utterance) -> UtteranceKey {
        UtteranceKey {
            session_id: u.session_id.clone(),
            utterance_id: u.utterance_id,
        }
    }
}

/// A rendered prompt ready to send to the model.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderedPrompt {
    /// Full prompt text.
    pub text: String,
    /// Number of binary rows the completion must contain (= batch size).
    pub expected_output_rows: usize,
    /// Design the prompt was rendered for.
    pub design: PromptDesign,
    /// Identity of each target utterance, in prompt order.
    pub batch_keys: Vec<UtteranceKey>,
}

/// The default codebook: the coding scheme's six definitions, each with its
/// canonical worked example followed by two harness-curated examples in the
/// same clinical register.
pub fn default_codebook() -> Codebook {
    let entry = |code: Code, definition: &str, examples: [&str; 3]| CodebookEntry {
        code,
        definition: definition.to_string(),
        examples: examples.map(str::to_string),
    };
    Codebook::new(vec![
        entry(
            Code::TaskAllocation,
            "A healthcare student self-assigns or assigns to another healthcare student one or more tasks.",
            [
                "Can you start the IV line and prepare the fluids?",
                "I'll take the observations on bed three.",
                "Sarah, can you grab the blood pressure cuff?",
            ],
        ),
        entry(
            Code::Handover,
            "When a healthcare student provides structural communication of the medical situation to the new team members.",
            [
                "We have Jack here. He's just been complaining of six out of ten chest pain.",
                "This is Mary in bed two, admitted with shortness of breath; she was stable until five minutes ago.",
                "You're taking over bed four: post-op day one, pain controlled, fluids running.",
            ],
        ),
        entry(
            Code::SharingInformation,
            "A healthcare student shares relevant clinical or situational information with one or more other healthcare professionals.",
            [
                "His oxygen saturation has dropped to 88%.",
                "Blood pressure is 90 over 60 and trending down.",
                "Her GCS is still 14; she's responding to voice.",
            ],
        ),
        entry(
            Code::Escalation,
            "A healthcare student communicates that the situation exceeds their capacity and requests or suggests additional assistance, including initiating or proposing a formal call for help.",
            [
                "This is deteriorating quickly, we need to call the resuscitation team.",
                "I can't manage this on my own — can someone call the doctor?",
                "We should put out a MET call now.",
            ],
        ),
        entry(
            Code::Questioning,
            "A healthcare student asks another team member to obtain information.",
            [
                "Have the blood results come back yet?",
                "What was his last blood pressure reading?",
                "Is the oxygen running at eight litres?",
            ],
        ),
        entry(
            Code::Acknowledging,
            "A healthcare student signals receipt or recognition of another professional's statement, request, or presence. This is a passive action and does not necessarily indicate agreement or disagreement, but demonstrates awareness or understanding.",
            [
                "Okay.",
                "I hear you.",
                "Got it.",
            ],
        ),
    ])
    .expect("default codebook is complete")
}

/// The default decision rules for the rule-based designs. The first rule is
/// the worked example that accompanies the coding scheme; the remaining
/// four are harness-curated clarifications, one per frequently confused
/// code.
pub fn default_rules() -> Vec<DecisionRule> {
    let rule = |condition: &str, codes: &[Code]| {
        DecisionRule::new(condition, codes.to_vec()).expect("default rule is valid")
    };
    vec![
        rule(
            "If an utterance contains a first-person commitment (e.g., \"I will...\", \"Let me...\"), then code it as task allocation; if the utterance also reports patient status, additionally code it as sharing information.",
            &[Code::TaskAllocation, Code::SharingInformation],
        ),
        rule(
            "If an utterance introduces the patient or summarises the clinical situation for newly arriving team members, code it as handover.",
            &[Code::Handover],
        ),
        rule(
            "If an utterance states that the situation exceeds the team's capacity or proposes calling for additional help, code it as escalation.",
            &[Code::Escalation],
        ),
        rule(
            "If an utterance asks another team member to obtain or report information and expects an answer, code it as questioning.",
            &[Code::Questioning],
        ),
        rule(
            "If an utterance only signals receipt or recognition of another speaker's statement — for example \"okay\" or \"got it\" — without adding new content, code it as acknowledging.",
            &[Code::Acknowledging],
        ),
    ]
}

fn codebook_blocks(codebook: &Codebook) -> Vec<String> {
    let mut blocks = vec!["## Codebook".to_string()];
    for (i, entry) in codebook.entries().iter().enumerate() {
        let mut block = format!(
            "{}. {}\nDefinition: {}",
            i + 1,
            entry.code.display_name(),
            entry.definition
        );
        for example in &entry.examples {
            block.push_str("\nExample: \"");
            block.push_str(example);
            block.push('"');
        }
        blocks.push(block);
    }
    blocks
}

fn context_block(
    design: &PromptDesign,
    batch: &[Utterance],
    session_history: &[Utterance],
) -> String {
    let confidence = design
        .confidence_threshold_pct()
        .expect("context design carries a confidence threshold");
    let window = design.context_window();
    let mut block = format!(
        "## Conversational context\n\nConsider up to the {window} utterances spoken \
         immediately before each target utterance when choosing its codes. For targets \
         later in the batch, the earlier numbered utterances below are part of that \
         context. Only mark a code when you are at least {confidence:.0}% confident it \
         applies; otherwise leave it at 0."
    );
    for (i, _) in batch.iter().enumerate().take(window) {
        // Target i draws (window - i) utterances from the stored history;
        // the rest of its context is visible in the numbered batch.
        let take = (window - i).min(session_history.len());
        if take == 0 {
            if i == 0 {
                block.push_str("\nContext for utterance 1: (session start)");
            }
            continue;
        }
        block.push_str(&format!("\nContext for utterance {}:", i + 1));
        for u in &session_history[session_history.len() - take..] {
            block.push_str(&format!("\n- [{}] {}", u.speaker.display_name(), u.text));
        }
    }
    block
}

fn metadata_block(batch: &[Utterance]) -> String {
    let mut block = "## Speaker metadata".to_string();
    block.push('\n');
    for (i, u) in batch.iter().enumerate() {
        let receiver = u
            .receiver
            .map(|r| r.display_name())
            .unwrap_or("unspecified");
        block.push_str(&format!(
            "\nUtterance {}: initiator {}, receiver {}",
            i + 1,
            u.speaker.display_name(),
            receiver
        ));
    }
    block
}

fn task_block(expected_rows: usize) -> String {
    let order = Code::ALL
        .iter()
        .map(|c| c.display_name())
        .collect::<Vec<_>>()
        .join(", ");
    format!(
        "## Task\n\nCode every numbered utterance below. For each one output exactly one \
         line of seven space-separated binary values (0 or 1) in this exact order: \
         {order}, none. An utterance may carry several codes at once; set the final \
         (none) value to 1 only when none of the six codes applies. Output exactly \
         {expected_rows} line(s), one per utterance in the order given, and nothing else \
         — no explanations, no numbering, no extra text."
    )
}

/// Renders one prompt.
///
/// `session_history` holds the utterances of the same session that precede
/// the batch, oldest first; only context designs read it. The rule slice
/// must be empty for the few-shot design and non-empty for every other
/// design.
pub fn render_prompt(
    design: PromptDesign,
    batch: &[Utterance],
    session_history: &[Utterance],
    codebook: &Codebook,
    rules: &[DecisionRule],
) -> Result<RenderedPrompt, PromptError> {
    if batch.is_empty() {
        return Err(PromptError::EmptyBatch);
    }
    if design.uses_rules() && rules.is_empty() {
        return Err(PromptError::RuleMismatch {
            design: design.variant().name(),
            expectation: "one or more",
        });
    }
    if !design.uses_rules() && !rules.is_empty() {
        return Err(PromptError::RuleMismatch {
            design: design.variant().name(),
            expectation: "no",
        });
    }
    for rule in rules {
        rule.validate()?;
    }
    let session_id = &batch[0].session_id;
    for u in batch.iter().chain(session_history.iter()) {
        if &u.session_id != session_id {
            return Err(PromptError::MixedSessions(
                session_id.clone(),
                u.session_id.clone(),
            ));
        }
    }

    let mut blocks: Vec<String> = vec![
        "You are an expert communication coder for nursing simulation training. A team \
         of healthcare students manages a deteriorating patient in a simulated ward \
         while their speech is transcribed. Assign communication codes to each numbered \
         utterance using the codebook below."
            .to_string(),
    ];
    blocks.extend(codebook_blocks(codebook));
    if design.uses_rules() {
        let mut block = "## Decision rules".to_string();
        block.push('\n');
        for rule in rules {
            block.push_str(&format!("\n- {}", rule.condition));
        }
        blocks.push(block);
    }
    if design.context_window() > 0 {
        blocks.push(context_block(&design, batch, session_history));
    }
    if design.uses_metadata() {
        blocks.push(metadata_block(batch));
    }
    blocks.push(task_block(batch.len()));
    let mut utterance_block = "## Utterances".to_string();
    utterance_block.push('\n');
    for (i, u) in batch.iter().enumerate() {
        utterance_block.push_str(&format!("\n{}. {}", i + 1, u.text));
    }
    blocks.push(utterance_block);

    Ok(RenderedPrompt {
        text: blocks.join("\n\n"),
        expected_output_rows: batch.len(),
        design,
        batch_keys: batch.iter().map(UtteranceKey::from).collect(),
    })
}

/// A renderer bundling a codebook and rule set; picks the right rule slice
/// for each design (none for few-shot, the full set otherwise).
#[derive(Debug, Clone)]
pub struct Renderer {
    codebook: Codebook,
    rules: Vec<DecisionRule>,
}

impl Renderer {
    /// Builds a renderer from explicit assets, validating the rules.
    pub fn new(codebook: Codebook, rules: Vec<DecisionRule>) -> Result<Renderer, PromptError> {
        for rule in &rules {
            rule.validate()?;
        }
        if rules.is_empty() {
            return Err(PromptError::InvalidRule(
                "renderer needs at least one rule for the rule-based designs".into(),
            ));
        }
        Ok(Renderer { codebook, rules })
    }

    /// Renderer with the default codebook and rules.
    pub fn with_defaults() -> Renderer {
        Renderer {
            codebook: default_codebook(),
            rules: default_rules(),
        }
    }

    /// The codebook in use.
    pub fn codebook(&self) -> &Codebook {
        &self.codebook
    }

    /// The rule set used by rule-based designs.
    pub fn rules(&self) -> &[DecisionRule] {
        &self.rules
    }

    /// Renders a prompt for `design`, supplying rules only where the design
    /// calls for them.
    pub fn render(
        &self,
        design: PromptDesign,
        batch: &[Utterance],
        session_history: &[Utterance],
    ) -> Result<RenderedPrompt, PromptError> {
        let rules: &[DecisionRule] = if design.uses_rules() {
            &self.rules
        } else {
            &[]
        };
        render_prompt(design, batch, session_history, &self.codebook, rules)
    }
}
