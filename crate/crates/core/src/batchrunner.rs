//! Batch planning, model transports, completion parsing, and the
//! classification loop.
//!
//! A corpus is partitioned into session-bounded batches ([`plan_batches`]):
//! batches never span sessions, so a session boundary always starts a fresh
//! batch. Each batch is rendered into a prompt, sent through a
//! [`ModelTransport`], and parsed back into label vectors by
//! [`parse_completion`], whose grammar tolerates reasoning preambles and
//! commentary: it looks for the **last** run of consecutive numeric lines
//! that forms exactly the expected number of valid seven-token binary rows.
//!
//! Failure policy, applied per batch by [`classify`]:
//!
//! * unparseable completion → one retry, then a zero-vector fallback
//!   (every utterance in the batch coded as *none*) counted in
//!   `fallback_count`;
//! * empty completion on both the first attempt and its retry →
//!   [`ClassifyError::ModelRefusal`], aborting the run;
//! * transport errors abort immediately (the HTTP transport has already
//!   retried transient failures internally).
//!
//! Requests are issued strictly sequentially — latency and energy
//! attribution would be meaningless under concurrency.

use crate::codes::{CodeVector, VECTOR_WIDTH};
use crate::corpus::Corpus;
use crate::corpus::Utterance;
use crate::promptkit::{PromptDesign, PromptError, RenderedPrompt, Renderer, UtteranceKey};
use crate::telemetry::TestClock;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::HashMap;
use std::rc::Rc;
use std::time::Duration;

/// Batch sizes of the standard sweep grid.
pub const PAPER_BATCH_SIZES: [usize; 8] = [1, 10, 20, 30, 40, 50, 60, 70];

/// Errors from batch planning.
#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum PlanError {
    /// Batch size must be at least 1.
    #[error("batch size must be at least 1")]
    ZeroBatchSize,
    /// Planning needs at least one utterance.
    #[error("cannot plan batches over an empty corpus")]
    EmptyCorpus,
}

/// Errors from completion parsing.
#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum ParseError {
    /// The completion held no non-whitespace characters.
    #[error("completion is empty")]
    EmptyCompletion,
    /// No block of valid rows matched the expected row count.
    #[error("expected {expected} label rows, found {found}")]
    RowCountMismatch { expected: usize, found: usize },
    /// A row in the right-sized block was not seven binary tokens.
    #[error("malformed label row {index} ({row:?}): {reason}")]
    MalformedRow {
        index: usize,
        row: String,
        reason: String,
    },
}

/// Errors from model transports.
#[derive(Debug, thiserror::Error)]
pub enum TransportError {
    /// Could not reach the endpoint.
    #[error("endpoint unreachable: {0}")]
    Connect(String),
    /// The request exceeded the configured timeout.
    #[error("request timed out: {0}")]
    Timeout(String),
    /// The endpoint answered with a non-success status.
    #[error("endpoint returned HTTP {code}: {excerpt}")]
    Status { code: u16, excerpt: String },
    /// The response body was not the expected chat-completion shape.
    #[error("malformed response body: {0}")]
    MalformedBody(String),
    /// A scripted/mock transport had no entry for a requested utterance.
    #[error("mock transport script error: {0}")]
    Script(String),
}

/// Errors from the classification loop.
#[derive(Debug, thiserror::Error)]
pub enum ClassifyError {
    /// Transport failed after its internal retries.
    #[error(transparent)]
    Transport(#[from] TransportError),
    /// Prompt rendering failed.
    #[error(transparent)]
    Prompt(#[from] PromptError),
    /// The model returned empty completions on consecutive attempts.
    #[error(
        "model refused: empty completions on both attempts for the batch starting at \
         {session_id}:{utterance_id}"
    )]
    ModelRefusal {
        session_id: String,
        utterance_id: u64,
    },
    /// The model configuration was invalid.
    #[error("invalid model configuration: {0}")]
    InvalidModelConfig(String),
}

/// Connection and decoding settings for the local chat endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Base URL of the chat server, e.g. `http://localhost:11434`.
    pub endpoint_url: String,
    /// Model identifier to request.
    pub model_name: String,
    /// Sampling temperature; 0 for deterministic decoding.
    pub temperature: f64,
    /// Decoding seed, fixed so reruns are reproducible.
    pub seed: i64,
    /// Per-request timeout in seconds.
    pub request_timeout_s: f64,
}

impl Default for ModelConfig {
    fn default() -> ModelConfig {
        ModelConfig {
            endpoint_url: "http://localhost:11434".to_string(),
            model_name: "deepseek-r1:14b".to_string(),
            temperature: 0.0,
            seed: 42,
            request_timeout_s: 120.0,
        }
    }
}

impl ModelConfig {
    /// Checks field invariants.
    pub fn validate(&self) -> Result<(), String> {
        if self.endpoint_url.trim().is_empty() {
            return Err("endpoint_url must be non-empty".into());
        }
        if self.model_name.trim().is_empty() {
            return Err("model_name must be non-empty".into());
        }
        if !self.temperature.is_finite() || self.temperature < 0.0 {
            return Err(format!("temperature {} must be ≥ 0", self.temperature));
        }
        if !self.request_timeout_s.is_finite() || self.request_timeout_s <= 0.0 {
            return Err(format!(
                "request_timeout_s {} must be positive",
                self.request_timeout_s
            ));
        }
        Ok(())
    }
}

/// Delivers rendered prompts to a model and returns raw completions.
///
/// Implementations must be deterministic per request identity where the
/// backing model is: resending the same prompt yields the same completion.
pub trait ModelTransport {
    /// Sends one prompt and returns the raw completion text.
    fn send(
        &mut self,
        prompt: &RenderedPrompt,
        model: &ModelConfig,
    ) -> Result<String, TransportError>;
}

/// One planned batch: consecutive utterances of a single session.
#[derive(Debug, Clone, PartialEq)]
pub struct PlannedBatch {
    /// Session every utterance in this batch belongs to.
    pub session_id: String,
    /// The utterances, in corpus order.
    pub utterances: Vec<Utterance>,
}

/// The full batch schedule for one configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchPlan {
    /// Prompt design the batches will be rendered with.
    pub design: PromptDesign,
    /// Requested batch size.
    pub batch_size: usize,
    /// Batches in corpus order; session-final batches may be short.
    pub batches: Vec<PlannedBatch>,
    /// Total utterances across all batches.
    pub utterance_count: usize,
    /// Whether `batch_size` lies outside the standard sweep grid.
    pub non_paper_batch_size: bool,
}

/// Partitions a corpus into session-bounded batches.
pub fn plan_batches(
    corpus: &Corpus,
    batch_size: usize,
    design: PromptDesign,
) -> Result<BatchPlan, PlanError> {
    if batch_size == 0 {
        return Err(PlanError::ZeroBatchSize);
    }
    if corpus.is_empty() {
        return Err(PlanError::EmptyCorpus);
    }
    let mut batches = Vec::new();
    for session in corpus.sessions() {
        for chunk in session.utterances.chunks(batch_size) {
            batches.push(PlannedBatch {
                session_id: session.session_id.clone(),
                utterances: chunk.to_vec(),
            });
        }
    }
    Ok(BatchPlan {
        design,
        batch_size,
        utterance_count: corpus.len(),
        non_paper_batch_size: !PAPER_BATCH_SIZES.contains(&batch_size),
        batches,
    })
}

/// Labels parsed from completions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedLabels {
    /// One vector per utterance, in batch order.
    pub per_utterance: Vec<CodeVector>,
    /// How many of those vectors are zero-vector fallbacks rather than
    /// parsed model output.
    pub fallback_count: u64,
}

fn is_row_like(line: &str) -> bool {
    !line.is_empty() && line.split_whitespace().all(|t| t.parse::<i64>().is_ok())
}

fn parse_valid_row(row: &str) -> Result<CodeVector, String> {
    let tokens: Vec<&str> = row.split_whitespace().collect();
    if tokens.len() != VECTOR_WIDTH {
        return Err(format!(
            "expected {VECTOR_WIDTH} tokens, found {}",
            tokens.len()
        ));
    }
    let mut bits = [0u8; VECTOR_WIDTH];
    for (i, token) in tokens.iter().enumerate() {
        bits[i] = match *token {
            "0" => 0,
            "1" => 1,
            other => return Err(format!("token {other:?} is not 0 or 1")),
        };
    }
    Ok(CodeVector::from_bits(bits))
}

/// Parses a raw completion into exactly `expected_rows` label vectors.
///
/// The completion is scanned for runs of consecutive lines whose tokens are
/// all integers ("row-like" lines, separated by prose or blank lines). The
/// last run that consists of exactly `expected_rows` valid rows — seven
/// space-separated 0/1 tokens each — is accepted, which makes the parser
/// robust to chain-of-thought preambles and trailing commentary. The
/// seventh (none) slot of each row is re-derived from the six code bits, so
/// an inconsistent none bit is normalized rather than trusted.
pub fn parse_completion(text: &str, expected_rows: usize) -> Result<ParsedLabels, ParseError> {
    if text.trim().is_empty() {
        return Err(ParseError::EmptyCompletion);
    }
    let mut blocks: Vec<Vec<&str>> = Vec::new();
    let mut current: Vec<&str> = Vec::new();
    for line in text.lines() {
        let trimmed = line.trim();
        if is_row_like(trimmed) {
            current.push(trimmed);
        } else if !current.is_empty() {
            blocks.push(std::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        blocks.push(current);
    }
    // Prefer the last block that parses cleanly at the expected size.
    for block in blocks.iter().rev() {
        if block.len() == expected_rows {
            if let Ok(rows) = block
                .iter()
                .map(|r| parse_valid_row(r))
                .collect::<Result<Vec<_>, _>>()
            {
                return Ok(ParsedLabels {
                    per_utterance: rows,
                    fallback_count: 0,
                });
            }
        }
    }
    // Diagnose: a right-sized block existed but contained a bad row.
    for block in blocks.iter().rev() {
        if block.len() == expected_rows {
            let (index, row, reason) = block
                .iter()
                .enumerate()
                .find_map(|(i, r)| parse_valid_row(r).err().map(|e| (i, r.to_string(), e)))
                .expect("block rejected above must contain a bad row");
            return Err(ParseError::MalformedRow { index, row, reason });
        }
    }
    let found = blocks.last().map(|b| b.len()).unwrap_or(0);
    Err(ParseError::RowCountMismatch {
        expected: expected_rows,
        found,
    })
}

/// Formats label vectors as the canonical completion text: one seven-token
/// binary row per vector. `parse_completion` inverts this exactly.
pub fn format_rows(vectors: &[CodeVector]) -> String {
    let mut out = String::new();
    for v in vectors {
        out.push_str(&v.to_string());
        out.push('\n');
    }
    out
}

/// Result of classifying a whole plan.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassificationOutcome {
    /// Predictions aligned 1:1 with the plan's utterances, plus the count
    /// of zero-vector fallbacks among them.
    pub predictions: ParsedLabels,
    /// Primary requests issued (one per batch).
    pub request_count: u64,
    /// Retry requests issued on top of the primary ones.
    pub retry_count: u64,
}

/// Runs the full classification loop over a plan.
///
/// Batches are processed strictly sequentially in plan order. For the
/// context design, each prompt sees the session utterances that preceded
/// its batch (trimmed to the design's window).
pub fn classify(
    plan: &BatchPlan,
    model: &ModelConfig,
    renderer: &Renderer,
    transport: &mut dyn ModelTransport,
) -> Result<ClassificationOutcome, ClassifyError> {
    model
        .validate()
        .map_err(ClassifyError::InvalidModelConfig)?;
    let window = plan.design.context_window();
    let mut predictions = ParsedLabels {
        per_utterance: Vec::with_capacity(plan.utterance_count),
        fallback_count: 0,
    };
    let mut request_count = 0u64;
    let mut retry_count = 0u64;
    let mut history_session = String::new();
    let mut history: Vec<Utterance> = Vec::new();
    for batch in &plan.batches {
        if batch.session_id != history_session {
            history_session = batch.session_id.clone();
            history.clear();
        }
        let prompt = renderer.render(plan.design, &batch.utterances, &history)?;
        request_count += 1;
        let completion = transport.send(&prompt, model)?;
        let first_empty = completion.trim().is_empty();
        let labels = match parse_completion(&completion, prompt.expected_output_rows) {
            Ok(labels) => labels,
            Err(first_err) => {
                retry_count += 1;
                let retry_completion = transport.send(&prompt, model)?;
                if first_empty && retry_completion.trim().is_empty() {
                    return Err(ClassifyError::ModelRefusal {
                        session_id: batch.session_id.clone(),
                        utterance_id: batch.utterances[0].utterance_id,
                    });
                }
                match parse_completion(&retry_completion, prompt.expected_output_rows) {
                    Ok(labels) => labels,
                    Err(retry_err) => {
                        log::warn!(
                            "batch at {}:{} fell back to zero vectors after retry \
                             (first error: {first_err}; retry error: {retry_err}; \
                             completion excerpt: {:?})",
                            batch.session_id,
                            batch.utterances[0].utterance_id,
                            excerpt(&retry_completion, 120),
                        );
                        ParsedLabels {
                            per_utterance: vec![CodeVector::NONE; batch.utterances.len()],
                            fallback_count: batch.utterances.len() as u64,
                        }
                    }
                }
            }
        };
        predictions.per_utterance.extend(labels.per_utterance);
        predictions.fallback_count += labels.fallback_count;
        if window > 0 {
            history.extend(batch.utterances.iter().cloned());
            if history.len() > window {
                history.drain(..history.len() - window);
            }
        }
    }
    Ok(ClassificationOutcome {
        predictions,
        request_count,
        retry_count,
    })
}

fn excerpt(text: &str, limit: usize) -> String {
    let flat: String = text
        .chars()
        .map(|c| if c == '\n' { ' ' } else { c })
        .collect();
    if flat.len() <= limit {
        flat
    } else {
        let cut: String = flat.chars().take(limit).collect();
        format!("{cut}…")
    }
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Serialize)]
struct ChatOptions {
    temperature: f64,
    seed: i64,
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: Vec<ChatMessage<'a>>,
    stream: bool,
    options: ChatOptions,
}

#[derive(Deserialize)]
struct ChatResponseMessage {
    content: String,
}

#[derive(Deserialize)]
struct ChatResponse {
    message: ChatResponseMessage,
}

/// HTTP transport for an Ollama-compatible chat endpoint.
///
/// Sends `POST {endpoint}/api/chat` with a single user message,
/// `stream": false`, and deterministic decoding options, and reads
/// `message.content` from the JSON response. Connection failures, timeouts,
/// and 5xx responses are retried up to `max_retries` times before the error
/// is surfaced; 4xx responses are never retried.
pub struct HttpTransport {
    client: reqwest::blocking::Client,
    max_retries: u32,
}

impl HttpTransport {
    /// A transport with the default retry budget (2).
    pub fn new() -> Result<HttpTransport, TransportError> {
        HttpTransport::with_retries(2)
    }

    /// A transport retrying transient failures up to `max_retries` times.
    pub fn with_retries(max_retries: u32) -> Result<HttpTransport, TransportError> {
        let client = reqwest::blocking::Client::builder()
            .build()
            .map_err(|e| TransportError::Connect(e.to_string()))?;
        Ok(HttpTransport {
            client,
            max_retries,
        })
    }

    fn attempt(
        &self,
        url: &str,
        request: &ChatRequest<'_>,
        timeout: Duration,
    ) -> Result<String, TransportError> {
        let response = self
            .client
            .post(url)
            .timeout(timeout)
            .json(request)
            .send()
            .map_err(|e| {
                if e.is_timeout() {
                    TransportError::Timeout(e.to_string())
                } else {
                    TransportError::Connect(e.to_string())
                }
            })?;
        let status = response.status();
        if !status.is_success() {
            let body = response.text().unwrap_or_default();
            return Err(TransportError::Status {
                code: status.as_u16(),
                excerpt: excerpt(&body, 200),
            });
        }
        let body: ChatResponse = response
            .json()
            .map_err(|e| TransportError::MalformedBody(e.to_string()))?;
        Ok(body.message.content)
    }
}

impl ModelTransport for HttpTransport {
    fn send(
        &mut self,
        prompt: &RenderedPrompt,
        model: &ModelConfig,
    ) -> Result<String, TransportError> {
        let url = format!("{}/api/chat", model.endpoint_url.trim_end_matches('/'));
        let request = ChatRequest {
            model: &model.model_name,
            messages: vec![ChatMessage {
                role: "user",
                content: &prompt.text,
            }],
            stream: false,
            options: ChatOptions {
                temperature: model.temperature,
                seed: model.seed,
            },
        };
        let timeout = Duration::from_secs_f64(model.request_timeout_s);
        let mut last_err = None;
        for attempt in 0..=self.max_retries {
            match self.attempt(&url, &request, timeout) {
                Ok(content) => return Ok(content),
                Err(e) => {
                    let transient = matches!(
                        &e,
                        TransportError::Connect(_)
                            | TransportError::Timeout(_)
                            | TransportError::Status {
                                code: 500..=599,
                                ..
                            }
                    );
                    if transient && attempt < self.max_retries {
                        log::warn!("transient transport failure (attempt {}): {e}", attempt + 1);
                        last_err = Some(e);
                        continue;
                    }
                    return Err(e);
                }
            }
        }
        Err(last_err.expect("retry loop exits early unless an error was stored"))
    }
}

/// What the mock serves when it decides to garble a batch.
#[derive(Debug, Clone)]
enum MockBehavior {
    /// Answer every batch with its gold rows.
    EchoGold,
    /// Answer from a per-utterance script of label rows.
    Script(HashMap<UtteranceKey, String>),
    /// Echo gold, but deterministically garble a fraction of batches.
    Garbage { rate: f64, seed: u64 },
}

/// Optional simulated latency, driven through a shared [`TestClock`].
pub struct MockLatency {
    /// Clock advanced on every request.
    pub clock: Rc<TestClock>,
    /// Fixed seconds per request.
    pub per_request_s: f64,
    /// Additional seconds per utterance in the batch.
    pub per_utterance_s: f64,
}

/// Mock usage counters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MockStats {
    /// Requests served.
    pub requests: u64,
    /// Requests answered with deliberately garbled output.
    pub garbage_served: u64,
    /// Total utterances across garbled requests. Because garbling is keyed
    /// on batch identity, an affected batch is garbled on its primary
    /// request and again on its retry, so the utterances that end up as
    /// fallbacks number exactly half of this.
    pub garbage_utterances: u64,
}

/// Deterministic offline transport.
///
/// Identical requests always get identical completions — garbling
/// decisions are keyed on the batch identity (seed, design, batch size,
/// session, utterance span), not on call order — so retry behavior is
/// exactly reproducible.
pub struct MockTransport {
    gold: HashMap<UtteranceKey, CodeVector>,
    behavior: MockBehavior,
    latency: Option<MockLatency>,
    stats: MockStats,
}

impl MockTransport {
    fn gold_map(corpus: &Corpus) -> HashMap<UtteranceKey, CodeVector> {
        corpus
            .utterances()
            .filter_map(|u| u.gold.map(|g| (UtteranceKey::from(u), g)))
            .collect()
    }

    /// Mock that answers every batch with its gold rows.
    pub fn echo_gold(corpus: &Corpus) -> MockTransport {
        MockTransport {
            gold: Self::gold_map(corpus),
            behavior: MockBehavior::EchoGold,
            latency: None,
            stats: MockStats::default(),
        }
    }

    /// Mock that answers from a per-utterance script of label rows.
    pub fn script(rows: HashMap<UtteranceKey, String>) -> MockTransport {
        MockTransport {
            gold: HashMap::new(),
            behavior: MockBehavior::Script(rows),
            latency: None,
            stats: MockStats::default(),
        }
    }

    /// Mock that echoes gold but garbles roughly `rate` of batches
    /// (deterministically, keyed by batch identity and `seed`).
    pub fn garbage(corpus: &Corpus, rate: f64, seed: u64) -> MockTransport {
        MockTransport {
            gold: Self::gold_map(corpus),
            behavior: MockBehavior::Garbage {
                rate: rate.clamp(0.0, 1.0),
                seed,
            },
            latency: None,
            stats: MockStats::default(),
        }
    }

    /// Attaches simulated latency: each request advances the clock by
    /// `per_request_s + per_utterance_s × batch_len`.
    pub fn with_latency(mut self, latency: MockLatency) -> MockTransport {
        self.latency = Some(latency);
        self
    }

    /// Usage counters.
    pub fn stats(&self) -> MockStats {
        self.stats
    }

    fn gold_rows(&self, prompt: &RenderedPrompt) -> Result<String, TransportError> {
        let mut vectors = Vec::with_capacity(prompt.batch_keys.len());
        for key in &prompt.batch_keys {
            let v = self.gold.get(key).ok_or_else(|| {
                TransportError::Script(format!(
                    "no gold annotation for {}:{}",
                    key.session_id, key.utterance_id
                ))
            })?;
            vectors.push(*v);
        }
        Ok(format_rows(&vectors))
    }

    fn scripted_rows(
        rows: &HashMap<UtteranceKey, String>,
        prompt: &RenderedPrompt,
    ) -> Result<String, TransportError> {
        let mut out = String::new();
        for key in &prompt.batch_keys {
            let row = rows.get(key).ok_or_else(|| {
                TransportError::Script(format!(
                    "no scripted row for {}:{}",
                    key.session_id, key.utterance_id
                ))
            })?;
            out.push_str(row);
            out.push('\n');
        }
        Ok(out)
    }

    /// Uniform hash of the batch identity into [0, 1).
    fn batch_unit_hash(seed: u64, prompt: &RenderedPrompt) -> f64 {
        let mut hasher = Sha256::new();
        hasher.update(seed.to_le_bytes());
        hasher.update(prompt.design.variant().name().as_bytes());
        hasher.update((prompt.expected_output_rows as u64).to_le_bytes());
        if let (Some(first), Some(last)) = (prompt.batch_keys.first(), prompt.batch_keys.last()) {
            hasher.update(first.session_id.as_bytes());
            hasher.update(first.utterance_id.to_le_bytes());
            hasher.update(last.utterance_id.to_le_bytes());
        }
        let digest = hasher.finalize();
        let mut bytes = [0u8; 8];
        bytes.copy_from_slice(&digest[..8]);
        u64::from_le_bytes(bytes) as f64 / (u64::MAX as f64 + 1.0)
    }

    fn garble(&self, prompt: &RenderedPrompt, unit: f64) -> Result<String, TransportError> {
        let clean = self.gold_rows(prompt)?;
        let variant = (unit * 3.0) as usize % 3;
        let garbled = match variant {
            0 => "I looked at the utterances but cannot commit to binary codes here.\n".to_string(),
            1 => {
                // Wrong row count (or wrong width for single-row batches;
                // never empty, which would read as a refusal).
                let mut lines: Vec<&str> = clean.lines().collect();
                if lines.len() > 1 {
                    lines.pop();
                    format!("{}\n", lines.join("\n"))
                } else {
                    "0 0 0 0 0 0\n".to_string()
                }
            }
            _ => {
                let mut lines: Vec<String> = clean.lines().map(str::to_string).collect();
                let mid = lines.len() / 2;
                lines[mid] = lines[mid].replacen(['0', '1'], "2", 1);
                format!("{}\n", lines.join("\n"))
            }
        };
        Ok(garbled)
    }
}

impl ModelTransport for MockTransport {
    fn send(
        &mut self,
        prompt: &RenderedPrompt,
        _model: &ModelConfig,
    ) -> Result<String, TransportError> {
        if let Some(latency) = &self.latency {
            latency.clock.advance(
                latency.per_request_s + latency.per_utterance_s * prompt.batch_keys.len() as f64,
            );
        }
        self.stats.requests += 1;
        match &self.behavior {
            MockBehavior::EchoGold => self.gold_rows(prompt),
            MockBehavior::Script(rows) => Self::scripted_rows(rows, prompt),
            MockBehavior::Garbage { rate, seed } => {
                let unit = Self::batch_unit_hash(*seed, prompt);
                if unit < *rate {
                    self.stats.garbage_served += 1;
                    self.stats.garbage_utterances += prompt.batch_keys.len() as u64;
                    self.garble(prompt, unit / rate.max(f64::MIN_POSITIVE))
                } else {
                    self.gold_rows(prompt)
                }
            }
        }
    }
}
