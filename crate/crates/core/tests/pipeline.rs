//! Integration coverage for the orchestration layer: resuming interrupted
//! sweeps, loading persisted artifacts, the HTTP transport against a real
//! TCP stub server, and the classification loop over a mock transport.

mod common;

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::rc::Rc;
use std::sync::mpsc;
use std::thread;
use std::time::Duration;

use dialogsweep_core::batchrunner::{
    classify, plan_batches, HttpTransport, MockTransport, ModelConfig, ModelTransport,
    TransportError,
};
use dialogsweep_core::codes::CodeVector;
use dialogsweep_core::promptkit::{PromptDesign, PromptVariant, RenderedPrompt, Renderer};
use dialogsweep_core::sweep::{load_sweep, run_sweep, SweepError};
use dialogsweep_core::telemetry::{SimulatedMeter, TestClock};

// ---------------------------------------------------------------------------
// HTTP transport against a minimal TCP stub.
// ---------------------------------------------------------------------------

/// One-shot HTTP stub: serves the given (status, body) responses to
/// consecutive connections and records every raw request.
struct StubServer {
    endpoint: String,
    requests: mpsc::Receiver<String>,
    handle: thread::JoinHandle<()>,
}

impl StubServer {
    fn start(responses: Vec<(u16, String)>) -> StubServer {
        let listener = TcpListener::bind("127.0.0.1:0").expect("bindable");
        let endpoint = format!("http://{}", listener.local_addr().expect("addressable"));
        let (tx, rx) = mpsc::channel();
        let handle = thread::spawn(move || {
            for (status, body) in responses {
                let (mut stream, _) = listener.accept().expect("acceptable");
                let request = read_http_request(&mut stream);
                tx.send(request).ok();
                let reason = match status {
                    200 => "OK",
                    404 => "Not Found",
                    500 => "Internal Server Error",
                    _ => "Stub",
                };
                let response = format!(
                    "HTTP/1.1 {status} {reason}\r\n\
                     Content-Type: application/json\r\n\
                     Content-Length: {}\r\n\
                     Connection: close\r\n\r\n{body}",
                    body.len()
                );
                stream.write_all(response.as_bytes()).expect("writable");
            }
        });
        StubServer {
            endpoint,
            requests: rx,
            handle,
        }
    }

    /// Waits for the server to finish and returns the raw requests it saw.
    fn finish(self) -> Vec<String> {
        self.handle.join().expect("server thread exits cleanly");
        self.requests.try_iter().collect()
    }
}

fn read_http_request(stream: &mut TcpStream) -> String {
    let mut reader = BufReader::new(stream);
    let mut head = String::new();
    loop {
        let mut line = String::new();
        reader.read_line(&mut line).expect("readable");
        if line == "\r\n" || line.is_empty() {
            break;
        }
        head.push_str(&line);
    }
    let content_length = head
        .lines()
        .find_map(|l| {
            let (name, value) = l.split_once(':')?;
            if name.eq_ignore_ascii_case("content-length") {
                value.trim().parse::<usize>().ok()
            } else {
                None
            }
        })
        .unwrap_or(0);
    let mut body = vec![0u8; content_length];
    reader.read_exact(&mut body).expect("body readable");
    format!("{head}\r\n{}", String::from_utf8_lossy(&body))
}

fn sample_prompt() -> RenderedPrompt {
    let corpus = common::synthetic_corpus();
    let plan = plan_batches(&corpus, 1, PromptDesign::of(PromptVariant::P1)).expect("plannable");
    Renderer::with_defaults()
        .render(plan.design, &plan.batches[0].utterances, &[])
        .expect("renderable")
}

fn model_for(endpoint: &str) -> ModelConfig {
    ModelConfig {
        endpoint_url: endpoint.to_string(),
        ..ModelConfig::default()
    }
}

fn chat_body(content: &str) -> String {
    serde_json::json!({
        "model": "deepseek-r1:14b",
        "message": { "role": "assistant", "content": content },
        "done": true
    })
    .to_string()
}

#[test]
fn http_transport_round_trips_a_chat_completion() {
    let server = StubServer::start(vec![(200, chat_body("0 0 0 1 0 0 0\n"))]);
    let prompt = sample_prompt();
    let model = model_for(&server.endpoint);
    let mut transport = HttpTransport::new().expect("constructible");

    let completion = transport.send(&prompt, &model).expect("delivered");
    assert_eq!(completion, "0 0 0 1 0 0 0\n");

    let requests = server.finish();
    assert_eq!(requests.len(), 1);
    let request = &requests[0];
    assert!(
        request.starts_with("POST /api/chat HTTP/1.1\r\n"),
        "unexpected request line in {request:?}"
    );
    let body_start = request.find("\r\n\r\n").expect("request has a body") + 4;
    let body: serde_json::Value =
        serde_json::from_str(&request[body_start..]).expect("request body is JSON");
    assert_eq!(body["model"], "deepseek-r1:14b");
    assert_eq!(body["stream"], false);
    assert_eq!(body["options"]["temperature"], 0.0);
    assert_eq!(body["options"]["seed"], 42);
    assert_eq!(body["messages"][0]["role"], "user");
    let content = body["messages"][0]["content"]
        .as_str()
        .expect("prompt text is a string");
    assert_eq!(content, prompt.text);
}

#[test]
fn http_transport_retries_transient_server_errors() {
    let server = StubServer::start(vec![
        (500, "model is loading".to_string()),
        (200, chat_body("1 0 0 0 0 0 0\n")),
    ]);
    let model = model_for(&server.endpoint);
    let mut transport = HttpTransport::with_retries(2).expect("constructible");

    let completion = transport.send(&sample_prompt(), &model).expect("recovered");
    assert_eq!(completion, "1 0 0 0 0 0 0\n");
    assert_eq!(server.finish().len(), 2, "expected exactly one retry");
}

#[test]
fn http_transport_does_not_retry_client_errors() {
    let server = StubServer::start(vec![(404, "no such model".to_string())]);
    let model = model_for(&server.endpoint);
    let mut transport = HttpTransport::with_retries(2).expect("constructible");

    let err = transport.send(&sample_prompt(), &model).unwrap_err();
    match err {
        TransportError::Status { code, excerpt } => {
            assert_eq!(code, 404);
            assert!(excerpt.contains("no such model"));
        }
        other => panic!("expected an HTTP status error, got {other}"),
    }
    assert_eq!(server.finish().len(), 1, "4xx must not be retried");
}

#[test]
fn http_transport_reports_malformed_bodies() {
    let server = StubServer::start(vec![(200, "this is not json".to_string())]);
    let model = model_for(&server.endpoint);
    let mut transport = HttpTransport::with_retries(0).expect("constructible");

    let err = transport.send(&sample_prompt(), &model).unwrap_err();
    assert!(
        matches!(err, TransportError::MalformedBody(_)),
        "expected a malformed-body error, got {err}"
    );
    server.finish();
}

#[test]
fn http_transport_times_out_on_a_silent_server() {
    let listener = TcpListener::bind("127.0.0.1:0").expect("bindable");
    let endpoint = format!("http://{}", listener.local_addr().expect("addressable"));
    let handle = thread::spawn(move || {
        let (mut stream, _) = listener.accept().expect("acceptable");
        read_http_request(&mut stream);
        // Never answer; hold the socket open past the client timeout.
        thread::sleep(Duration::from_millis(900));
    });

    let mut model = model_for(&endpoint);
    model.request_timeout_s = 0.3;
    let mut transport = HttpTransport::with_retries(0).expect("constructible");
    let err = transport.send(&sample_prompt(), &model).unwrap_err();
    assert!(
        matches!(err, TransportError::Timeout(_)),
        "expected a timeout error, got {err}"
    );
    handle.join().expect("server thread exits cleanly");
}

#[test]
fn http_transport_reports_unreachable_endpoints() {
    let listener = TcpListener::bind("127.0.0.1:0").expect("bindable");
    let endpoint = format!("http://{}", listener.local_addr().expect("addressable"));
    drop(listener);

    let mut transport = HttpTransport::with_retries(0).expect("constructible");
    let err = transport
        .send(&sample_prompt(), &model_for(&endpoint))
        .unwrap_err();
    assert!(
        matches!(err, TransportError::Connect(_)),
        "expected a connection error, got {err}"
    );
}

// ---------------------------------------------------------------------------
// Sweep interruption, resume, and artifact round-trips.
// ---------------------------------------------------------------------------

/// Transport that forwards to a mock until its request budget runs out,
/// then fails every call — a deterministic stand-in for an outage.
struct FailAfter {
    inner: MockTransport,
    remaining: u32,
}

impl ModelTransport for FailAfter {
    fn send(
        &mut self,
        prompt: &RenderedPrompt,
        model: &ModelConfig,
    ) -> Result<String, TransportError> {
        if self.remaining == 0 {
            return Err(TransportError::Connect("injected outage".into()));
        }
        self.remaining -= 1;
        self.inner.send(prompt, model)
    }
}

#[test]
fn interrupted_sweep_resumes_without_recomputation() {
    let tmp = tempfile::tempdir().expect("temp dir");
    let corpus_path = common::write_synthetic_corpus(tmp.path());
    let out_dir = tmp.path().join("out");
    let config = common::mock_sweep_config(corpus_path, out_dir.clone());
    let renderer = Renderer::with_defaults();

    // Request counts per design: batch 1 → 60, batch 10 → 6, batch 20 → 4.
    // A budget of 136 covers exactly the first five configurations
    // (P1 b1/b10/b20, P2 b1/b10) and fails on the sixth.
    let clock = Rc::new(TestClock::new(0.0));
    let mut meter = SimulatedMeter::new(
        common::SIM_CPU_W,
        common::SIM_GPU_W,
        common::SIM_DRAM_W,
        clock.clone(),
    );
    let mut failing = FailAfter {
        inner: MockTransport::echo_gold(&common::synthetic_corpus())
            .with_latency(common::mock_latency(clock.clone())),
        remaining: 136,
    };
    let err = run_sweep(&config, &mut failing, &mut meter, clock.as_ref(), &renderer).unwrap_err();
    assert!(
        matches!(err, SweepError::Classify(_)),
        "expected the outage to surface as a classification error, got {err}"
    );

    let records_dir = out_dir.join("records");
    let mut persisted: Vec<String> = fs::read_dir(&records_dir)
        .expect("records dir exists")
        .map(|e| e.expect("entry").file_name().to_string_lossy().into_owned())
        .collect();
    persisted.sort();
    assert_eq!(
        persisted,
        [
            "P1_b1.json",
            "P1_b10.json",
            "P1_b20.json",
            "P2_b1.json",
            "P2_b10.json"
        ]
    );
    let before = common::snapshot_tree(&records_dir);
    assert!(
        load_sweep(&out_dir).is_err(),
        "an interrupted sweep must not load"
    );

    // Resume with a healthy transport: only the remaining seven
    // configurations run (4 × 70 − 136 = 144 requests).
    let clock = Rc::new(TestClock::new(0.0));
    let mut meter = SimulatedMeter::new(
        common::SIM_CPU_W,
        common::SIM_GPU_W,
        common::SIM_DRAM_W,
        clock.clone(),
    );
    let mut healthy = MockTransport::echo_gold(&common::synthetic_corpus())
        .with_latency(common::mock_latency(clock.clone()));
    let result = run_sweep(&config, &mut healthy, &mut meter, clock.as_ref(), &renderer)
        .expect("resume completes");
    assert_eq!(result.records.len(), 12);
    assert_eq!(healthy.stats().requests, 144);
    assert_eq!(result.manifest.record_count, 12);
    assert!(result.manifest.finished_at_s.is_some());

    // The records persisted before the outage were reused, not recomputed.
    let after = common::snapshot_tree(&records_dir);
    for (file, bytes) in &before {
        assert_eq!(&after[file], bytes, "resume rewrote {file}");
    }

    let loaded = load_sweep(&out_dir).expect("finished sweep loads");
    assert_eq!(loaded.records, result.records);
    assert_eq!(loaded.manifest, result.manifest);
}

#[test]
fn changed_configuration_conflicts_on_resume() {
    let tmp = tempfile::tempdir().expect("temp dir");
    let corpus_path = common::write_synthetic_corpus(tmp.path());
    let config = common::mock_sweep_config(corpus_path, tmp.path().join("out"));
    let (_, _) = common::run_mock_pipeline(&config, |clock| {
        MockTransport::echo_gold(&common::synthetic_corpus())
            .with_latency(common::mock_latency(clock))
    });

    let mut changed = config.clone();
    changed.session_count = 3;
    let clock = Rc::new(TestClock::new(0.0));
    let mut meter = SimulatedMeter::new(
        common::SIM_CPU_W,
        common::SIM_GPU_W,
        common::SIM_DRAM_W,
        clock.clone(),
    );
    let mut transport = MockTransport::echo_gold(&common::synthetic_corpus());
    let err = run_sweep(
        &changed,
        &mut transport,
        &mut meter,
        clock.as_ref(),
        &Renderer::with_defaults(),
    )
    .unwrap_err();
    assert!(
        matches!(err, SweepError::ResumeConflict { .. }),
        "expected a resume conflict, got {err}"
    );
}

#[test]
fn incomplete_artifacts_do_not_load() {
    let tmp = tempfile::tempdir().expect("temp dir");
    assert!(
        matches!(
            load_sweep(tmp.path()),
            Err(SweepError::IncompleteSweep { .. })
        ),
        "an empty directory must not load as a sweep"
    );

    let corpus_path = common::write_synthetic_corpus(tmp.path());
    let out_dir = tmp.path().join("out");
    let config = common::mock_sweep_config(corpus_path, out_dir.clone());
    common::run_mock_pipeline(&config, |clock| {
        MockTransport::echo_gold(&common::synthetic_corpus())
            .with_latency(common::mock_latency(clock))
    });
    assert!(load_sweep(&out_dir).is_ok());

    fs::remove_file(out_dir.join("records").join("P3_b10.json")).expect("removable");
    assert!(
        matches!(
            load_sweep(&out_dir),
            Err(SweepError::IncompleteSweep { .. })
        ),
        "a missing record must fail the load"
    );
}

// ---------------------------------------------------------------------------
// Classification loop against the mock transport.
// ---------------------------------------------------------------------------

#[test]
fn echo_gold_classification_reproduces_gold_at_every_batch_size() {
    let corpus = common::synthetic_corpus();
    let gold: Vec<CodeVector> = corpus
        .utterances()
        .map(|u| u.gold.expect("annotated"))
        .collect();
    let renderer = Renderer::with_defaults();
    for design in PromptVariant::ALL {
        for batch_size in [1usize, 2, 3, 5, 7, 10, 30, 60] {
            let plan =
                plan_batches(&corpus, batch_size, PromptDesign::of(design)).expect("plannable");
            let mut transport = MockTransport::echo_gold(&corpus);
            let outcome = classify(&plan, &ModelConfig::default(), &renderer, &mut transport)
                .expect("classifiable");
            assert_eq!(outcome.predictions.per_utterance, gold);
            assert_eq!(outcome.predictions.fallback_count, 0);
            assert_eq!(outcome.retry_count, 0);
            let expected_requests = 2 * (30usize).div_ceil(batch_size) as u64;
            assert_eq!(outcome.request_count, expected_requests);
        }
    }
}
