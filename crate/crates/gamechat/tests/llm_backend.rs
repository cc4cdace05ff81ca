use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use gamechat::llm::OPENING_TURN;
use gamechat::{execute, LlmConfig};
use gamechat_core::scenario::build_variant;
use gamechat_core::{Method, RunOptions, ScenarioKind};
use serde_json::{json, Value};

type Handler = fn(&Value) -> (u16, Value);

/// Minimal HTTP/1.1 server answering every POST with `handler`.
struct MockServer {
    url: String,
    requests: Arc<Mutex<Vec<Value>>>,
}

impl MockServer {
    fn start(handler: Handler) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/v1", listener.local_addr().unwrap());
        let requests = Arc::new(Mutex::new(Vec::new()));
        let seen = Arc::clone(&requests);
        thread::spawn(move || {
            for stream in listener.incoming() {
                let Ok(stream) = stream else { break };
                let seen = Arc::clone(&seen);
                thread::spawn(move || serve(stream, handler, &seen));
            }
        });
        Self { url, requests }
    }

    fn config(&self) -> LlmConfig {
        LlmConfig {
            base_url: self.url.clone(),
            model: "mock-model".into(),
            api_key: "test-key".into(),
            timeout: Duration::from_secs(5),
        }
    }

    fn requests(&self) -> Vec<Value> {
        self.requests.lock().unwrap().clone()
    }
}

fn serve(stream: TcpStream, handler: Handler, seen: &Mutex<Vec<Value>>) {
    let mut reader = BufReader::new(stream.try_clone().unwrap());
    let mut length = 0usize;
    let mut authorized = false;
    loop {
        let mut line = String::new();
        if reader.read_line(&mut line).unwrap_or(0) == 0 {
            return;
        }
        let line = line.trim_end();
        if line.is_empty() {
            break;
        }
        let lower = line.to_ascii_lowercase();
        if let Some(v) = lower.strip_prefix("content-length:") {
            length = v.trim().parse().unwrap();
        }
        if lower == "authorization: bearer test-key" {
            authorized = true;
        }
    }
    let mut body = vec![0; length];
    reader.read_exact(&mut body).unwrap();
    let request: Value = serde_json::from_slice(&body).unwrap();
    seen.lock().unwrap().push(request.clone());
    let (status, reply) = if authorized {
        handler(&request)
    } else {
        (401, json!({"error": "no key"}))
    };
    let text = reply.to_string();
    let mut stream = stream;
    write!(
        stream,
        "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{text}",
        text.len()
    )
    .unwrap();
}

fn completion(content: &str) -> Value {
    json!({ "choices": [{ "index": 0, "message": { "role": "assistant", "content": content } }] })
}

/// States its task once, then agrees as soon as the other side has stated one.
fn cooperative(request: &Value) -> (u16, Value) {
    let messages = request["messages"].as_array().unwrap();
    let system = messages[0]["content"].as_str().unwrap();
    let task = system
        .strip_prefix("You are taking someone to ")
        .and_then(|s| s.split(". There is another agent").next())
        .unwrap();
    let spoke = messages.iter().any(|m| m["role"] == "assistant");
    let heard = messages
        .iter()
        .any(|m| m["role"] == "user" && m["content"] != OPENING_TURN);
    if spoke && heard {
        (200, completion("1"))
    } else {
        (200, completion(&format!("I am taking someone to {task}.")))
    }
}

fn failing(_: &Value) -> (u16, Value) {
    (500, json!({"error": "overloaded"}))
}

#[test]
fn negotiates_through_chat_endpoint() {
    let server = MockServer::start(cooperative);
    let spec = build_variant(ScenarioKind::Doorway, 0, 0).unwrap();
    let outcome = execute(
        &spec,
        Method::GameChatPreSmg,
        RunOptions::default(),
        Some(&server.config()),
    )
    .unwrap();

    let dialogue = outcome.dialogue.as_ref().unwrap();
    assert!(dialogue.consensus.reached, "{:?}", dialogue.history);
    assert_eq!(
        dialogue.consensus.higher_priority_agent,
        Some(spec.higher_priority_agent())
    );
    assert_eq!(dialogue.outcome_correct(), Some(true));
    assert_eq!(dialogue.history.len(), 4);
    assert_eq!(dialogue.consensus.reached_at, Some(4.0));
    assert!(outcome.backend_errors.is_empty());

    let record = outcome.record();
    assert_eq!(record.collisions, 0);
    assert_eq!(record.deadlocks, 0);
    assert_eq!(record.correct_priority, Some(true));

    let requests = server.requests();
    assert_eq!(requests.len(), 4);
    for r in &requests {
        assert_eq!(r["model"], "mock-model");
        assert_eq!(r["temperature"], 0);
        assert_eq!(r["messages"][0]["role"], "system");
    }
    // full history travels with each request
    let last = requests[3]["messages"].as_array().unwrap();
    assert_eq!(last.iter().filter(|m| m["role"] != "system").count(), 3);
}

#[test]
fn endpoint_failure_falls_back_to_time_to_q() {
    let server = MockServer::start(failing);
    let spec = build_variant(ScenarioKind::Doorway, 0, 0).unwrap();
    let outcome = execute(
        &spec,
        Method::GameChatSmgComm,
        RunOptions::default(),
        Some(&server.config()),
    )
    .unwrap();

    let dialogue = outcome.dialogue.as_ref().unwrap();
    assert!(!dialogue.consensus.reached);
    assert_eq!(dialogue.outcome_correct(), None);
    assert_eq!(outcome.backend_errors.len(), 8);
    assert!(dialogue.history.iter().all(|m| m.text.is_empty()));

    let record = outcome.record();
    assert_eq!(record.collisions, 0);
    assert_eq!(record.deadlocks, 0);
    assert_eq!(record.consensus_correct, None);
    assert!(record.makespan.is_some());
}
