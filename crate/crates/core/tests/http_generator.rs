//! The HTTP generator against an in-process chat-completions mock.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::mpsc;
use std::thread;

use coevo_core::orchestrator::{RunConfig, Trainer};
use coevo_core::proposer::generator::{GeneratorConfig, HttpGenerator};
use coevo_core::proposer::{ProposerKind, TextGenerator};
use coevo_core::Error;

struct Captured {
    headers: Vec<(String, String)>,
    body: serde_json::Value,
}

impl Captured {
    fn header(&self, name: &str) -> Option<&str> {
        self.headers.iter().find(|(k, _)| k == name).map(|(_, v)| v.as_str())
    }
}

fn read_request(stream: &mut TcpStream) -> Option<Captured> {
    let mut reader = BufReader::new(stream);
    let mut line = String::new();
    reader.read_line(&mut line).ok()?;
    if line.is_empty() {
        return None;
    }
    let mut headers = Vec::new();
    loop {
        line.clear();
        reader.read_line(&mut line).ok()?;
        let l = line.trim_end();
        if l.is_empty() {
            break;
        }
        let (k, v) = l.split_once(':')?;
        headers.push((k.trim().to_ascii_lowercase(), v.trim().to_string()));
    }
    let len: usize = headers.iter().find(|(k, _)| k == "content-length")?.1.parse().ok()?;
    let mut body = vec![0; len];
    reader.read_exact(&mut body).ok()?;
    Some(Captured { headers, body: serde_json::from_slice(&body).ok()? })
}

fn chat_body(content: &str) -> String {
    serde_json::json!({"choices": [{"message": {"role": "assistant", "content": content}}]}).to_string()
}

/// Serve `replies` in order (the last one repeats), one request per
/// connection, reporting every request on the returned channel.
fn serve(replies: Vec<(u16, String)>) -> (String, mpsc::Receiver<Captured>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
    let (tx, rx) = mpsc::channel();
    thread::spawn(move || {
        for (n, stream) in listener.incoming().enumerate() {
            let Ok(mut stream) = stream else { break };
            let Some(req) = read_request(&mut stream) else { continue };
            let (status, body) = &replies[n.min(replies.len() - 1)];
            let resp = format!(
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            );
            let _ = stream.write_all(resp.as_bytes());
            if tx.send(req).is_err() {
                break;
            }
        }
    });
    (url, rx)
}

fn config(endpoint: &str, retries: u32) -> GeneratorConfig {
    GeneratorConfig {
        endpoint: endpoint.to_string(),
        model: "optimizer-model".into(),
        timeout_secs: 5,
        max_retries: retries,
        temperature: 0.7,
        api_key_env: None,
        audit_log: None,
    }
}

#[test]
fn request_shape_token_and_audit() {
    let (url, rx) = serve(vec![(200, chat_body("<ins_1>Be careful.</ins_1>"))]);
    let audit = tempfile::NamedTempFile::new().unwrap();
    std::env::set_var("COEVO_TEST_TOKEN_A", "sekrit");
    let mut cfg = config(&url, 0);
    cfg.api_key_env = Some("COEVO_TEST_TOKEN_A".into());
    cfg.audit_log = Some(audit.path().to_str().unwrap().into());
    let mut g = HttpGenerator::new(cfg).unwrap();
    assert_eq!(g.generate("improve this").unwrap(), "<ins_1>Be careful.</ins_1>");

    let req = rx.recv().unwrap();
    assert_eq!(req.header("authorization"), Some("Bearer sekrit"));
    assert_eq!(req.body["model"], "optimizer-model");
    assert_eq!(req.body["temperature"], 0.7);
    assert_eq!(req.body["messages"][0]["role"], "user");
    assert_eq!(req.body["messages"][0]["content"], "improve this");

    let log = std::fs::read_to_string(audit.path()).unwrap();
    let entries: Vec<serde_json::Value> = log.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(entries.len(), 1);
    assert_eq!(entries[0]["status"], 200);
    assert_eq!(entries[0]["request"]["messages"][0]["content"], "improve this");
}

#[test]
fn missing_token_variable_is_an_error() {
    let mut cfg = config("http://127.0.0.1:9/", 0);
    cfg.api_key_env = Some("COEVO_TEST_TOKEN_UNSET".into());
    assert!(matches!(HttpGenerator::new(cfg), Err(Error::Generator(_))));
}

#[test]
fn server_errors_and_rate_limits_are_retried() {
    let (url, rx) = serve(vec![
        (500, "{}".into()),
        (429, "{}".into()),
        (200, chat_body("<ins_1>ok</ins_1>")),
    ]);
    let mut g = HttpGenerator::new(config(&url, 3)).unwrap();
    assert_eq!(g.generate("p").unwrap(), "<ins_1>ok</ins_1>");
    assert_eq!(rx.try_iter().count(), 3);
}

#[test]
fn client_errors_are_not_retried() {
    let (url, rx) = serve(vec![(400, r#"{"error": "bad"}"#.into())]);
    let mut g = HttpGenerator::new(config(&url, 3)).unwrap();
    let err = g.generate("p").unwrap_err();
    assert!(matches!(err, Error::Generator(ref m) if m.contains("HTTP 400")), "{err}");
    assert_eq!(rx.try_iter().count(), 1);
}

#[test]
fn unreachable_endpoint_gives_up() {
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let mut g = HttpGenerator::new(config(&format!("http://127.0.0.1:{port}/"), 1)).unwrap();
    let err = g.generate("p").unwrap_err();
    assert!(matches!(err, Error::Generator(ref m) if m.contains("after 2 attempts")), "{err}");
}

#[test]
fn training_run_uses_the_endpoint() {
    let reply = "<ins_1>Answer the given question. Search before answering. Think step by step.</ins_1>\n\
                 <ins_2>Answer the given question. Verify every fact you find.</ins_2>";
    let (url, rx) = serve(vec![(200, chat_body(reply))]);
    let config = RunConfig {
        steps: 4,
        evolve_until: 4,
        evolve_period: 2,
        batch_size: 4,
        proposer: ProposerKind::Reflection,
        generator: Some(config(&url, 0)),
        ..RunConfig::default()
    };
    let mut trainer = Trainer::new(config).unwrap();
    trainer.run(None).unwrap();
    let counters = &trainer.state().counters;
    assert_eq!(counters.evolution_events, 2);
    assert_eq!(counters.generator_fallbacks, 0);
    let requests: Vec<Captured> = rx.try_iter().collect();
    assert_eq!(requests.len() as u64, counters.primary_calls - 1 + counters.retrial_calls);
    assert!(requests[0].body["messages"][0]["content"].as_str().unwrap().contains("Answer the given question"));
}
