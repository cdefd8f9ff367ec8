//! The HTTP oracle binding against a scripted local server.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use weave::remote::{RemoteConfig, RemoteOracle, UNKNOWN_SIGNIFIER_NOTE};
use weave::{Engine, EngineOptions, ManualClock};
use weave_core::oracle::{ParticleView, SemanticOracle};
use weave_core::{Error, ParticleId, Signifier, SituationalImprint};

#[derive(Debug, Clone)]
struct Seen {
    headers: String,
    body: String,
}

/// Answers each connection with the next scripted `(status, body)`.
fn stub(script: Vec<(u16, &'static str)>) -> (String, Arc<Mutex<Vec<Seen>>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/oracle", listener.local_addr().unwrap());
    let seen = Arc::new(Mutex::new(Vec::new()));
    let log = seen.clone();
    thread::spawn(move || {
        for (status, body) in script {
            let Ok((mut stream, _)) = listener.accept() else { return };
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut headers = String::new();
            let mut len = 0usize;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if line == "\r\n" || line.is_empty() {
                    break;
                }
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
                headers.push_str(&line);
            }
            let mut buf = vec![0; len];
            reader.read_exact(&mut buf).unwrap();
            log.lock().unwrap().push(Seen { headers, body: String::from_utf8(buf).unwrap() });
            let reply = format!(
                "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                body.len()
            );
            stream.write_all(reply.as_bytes()).unwrap();
        }
    });
    (url, seen)
}

fn oracle(url: String) -> RemoteOracle {
    let mut cfg = RemoteConfig::new(url);
    cfg.backoff_base = Duration::from_millis(1);
    cfg.timeout = Duration::from_secs(5);
    RemoteOracle::new(cfg)
}

const TRANSFORM_OK: &str = r#"{"resonance_keys":["Tide","tide","moon"],"signifiers":["assertion","sarcasm"],"imprint_enrichment":{"model":"stub"},"core_data":"The tide follows the moon."}"#;

#[test]
fn transform_parses_and_normalizes() {
    let (url, seen) = stub(vec![(200, TRANSFORM_OK)]);
    let out = oracle(url).transform("the tide follows the moon", &SituationalImprint::from_source("t")).unwrap();
    assert_eq!(out.core_data, "The tide follows the moon.");
    assert_eq!(out.resonance_keys, vec!["tide".to_string(), "moon".to_string()]);
    assert_eq!(out.signifiers.iter().copied().collect::<Vec<_>>(), vec![Signifier::Assertion]);
    assert!(out.imprint_enrichment[UNKNOWN_SIGNIFIER_NOTE].contains("sarcasm"));
    let req: serde_json::Value = serde_json::from_str(&seen.lock().unwrap()[0].body).unwrap();
    assert_eq!(req["mode"], "transform");
    assert_eq!(req["payload"]["raw"], "the tide follows the moon");
}

#[test]
fn rate_limits_are_retried() {
    let (url, seen) = stub(vec![(429, "{}"), (429, "{}"), (429, "{}"), (200, TRANSFORM_OK)]);
    let out = oracle(url).transform("x y", &SituationalImprint::default()).unwrap();
    assert_eq!(out.core_data, "The tide follows the moon.");
    assert_eq!(seen.lock().unwrap().len(), 4);
}

#[test]
fn retries_give_up_after_max_attempts() {
    let (url, seen) = stub(vec![(429, "{}"), (429, "{}")]);
    let mut cfg = RemoteConfig::new(url);
    cfg.backoff_base = Duration::from_millis(1);
    cfg.max_attempts = 2;
    let err = RemoteOracle::new(cfg).transform("x", &SituationalImprint::default()).unwrap_err();
    assert!(matches!(&err, Error::Oracle(m) if m.contains("retry exhausted")), "{err}");
    assert_eq!(seen.lock().unwrap().len(), 2);
}

#[test]
fn malformed_body_is_a_schema_error_without_retry() {
    let (url, seen) = stub(vec![(200, "{not json"), (200, TRANSFORM_OK)]);
    let err = oracle(url).transform("x", &SituationalImprint::default()).unwrap_err();
    assert!(matches!(&err, Error::Oracle(m) if m.contains("schema")), "{err}");
    assert_eq!(seen.lock().unwrap().len(), 1);
}

#[test]
fn server_errors_are_not_retried() {
    let (url, seen) = stub(vec![(500, r#"{"error":"boom"}"#), (200, TRANSFORM_OK)]);
    let err = oracle(url).transform("x", &SituationalImprint::default()).unwrap_err();
    assert!(matches!(&err, Error::Oracle(m) if m.contains("status 500")), "{err}");
    assert_eq!(seen.lock().unwrap().len(), 1);
}

#[test]
fn bearer_token_is_sent() {
    let (url, seen) = stub(vec![(200, TRANSFORM_OK)]);
    let mut cfg = RemoteConfig::new(url);
    cfg.token = Some("s3cret".into());
    RemoteOracle::new(cfg).transform("x", &SituationalImprint::default()).unwrap();
    assert!(seen.lock().unwrap()[0].headers.to_ascii_lowercase().contains("authorization: bearer s3cret"));
}

#[test]
fn suggest_may_decline() {
    let (url, _) = stub(vec![(200, "null"), (200, r#"{"type":"derivedFrom","confidence":0.5,"rationale":"no"}"#)]);
    let o = oracle(url);
    let view = |n: u64| ParticleView { id: ParticleId::from_parts(n, 0), core_data: "x".into(), resonance_keys: Default::default() };
    assert_eq!(o.suggest_relation(&view(1), &view(2)).unwrap(), None);
    // derivedFrom is reserved for synthesis
    assert!(o.suggest_relation(&view(1), &view(2)).is_err());
}

#[test]
fn failed_ingest_persists_nothing() {
    let (url, _) = stub(vec![(503, "{}")]);
    let engine = Engine::open(
        EngineOptions { data_dir: None, ..EngineOptions::default() },
        Arc::new(oracle(url)),
        Arc::new(ManualClock::new(1_700_000_000_000)),
    )
    .unwrap();
    let before = engine.stats().engine.particle_count;
    let err = engine.ingest("anything", SituationalImprint::from_source("t")).unwrap_err();
    assert_eq!(err.class(), weave::ErrorClass::Oracle, "{err}");
    assert_eq!(engine.stats().engine.particle_count, before);
    assert_eq!(engine.stats().engine.seq, 1);
}
