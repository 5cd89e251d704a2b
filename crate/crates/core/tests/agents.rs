use std::collections::VecDeque;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde_json::Value;
use xr_core::agents::live::{Endpoint, LiveChat, LiveEmbedder};
use xr_core::agents::prompts::PromptSet;
use xr_core::agents::{AgentError, Agents, CallKind, MockBackend, MockResponse, MockScript, ResponseCache, RetryPolicy};
use xr_core::domain::{CaptionSource, ImageHandle};

/// Headers (lower-cased names) and JSON body of one request.
type Recorded = (Vec<(String, String)>, Value);

/// Minimal HTTP/1.1 server answering each request with the next scripted
/// (status, body) and recording request bodies.
struct Stub {
    url: String,
    requests: Arc<Mutex<Vec<Recorded>>>,
}

fn stub(replies: Vec<(u16, String)>) -> Stub {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1/endpoint", listener.local_addr().unwrap());
    let requests = Arc::new(Mutex::new(Vec::new()));
    let seen = requests.clone();
    let mut replies: VecDeque<_> = replies.into();
    std::thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { break };
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut headers = Vec::new();
            let mut line = String::new();
            reader.read_line(&mut line).unwrap();
            loop {
                line.clear();
                reader.read_line(&mut line).unwrap();
                let l = line.trim_end();
                if l.is_empty() {
                    break;
                }
                let (k, v) = l.split_once(':').unwrap();
                headers.push((k.trim().to_ascii_lowercase(), v.trim().to_string()));
            }
            let len: usize = headers.iter().find(|(k, _)| k == "content-length").map_or(0, |(_, v)| v.parse().unwrap());
            let mut body = vec![0; len];
            reader.read_exact(&mut body).unwrap();
            seen.lock().unwrap().push((headers, serde_json::from_slice(&body).unwrap_or(Value::Null)));
            let (status, reply) = replies.pop_front().unwrap_or((500, "exhausted".into()));
            let resp = format!(
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{reply}",
                reply.len()
            );
            let _ = stream.write_all(resp.as_bytes());
        }
    });
    Stub { url, requests }
}

fn endpoint(url: &str) -> Endpoint {
    Endpoint { url: url.into(), model: "test-model".into(), api_key: Some("secret".into()), timeout: Duration::from_secs(5) }
}

fn chat_reply(text: &str) -> String {
    serde_json::json!({"choices": [{"message": {"role": "assistant", "content": text}}]}).to_string()
}

fn live_agents(chat_url: &str, embed_url: &str) -> Agents {
    Agents::new(
        Arc::new(LiveChat::new(endpoint(chat_url), PromptSet::default())),
        Arc::new(LiveEmbedder::new(endpoint(embed_url))),
    )
    .with_retry(RetryPolicy::immediate())
}

fn remote_image() -> ImageHandle {
    ImageHandle::new("im1", "https://images.example/im1.jpg").unwrap()
}

#[test]
fn live_chat_retries_server_errors_then_succeeds() {
    let chat = stub(vec![(503, "busy".into()), (429, "slow down".into()), (200, chat_reply("a red car on a street"))]);
    let agents = live_agents(&chat.url, "http://127.0.0.1:9/unused");
    let caption = agents.caption(&remote_image(), CaptionSource::Reference).unwrap();
    assert_eq!(caption.text, "a red car on a street");
    assert_eq!(agents.backend_calls(), 1);

    let reqs = chat.requests.lock().unwrap();
    assert_eq!(reqs.len(), 3);
    let (headers, body) = &reqs[2];
    assert!(headers.iter().any(|(k, v)| k == "authorization" && v == "Bearer secret"));
    assert_eq!(body["model"], "test-model");
    assert_eq!(body["temperature"], 0.0);
    let content = &body["messages"][0]["content"];
    assert_eq!(content[0]["type"], "text");
    assert_eq!(content[1]["image_url"]["url"], "https://images.example/im1.jpg");
}

#[test]
fn live_chat_does_not_retry_client_errors() {
    let chat = stub(vec![(400, "bad request".into()), (200, chat_reply("never reached"))]);
    let agents = live_agents(&chat.url, "http://127.0.0.1:9/unused");
    let err = agents.caption(&remote_image(), CaptionSource::Reference).unwrap_err();
    assert!(matches!(err, AgentError::Backend { attempts: 1, ref source, .. } if source.status == Some(400)));
    assert_eq!(chat.requests.lock().unwrap().len(), 1);
}

#[test]
fn live_retries_are_bounded() {
    let chat = stub(vec![(502, "a".into()), (502, "b".into()), (502, "c".into()), (200, chat_reply("late"))]);
    let agents = live_agents(&chat.url, "http://127.0.0.1:9/unused");
    let err = agents.caption(&remote_image(), CaptionSource::Reference).unwrap_err();
    assert!(matches!(err, AgentError::Backend { attempts: 3, .. }));
}

#[test]
fn live_embedding_wire_format_and_normalization() {
    let embed = stub(vec![(200, r#"{"data":[{"embedding":[3.0,4.0]}]}"#.into())]);
    let agents = live_agents("http://127.0.0.1:9/unused", &embed.url);
    let v = agents.embed_text("a dog").unwrap();
    assert!((v[0] - 0.6).abs() < 1e-6 && (v[1] - 0.8).abs() < 1e-6);
    // cached: no second request
    agents.embed_text("a dog").unwrap();
    let reqs = embed.requests.lock().unwrap();
    assert_eq!(reqs.len(), 1);
    assert_eq!(reqs[0].1, serde_json::json!({"model": "test-model", "input": "a dog"}));
}

#[test]
fn connection_refused_is_transient_and_retried() {
    // bind then drop to get a port nobody listens on
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let agents = live_agents(&format!("http://127.0.0.1:{port}/x"), "http://127.0.0.1:9/unused");
    let err = agents.caption(&remote_image(), CaptionSource::Reference).unwrap_err();
    assert!(matches!(err, AgentError::Backend { attempts: 3, ref source, .. } if source.is_transient()));
}

#[test]
fn mock_flaky_responses_are_retried() {
    let img = remote_image();
    let mut script = MockScript::new();
    script.insert(
        CallKind::Caption,
        &[],
        &["im1"],
        0,
        MockResponse::Flaky { flaky: 2, then: Box::new(MockResponse::Text("a cat".into())) },
    );
    let backend = Arc::new(MockBackend::new(script.clone()));
    let agents = Agents::from_backend(backend.clone()).with_retry(RetryPolicy::immediate());
    assert_eq!(agents.caption(&img, CaptionSource::Reference).unwrap().text, "a cat");
    assert_eq!(agents.backend_calls(), 1);
    assert_eq!(backend.calls_of(CallKind::Caption), 3);

    let no_retry = RetryPolicy { max_attempts: 2, ..RetryPolicy::immediate() };
    let agents = Agents::from_backend(Arc::new(MockBackend::new(script))).with_retry(no_retry);
    assert!(matches!(agents.caption(&img, CaptionSource::Reference), Err(AgentError::Backend { attempts: 2, .. })));
}

#[test]
fn unscripted_mock_calls_fail_terminally() {
    let agents = Agents::from_backend(Arc::new(MockBackend::new(MockScript::new()))).with_retry(RetryPolicy::immediate());
    let err = agents.embed_text("unknown").unwrap_err();
    assert!(matches!(err, AgentError::Backend { attempts: 1, ref source, .. } if !source.is_transient()));
}

#[test]
fn persistent_cache_survives_restart() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cache.jsonl");
    let mut script = MockScript::new();
    script.text_embedding("a dog", vec![1.0, 0.0]);
    {
        let agents = Agents::from_backend(Arc::new(MockBackend::new(script.clone())))
            .with_cache(Arc::new(ResponseCache::open(&path).unwrap()));
        agents.embed_text("a dog").unwrap();
        assert_eq!(agents.backend_calls(), 1);
    }
    let backend = Arc::new(MockBackend::new(script));
    let agents = Agents::from_backend(backend.clone()).with_cache(Arc::new(ResponseCache::open(&path).unwrap()));
    assert_eq!(agents.embed_text("a dog").unwrap(), vec![1.0, 0.0]);
    assert_eq!(agents.backend_calls(), 0);
    assert_eq!(backend.calls(), 0);
}
