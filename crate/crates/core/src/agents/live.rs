//! HTTP backends speaking the chat-completions and embeddings JSON shapes.

use std::path::Path;
use std::time::Duration;

use base64::Engine;
use serde_json::{json, Value};

use super::backend::{BackendError, ChatBackend, EmbedBackend, EmbedInput};
use super::prompts::PromptSet;
use super::request::{AgentRequest, DecodeParams};
use crate::domain::ImageHandle;

pub const ENV_CHAT_URL: &str = "XR_CHAT_URL";
pub const ENV_EMBED_URL: &str = "XR_EMBED_URL";
pub const ENV_API_KEY: &str = "XR_API_KEY";
pub const ENV_CHAT_MODEL: &str = "XR_CHAT_MODEL";
pub const ENV_EMBED_MODEL: &str = "XR_EMBED_MODEL";

#[derive(Debug, Clone, PartialEq)]
pub struct Endpoint {
    pub url: String,
    pub model: String,
    pub api_key: Option<String>,
    pub timeout: Duration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LiveConfig {
    pub chat: Endpoint,
    pub embed: Endpoint,
}

impl LiveConfig {
    /// Reads endpoints from `XR_CHAT_URL`, `XR_EMBED_URL`, `XR_API_KEY` and
    /// the optional model overrides.
    pub fn from_env() -> Result<Self, String> {
        let var = |name: &str| std::env::var(name).ok().filter(|v| !v.trim().is_empty());
        let chat_url = var(ENV_CHAT_URL).ok_or_else(|| format!("{ENV_CHAT_URL} is not set"))?;
        let embed_url = var(ENV_EMBED_URL).ok_or_else(|| format!("{ENV_EMBED_URL} is not set"))?;
        let api_key = var(ENV_API_KEY);
        let timeout = Duration::from_secs(120);
        Ok(Self {
            chat: Endpoint {
                url: chat_url,
                model: var(ENV_CHAT_MODEL).unwrap_or_else(|| "InternVL3-8B".into()),
                api_key: api_key.clone(),
                timeout,
            },
            embed: Endpoint {
                url: embed_url,
                model: var(ENV_EMBED_MODEL).unwrap_or_else(|| "clip-vit-b-32".into()),
                api_key,
                timeout,
            },
        })
    }
}

/// Turns an image locator into something an endpoint can fetch: remote URLs
/// and data URLs pass through, local files are inlined as base64 data URLs.
pub fn image_url(image: &ImageHandle) -> Result<String, BackendError> {
    let uri = image.uri.as_str();
    if uri.starts_with("http://") || uri.starts_with("https://") || uri.starts_with("data:") {
        return Ok(uri.to_string());
    }
    let path = Path::new(uri.strip_prefix("file://").unwrap_or(uri));
    let bytes = std::fs::read(path)
        .map_err(|e| BackendError::terminal(format!("cannot read image {} at {uri}: {e}", image.id)))?;
    let mime = match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
        Some("png") => "image/png",
        Some("webp") => "image/webp",
        Some("gif") => "image/gif",
        _ => "image/jpeg",
    };
    Ok(format!("data:{mime};base64,{}", base64::engine::general_purpose::STANDARD.encode(bytes)))
}

pub fn chat_request_body(model: &str, prompt: &str, images: &[String], decode: DecodeParams) -> Value {
    let mut content = vec![json!({"type": "text", "text": prompt})];
    content.extend(images.iter().map(|url| json!({"type": "image_url", "image_url": {"url": url}})));
    json!({
        "model": model,
        "messages": [{"role": "user", "content": content}],
        "temperature": decode.temperature,
        "top_p": decode.top_p,
    })
}

/// Pulls the generated text out of a chat-completions reply.
pub fn parse_chat_reply(body: &[u8]) -> Result<String, BackendError> {
    let value: Value = serde_json::from_slice(body)
        .map_err(|e| BackendError::terminal(format!("chat reply is not JSON: {e}")))?;
    let content = &value["choices"][0]["message"]["content"];
    match content {
        Value::String(s) => Ok(s.clone()),
        // some servers return content parts
        Value::Array(parts) => Ok(parts
            .iter()
            .filter_map(|p| p["text"].as_str())
            .collect::<Vec<_>>()
            .join("")),
        _ => Err(BackendError::terminal("chat reply lacks choices[0].message.content")),
    }
}

pub fn embed_request_body(model: &str, input: &str) -> Value {
    json!({"model": model, "input": input})
}

pub fn parse_embed_reply(body: &[u8]) -> Result<Vec<f32>, BackendError> {
    let value: Value = serde_json::from_slice(body)
        .map_err(|e| BackendError::terminal(format!("embedding reply is not JSON: {e}")))?;
    let data = value["data"][0]["embedding"]
        .as_array()
        .ok_or_else(|| BackendError::terminal("embedding reply lacks data[0].embedding"))?;
    data.iter()
        .map(|x| {
            x.as_f64()
                .map(|f| f as f32)
                .ok_or_else(|| BackendError::terminal("non-numeric embedding component"))
        })
        .collect()
}

fn post_json(client: &reqwest::blocking::Client, endpoint: &Endpoint, body: &Value) -> Result<Vec<u8>, BackendError> {
    let mut req = client
        .post(&endpoint.url)
        .header(reqwest::header::CONTENT_TYPE, "application/json")
        .body(serde_json::to_vec(body).expect("JSON values always serialize"));
    if let Some(key) = &endpoint.api_key {
        req = req.bearer_auth(key);
    }
    let resp = req.send().map_err(|e| {
        if e.is_timeout() || e.is_connect() || e.is_request() {
            BackendError::transient(format!("request to {} failed: {e}", endpoint.url))
        } else {
            BackendError::terminal(format!("request to {} failed: {e}", endpoint.url))
        }
    })?;
    let status = resp.status().as_u16();
    let bytes = resp
        .bytes()
        .map_err(|e| BackendError::transient(format!("reading reply from {}: {e}", endpoint.url)))?;
    if !(200..300).contains(&status) {
        let snippet: String = String::from_utf8_lossy(&bytes).chars().take(200).collect();
        return Err(BackendError::from_status(status, snippet));
    }
    Ok(bytes.to_vec())
}

fn client(timeout: Duration) -> reqwest::blocking::Client {
    reqwest::blocking::Client::builder()
        .timeout(timeout)
        .build()
        .expect("HTTP client construction")
}

pub struct LiveChat {
    endpoint: Endpoint,
    prompts: PromptSet,
    client: reqwest::blocking::Client,
}

impl LiveChat {
    pub fn new(endpoint: Endpoint, prompts: PromptSet) -> Self {
        let client = client(endpoint.timeout);
        Self { endpoint, prompts, client }
    }
}

impl ChatBackend for LiveChat {
    fn identity(&self) -> String {
        format!("live:{}@{}#{}", self.endpoint.model, self.endpoint.url, super::prompts::TEMPLATE_VERSION)
    }

    fn complete(&self, request: &AgentRequest) -> Result<String, BackendError> {
        let images = request.image_inputs().iter().map(image_url).collect::<Result<Vec<_>, _>>()?;
        let prompt = self.prompts.render(request);
        let body = chat_request_body(&self.endpoint.model, &prompt, &images, request.decode());
        parse_chat_reply(&post_json(&self.client, &self.endpoint, &body)?)
    }
}

pub struct LiveEmbedder {
    endpoint: Endpoint,
    client: reqwest::blocking::Client,
}

impl LiveEmbedder {
    pub fn new(endpoint: Endpoint) -> Self {
        let client = client(endpoint.timeout);
        Self { endpoint, client }
    }
}

impl EmbedBackend for LiveEmbedder {
    fn identity(&self) -> String {
        format!("live:{}@{}", self.endpoint.model, self.endpoint.url)
    }

    fn embed(&self, input: EmbedInput<'_>) -> Result<Vec<f32>, BackendError> {
        let payload = match input {
            EmbedInput::Text(t) => t.to_string(),
            EmbedInput::Image(image) => image_url(image)?,
        };
        let body = embed_request_body(&self.endpoint.model, &payload);
        parse_embed_reply(&post_json(&self.client, &self.endpoint, &body)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chat_body_shape() {
        let body = chat_request_body("m", "hello", &["data:image/png;base64,AA==".into()], DecodeParams::default());
        assert_eq!(body["model"], "m");
        assert_eq!(body["temperature"], 0.0);
        assert_eq!(body["top_p"], 1.0);
        let content = &body["messages"][0]["content"];
        assert_eq!(body["messages"][0]["role"], "user");
        assert_eq!(content[0]["type"], "text");
        assert_eq!(content[0]["text"], "hello");
        assert_eq!(content[1]["type"], "image_url");
        assert_eq!(content[1]["image_url"]["url"], "data:image/png;base64,AA==");
    }

    #[test]
    fn chat_reply_parsing() {
        let body = br#"{"choices":[{"message":{"role":"assistant","content":"True"}}]}"#;
        assert_eq!(parse_chat_reply(body).unwrap(), "True");
        let parts = br#"{"choices":[{"message":{"content":[{"type":"text","text":"a"},{"type":"text","text":"b"}]}}]}"#;
        assert_eq!(parse_chat_reply(parts).unwrap(), "ab");
        assert!(parse_chat_reply(b"{}").is_err());
        assert!(parse_chat_reply(b"not json").is_err());
    }

    #[test]
    fn embed_round_trip() {
        assert_eq!(embed_request_body("clip", "dog"), json!({"model": "clip", "input": "dog"}));
        let body = br#"{"data":[{"embedding":[3,4.5]}]}"#;
        assert_eq!(parse_embed_reply(body).unwrap(), vec![3.0, 4.5]);
        assert!(parse_embed_reply(br#"{"data":[]}"#).is_err());
    }

    #[test]
    fn local_images_become_data_urls() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.png");
        std::fs::write(&path, [1u8, 2, 3]).unwrap();
        let img = ImageHandle::new("x", path.to_str().unwrap()).unwrap();
        assert_eq!(image_url(&img).unwrap(), "data:image/png;base64,AQID");
        let remote = ImageHandle::new("y", "https://example.org/y.jpg").unwrap();
        assert_eq!(image_url(&remote).unwrap(), "https://example.org/y.jpg");
        let missing = ImageHandle::new("z", dir.path().join("nope.jpg").to_str().unwrap()).unwrap();
        let err = image_url(&missing).unwrap_err();
        assert!(!err.is_transient());
    }
}
