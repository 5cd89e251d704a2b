//! Scripted deterministic backend.
//!
//! A scenario file holds one JSON record per line:
//!
//! ```text
//! {"kind":"caption","inputs_hash":"<sha256>","response":"two dogs on grass"}
//! {"kind":"embed_text","inputs_hash":"<sha256>","response":[0.6,0.8]}
//! {"kind":"text_verifier","inputs_hash":"<sha256>","response":{"fail":503}}
//! {"kind":"caption","inputs_hash":"<sha256>","response":{"flaky":2,"then":"ok"}}
//! ```
//!
//! `inputs_hash` is [`fingerprint`] of the request. An unscripted request is a
//! terminal error, never a silent default.

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::backend::{BackendError, ChatBackend, EmbedBackend, EmbedInput};
use super::parse::render_attributes;
use super::request::{fingerprint, AgentRequest, CallKind};
use crate::domain::{Attribute, ImageHandle};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MockResponse {
    Text(String),
    Vector(Vec<f32>),
    /// Fails every time; status 0 means a connection failure.
    Fail { fail: u16 },
    /// Fails transiently `flaky` times, then answers with `then`.
    Flaky { flaky: u32, then: Box<MockResponse> },
}

#[derive(Debug, Serialize, Deserialize)]
struct MockRecord {
    kind: CallKind,
    inputs_hash: String,
    response: MockResponse,
}

#[derive(Debug, thiserror::Error)]
pub enum ScriptError {
    #[error("reading mock script: {0}")]
    Io(#[from] std::io::Error),
    #[error("mock script line {line}: {message}")]
    Format { line: usize, message: String },
}

/// Map from request fingerprint to canned response.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MockScript {
    entries: BTreeMap<(CallKind, String), MockResponse>,
}

fn handle(id: &str) -> ImageHandle {
    ImageHandle { id: id.to_string(), uri: format!("mock://{id}") }
}

impl MockScript {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, kind: CallKind, inputs_hash: &str) -> Option<&MockResponse> {
        self.entries.get(&(kind, inputs_hash.to_string()))
    }

    pub fn insert(&mut self, kind: CallKind, texts: &[&str], image_ids: &[&str], attempt: u32, response: MockResponse) -> &mut Self {
        let images: Vec<ImageHandle> = image_ids.iter().map(|id| handle(id)).collect();
        let refs: Vec<&ImageHandle> = images.iter().collect();
        self.entries.insert((kind, fingerprint(kind, texts, &refs, attempt)), response);
        self
    }

    pub fn caption(&mut self, image_id: &str, text: &str) -> &mut Self {
        self.insert(CallKind::Caption, &[], &[image_id], 0, MockResponse::Text(text.into()))
    }

    pub fn text_imagination(&mut self, modification: &str, reference_caption: &str, reply: &str) -> &mut Self {
        self.insert(CallKind::TextImagination, &[modification, reference_caption], &[], 0, MockResponse::Text(reply.into()))
    }

    pub fn vision_imagination(&mut self, modification: &str, reference_id: &str, reply: &str) -> &mut Self {
        self.insert(CallKind::VisionImagination, &[modification], &[reference_id], 0, MockResponse::Text(reply.into()))
    }

    #[allow(clippy::too_many_arguments)]
    pub fn questions(
        &mut self,
        modification: &str,
        edits: &[String],
        attributes: &[Attribute],
        n: usize,
        attempt: u32,
        reply: &str,
    ) -> &mut Self {
        let edits = edits.join("\n");
        let attrs = render_attributes(attributes);
        let n = n.to_string();
        self.insert(CallKind::QuestionGen, &[modification, &edits, &attrs, &n], &[], attempt, MockResponse::Text(reply.into()))
    }

    pub fn text_verdict(&mut self, caption: &str, statement: &str, reply: &str) -> &mut Self {
        self.insert(CallKind::TextVerifier, &[caption, statement], &[], 0, MockResponse::Text(reply.into()))
    }

    pub fn vision_verdict(&mut self, image_id: &str, statement: &str, reply: &str) -> &mut Self {
        self.insert(CallKind::VisionVerifier, &[statement], &[image_id], 0, MockResponse::Text(reply.into()))
    }

    pub fn text_embedding(&mut self, text: &str, vector: Vec<f32>) -> &mut Self {
        self.insert(CallKind::EmbedText, &[text], &[], 0, MockResponse::Vector(vector))
    }

    pub fn image_embedding(&mut self, image_id: &str, vector: Vec<f32>) -> &mut Self {
        self.insert(CallKind::EmbedImage, &[], &[image_id], 0, MockResponse::Vector(vector))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ScriptError> {
        let reader = BufReader::new(std::fs::File::open(path)?);
        let mut script = Self::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: MockRecord = serde_json::from_str(&line)
                .map_err(|e| ScriptError::Format { line: i + 1, message: e.to_string() })?;
            script.entries.insert((rec.kind, rec.inputs_hash), rec.response);
        }
        Ok(script)
    }

    /// Writes records sorted by (kind, hash), so equal scripts give equal files.
    pub fn write_to(&self, mut out: impl Write) -> std::io::Result<()> {
        for ((kind, hash), response) in &self.entries {
            let rec = MockRecord { kind: *kind, inputs_hash: hash.clone(), response: response.clone() };
            serde_json::to_writer(&mut out, &rec)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> std::io::Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut out)?;
        out.flush()
    }

    fn digest(&self) -> String {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to a Vec cannot fail");
        Sha256::digest(&buf).iter().take(6).map(|b| format!("{b:02x}")).collect()
    }
}

/// Backend answering from a [`MockScript`], counting every call it receives.
pub struct MockBackend {
    script: MockScript,
    identity: String,
    calls: AtomicU64,
    per_kind: Mutex<BTreeMap<CallKind, u64>>,
    flaky_left: Mutex<HashMap<(CallKind, String), u32>>,
    noise: Option<(f32, u64)>,
}

impl MockBackend {
    pub fn new(script: MockScript) -> Self {
        let identity = format!("mock:{}", script.digest());
        Self {
            script,
            identity,
            calls: AtomicU64::new(0),
            per_kind: Mutex::new(BTreeMap::new()),
            flaky_left: Mutex::new(HashMap::new()),
            noise: None,
        }
    }

    /// Perturbs every scripted embedding component by uniform noise in
    /// `[-amplitude, amplitude]`, derived from `seed` and the request alone so
    /// the same seed always yields the same vectors. Separate seeds give the
    /// independent runs a multi-run series needs.
    pub fn with_noise(mut self, amplitude: f32, seed: u64) -> Self {
        if amplitude > 0.0 {
            self.identity = format!("{}+noise({amplitude},{seed})", self.identity);
            self.noise = Some((amplitude, seed));
        }
        self
    }

    fn perturb(&self, hash: &str, mut v: Vec<f32>) -> Vec<f32> {
        if let Some((amplitude, seed)) = self.noise {
            for (j, x) in v.iter_mut().enumerate() {
                let d = Sha256::digest(format!("{seed}:{hash}:{j}").as_bytes());
                let u = u64::from_le_bytes(d[..8].try_into().expect("8 bytes")) as f64 / u64::MAX as f64;
                *x += amplitude * (2.0 * u as f32 - 1.0);
            }
        }
        v
    }

    /// Physical calls received, including ones that failed.
    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn calls_of(&self, kind: CallKind) -> u64 {
        self.per_kind.lock().get(&kind).copied().unwrap_or(0)
    }

    pub fn reset_counters(&self) {
        self.calls.store(0, Ordering::SeqCst);
        self.per_kind.lock().clear();
    }

    pub fn script(&self) -> &MockScript {
        &self.script
    }

    fn lookup(&self, kind: CallKind, hash: String) -> Result<MockResponse, BackendError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        *self.per_kind.lock().entry(kind).or_default() += 1;
        let key = (kind, hash);
        let mut response = self
            .script
            .entries
            .get(&key)
            .cloned()
            .ok_or_else(|| BackendError::terminal(format!("unscripted {kind} request {}", key.1)))?;
        loop {
            match response {
                MockResponse::Fail { fail: 0 } => return Err(BackendError::transient("mock connection failure")),
                MockResponse::Fail { fail } => return Err(BackendError::from_status(fail, "mock failure")),
                MockResponse::Flaky { flaky, then } => {
                    let mut left = self.flaky_left.lock();
                    let remaining = left.entry(key.clone()).or_insert(flaky);
                    if *remaining > 0 {
                        *remaining -= 1;
                        return Err(BackendError::transient("mock transient failure"));
                    }
                    response = *then;
                }
                other => return Ok(other),
            }
        }
    }
}

impl ChatBackend for MockBackend {
    fn identity(&self) -> String {
        self.identity.clone()
    }

    fn complete(&self, request: &AgentRequest) -> Result<String, BackendError> {
        match self.lookup(request.kind().into(), request.fingerprint())? {
            MockResponse::Text(t) => Ok(t),
            _ => Err(BackendError::terminal("scripted chat response is not text")),
        }
    }
}

impl EmbedBackend for MockBackend {
    fn identity(&self) -> String {
        self.identity.clone()
    }

    fn embed(&self, input: EmbedInput<'_>) -> Result<Vec<f32>, BackendError> {
        let (kind, hash) = match input {
            EmbedInput::Text(t) => (CallKind::EmbedText, fingerprint(CallKind::EmbedText, &[t], &[], 0)),
            EmbedInput::Image(i) => (CallKind::EmbedImage, fingerprint(CallKind::EmbedImage, &[], &[i], 0)),
        };
        match self.lookup(kind, hash.clone())? {
            MockResponse::Vector(v) => Ok(self.perturb(&hash, v)),
            _ => Err(BackendError::terminal("scripted embedding response is not a vector")),
        }
    }
}
