//! Agent layer: one facade over every model call the pipeline makes.
//!
//! [`Agents`] wraps a [`ChatBackend`] and an [`EmbedBackend`] with response
//! caching, retries, an in-flight limit, and reply parsing. Backends are either
//! [`live`] HTTP clients or the scripted [`mock`].

mod backend;
pub mod cache;
pub mod live;
pub mod mock;
pub mod parse;
pub mod prompts;
mod request;

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};

pub use backend::{
    BackendError, ChatBackend, EmbedBackend, EmbedInput, FailureKind, InflightGate, RetryPolicy,
};
pub use cache::{CacheKey, CachedValue, ResponseCache};
pub use mock::{MockBackend, MockResponse, MockScript};
pub use parse::render_attributes;
pub use request::{fingerprint, AgentKind, AgentRequest, ArityError, CallKind, DecodeParams};

use crate::domain::{Attribute, Caption, CaptionSource, ImageHandle, ImaginationResult, InputError};

/// Re-prompts allowed when the question agent yields too few pairs.
pub const MAX_REPROMPTS: u32 = 2;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AgentError {
    #[error("{kind} backend failed after {attempts} attempt(s): {source}")]
    Backend {
        kind: CallKind,
        attempts: u32,
        #[source]
        source: BackendError,
    },
    #[error("{0} backend returned an empty response")]
    EmptyResponse(CallKind),
    #[error(transparent)]
    Input(#[from] InputError),
    #[error(transparent)]
    Arity(#[from] ArityError),
    #[error("cannot parse {kind} reply: {message}")]
    Parse { kind: CallKind, message: String },
    #[error("question agent produced {got} usable pairs, {wanted} required")]
    Schema { wanted: usize, got: usize },
    #[error("unparsable verdict {0:?}")]
    UnparsableVerdict(String),
    #[error("embedding dimension changed from {expected} to {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("embedding has zero or non-finite norm")]
    DegenerateEmbedding,
}

/// True/False statements with the answers the ideal target should give.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionSet {
    pub questions: Vec<String>,
    pub expected: Vec<bool>,
}

impl QuestionSet {
    pub fn new(pairs: Vec<(String, bool)>) -> Self {
        let (questions, expected) = pairs.into_iter().unzip();
        Self { questions, expected }
    }

    pub fn len(&self) -> usize {
        self.questions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.questions.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, bool)> {
        self.questions.iter().map(String::as_str).zip(self.expected.iter().copied())
    }
}

/// The agent facade shared by every pipeline stage.
pub struct Agents {
    chat: Arc<dyn ChatBackend>,
    embedder: Arc<dyn EmbedBackend>,
    chat_identity: String,
    embed_identity: String,
    cache: Arc<ResponseCache>,
    retry: RetryPolicy,
    gate: InflightGate,
    decode: DecodeParams,
    dim: OnceLock<usize>,
    backend_calls: AtomicU64,
    unparsable_verdicts: AtomicU64,
}

impl Agents {
    pub fn new(chat: Arc<dyn ChatBackend>, embedder: Arc<dyn EmbedBackend>) -> Self {
        let chat_identity = chat.identity();
        let embed_identity = embedder.identity();
        Self {
            chat,
            embedder,
            chat_identity,
            embed_identity,
            cache: Arc::new(ResponseCache::in_memory()),
            retry: RetryPolicy::default(),
            gate: InflightGate::new(crate::domain::PipelineConfig::DEFAULT_MAX_INFLIGHT),
            decode: DecodeParams::default(),
            dim: OnceLock::new(),
            backend_calls: AtomicU64::new(0),
            unparsable_verdicts: AtomicU64::new(0),
        }
    }

    /// Uses one backend for both chat and embeddings.
    pub fn from_backend<B: ChatBackend + EmbedBackend + 'static>(backend: Arc<B>) -> Self {
        Self::new(backend.clone(), backend)
    }

    pub fn with_cache(mut self, cache: Arc<ResponseCache>) -> Self {
        self.cache = cache;
        self
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_max_inflight(mut self, limit: usize) -> Self {
        self.gate = InflightGate::new(limit);
        self
    }

    pub fn with_decode(mut self, decode: DecodeParams) -> Self {
        self.decode = decode;
        self
    }

    pub fn chat_identity(&self) -> &str {
        &self.chat_identity
    }

    pub fn embed_identity(&self) -> &str {
        &self.embed_identity
    }

    pub fn cache(&self) -> &ResponseCache {
        &self.cache
    }

    /// Embedding dimensionality observed so far, if any call has succeeded.
    pub fn dim(&self) -> Option<usize> {
        self.dim.get().copied()
    }

    /// Calls that missed the cache and went to a backend.
    pub fn backend_calls(&self) -> u64 {
        self.backend_calls.load(Ordering::Relaxed)
    }

    pub fn unparsable_verdicts(&self) -> u64 {
        self.unparsable_verdicts.load(Ordering::Relaxed)
    }

    fn request(&self, kind: AgentKind, texts: Vec<String>, images: Vec<ImageHandle>) -> Result<AgentRequest, AgentError> {
        Ok(AgentRequest::new(kind, texts, images, self.decode)?)
    }

    fn fetch<T>(
        &self,
        key: CacheKey,
        call: impl Fn() -> Result<T, BackendError>,
        wrap: impl Fn(T) -> CachedValue,
    ) -> Result<CachedValue, AgentError> {
        if let Some(hit) = self.cache.get(&key) {
            return Ok(hit);
        }
        self.backend_calls.fetch_add(1, Ordering::Relaxed);
        let (attempts, outcome) = {
            let _permit = self.gate.acquire();
            self.retry.run(&call)
        };
        let value = wrap(outcome.map_err(|source| AgentError::Backend { kind: key.kind, attempts, source })?);
        let empty = match &value {
            CachedValue::Text(t) => t.trim().is_empty(),
            CachedValue::Vector(v) => v.is_empty(),
        };
        if empty {
            return Err(AgentError::EmptyResponse(key.kind));
        }
        self.cache.insert(key, value.clone());
        Ok(value)
    }

    fn chat(&self, request: &AgentRequest) -> Result<String, AgentError> {
        let key = CacheKey {
            kind: request.kind().into(),
            backend: self.chat_identity.clone(),
            fingerprint: request.fingerprint(),
        };
        match self.fetch(key, || self.chat.complete(request), CachedValue::Text)? {
            CachedValue::Text(t) => Ok(t),
            CachedValue::Vector(_) => Err(AgentError::Parse {
                kind: request.kind().into(),
                message: "cached value is a vector".into(),
            }),
        }
    }

    fn embed(&self, input: EmbedInput<'_>) -> Result<Vec<f32>, AgentError> {
        let (kind, fp) = match input {
            EmbedInput::Text(t) => (CallKind::EmbedText, fingerprint(CallKind::EmbedText, &[t], &[], 0)),
            EmbedInput::Image(i) => (CallKind::EmbedImage, fingerprint(CallKind::EmbedImage, &[], &[i], 0)),
        };
        let key = CacheKey { kind, backend: self.embed_identity.clone(), fingerprint: fp };
        let raw = match self.fetch(key, || self.embedder.embed(input), CachedValue::Vector)? {
            CachedValue::Vector(v) => v,
            CachedValue::Text(_) => {
                return Err(AgentError::Parse { kind, message: "cached value is text".into() })
            }
        };
        let expected = *self.dim.get_or_init(|| raw.len());
        if raw.len() != expected {
            return Err(AgentError::DimensionMismatch { expected, got: raw.len() });
        }
        normalize(&raw).ok_or(AgentError::DegenerateEmbedding)
    }

    /// Captions one image.
    pub fn caption(&self, image: &ImageHandle, source: CaptionSource) -> Result<Caption, AgentError> {
        let req = self.request(AgentKind::Caption, vec![], vec![image.clone()])?;
        let text = self.chat(&req)?;
        Ok(Caption::new(text.trim(), source)?)
    }

    /// Imagines the target from the modification text and the reference caption.
    pub fn imagine_text(&self, modification: &str, reference: &Caption) -> Result<(Vec<String>, Caption), AgentError> {
        non_empty(modification, "modification text")?;
        non_empty(&reference.text, "reference caption")?;
        let req = self.request(
            AgentKind::TextImagination,
            vec![modification.to_string(), reference.text.clone()],
            vec![],
        )?;
        let reply = self.chat(&req)?;
        let (edits, caption) = parse::parse_text_imagination(&reply)
            .map_err(|e| AgentError::Parse { kind: CallKind::TextImagination, message: e.0 })?;
        Ok((edits, Caption::new(caption, CaptionSource::TextImagination)?))
    }

    /// Imagines the target from the modification text and the reference image.
    pub fn imagine_vision(&self, modification: &str, reference: &ImageHandle) -> Result<(Vec<Attribute>, Caption), AgentError> {
        non_empty(modification, "modification text")?;
        let req = self.request(
            AgentKind::VisionImagination,
            vec![modification.to_string()],
            vec![reference.clone()],
        )?;
        let reply = self.chat(&req)?;
        let (attributes, caption) = parse::parse_vision_imagination(&reply)
            .map_err(|e| AgentError::Parse { kind: CallKind::VisionImagination, message: e.0 })?;
        Ok((attributes, Caption::new(caption, CaptionSource::VisionImagination)?))
    }

    /// Runs both imagination agents.
    pub fn imagine(&self, modification: &str, reference_caption: &Caption, reference: &ImageHandle) -> Result<ImaginationResult, AgentError> {
        let (edits, text_caption) = self.imagine_text(modification, reference_caption)?;
        let (attributes, vision_caption) = self.imagine_vision(modification, reference)?;
        Ok(ImaginationResult::new(text_caption, vision_caption, edits, attributes)?)
    }

    /// Produces exactly `n` True/False statements, truncating extras and
    /// re-prompting up to [`MAX_REPROMPTS`] times on a shortfall.
    pub fn generate_questions(
        &self,
        edits: &[String],
        attributes: &[Attribute],
        modification: &str,
        n: usize,
    ) -> Result<QuestionSet, AgentError> {
        non_empty(modification, "modification text")?;
        if n == 0 {
            return Err(InputError::Invalid("question count must be at least 1".into()).into());
        }
        let base = self.request(
            AgentKind::QuestionGen,
            vec![
                modification.to_string(),
                edits.join("\n"),
                parse::render_attributes(attributes),
                n.to_string(),
            ],
            vec![],
        )?;
        let mut best = 0;
        for attempt in 0..=MAX_REPROMPTS {
            let req = base.clone().with_attempt(attempt);
            let mut pairs = parse::parse_question_pairs(&self.chat(&req)?);
            if pairs.len() >= n {
                pairs.truncate(n);
                return Ok(QuestionSet::new(pairs));
            }
            log::debug!("question agent returned {} of {n} pairs (attempt {attempt})", pairs.len());
            best = best.max(pairs.len());
        }
        Err(AgentError::Schema { wanted: n, got: best })
    }

    fn verdict(&self, request: AgentRequest) -> Result<bool, AgentError> {
        let reply = self.chat(&request)?;
        parse::parse_verdict(&reply).ok_or_else(|| {
            self.unparsable_verdicts.fetch_add(1, Ordering::Relaxed);
            AgentError::UnparsableVerdict(reply.chars().take(80).collect())
        })
    }

    /// Asks whether a candidate caption satisfies a statement.
    pub fn answer_question_text(&self, caption: &Caption, statement: &str) -> Result<bool, AgentError> {
        non_empty(&caption.text, "caption")?;
        non_empty(statement, "statement")?;
        self.verdict(self.request(
            AgentKind::TextVerifier,
            vec![caption.text.clone(), statement.to_string()],
            vec![],
        )?)
    }

    /// Asks whether a candidate image satisfies a statement.
    pub fn answer_question_vision(&self, image: &ImageHandle, statement: &str) -> Result<bool, AgentError> {
        non_empty(statement, "statement")?;
        self.verdict(self.request(AgentKind::VisionVerifier, vec![statement.to_string()], vec![image.clone()])?)
    }

    /// Unit-norm text embedding.
    pub fn embed_text(&self, text: &str) -> Result<Vec<f32>, AgentError> {
        non_empty(text, "text")?;
        self.embed(EmbedInput::Text(text))
    }

    /// Unit-norm image embedding.
    pub fn embed_image(&self, image: &ImageHandle) -> Result<Vec<f32>, AgentError> {
        self.embed(EmbedInput::Image(image))
    }
}

fn non_empty(s: &str, what: &'static str) -> Result<(), AgentError> {
    if s.trim().is_empty() {
        Err(InputError::Empty(what).into())
    } else {
        Ok(())
    }
}

/// L2-normalizes in f64, returning `None` for zero or non-finite vectors.
pub fn normalize(v: &[f32]) -> Option<Vec<f32>> {
    let norm = v.iter().map(|&x| f64::from(x) * f64::from(x)).sum::<f64>().sqrt();
    if !(norm.is_finite() && norm > 0.0) {
        return None;
    }
    Some(v.iter().map(|&x| (f64::from(x) / norm) as f32).collect())
}
