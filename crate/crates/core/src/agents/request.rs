use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::domain::ImageHandle;

/// The generative agents of the pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentKind {
    Caption,
    TextImagination,
    VisionImagination,
    QuestionGen,
    TextVerifier,
    VisionVerifier,
}

impl AgentKind {
    pub const ALL: [AgentKind; 6] = [
        AgentKind::Caption,
        AgentKind::TextImagination,
        AgentKind::VisionImagination,
        AgentKind::QuestionGen,
        AgentKind::TextVerifier,
        AgentKind::VisionVerifier,
    ];

    /// Required (text inputs, image inputs).
    pub fn arity(self) -> (usize, usize) {
        match self {
            AgentKind::Caption => (0, 1),
            // modification text, reference caption
            AgentKind::TextImagination => (2, 0),
            AgentKind::VisionImagination => (1, 1),
            // modification text, edits, attributes, question count
            AgentKind::QuestionGen => (4, 0),
            // caption, statement
            AgentKind::TextVerifier => (2, 0),
            AgentKind::VisionVerifier => (1, 1),
        }
    }

    pub fn as_str(self) -> &'static str {
        CallKind::from(self).as_str()
    }
}

/// Every kind of backend call, including the two embedding calls.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CallKind {
    Caption,
    TextImagination,
    VisionImagination,
    QuestionGen,
    TextVerifier,
    VisionVerifier,
    EmbedText,
    EmbedImage,
}

impl CallKind {
    pub fn as_str(self) -> &'static str {
        match self {
            CallKind::Caption => "caption",
            CallKind::TextImagination => "text_imagination",
            CallKind::VisionImagination => "vision_imagination",
            CallKind::QuestionGen => "question_gen",
            CallKind::TextVerifier => "text_verifier",
            CallKind::VisionVerifier => "vision_verifier",
            CallKind::EmbedText => "embed_text",
            CallKind::EmbedImage => "embed_image",
        }
    }
}

impl fmt::Display for CallKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl From<AgentKind> for CallKind {
    fn from(kind: AgentKind) -> Self {
        match kind {
            AgentKind::Caption => CallKind::Caption,
            AgentKind::TextImagination => CallKind::TextImagination,
            AgentKind::VisionImagination => CallKind::VisionImagination,
            AgentKind::QuestionGen => CallKind::QuestionGen,
            AgentKind::TextVerifier => CallKind::TextVerifier,
            AgentKind::VisionVerifier => CallKind::VisionVerifier,
        }
    }
}

/// Decoding parameters forwarded to live backends.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecodeParams {
    pub temperature: f64,
    pub top_p: f64,
}

impl Default for DecodeParams {
    fn default() -> Self {
        Self { temperature: 0.0, top_p: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{kind:?} expects {expected_text} text and {expected_images} image inputs, got {got_text} and {got_images}")]
pub struct ArityError {
    pub kind: AgentKind,
    pub expected_text: usize,
    pub expected_images: usize,
    pub got_text: usize,
    pub got_images: usize,
}

/// A fully specified call to one generative agent.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentRequest {
    kind: AgentKind,
    text_inputs: Vec<String>,
    image_inputs: Vec<ImageHandle>,
    decode: DecodeParams,
    /// Re-prompt counter; 0 for the first attempt.
    attempt: u32,
}

impl AgentRequest {
    pub fn new(
        kind: AgentKind,
        text_inputs: Vec<String>,
        image_inputs: Vec<ImageHandle>,
        decode: DecodeParams,
    ) -> Result<Self, ArityError> {
        let (expected_text, expected_images) = kind.arity();
        if text_inputs.len() != expected_text || image_inputs.len() != expected_images {
            return Err(ArityError {
                kind,
                expected_text,
                expected_images,
                got_text: text_inputs.len(),
                got_images: image_inputs.len(),
            });
        }
        Ok(Self {
            kind,
            text_inputs,
            image_inputs,
            decode,
            attempt: 0,
        })
    }

    pub fn with_attempt(mut self, attempt: u32) -> Self {
        self.attempt = attempt;
        self
    }

    pub fn kind(&self) -> AgentKind {
        self.kind
    }

    pub fn text_inputs(&self) -> &[String] {
        &self.text_inputs
    }

    pub fn image_inputs(&self) -> &[ImageHandle] {
        &self.image_inputs
    }

    pub fn decode(&self) -> DecodeParams {
        self.decode
    }

    pub fn attempt(&self) -> u32 {
        self.attempt
    }

    pub fn fingerprint(&self) -> String {
        let texts: Vec<&str> = self.text_inputs.iter().map(String::as_str).collect();
        let images: Vec<&ImageHandle> = self.image_inputs.iter().collect();
        fingerprint(self.kind.into(), &texts, &images, self.attempt)
    }
}

/// Canonical hex digest of a call's kind and inputs.
///
/// Texts are length-prefixed so no concatenation of inputs can collide with
/// another; images contribute their id only, so fixtures stay portable across
/// machines with different image roots.
pub fn fingerprint(kind: CallKind, texts: &[&str], images: &[&ImageHandle], attempt: u32) -> String {
    let mut hasher = Sha256::new();
    hasher.update(kind.as_str().as_bytes());
    for text in texts {
        hasher.update(format!("\u{1f}t{}:", text.len()).as_bytes());
        hasher.update(text.as_bytes());
    }
    for image in images {
        hasher.update(format!("\u{1f}i{}:", image.id.len()).as_bytes());
        hasher.update(image.id.as_bytes());
    }
    if attempt > 0 {
        hasher.update(format!("\u{1f}a{attempt}").as_bytes());
    }
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}
