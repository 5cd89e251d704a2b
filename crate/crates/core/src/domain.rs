//! Value types shared by every stage and the pipeline configuration.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// An image known to the system: a catalog candidate or a query reference.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ImageHandle {
    pub id: String,
    pub uri: String,
}

impl ImageHandle {
    pub fn new(id: impl Into<String>, uri: impl Into<String>) -> Result<Self, InputError> {
        let (id, uri) = (id.into(), uri.into());
        if id.is_empty() {
            return Err(InputError::Empty("image id"));
        }
        if uri.is_empty() {
            return Err(InputError::Empty("image uri"));
        }
        Ok(Self { id, uri })
    }
}

/// A composed retrieval query: reference image plus modification text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Query {
    pub query_id: String,
    pub reference: ImageHandle,
    pub modification_text: String,
}

impl Query {
    pub fn new(
        query_id: impl Into<String>,
        reference: ImageHandle,
        modification_text: impl Into<String>,
    ) -> Result<Self, InputError> {
        let modification_text = modification_text.into();
        if modification_text.trim().is_empty() {
            return Err(InputError::Empty("modification text"));
        }
        Ok(Self {
            query_id: query_id.into(),
            reference,
            modification_text,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaptionSource {
    Candidate,
    Reference,
    TextImagination,
    VisionImagination,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Caption {
    pub text: String,
    pub source: CaptionSource,
}

impl Caption {
    pub fn new(text: impl Into<String>, source: CaptionSource) -> Result<Self, InputError> {
        let text = text.into();
        if text.trim().is_empty() {
            return Err(InputError::Empty("caption"));
        }
        Ok(Self { text, source })
    }
}

/// A visual attribute and whether the imagined target should show it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Attribute {
    pub attribute: String,
    pub present: bool,
}

/// Output of the two imagination agents for one query.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImaginationResult {
    /// Caption imagined from the modification text and the reference caption.
    pub text_caption: Caption,
    /// Caption imagined from the modification text and the reference image.
    pub vision_caption: Caption,
    pub edits: Vec<String>,
    pub attributes: Vec<Attribute>,
}

impl ImaginationResult {
    pub fn new(
        text_caption: Caption,
        vision_caption: Caption,
        edits: Vec<String>,
        attributes: Vec<Attribute>,
    ) -> Result<Self, InputError> {
        if text_caption.source != CaptionSource::TextImagination {
            return Err(InputError::Invalid("text caption must come from text imagination".into()));
        }
        if vision_caption.source != CaptionSource::VisionImagination {
            return Err(InputError::Invalid(
                "vision caption must come from vision imagination".into(),
            ));
        }
        if edits.is_empty() {
            return Err(InputError::Empty("edit list"));
        }
        if attributes.iter().any(|a| a.attribute.trim().is_empty()) {
            return Err(InputError::Empty("attribute name"));
        }
        Ok(Self {
            text_caption,
            vision_caption,
            edits,
            attributes,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum InputError {
    #[error("{0} must be non-empty")]
    Empty(&'static str),
    #[error("duplicate id {0:?}")]
    DuplicateId(String),
    #[error("{0}")]
    Invalid(String),
}

/// Knobs for one pipeline run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Weight of the text-side similarity in the fine-stage combination.
    pub lambda: f64,
    /// RRF smoothing constant.
    pub z: f64,
    /// Size of the final result list.
    pub k: usize,
    /// Shortlist size handed from coarse to fine filtering.
    pub k_prime: usize,
    pub n_questions: usize,
    pub temperature: f64,
    pub top_p: f64,
    /// Upper bound on concurrent backend requests.
    pub max_inflight: usize,
}

impl PipelineConfig {
    pub const DEFAULT_LAMBDA: f64 = 0.15;
    pub const DEFAULT_Z: f64 = 60.0;
    pub const DEFAULT_K: usize = 50;
    pub const DEFAULT_K_PRIME: usize = 100;
    pub const DEFAULT_N_QUESTIONS: usize = 3;
    pub const DEFAULT_TEMPERATURE: f64 = 0.0;
    pub const DEFAULT_TOP_P: f64 = 1.0;
    pub const DEFAULT_MAX_INFLIGHT: usize = 8;
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            lambda: Self::DEFAULT_LAMBDA,
            z: Self::DEFAULT_Z,
            k: Self::DEFAULT_K,
            k_prime: Self::DEFAULT_K_PRIME,
            n_questions: Self::DEFAULT_N_QUESTIONS,
            temperature: Self::DEFAULT_TEMPERATURE,
            top_p: Self::DEFAULT_TOP_P,
            max_inflight: Self::DEFAULT_MAX_INFLIGHT,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid config: {0}")]
pub struct ConfigError(pub String);

/// Checks every config invariant, returning the config untouched when they hold.
pub fn validate_config(cfg: PipelineConfig) -> Result<PipelineConfig, ConfigError> {
    let fail = |msg: &str| Err(ConfigError(msg.to_string()));
    if !(0.0..=1.0).contains(&cfg.lambda) {
        return fail("lambda outside [0, 1]");
    }
    if !(cfg.z > 0.0 && cfg.z.is_finite()) {
        return fail("z must be a positive finite number");
    }
    if cfg.k == 0 {
        return fail("k must be at least 1");
    }
    if cfg.k_prime == 0 {
        return fail("k_prime must be at least 1");
    }
    if cfg.k > cfg.k_prime {
        return fail("k exceeds k_prime");
    }
    if cfg.n_questions == 0 {
        return fail("n_questions must be at least 1");
    }
    if !(cfg.temperature >= 0.0 && cfg.temperature.is_finite()) {
        return fail("temperature must be non-negative");
    }
    if !(cfg.top_p > 0.0 && cfg.top_p <= 1.0) {
        return fail("top_p outside (0, 1]");
    }
    if cfg.max_inflight == 0 {
        return fail("max_inflight must be at least 1");
    }
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn defaults_are_accepted() {
        let cfg = PipelineConfig::default();
        assert_eq!(cfg.lambda, 0.15);
        assert_eq!(cfg.z, 60.0);
        assert_eq!(cfg.k_prime, 100);
        assert_eq!(cfg.n_questions, 3);
        assert_eq!(cfg.temperature, 0.0);
        assert_eq!(cfg.top_p, 1.0);
        assert_eq!(validate_config(cfg.clone()), Ok(cfg));
    }

    #[test]
    fn lambda_zero_is_legal() {
        let cfg = PipelineConfig { lambda: 0.0, ..Default::default() };
        assert!(validate_config(cfg).is_ok());
    }

    #[test]
    fn k_above_k_prime_is_rejected() {
        let cfg = PipelineConfig { k: 200, k_prime: 100, ..Default::default() };
        assert_eq!(validate_config(cfg), Err(ConfigError("k exceeds k_prime".into())));
    }

    #[test]
    fn names_each_violation() {
        let cases = [
            (PipelineConfig { lambda: 1.5, ..Default::default() }, "lambda"),
            (PipelineConfig { z: 0.0, ..Default::default() }, "z must"),
            (PipelineConfig { top_p: 0.0, ..Default::default() }, "top_p"),
            (PipelineConfig { n_questions: 0, ..Default::default() }, "n_questions"),
            (PipelineConfig { temperature: -1.0, ..Default::default() }, "temperature"),
        ];
        for (cfg, needle) in cases {
            let err = validate_config(cfg).unwrap_err();
            assert!(err.0.contains(needle), "{err} lacks {needle}");
        }
    }

    #[test]
    fn degenerate_k_modes_are_reachable() {
        let cfg = PipelineConfig { k: 100, k_prime: 100, ..Default::default() };
        assert!(validate_config(cfg).is_ok());
    }

    #[test]
    fn query_rejects_blank_text() {
        let img = ImageHandle::new("r", "r.png").unwrap();
        assert_eq!(Query::new("q", img, "  \t"), Err(InputError::Empty("modification text")));
    }

    proptest! {
        #[test]
        fn validation_is_idempotent_and_sound(
            lambda in -0.5f64..1.5, z in -5.0f64..200.0, k in 0usize..150,
            k_prime in 0usize..150, nq in 0usize..6, top_p in -0.2f64..1.2,
        ) {
            let cfg = PipelineConfig { lambda, z, k, k_prime, n_questions: nq, top_p, ..Default::default() };
            if let Ok(ok) = validate_config(cfg) {
                prop_assert_eq!(validate_config(ok.clone()), Ok(ok.clone()));
                prop_assert!((0.0..=1.0).contains(&ok.lambda));
                prop_assert!(ok.z > 0.0);
                prop_assert!(ok.k >= 1 && ok.k <= ok.k_prime);
                prop_assert!(ok.n_questions >= 1);
            }
        }
    }
}
