//! Prompt templates for the live chat backend.
//!
//! The built-in set is compiled from `prompts/*.txt`; a directory holding
//! files with the same names overrides any subset of them.

use std::collections::BTreeMap;
use std::path::Path;

use super::request::{AgentKind, AgentRequest};

/// Bumped whenever a built-in template changes meaning.
pub const TEMPLATE_VERSION: &str = "v1";

const BUILTIN: [(AgentKind, &str); 6] = [
    (AgentKind::Caption, include_str!("../../prompts/caption.txt")),
    (AgentKind::TextImagination, include_str!("../../prompts/text_imagination.txt")),
    (AgentKind::VisionImagination, include_str!("../../prompts/vision_imagination.txt")),
    (AgentKind::QuestionGen, include_str!("../../prompts/question_gen.txt")),
    (AgentKind::TextVerifier, include_str!("../../prompts/text_verifier.txt")),
    (AgentKind::VisionVerifier, include_str!("../../prompts/vision_verifier.txt")),
];

/// Placeholder names bound to each kind's text inputs, in order.
fn placeholders(kind: AgentKind) -> &'static [&'static str] {
    match kind {
        AgentKind::Caption => &[],
        AgentKind::TextImagination => &["modification", "reference_caption"],
        AgentKind::VisionImagination => &["modification"],
        AgentKind::QuestionGen => &["modification", "edits", "attributes", "n"],
        AgentKind::TextVerifier => &["caption", "statement"],
        AgentKind::VisionVerifier => &["statement"],
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PromptSet {
    templates: BTreeMap<AgentKind, String>,
}

impl Default for PromptSet {
    fn default() -> Self {
        Self {
            templates: BUILTIN.iter().map(|(k, t)| (*k, t.to_string())).collect(),
        }
    }
}

impl PromptSet {
    /// Built-in templates with any `<kind>.txt` found in `dir` swapped in.
    pub fn with_overrides(dir: impl AsRef<Path>) -> std::io::Result<Self> {
        let mut set = Self::default();
        for kind in AgentKind::ALL {
            let path = dir.as_ref().join(format!("{}.txt", kind.as_str()));
            if path.exists() {
                set.templates.insert(kind, std::fs::read_to_string(path)?);
            }
        }
        Ok(set)
    }

    pub fn template(&self, kind: AgentKind) -> &str {
        &self.templates[&kind]
    }

    /// Fills a request's text inputs into its template.
    pub fn render(&self, request: &AgentRequest) -> String {
        let mut out = self.template(request.kind()).to_string();
        for (name, value) in placeholders(request.kind()).iter().zip(request.text_inputs()) {
            out = out.replace(&format!("{{{name}}}"), value);
        }
        if request.attempt() > 0 {
            out.push_str("\nFollow the output format exactly.\n");
        }
        out
    }
}
