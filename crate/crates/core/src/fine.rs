//! Fine filtering: True/False verification of the shortlist in both
//! modalities and the multiplicative re-rank
//! `(text_correct + vision_correct) * minmax(λ·text_sim + (1-λ)·vision_sim)`.

use serde::{Deserialize, Serialize};

use crate::agents::{AgentError, Agents, QuestionSet};
use crate::embed_index::Catalog;
use crate::exec::{self, ExecMode};

#[derive(Debug, thiserror::Error)]
pub enum FineError {
    #[error("length mismatch: {what} has {got} entries, expected {expected}")]
    LengthMismatch { what: &'static str, expected: usize, got: usize },
    #[error("shortlist is empty")]
    EmptyShortlist,
    #[error("k = {k} exceeds shortlist size {shortlist}")]
    KTooLarge { k: usize, shortlist: usize },
    #[error("verifying candidate {candidate} on question {question}: {source}")]
    Agent {
        candidate: String,
        question: usize,
        #[source]
        source: AgentError,
    },
    #[error("lambda {0} outside [0, 1]")]
    Lambda(f64),
}

/// How the two verifiers' verdicts combine per question.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerifyMode {
    /// Each modality counts its own correct answers; the sums are added.
    #[default]
    Independent,
    /// A question counts only when both modalities answer it correctly; the
    /// joint count is reported for both modalities.
    Conjunctive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerifyOptions {
    pub mode: VerifyMode,
    pub use_text: bool,
    pub use_vision: bool,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self { mode: VerifyMode::Independent, use_text: true, use_vision: true }
    }
}

/// Correct-answer counts per shortlisted candidate.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerificationScores {
    pub text: Vec<u32>,
    pub vision: Vec<u32>,
}

impl VerificationScores {
    pub fn sums(&self) -> Vec<u32> {
        self.text.iter().zip(&self.vision).map(|(t, v)| t + v).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Modality {
    Text,
    Vision,
}

/// Asks both verifiers every question about every shortlisted candidate.
///
/// An unparsable verdict counts as a wrong answer; any other agent failure
/// aborts verification.
pub fn verify(
    shortlist: &[usize],
    catalog: &Catalog,
    questions: &QuestionSet,
    agents: &Agents,
    opts: VerifyOptions,
) -> Result<VerificationScores, FineError> {
    verify_with(ExecMode::default(), shortlist, catalog, questions, agents, opts)
}

pub fn verify_with(
    mode: ExecMode,
    shortlist: &[usize],
    catalog: &Catalog,
    questions: &QuestionSet,
    agents: &Agents,
    opts: VerifyOptions,
) -> Result<VerificationScores, FineError> {
    if shortlist.is_empty() {
        return Err(FineError::EmptyShortlist);
    }
    let nq = questions.len();
    let mut cells = Vec::with_capacity(shortlist.len() * nq * 2);
    for slot in 0..shortlist.len() {
        for q in 0..nq {
            if opts.use_text {
                cells.push((slot, q, Modality::Text));
            }
            if opts.use_vision {
                cells.push((slot, q, Modality::Vision));
            }
        }
    }
    let outcomes = exec::map_slice(mode, &cells, |&(slot, q, modality)| {
        let idx = shortlist[slot];
        let statement = &questions.questions[q];
        let verdict = match modality {
            Modality::Text => match catalog.caption(idx) {
                Some(caption) => agents.answer_question_text(caption, statement),
                None => Err(AgentError::Input(crate::domain::InputError::Empty("candidate caption"))),
            },
            Modality::Vision => agents.answer_question_vision(catalog.image(idx), statement),
        };
        match verdict {
            Ok(v) => Ok(v == questions.expected[q]),
            Err(AgentError::UnparsableVerdict(reply)) => {
                log::warn!("candidate {} question {q} ({modality:?}): unparsable verdict {reply:?}, scored 0", catalog.image(idx).id);
                Ok(false)
            }
            Err(source) => Err(FineError::Agent { candidate: catalog.image(idx).id.clone(), question: q, source }),
        }
    });

    let n = shortlist.len();
    let mut text_ok = vec![vec![false; nq]; n];
    let mut vision_ok = vec![vec![false; nq]; n];
    for (&(slot, q, modality), outcome) in cells.iter().zip(outcomes) {
        let correct = outcome?;
        match modality {
            Modality::Text => text_ok[slot][q] = correct,
            Modality::Vision => vision_ok[slot][q] = correct,
        }
    }
    let count = |row: &[bool]| row.iter().filter(|&&b| b).count() as u32;
    let scores = match opts.mode {
        VerifyMode::Independent => VerificationScores {
            text: text_ok.iter().map(|r| count(r)).collect(),
            vision: vision_ok.iter().map(|r| count(r)).collect(),
        },
        VerifyMode::Conjunctive => {
            let joint: Vec<u32> = (0..n)
                .map(|s| {
                    (0..nq)
                        .filter(|&q| {
                            (!opts.use_text || text_ok[s][q]) && (!opts.use_vision || vision_ok[s][q])
                        })
                        .count() as u32
                })
                .collect();
            VerificationScores {
                text: if opts.use_text { joint.clone() } else { vec![0; n] },
                vision: if opts.use_vision { joint } else { vec![0; n] },
            }
        }
    };
    Ok(scores)
}

/// `λ·text + (1-λ)·vision`, element-wise.
pub fn weighted_similarity(text: &[f64], vision: &[f64], lambda: f64) -> Result<Vec<f64>, FineError> {
    if text.len() != vision.len() {
        return Err(FineError::LengthMismatch { what: "vision similarity", expected: text.len(), got: vision.len() });
    }
    if !(0.0..=1.0).contains(&lambda) {
        return Err(FineError::Lambda(lambda));
    }
    Ok(text.iter().zip(vision).map(|(t, v)| lambda * t + (1.0 - lambda) * v).collect())
}

/// Min-max scaling to [0, 1]; a constant vector maps to all ones.
pub fn min_max(values: &[f64]) -> Vec<f64> {
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == min {
        return vec![1.0; values.len()];
    }
    values.iter().map(|x| (x - min) / (max - min)).collect()
}

/// Min-max normalized weighted similarity over the shortlist.
pub fn normalize_similarity(text: &[f64], vision: &[f64], lambda: f64) -> Result<Vec<f64>, FineError> {
    Ok(min_max(&weighted_similarity(text, vision, lambda)?))
}

/// Per-candidate fine-stage record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FineRecord {
    pub id: String,
    pub s_q_text: u32,
    pub s_q_vision: u32,
    pub fused_sim: f64,
    pub norm_sim: f64,
    #[serde(rename = "final")]
    pub final_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedResult {
    /// Final score per shortlist slot.
    pub final_scores: Vec<f64>,
    /// Shortlist slots, best first.
    pub order: Vec<usize>,
    /// The first `k` slots of `order`.
    pub top_k: Vec<usize>,
    /// One record per shortlist slot.
    pub provenance: Vec<FineRecord>,
}

/// Orders the shortlist by `(text + vision correct) × norm_sim`, breaking ties
/// by the raw weighted similarity (descending) and then by id (ascending).
pub fn rerank(
    verification: &VerificationScores,
    norm_sim: &[f64],
    fused_sim: &[f64],
    ids: &[String],
    k: usize,
) -> Result<RankedResult, FineError> {
    let n = ids.len();
    if n == 0 {
        return Err(FineError::EmptyShortlist);
    }
    for (what, got) in [
        ("text verification", verification.text.len()),
        ("vision verification", verification.vision.len()),
        ("normalized similarity", norm_sim.len()),
        ("fused similarity", fused_sim.len()),
    ] {
        if got != n {
            return Err(FineError::LengthMismatch { what, expected: n, got });
        }
    }
    if k > n {
        return Err(FineError::KTooLarge { k, shortlist: n });
    }
    let final_scores: Vec<f64> = (0..n)
        .map(|a| f64::from(verification.text[a] + verification.vision[a]) * norm_sim[a])
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        final_scores[b]
            .total_cmp(&final_scores[a])
            .then(fused_sim[b].total_cmp(&fused_sim[a]))
            .then_with(|| ids[a].cmp(&ids[b]))
    });
    let provenance = (0..n)
        .map(|a| FineRecord {
            id: ids[a].clone(),
            s_q_text: verification.text[a],
            s_q_vision: verification.vision[a],
            fused_sim: fused_sim[a],
            norm_sim: norm_sim[a],
            final_score: final_scores[a],
        })
        .collect();
    Ok(RankedResult { top_k: order[..k].to_vec(), order, final_scores, provenance })
}
