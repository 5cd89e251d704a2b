//! Coarse filtering: cross-modal similarity scoring of every candidate,
//! per-modality aggregation, reciprocal rank fusion and shortlist selection.

use serde::{Deserialize, Serialize};

use crate::agents::{AgentError, Agents};
use crate::domain::Caption;
use crate::embed_index::{batch_similarity_with, Catalog, IndexError, Side};
use crate::exec::ExecMode;

#[derive(Debug, thiserror::Error)]
pub enum CoarseError {
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error("no candidates to score")]
    Empty,
    #[error("score vectors differ in length: {0} vs {1}")]
    LengthMismatch(usize, usize),
}

/// The four cosine similarities of one candidate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimilarityQuad {
    /// Text-imagined caption vs candidate caption.
    pub s_tt: f64,
    /// Vision-imagined caption vs candidate caption.
    pub s_tv: f64,
    /// Text-imagined caption vs candidate image.
    pub s_vt: f64,
    /// Vision-imagined caption vs candidate image.
    pub s_vv: f64,
}

/// Per-candidate scores grouped by the imagination caption they came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModalityScores {
    pub text: Vec<f64>,
    pub vision: Vec<f64>,
}

impl ModalityScores {
    pub fn new(text: Vec<f64>, vision: Vec<f64>) -> Result<Self, CoarseError> {
        if text.len() != vision.len() {
            return Err(CoarseError::LengthMismatch(text.len(), vision.len()));
        }
        if text.is_empty() {
            return Err(CoarseError::Empty);
        }
        Ok(Self { text, vision })
    }

    pub fn len(&self) -> usize {
        self.text.len()
    }

    pub fn is_empty(&self) -> bool {
        self.text.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionMode {
    #[default]
    Rrf,
    /// Adds the raw modality scores; the ablation baseline.
    Sum,
}

/// Which modality lists take part in fusion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FusionOptions {
    pub mode: FusionMode,
    pub use_text: bool,
    pub use_vision: bool,
}

impl Default for FusionOptions {
    fn default() -> Self {
        Self { mode: FusionMode::Rrf, use_text: true, use_vision: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusedRanking {
    /// Fused score per candidate, in catalog order.
    pub scores: Vec<f64>,
    /// Candidate indices by descending fused score, ties by ascending index.
    pub order: Vec<usize>,
    /// 1-based position of each candidate in the text list.
    pub rank_text: Vec<usize>,
    /// 1-based position of each candidate in the vision list.
    pub rank_vision: Vec<usize>,
}

/// Embeds both imagination captions and scores every catalog entry.
pub fn score_all(text_caption: &Caption, vision_caption: &Caption, catalog: &Catalog, agents: &Agents) -> Result<Vec<SimilarityQuad>, CoarseError> {
    score_all_with(ExecMode::default(), text_caption, vision_caption, catalog, agents)
}

pub fn score_all_with(
    mode: ExecMode,
    text_caption: &Caption,
    vision_caption: &Caption,
    catalog: &Catalog,
    agents: &Agents,
) -> Result<Vec<SimilarityQuad>, CoarseError> {
    if !catalog.is_built() {
        return Err(IndexError::State("catalog has no captions or vectors".into()).into());
    }
    let t = agents.embed_text(&text_caption.text)?;
    let v = agents.embed_text(&vision_caption.text)?;
    score_vectors(mode, &t, &v, catalog)
}

/// Scores pre-embedded imagination captions against every catalog entry.
pub fn score_vectors(mode: ExecMode, text_vec: &[f32], vision_vec: &[f32], catalog: &Catalog) -> Result<Vec<SimilarityQuad>, CoarseError> {
    let s_tt = batch_similarity_with(mode, text_vec, catalog, Side::Captions)?;
    let s_tv = batch_similarity_with(mode, vision_vec, catalog, Side::Captions)?;
    let s_vt = batch_similarity_with(mode, text_vec, catalog, Side::Images)?;
    let s_vv = batch_similarity_with(mode, vision_vec, catalog, Side::Images)?;
    Ok((0..catalog.len())
        .map(|i| SimilarityQuad { s_tt: s_tt[i], s_tv: s_tv[i], s_vt: s_vt[i], s_vv: s_vv[i] })
        .collect())
}

/// Sums each candidate's scores by imagination origin: the text-imagined
/// caption's two scores form the text score, the vision-imagined caption's
/// two form the vision score.
pub fn aggregate(quads: &[SimilarityQuad]) -> Result<ModalityScores, CoarseError> {
    if quads.is_empty() {
        return Err(CoarseError::Empty);
    }
    Ok(ModalityScores {
        text: quads.iter().map(|q| q.s_tt + q.s_vt).collect(),
        vision: quads.iter().map(|q| q.s_vv + q.s_tv).collect(),
    })
}

/// Indices sorted by descending score, ties by ascending index.
pub fn descending_order(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order
}

/// 1-based rank of every candidate under [`descending_order`].
pub fn ranks(scores: &[f64]) -> Vec<usize> {
    let mut rank = vec![0; scores.len()];
    for (pos, i) in descending_order(scores).into_iter().enumerate() {
        rank[i] = pos + 1;
    }
    rank
}

/// Reciprocal rank fusion of the text and vision lists with smoothing `z`.
pub fn rrf_fuse(scores: &ModalityScores, z: f64) -> FusedRanking {
    fuse(scores, z, FusionOptions::default())
}

/// Fusion with ablation switches; a disabled list contributes nothing.
pub fn fuse(scores: &ModalityScores, z: f64, opts: FusionOptions) -> FusedRanking {
    let rank_text = ranks(&scores.text);
    let rank_vision = ranks(&scores.vision);
    let fused: Vec<f64> = (0..scores.len())
        .map(|a| {
            let (t, v) = match opts.mode {
                FusionMode::Rrf => (
                    1.0 / (z + rank_text[a] as f64),
                    1.0 / (z + rank_vision[a] as f64),
                ),
                FusionMode::Sum => (scores.text[a], scores.vision[a]),
            };
            match (opts.use_text, opts.use_vision) {
                (true, true) => t + v,
                (true, false) => t,
                (false, true) => v,
                (false, false) => 0.0,
            }
        })
        .collect();
    FusedRanking { order: descending_order(&fused), scores: fused, rank_text, rank_vision }
}

/// The first `min(k_prime, N)` candidates of the fused order.
pub fn select_top(fused: &FusedRanking, k_prime: usize) -> Vec<usize> {
    let n = fused.order.len();
    if k_prime > n {
        log::warn!("k_prime {k_prime} exceeds catalog size {n}; keeping all candidates");
    }
    fused.order[..k_prime.min(n)].to_vec()
}
