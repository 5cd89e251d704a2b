//! Candidate catalog: captions plus unit-norm caption and image vectors for
//! every candidate, batch cosine scoring, and the `XRCAT` cache file.
//!
//! File layout (all integers little-endian):
//!
//! ```text
//! "XRCAT"  version:u16  dim:u32  n:u64  embedder:str
//! n × { id:str  uri:str  caption:str  caption_vec:[f32; dim]  image_vec:[f32; dim] }
//! ```
//!
//! where `str` is a `u32` byte length followed by UTF-8 bytes.

use std::collections::{HashMap, HashSet};
use std::io::{Read, Write};
use std::path::Path;

use crate::agents::{AgentError, Agents};
use crate::domain::{Caption, CaptionSource, ImageHandle, InputError};
use crate::exec::{self, ExecMode};

pub const MAGIC: &[u8; 5] = b"XRCAT";
pub const FORMAT_VERSION: u16 = 1;
const UNIT_TOLERANCE: f64 = 1e-6;

#[derive(Debug, thiserror::Error)]
pub enum IndexError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("catalog state: {0}")]
    State(String),
    #[error(transparent)]
    Input(#[from] InputError),
    #[error("catalog build failed for {} item(s); first: {}: {}", .0.len(), .0[0].0, .0[0].1)]
    Build(Vec<(String, AgentError)>),
    #[error("catalog io: {0}")]
    Io(#[from] std::io::Error),
    #[error("catalog format: {0}")]
    Format(String),
}

/// Which stored vectors a query is scored against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Captions,
    Images,
}

/// Candidate set with its captions and embeddings, in insertion order.
#[derive(Debug, Clone, PartialEq)]
pub struct Catalog {
    images: Vec<ImageHandle>,
    index: HashMap<String, usize>,
    captions: Vec<Caption>,
    /// Row-major `n × dim`; empty until built.
    caption_vectors: Vec<f32>,
    image_vectors: Vec<f32>,
    dim: usize,
    embedder: String,
}

fn index_ids(images: &[ImageHandle]) -> Result<HashMap<String, usize>, InputError> {
    if images.is_empty() {
        return Err(InputError::Empty("catalog"));
    }
    let mut index = HashMap::with_capacity(images.len());
    for (i, img) in images.iter().enumerate() {
        if img.id.is_empty() || img.uri.is_empty() {
            return Err(InputError::Empty("image id/uri"));
        }
        if index.insert(img.id.clone(), i).is_some() {
            return Err(InputError::DuplicateId(img.id.clone()));
        }
    }
    Ok(index)
}

fn check_unit(v: &[f32], what: &str, id: &str) -> Result<(), IndexError> {
    let norm = v.iter().map(|&x| f64::from(x) * f64::from(x)).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > UNIT_TOLERANCE {
        return Err(IndexError::State(format!("{what} vector of {id} has norm {norm}")));
    }
    Ok(())
}

impl Catalog {
    /// A catalog listing images but holding no captions or vectors yet.
    pub fn unbuilt(images: Vec<ImageHandle>) -> Result<Self, IndexError> {
        let index = index_ids(&images)?;
        Ok(Self {
            images,
            index,
            captions: Vec::new(),
            caption_vectors: Vec::new(),
            image_vectors: Vec::new(),
            dim: 0,
            embedder: String::new(),
        })
    }

    /// Assembles a complete catalog, checking every invariant.
    pub fn from_parts(
        images: Vec<ImageHandle>,
        captions: Vec<Caption>,
        caption_vectors: Vec<Vec<f32>>,
        image_vectors: Vec<Vec<f32>>,
        embedder: impl Into<String>,
    ) -> Result<Self, IndexError> {
        let index = index_ids(&images)?;
        let n = images.len();
        if captions.len() != n || caption_vectors.len() != n || image_vectors.len() != n {
            return Err(IndexError::State("captions and vectors must cover every image".into()));
        }
        let dim = caption_vectors[0].len();
        if dim == 0 {
            return Err(IndexError::State("zero-dimensional vectors".into()));
        }
        let mut cap_flat = Vec::with_capacity(n * dim);
        let mut img_flat = Vec::with_capacity(n * dim);
        for (i, img) in images.iter().enumerate() {
            for (v, what, flat) in [
                (&caption_vectors[i], "caption", &mut cap_flat),
                (&image_vectors[i], "image", &mut img_flat),
            ] {
                if v.len() != dim {
                    return Err(IndexError::DimensionMismatch { expected: dim, got: v.len() });
                }
                check_unit(v, what, &img.id)?;
                flat.extend_from_slice(v);
            }
        }
        Ok(Self {
            images,
            index,
            captions,
            caption_vectors: cap_flat,
            image_vectors: img_flat,
            dim,
            embedder: embedder.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn is_built(&self) -> bool {
        self.dim > 0 && self.captions.len() == self.images.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Identity of the embedder that produced the vectors.
    pub fn embedder(&self) -> &str {
        &self.embedder
    }

    pub fn images(&self) -> &[ImageHandle] {
        &self.images
    }

    pub fn image(&self, i: usize) -> &ImageHandle {
        &self.images[i]
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn caption(&self, i: usize) -> Option<&Caption> {
        self.captions.get(i)
    }

    fn side(&self, side: Side) -> &[f32] {
        match side {
            Side::Captions => &self.caption_vectors,
            Side::Images => &self.image_vectors,
        }
    }

    pub fn vector(&self, side: Side, i: usize) -> Option<&[f32]> {
        let flat = self.side(side);
        if flat.is_empty() {
            return None;
        }
        flat.get(i * self.dim..(i + 1) * self.dim)
    }

    /// Returns a copy with entries reordered so that entry `i` is `self[perm[i]]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self, IndexError> {
        let images: Vec<_> = perm.iter().map(|&p| self.images[p].clone()).collect();
        if !self.is_built() {
            return Self::unbuilt(images);
        }
        let pick = |side| perm.iter().map(|&p| self.vector(side, p).unwrap().to_vec()).collect();
        Self::from_parts(
            images,
            perm.iter().map(|&p| self.captions[p].clone()).collect(),
            pick(Side::Captions),
            pick(Side::Images),
            self.embedder.clone(),
        )
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), IndexError> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut out)?;
        out.flush()?;
        Ok(())
    }

    pub fn write_to(&self, out: &mut impl Write) -> Result<(), IndexError> {
        if !self.is_built() {
            return Err(IndexError::State("cannot save an unbuilt catalog".into()));
        }
        out.write_all(MAGIC)?;
        out.write_all(&FORMAT_VERSION.to_le_bytes())?;
        out.write_all(&(self.dim as u32).to_le_bytes())?;
        out.write_all(&(self.len() as u64).to_le_bytes())?;
        write_str(out, &self.embedder)?;
        for i in 0..self.len() {
            write_str(out, &self.images[i].id)?;
            write_str(out, &self.images[i].uri)?;
            write_str(out, &self.captions[i].text)?;
            for side in [Side::Captions, Side::Images] {
                for x in self.vector(side, i).unwrap() {
                    out.write_all(&x.to_le_bytes())?;
                }
            }
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, IndexError> {
        let bytes = std::fs::read(path)?;
        Self::from_bytes(&bytes)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, IndexError> {
        let mut r = bytes;
        let mut magic = [0u8; 5];
        read_exact(&mut r, &mut magic)?;
        if &magic != MAGIC {
            return Err(IndexError::Format("bad magic, not an XRCAT file".into()));
        }
        let version = u16::from_le_bytes(read_array(&mut r)?);
        if version != FORMAT_VERSION {
            return Err(IndexError::Format(format!(
                "unsupported version {version} (expected {FORMAT_VERSION})"
            )));
        }
        let dim = u32::from_le_bytes(read_array(&mut r)?) as usize;
        let n = u64::from_le_bytes(read_array(&mut r)?);
        let embedder = read_str(&mut r)?;
        if dim == 0 || n == 0 {
            return Err(IndexError::Format("empty catalog header".into()));
        }
        // Each entry needs at least three length prefixes and two vectors.
        let min_entry = 12 + 8 * dim as u64;
        if n.saturating_mul(min_entry) > r.len() as u64 {
            return Err(IndexError::Format("truncated file".into()));
        }
        let n = n as usize;
        let (mut images, mut captions) = (Vec::with_capacity(n), Vec::with_capacity(n));
        let (mut cap_vecs, mut img_vecs) = (Vec::with_capacity(n), Vec::with_capacity(n));
        for _ in 0..n {
            let id = read_str(&mut r)?;
            let uri = read_str(&mut r)?;
            images.push(ImageHandle::new(id, uri).map_err(|e| IndexError::Format(e.to_string()))?);
            captions.push(
                Caption::new(read_str(&mut r)?, CaptionSource::Candidate)
                    .map_err(|e| IndexError::Format(e.to_string()))?,
            );
            cap_vecs.push(read_vec(&mut r, dim)?);
            img_vecs.push(read_vec(&mut r, dim)?);
        }
        if !r.is_empty() {
            return Err(IndexError::Format(format!("{} trailing bytes", r.len())));
        }
        Self::from_parts(images, captions, cap_vecs, img_vecs, embedder).map_err(|e| match e {
            IndexError::Format(_) => e,
            other => IndexError::Format(other.to_string()),
        })
    }
}

fn write_str(out: &mut impl Write, s: &str) -> std::io::Result<()> {
    out.write_all(&(s.len() as u32).to_le_bytes())?;
    out.write_all(s.as_bytes())
}

fn read_exact(r: &mut &[u8], buf: &mut [u8]) -> Result<(), IndexError> {
    r.read_exact(buf).map_err(|_| IndexError::Format("truncated file".into()))
}

fn read_array<const N: usize>(r: &mut &[u8]) -> Result<[u8; N], IndexError> {
    let mut buf = [0u8; N];
    read_exact(r, &mut buf)?;
    Ok(buf)
}

fn read_str(r: &mut &[u8]) -> Result<String, IndexError> {
    let len = u32::from_le_bytes(read_array(r)?) as usize;
    if len > r.len() {
        return Err(IndexError::Format("truncated file".into()));
    }
    let (head, tail) = r.split_at(len);
    *r = tail;
    String::from_utf8(head.to_vec()).map_err(|_| IndexError::Format("invalid UTF-8 string".into()))
}

fn read_vec(r: &mut &[u8], dim: usize) -> Result<Vec<f32>, IndexError> {
    (0..dim).map(|_| Ok(f32::from_le_bytes(read_array(r)?))).collect()
}

/// Cosine of two unit vectors: their dot product, clamped to [-1, 1].
pub fn cosine(u: &[f32], v: &[f32]) -> Result<f64, IndexError> {
    if u.len() != v.len() {
        return Err(IndexError::DimensionMismatch { expected: u.len(), got: v.len() });
    }
    Ok(dot(u, v))
}

#[inline]
fn dot(u: &[f32], v: &[f32]) -> f64 {
    let s: f64 = u.iter().zip(v).map(|(&a, &b)| f64::from(a) * f64::from(b)).sum();
    s.clamp(-1.0, 1.0)
}

/// Cosine of `query` against every catalog entry on `side`, in catalog order.
pub fn batch_similarity(query: &[f32], catalog: &Catalog, side: Side) -> Result<Vec<f64>, IndexError> {
    batch_similarity_with(ExecMode::default(), query, catalog, side)
}

pub fn batch_similarity_with(mode: ExecMode, query: &[f32], catalog: &Catalog, side: Side) -> Result<Vec<f64>, IndexError> {
    let flat = catalog.side(side);
    if flat.is_empty() {
        return Err(IndexError::State(format!("catalog has no {side:?} vectors; build it first")));
    }
    if query.len() != catalog.dim {
        return Err(IndexError::DimensionMismatch { expected: catalog.dim, got: query.len() });
    }
    let dim = catalog.dim;
    Ok(exec::map_range(mode, catalog.len(), |i| dot(query, &flat[i * dim..(i + 1) * dim])))
}

/// Captions and embeds every image; entries already in the agents' cache are
/// not recomputed, so an interrupted build resumes where it stopped.
pub fn build_catalog(images: Vec<ImageHandle>, agents: &Agents) -> Result<Catalog, IndexError> {
    build_catalog_with(ExecMode::default(), images, agents)
}

pub fn build_catalog_with(mode: ExecMode, images: Vec<ImageHandle>, agents: &Agents) -> Result<Catalog, IndexError> {
    index_ids(&images)?;
    let built = exec::map_slice(mode, &images, |img| {
        let caption = agents.caption(img, CaptionSource::Candidate)?;
        let cap_vec = agents.embed_text(&caption.text)?;
        let img_vec = agents.embed_image(img)?;
        Ok::<_, AgentError>((caption, cap_vec, img_vec))
    });
    let mut failures = Vec::new();
    let (mut captions, mut cap_vecs, mut img_vecs) = (Vec::new(), Vec::new(), Vec::new());
    for (img, item) in images.iter().zip(built) {
        match item {
            Ok((c, cv, iv)) => {
                captions.push(c);
                cap_vecs.push(cv);
                img_vecs.push(iv);
            }
            Err(e) => {
                log::error!("catalog item {} failed: {e}", img.id);
                failures.push((img.id.clone(), e));
            }
        }
    }
    if !failures.is_empty() {
        return Err(IndexError::Build(failures));
    }
    Catalog::from_parts(images, captions, cap_vecs, img_vecs, agents.embed_identity())
}

/// Ids that appear more than once, in first-seen order.
pub fn duplicate_ids(images: &[ImageHandle]) -> Vec<String> {
    let mut seen = HashSet::new();
    let mut dups = Vec::new();
    for img in images {
        if !seen.insert(img.id.as_str()) && !dups.contains(&img.id) {
            dups.push(img.id.clone());
        }
    }
    dups
}
