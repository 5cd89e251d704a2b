//! Conversion from the upstream annotation layouts into [`Manifest`]s.
//!
//! Expected layouts under `raw_dir`:
//!
//! * CIRR: `captions/cap.rc2.<split>.json`, `image_splits/split.rc2.<split>.json`
//! * CIRCO: `annotations/<split>.json`,
//!   `COCO2017_unlabeled/annotations/image_info_unlabeled2017.json`
//! * FashionIQ: `captions/cap.<cat>.<split>.json`, `image_splits/split.<cat>.<split>.json`
//!
//! Test splits whose ground truth is held by an evaluation server produce
//! queries with empty `targets`.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde_json::Value;

use super::{DatasetError, DatasetKind, Manifest, ManifestQuery};
use crate::domain::ImageHandle;

/// The split each benchmark is conventionally reported on. CIRR and CIRCO
/// report on test splits whose labels live on an evaluation server, so those
/// manifests come out unlabeled; pass `Some("val")` for a scorable split.
pub fn default_split(kind: DatasetKind) -> &'static str {
    match kind {
        DatasetKind::Cirr => "test1",
        DatasetKind::Circo => "test",
        _ => "val",
    }
}

pub fn adapt_upstream(kind: DatasetKind, raw_dir: &Path, split: Option<&str>) -> Result<Manifest, DatasetError> {
    let split = split.unwrap_or(default_split(kind));
    let manifest = match kind {
        DatasetKind::Cirr => cirr(raw_dir, split)?,
        DatasetKind::Circo => circo(raw_dir, split)?,
        DatasetKind::FashioniqShirt | DatasetKind::FashioniqDress | DatasetKind::FashioniqToptee => {
            fashioniq(kind, raw_dir, split)?
        }
        DatasetKind::Custom => {
            return Err(DatasetError::SchemaDrift { file: raw_dir.to_path_buf(), field: "custom datasets are already manifests".into() })
        }
    };
    manifest.validate(None)?;
    log::info!(
        "adapted {kind} split {split}: {} images, {} queries",
        manifest.images.len(),
        manifest.queries.len()
    );
    Ok(manifest)
}

fn read_json(path: PathBuf) -> Result<(PathBuf, Value), DatasetError> {
    if !path.is_file() {
        return Err(DatasetError::MissingFile(path));
    }
    let text = std::fs::read_to_string(&path).map_err(|source| DatasetError::Io { path: path.clone(), source })?;
    let value = serde_json::from_str(&text)
        .map_err(|e| DatasetError::SchemaDrift { file: path.clone(), field: format!("<document>: {e}") })?;
    Ok((path, value))
}

fn drift(file: &Path, field: &str) -> DatasetError {
    DatasetError::SchemaDrift { file: file.to_path_buf(), field: field.to_string() }
}

fn str_field<'a>(file: &Path, v: &'a Value, field: &str) -> Result<&'a str, DatasetError> {
    v.get(field).and_then(Value::as_str).ok_or_else(|| drift(file, field))
}

/// Upstream ids are strings in CIRR/FashionIQ and integers in CIRCO.
fn id_field(file: &Path, v: &Value, field: &str) -> Result<String, DatasetError> {
    match v.get(field) {
        Some(Value::String(s)) => Ok(s.clone()),
        Some(Value::Number(n)) => Ok(n.to_string()),
        _ => Err(drift(file, field)),
    }
}

fn array<'a>(file: &Path, v: &'a Value, field: &str) -> Result<&'a Vec<Value>, DatasetError> {
    v.as_array().ok_or_else(|| drift(file, field))
}

fn cirr(raw: &Path, split: &str) -> Result<Manifest, DatasetError> {
    let (split_path, splits) = read_json(raw.join("image_splits").join(format!("split.rc2.{split}.json")))?;
    let map = splits.as_object().ok_or_else(|| drift(&split_path, "<object of id -> path>"))?;
    let images = map
        .iter()
        .map(|(id, path)| {
            let uri = path.as_str().ok_or_else(|| drift(&split_path, id))?;
            Ok(ImageHandle { id: id.clone(), uri: uri.trim_start_matches("./").to_string() })
        })
        .collect::<Result<Vec<_>, DatasetError>>()?;

    let (cap_path, caps) = read_json(raw.join("captions").join(format!("cap.rc2.{split}.json")))?;
    let mut queries = Vec::new();
    for rec in array(&cap_path, &caps, "<array of pairs>")? {
        let reference = str_field(&cap_path, rec, "reference")?.to_string();
        let members = rec
            .get("img_set")
            .and_then(|s| s.get("members"))
            .and_then(Value::as_array)
            .ok_or_else(|| drift(&cap_path, "img_set.members"))?;
        // the reference belongs to its own group but is never a candidate answer
        let subset: Vec<String> = members
            .iter()
            .map(|m| m.as_str().map(str::to_string).ok_or_else(|| drift(&cap_path, "img_set.members")))
            .collect::<Result<Vec<_>, _>>()?
            .into_iter()
            .filter(|m| *m != reference)
            .collect();
        let targets = match rec.get("target_hard") {
            Some(Value::String(t)) => vec![t.clone()],
            None | Some(Value::Null) => Vec::new(),
            Some(_) => return Err(drift(&cap_path, "target_hard")),
        };
        queries.push(ManifestQuery {
            id: id_field(&cap_path, rec, "pairid")?,
            reference,
            text: str_field(&cap_path, rec, "caption")?.to_string(),
            targets,
            subset: (!subset.is_empty()).then_some(subset),
        });
    }
    Ok(Manifest { dataset: DatasetKind::Cirr, images, queries })
}

fn circo(raw: &Path, split: &str) -> Result<Manifest, DatasetError> {
    let (info_path, info) =
        read_json(raw.join("COCO2017_unlabeled").join("annotations").join("image_info_unlabeled2017.json"))?;
    let entries = info.get("images").and_then(Value::as_array).ok_or_else(|| drift(&info_path, "images"))?;
    let images = entries
        .iter()
        .map(|e| {
            let file = str_field(&info_path, e, "file_name")?;
            Ok(ImageHandle { id: id_field(&info_path, e, "id")?, uri: format!("COCO2017_unlabeled/unlabeled2017/{file}") })
        })
        .collect::<Result<Vec<_>, DatasetError>>()?;

    let (ann_path, ann) = read_json(raw.join("annotations").join(format!("{split}.json")))?;
    let mut queries = Vec::new();
    for rec in array(&ann_path, &ann, "<array of queries>")? {
        let targets = match rec.get("gt_img_ids") {
            Some(Value::Array(ids)) => ids
                .iter()
                .map(|v| match v {
                    Value::Number(n) => Ok(n.to_string()),
                    Value::String(s) => Ok(s.clone()),
                    _ => Err(drift(&ann_path, "gt_img_ids")),
                })
                .collect::<Result<Vec<_>, _>>()?,
            None | Some(Value::Null) => Vec::new(),
            Some(_) => return Err(drift(&ann_path, "gt_img_ids")),
        };
        queries.push(ManifestQuery {
            id: id_field(&ann_path, rec, "id")?,
            reference: id_field(&ann_path, rec, "reference_img_id")?,
            text: str_field(&ann_path, rec, "relative_caption")?.to_string(),
            targets,
            subset: None,
        });
    }
    Ok(Manifest { dataset: DatasetKind::Circo, images, queries })
}

fn fashioniq(kind: DatasetKind, raw: &Path, split: &str) -> Result<Manifest, DatasetError> {
    let cat = kind.fashioniq_category().expect("fashioniq kind");
    let (split_path, ids) = read_json(raw.join("image_splits").join(format!("split.{cat}.{split}.json")))?;
    let images = array(&split_path, &ids, "<array of image ids>")?
        .iter()
        .map(|v| {
            let id = v.as_str().ok_or_else(|| drift(&split_path, "<image id>"))?;
            Ok(ImageHandle { id: id.to_string(), uri: format!("images/{id}.png") })
        })
        .collect::<Result<Vec<_>, DatasetError>>()?;
    let known: HashSet<&str> = images.iter().map(|i| i.id.as_str()).collect();

    let (cap_path, caps) = read_json(raw.join("captions").join(format!("cap.{cat}.{split}.json")))?;
    let mut queries = Vec::new();
    for (i, rec) in array(&cap_path, &caps, "<array of triplets>")?.iter().enumerate() {
        let captions = rec
            .get("captions")
            .and_then(Value::as_array)
            .ok_or_else(|| drift(&cap_path, "captions"))?
            .iter()
            .map(|c| c.as_str().map(str::trim).ok_or_else(|| drift(&cap_path, "captions")))
            .collect::<Result<Vec<_>, _>>()?;
        let text = captions.into_iter().filter(|c| !c.is_empty()).collect::<Vec<_>>().join(" and ");
        let targets = match rec.get("target") {
            Some(Value::String(t)) if known.contains(t.as_str()) => vec![t.clone()],
            Some(Value::String(t)) => {
                return Err(DatasetError::Referential { line: i + 1, query: format!("{cat}-{split}-{i:05}"), image: t.clone() })
            }
            None | Some(Value::Null) => Vec::new(),
            Some(_) => return Err(drift(&cap_path, "target")),
        };
        queries.push(ManifestQuery {
            id: format!("{cat}-{split}-{i:05}"),
            reference: str_field(&cap_path, rec, "candidate")?.to_string(),
            text,
            targets,
            subset: None,
        });
    }
    Ok(Manifest { dataset: kind, images, queries })
}
