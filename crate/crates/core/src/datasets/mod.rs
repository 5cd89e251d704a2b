//! Benchmark manifests: one canonical line-delimited JSON format for every
//! dataset, plus adapters from the upstream annotation layouts.
//!
//! ```text
//! {"kind":"dataset","name":"cirr"}
//! {"kind":"image","id":"dev-0-0-img0","uri":"dev/dev-0-0-img0.png"}
//! {"kind":"query","id":"0","ref":"dev-0-0-img0","text":"...","targets":["..."],"subset":["..."]}
//! ```
//!
//! The `dataset` header line is optional (defaults to `custom`).

pub mod adapters;

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::domain::{ImageHandle, Query};
use crate::metrics::GroundTruth;

pub use adapters::{adapt_upstream, default_split};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    Cirr,
    Circo,
    FashioniqShirt,
    FashioniqDress,
    FashioniqToptee,
    #[default]
    Custom,
}

impl DatasetKind {
    pub const ALL: [DatasetKind; 6] = [
        DatasetKind::Cirr,
        DatasetKind::Circo,
        DatasetKind::FashioniqShirt,
        DatasetKind::FashioniqDress,
        DatasetKind::FashioniqToptee,
        DatasetKind::Custom,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DatasetKind::Cirr => "cirr",
            DatasetKind::Circo => "circo",
            DatasetKind::FashioniqShirt => "fashioniq_shirt",
            DatasetKind::FashioniqDress => "fashioniq_dress",
            DatasetKind::FashioniqToptee => "fashioniq_toptee",
            DatasetKind::Custom => "custom",
        }
    }

    /// FashionIQ garment category, if any.
    pub fn fashioniq_category(self) -> Option<&'static str> {
        match self {
            DatasetKind::FashioniqShirt => Some("shirt"),
            DatasetKind::FashioniqDress => Some("dress"),
            DatasetKind::FashioniqToptee => Some("toptee"),
            _ => None,
        }
    }

    /// Metric names reported for this dataset, as (name, k) pairs.
    pub fn metric_plan(self) -> MetricPlan {
        match self {
            DatasetKind::Cirr => MetricPlan { recall: vec![1, 5, 10, 50], map: vec![], subset_recall: vec![1, 2, 3] },
            DatasetKind::Circo => MetricPlan { recall: vec![], map: vec![5, 10, 25, 50], subset_recall: vec![] },
            DatasetKind::FashioniqShirt | DatasetKind::FashioniqDress | DatasetKind::FashioniqToptee => {
                MetricPlan { recall: vec![10, 50], map: vec![], subset_recall: vec![] }
            }
            DatasetKind::Custom => MetricPlan { recall: vec![1, 5, 10, 50], map: vec![5, 10, 25, 50], subset_recall: vec![1, 2, 3] },
        }
    }
}

/// Cutoffs evaluated per metric family.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MetricPlan {
    pub recall: Vec<usize>,
    pub map: Vec<usize>,
    pub subset_recall: Vec<usize>,
}

impl fmt::Display for DatasetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DatasetKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        DatasetKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown dataset {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestQuery {
    pub id: String,
    #[serde(rename = "ref")]
    pub reference: String,
    pub text: String,
    /// Empty for splits whose ground truth is withheld (test servers).
    #[serde(default)]
    pub targets: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subset: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Manifest {
    pub dataset: DatasetKind,
    pub images: Vec<ImageHandle>,
    pub queries: Vec<ManifestQuery>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum Record {
    Dataset { name: DatasetKind },
    Image { id: String, uri: String },
    Query(ManifestQuery),
}

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("line {line}: query {query:?} references unknown image {image:?}")]
    Referential { line: usize, query: String, image: String },
    #[error("missing upstream file {0}")]
    MissingFile(PathBuf),
    #[error("{file}: upstream field {field:?} absent or malformed")]
    SchemaDrift { file: PathBuf, field: String },
}

impl Manifest {
    pub fn image(&self, id: &str) -> Option<&ImageHandle> {
        self.images.iter().find(|i| i.id == id)
    }

    /// Domain queries with their reference handles resolved.
    pub fn domain_queries(&self) -> Vec<Query> {
        let by_id: HashMap<&str, &ImageHandle> = self.images.iter().map(|i| (i.id.as_str(), i)).collect();
        self.queries
            .iter()
            .map(|q| Query {
                query_id: q.id.clone(),
                reference: by_id[q.reference.as_str()].clone(),
                modification_text: q.text.clone(),
            })
            .collect()
    }

    /// Ground truth per query; `None` for unlabeled queries.
    pub fn ground_truth(&self) -> Vec<Option<GroundTruth>> {
        self.queries
            .iter()
            .map(|q| {
                (!q.targets.is_empty()).then(|| GroundTruth {
                    query_id: q.id.clone(),
                    targets: q.targets.iter().cloned().collect(),
                    subset: q.subset.as_ref().map(|s| s.iter().cloned().collect()),
                })
            })
            .collect()
    }

    /// Checks ids, references and subsets; `lines` maps query index to its
    /// source line for error messages.
    fn validate(&self, lines: Option<&[usize]>) -> Result<(), DatasetError> {
        let line_of = |i: usize| lines.map_or(i + 1, |l| l[i]);
        let mut image_ids = HashSet::new();
        for (i, img) in self.images.iter().enumerate() {
            if img.id.is_empty() || img.uri.is_empty() {
                return Err(DatasetError::Format { line: i + 1, message: "image id and uri must be non-empty".into() });
            }
            if !image_ids.insert(img.id.as_str()) {
                return Err(DatasetError::Format { line: i + 1, message: format!("duplicate image id {:?}", img.id) });
            }
        }
        let mut query_ids = HashSet::new();
        for (i, q) in self.queries.iter().enumerate() {
            let line = line_of(i);
            if !query_ids.insert(q.id.as_str()) {
                return Err(DatasetError::Format { line, message: format!("duplicate query id {:?}", q.id) });
            }
            if q.text.trim().is_empty() {
                return Err(DatasetError::Format { line, message: format!("query {:?} has empty text", q.id) });
            }
            let subset = q.subset.iter().flatten();
            for image in std::iter::once(&q.reference).chain(&q.targets).chain(subset) {
                if !image_ids.contains(image.as_str()) {
                    return Err(DatasetError::Referential { line, query: q.id.clone(), image: image.clone() });
                }
            }
            if let Some(subset) = &q.subset {
                let members: BTreeSet<&String> = subset.iter().collect();
                if subset.is_empty() || (!q.targets.is_empty() && !q.targets.iter().any(|t| members.contains(t))) {
                    return Err(DatasetError::Format {
                        line,
                        message: format!("query {:?}: subset must be non-empty and contain a target", q.id),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn write_to(&self, out: &mut impl Write) -> std::io::Result<()> {
        let mut line = |rec: &Record| -> std::io::Result<()> {
            serde_json::to_writer(&mut *out, rec)?;
            out.write_all(b"\n")
        };
        line(&Record::Dataset { name: self.dataset })?;
        for img in &self.images {
            line(&Record::Image { id: img.id.clone(), uri: img.uri.clone() })?;
        }
        for q in &self.queries {
            line(&Record::Query(q.clone()))?;
        }
        Ok(())
    }
}

/// Writes a manifest in canonical record order.
pub fn save_manifest(manifest: &Manifest, path: impl AsRef<Path>) -> Result<(), DatasetError> {
    let path = path.as_ref();
    let io = |source| DatasetError::Io { path: path.to_path_buf(), source };
    let mut out = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
    manifest.write_to(&mut out).map_err(io)?;
    out.flush().map_err(io)
}

/// Reads and validates a manifest.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<Manifest, DatasetError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| DatasetError::Io { path: path.to_path_buf(), source })?;
    read_manifest(BufReader::new(file)).map_err(|e| match e {
        DatasetError::Io { source, .. } => DatasetError::Io { path: path.to_path_buf(), source },
        other => other,
    })
}

pub fn read_manifest(reader: impl BufRead) -> Result<Manifest, DatasetError> {
    let mut manifest = Manifest { dataset: DatasetKind::Custom, images: Vec::new(), queries: Vec::new() };
    let mut query_lines = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|source| DatasetError::Io { path: PathBuf::new(), source })?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: Record = serde_json::from_str(&line)
            .map_err(|e| DatasetError::Format { line: line_no, message: e.to_string() })?;
        match rec {
            Record::Dataset { name } => manifest.dataset = name,
            Record::Image { id, uri } => manifest.images.push(ImageHandle { id, uri }),
            Record::Query(q) => {
                manifest.queries.push(q);
                query_lines.push(line_no);
            }
        }
    }
    manifest.validate(Some(&query_lines))?;
    log::info!(
        "manifest: dataset {} with {} images, {} queries",
        manifest.dataset,
        manifest.images.len(),
        manifest.queries.len()
    );
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    const TOY: &str = r#"{"kind":"image","id":"a","uri":"a.png"}
{"kind":"image","id":"b","uri":"b.png"}
{"kind":"query","id":"q1","ref":"a","text":"make it red","targets":["b"]}
"#;

    #[test]
    fn toy_manifest_loads() {
        let m = read_manifest(TOY.as_bytes()).unwrap();
        assert_eq!(m.images.len(), 2);
        assert_eq!(m.queries.len(), 1);
        assert_eq!(m.dataset, DatasetKind::Custom);
        assert_eq!(m.domain_queries()[0].reference.uri, "a.png");
    }

    #[test]
    fn unknown_reference_names_its_line() {
        let bad = TOY.replace(r#""ref":"a""#, r#""ref":"ghost""#);
        match read_manifest(bad.as_bytes()) {
            Err(DatasetError::Referential { line, image, .. }) => {
                assert_eq!(line, 3);
                assert_eq!(image, "ghost");
            }
            other => panic!("expected referential error, got {other:?}"),
        }
    }

    #[test]
    fn malformed_line_is_a_format_error() {
        let bad = format!("{TOY}{{\"kind\":\"query\",\"id\":\n");
        assert!(matches!(read_manifest(bad.as_bytes()), Err(DatasetError::Format { line: 4, .. })));
        let unknown_kind = r#"{"kind":"video","id":"x"}"#;
        assert!(matches!(read_manifest(unknown_kind.as_bytes()), Err(DatasetError::Format { line: 1, .. })));
    }

    #[test]
    fn duplicate_ids_and_bad_subsets_are_rejected() {
        let dup = format!("{TOY}{{\"kind\":\"query\",\"id\":\"q1\",\"ref\":\"a\",\"text\":\"x\",\"targets\":[]}}\n");
        assert!(matches!(read_manifest(dup.as_bytes()), Err(DatasetError::Format { .. })));
        let subset = TOY.replace(r#""targets":["b"]"#, r#""targets":["b"],"subset":["a"]"#);
        assert!(matches!(read_manifest(subset.as_bytes()), Err(DatasetError::Format { .. })));
    }

    #[test]
    fn save_then_load_is_identity() {
        let m = read_manifest(TOY.as_bytes()).unwrap();
        let mut buf = Vec::new();
        m.write_to(&mut buf).unwrap();
        assert_eq!(read_manifest(buf.as_slice()).unwrap(), m);
    }

    #[test]
    fn dataset_names_parse() {
        for k in DatasetKind::ALL {
            assert_eq!(k.as_str().parse::<DatasetKind>().unwrap(), k);
        }
        assert!("imagenet".parse::<DatasetKind>().is_err());
    }
}
