//! Line-delimited JSON trace files: one header line, then one coarse record
//! per candidate in fused order, then one fine record per shortlisted
//! candidate in final order. Timings never appear, so traces of identical
//! runs are byte-identical.

use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{BenchmarkRun, CoarseRecord, PipelineError, QueryTrace};
use crate::domain::Attribute;
use crate::fine::FineRecord;

pub const TRACES_DIR: &str = "traces";
pub const RUN_FILE: &str = "run.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Statement {
    pub statement: String,
    pub expected: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "stage", rename_all = "snake_case")]
pub enum TraceRecord {
    Query {
        query_id: String,
        reference_caption: String,
        text_caption: String,
        vision_caption: String,
        edits: Vec<String>,
        attributes: Vec<Attribute>,
        questions: Vec<Statement>,
        shortlist: Vec<String>,
        top_k: Vec<String>,
    },
    Coarse(CoarseRecord),
    Fine(FineRecord),
}

impl QueryTrace {
    pub fn records(&self) -> Vec<TraceRecord> {
        let header = TraceRecord::Query {
            query_id: self.query_id.clone(),
            reference_caption: self.reference_caption.text.clone(),
            text_caption: self.imagination.text_caption.text.clone(),
            vision_caption: self.imagination.vision_caption.text.clone(),
            edits: self.imagination.edits.clone(),
            attributes: self.imagination.attributes.clone(),
            questions: self
                .questions
                .iter()
                .map(|(s, e)| Statement { statement: s.to_string(), expected: e })
                .collect(),
            shortlist: self.shortlist.clone(),
            top_k: self.top_k.clone(),
        };
        std::iter::once(header)
            .chain(self.coarse.iter().cloned().map(TraceRecord::Coarse))
            .chain(self.fine_records().cloned().map(TraceRecord::Fine))
            .collect()
    }

    pub fn write_records(&self, out: &mut impl Write) -> std::io::Result<()> {
        for rec in self.records() {
            serde_json::to_writer(&mut *out, &rec)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// File name for a query's trace; characters outside `[A-Za-z0-9._-]` become `_`.
pub fn trace_file_name(query_id: &str) -> String {
    let safe: String = query_id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-') { c } else { '_' })
        .collect();
    format!("{safe}.ldjson")
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io { path: path.to_path_buf(), source }
}

pub fn write_trace(path: &Path, trace: &QueryTrace) -> Result<(), PipelineError> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path).map_err(io_err(path))?);
    trace.write_records(&mut out).map_err(io_err(path))?;
    out.flush().map_err(io_err(path))
}

pub fn read_trace(path: &Path) -> Result<Vec<TraceRecord>, PipelineError> {
    let file = std::fs::File::open(path).map_err(io_err(path))?;
    let mut records = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line)
            .map_err(|e| PipelineError::Trace { line: i + 1, message: e.to_string() })?;
        records.push(rec);
    }
    Ok(records)
}

/// Writes `<dir>/run.json` and one trace per completed query under
/// `<dir>/traces/`. Returns the trace paths in manifest order.
pub fn write_run_dir(dir: &Path, run: &BenchmarkRun) -> Result<Vec<PathBuf>, PipelineError> {
    let traces_dir = dir.join(TRACES_DIR);
    std::fs::create_dir_all(&traces_dir).map_err(io_err(&traces_dir))?;
    let run_path = dir.join(RUN_FILE);
    let meta = serde_json::to_string_pretty(&run.report.metadata).expect("metadata serializes");
    std::fs::write(&run_path, meta + "\n").map_err(io_err(&run_path))?;
    run.traces
        .iter()
        .map(|t| {
            let path = traces_dir.join(trace_file_name(&t.query_id));
            write_trace(&path, t)?;
            Ok(path)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_names_are_sanitized() {
        assert_eq!(trace_file_name("dress-val-00001"), "dress-val-00001.ldjson");
        assert_eq!(trace_file_name("a/b c"), "a_b_c.ldjson");
    }

    #[test]
    fn coarse_record_shape() {
        let rec = TraceRecord::Coarse(CoarseRecord {
            id: "x".into(),
            s_tt: 0.5,
            s_tv: 0.25,
            s_vt: 0.0,
            s_vv: 1.0,
            s_t: 0.5,
            s_v: 1.25,
            rank_t: 1,
            rank_v: 2,
            rrf: 0.25,
        });
        let line = serde_json::to_string(&rec).unwrap();
        assert_eq!(
            line,
            r#"{"stage":"coarse","id":"x","s_tt":0.5,"s_tv":0.25,"s_vt":0.0,"s_vv":1.0,"s_t":0.5,"s_v":1.25,"rank_t":1,"rank_v":2,"rrf":0.25}"#
        );
        assert_eq!(serde_json::from_str::<TraceRecord>(&line).unwrap(), rec);
    }
}
