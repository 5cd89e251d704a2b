//! Regenerates the golden fixture under `tests/fixtures/golden/`.
//!
//! cargo run -p xr-core --example golden_fixture
//!
//! Writes the manifest, both mock scripts, the run config, and the expected
//! traces and report produced by running the scenario. Only rerun after an
//! intentional change to trace output; the acceptance suite compares against
//! these files byte for byte.

#[path = "../tests/common/golden.rs"]
mod golden;

use std::path::Path;
use std::sync::Arc;

use xr_core::agents::{Agents, MockBackend, RetryPolicy};
use xr_core::datasets::save_manifest;
use xr_core::embed_index::build_catalog;
use xr_core::pipeline::{run_benchmark, write_run_dir, RunOptions, RUN_FILE};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/golden");
    if dir.join("traces").exists() {
        std::fs::remove_dir_all(dir.join("traces"))?;
    }
    std::fs::create_dir_all(&dir)?;

    let manifest = golden::manifest();
    save_manifest(&manifest, dir.join("manifest.ldjson"))?;
    let script = golden::script(false);
    script.save(dir.join("script.jsonl"))?;
    golden::script(true).save(dir.join("script_distractor.jsonl"))?;
    let cfg = golden::config();
    std::fs::write(
        dir.join("config.toml"),
        format!("k = {}\nk_prime = {}\nn_questions = {}\n", cfg.k, cfg.k_prime, cfg.n_questions),
    )?;

    let agents = Agents::from_backend(Arc::new(MockBackend::new(script))).with_retry(RetryPolicy::immediate());
    let catalog = build_catalog(manifest.images.clone(), &agents)?;
    let run = run_benchmark(&manifest, &catalog, &agents, &cfg, &RunOptions::default(), "golden")?;
    write_run_dir(&dir, &run)?;
    // run.json and the report carry the build version, which changes with
    // every commit
    std::fs::remove_file(dir.join(RUN_FILE))?;
    let mut report = run.report.without_timing();
    report.metadata.version = "fixture".into();
    std::fs::write(dir.join("report.json"), report.to_json() + "\n")?;
    print!("{}", run.report.to_text_table());
    Ok(())
}
