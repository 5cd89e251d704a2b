#![allow(dead_code)]

pub mod golden;

use std::path::PathBuf;
use std::sync::Arc;

use xr_core::agents::{Agents, MockBackend, MockScript, RetryPolicy};
use xr_core::datasets::{load_manifest, Manifest};
use xr_core::embed_index::{build_catalog, Catalog};

pub fn golden_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/golden")
}

pub fn mock_agents(script: MockScript) -> (Arc<MockBackend>, Agents) {
    let backend = Arc::new(MockBackend::new(script));
    let agents = Agents::from_backend(backend.clone()).with_retry(RetryPolicy::immediate());
    (backend, agents)
}

/// Manifest, built catalog and agents over the checked-in golden fixture.
pub fn golden_setup(script_file: &str) -> (Manifest, Catalog, Arc<MockBackend>, Agents) {
    let dir = golden_dir();
    let manifest = load_manifest(dir.join("manifest.ldjson")).expect("golden manifest");
    let script = MockScript::load(dir.join(script_file)).expect("golden script");
    let (backend, agents) = mock_agents(script);
    let catalog = build_catalog(manifest.images.clone(), &agents).expect("golden catalog");
    (manifest, catalog, backend, agents)
}
