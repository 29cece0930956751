//! Shared helpers for the benchmark suite: fixture loading against the
//! family metamodel shipped with the core crate.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use metarest_core::{load_instance, parse_metamodel, Metamodel, ModelInstance, StorageFormat};

pub fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures/family")
}

pub fn family_metamodel() -> Arc<Metamodel> {
    let text = std::fs::read_to_string(fixture_dir().join("metamodel.json")).unwrap();
    Arc::new(parse_metamodel(&text).unwrap())
}

pub fn simpsons(metamodel: Arc<Metamodel>) -> ModelInstance {
    let text = std::fs::read_to_string(fixture_dir().join("Simpsons.xmi")).unwrap();
    load_instance(&text, StorageFormat::Xmi, metamodel, "Simpsons").unwrap()
}
