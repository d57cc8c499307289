//! Paths to the bundled demo catalog and golden corpus.

use std::path::PathBuf;

pub fn demo_catalog_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/catalog")
}

pub fn demo_corpus_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/corpus")
}
