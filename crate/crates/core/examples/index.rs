//! Build the retrieval index once and reuse it while the catalog is unchanged.
//!
//!     cargo run --example index -- .flowforge/index

use std::path::PathBuf;

use flowforge::catalog::EnvironmentCatalog;
use flowforge::fixtures::demo_catalog_dir;
use flowforge::retriever::LexicalIndex;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir: PathBuf = std::env::args()
        .nth(1)
        .map(Into::into)
        .unwrap_or_else(|| std::env::temp_dir().join("flowforge-index"));
    let catalog = EnvironmentCatalog::load(demo_catalog_dir())?;
    for _ in 0..2 {
        let (_, status) = LexicalIndex::build_or_load(&dir, &catalog)?;
        println!(
            "{status:?}: {}",
            LexicalIndex::path_in(&dir, catalog.version()).display()
        );
    }
    Ok(())
}
