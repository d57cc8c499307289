//! Ranked catalog choices for a query.
//!
//!     cargo run --example retrieve -- STEP_NAME "send an email to the manager"
//!     cargo run --example retrieve -- COLUMN_NAME@incident "assigned user"

use flowforge::catalog::{ArtifactKind, EnvironmentCatalog};
use flowforge::fixtures::demo_catalog_dir;
use flowforge::retriever::LexicalIndex;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let head = args.next().unwrap_or_else(|| "STEP_NAME".into());
    let query: Vec<String> = args.collect();
    let query = if query.is_empty() {
        "look up the user".to_owned()
    } else {
        query.join(" ")
    };
    let (kind, scope) = match head.split_once('@') {
        Some((k, s)) => (k.parse::<ArtifactKind>()?, Some(s.to_owned())),
        None => (head.parse::<ArtifactKind>()?, None),
    };

    let catalog = EnvironmentCatalog::load(demo_catalog_dir())?;
    let index = LexicalIndex::build(&catalog);
    let ranked = index.query(kind, &query, 10, scope.as_deref())?;
    println!("{kind} {query:?}");
    for (i, c) in ranked.choices.iter().enumerate() {
        println!("{:>2}. {:<28} {:.4}", i + 1, c.payload, c.score);
    }
    Ok(())
}
