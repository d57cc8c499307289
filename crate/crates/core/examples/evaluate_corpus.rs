//! Generate every corpus requirement and score it against the label.
//!
//!     cargo run --release --example evaluate_corpus

use std::sync::Arc;

use flowforge::catalog::EnvironmentCatalog;
use flowforge::dataset::load_corpus;
use flowforge::eval::{evaluate_corpus, EvaluationPair};
use flowforge::fixtures::{demo_catalog_dir, demo_corpus_dir};
use flowforge::orchestrator::{OrchestrationConfig, Orchestrator};
use flowforge::protocol::ReferenceGenerator;
use flowforge::retriever::LexicalIndex;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let catalog = Arc::new(EnvironmentCatalog::load(demo_catalog_dir())?);
    let index = Arc::new(LexicalIndex::build(&catalog));
    let generator = Arc::new(ReferenceGenerator::new(catalog.clone()));
    let config = OrchestrationConfig {
        auto_continue: true,
        ..Default::default()
    };
    let orch = Orchestrator::new(catalog, index, generator, config);

    let mut pairs = Vec::new();
    for item in load_corpus(demo_corpus_dir())? {
        match orch.start_session(item.requirement()).map(|s| s.workflow) {
            Ok(Some(generated)) => pairs.push(EvaluationPair {
                id: item.id,
                expected: item.workflow,
                generated,
            }),
            Ok(None) => println!("{}: no workflow", item.id),
            Err(e) => println!("{}: {e}", item.id),
        }
    }
    print!("{}", evaluate_corpus(&pairs)?.render_table());
    Ok(())
}
