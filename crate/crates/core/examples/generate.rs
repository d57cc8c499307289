//! Requirement to workflow with the rule-based reference generator.
//!
//!     cargo run --example generate -- "When a P1 incident is created, ..."
//!
//! Each argument is a separate requirement.

use std::sync::Arc;

use flowforge::catalog::EnvironmentCatalog;
use flowforge::fixtures::demo_catalog_dir;
use flowforge::model::serialize_workflow;
use flowforge::orchestrator::{OrchestrationConfig, Orchestrator};
use flowforge::protocol::ReferenceGenerator;
use flowforge::retriever::LexicalIndex;

const DEFAULT: &str = "When a P1 incident is created, look up the user assigned to the incident. \
If the user has a manager, send an email to the manager reminding them of the incident.";

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut requirements: Vec<String> = std::env::args().skip(1).collect();
    if requirements.is_empty() {
        requirements.push(DEFAULT.to_owned());
    }
    let catalog = Arc::new(EnvironmentCatalog::load(demo_catalog_dir())?);
    let index = Arc::new(LexicalIndex::build(&catalog));
    let generator = Arc::new(ReferenceGenerator::new(catalog.clone()));
    let config = OrchestrationConfig {
        auto_continue: true,
        ..Default::default()
    };
    let orch = Orchestrator::new(catalog, index, generator, config);

    for req in &requirements {
        println!("# {req}");
        match orch.start_session(req) {
            Ok(s) => {
                let w = s.workflow.as_ref().expect("auto-continued session has a workflow");
                print!("{}", serialize_workflow(w));
                println!("# {}", orch.validate(w).to_string().trim_end());
            }
            Err(e) => println!("# error: {e}"),
        }
        println!();
    }
    Ok(())
}
