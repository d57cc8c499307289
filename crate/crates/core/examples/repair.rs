//! Grounding generated names in the catalog.
//!
//!     cargo run --example repair
//!
//! The wrapped generator misspells some catalog names. Each constrain mode
//! handles the same output differently.

use std::sync::Arc;

use flowforge::catalog::EnvironmentCatalog;
use flowforge::fixtures::demo_catalog_dir;
use flowforge::model::serialize_workflow;
use flowforge::orchestrator::{ConstrainMode, OrchestrationConfig, Orchestrator};
use flowforge::protocol::{GenerationEvent, Generator, GeneratorError, PromptState, ReferenceGenerator};
use flowforge::retriever::LexicalIndex;

const REQUIREMENT: &str = "When a P1 incident is created, look up the user assigned to the incident. \
If the user has a manager, send an email to the manager reminding them of the incident.";

const TYPOS: &[(&str, &str)] = &[("look_up_record", "lookup_rekord"), ("send_email", "send_mails")];

/// Misspells names in its output; sees its own spelling in the prompt.
struct Sloppy(ReferenceGenerator);

impl Generator for Sloppy {
    fn name(&self) -> &str {
        "sloppy"
    }

    fn next_event(&self, state: &PromptState) -> Result<GenerationEvent, GeneratorError> {
        let json = serde_json::to_string(state).map_err(|e| GeneratorError::Fault(e.to_string()))?;
        let json = TYPOS.iter().fold(json, |t, (good, bad)| t.replace(bad, good));
        let own: PromptState = serde_json::from_str(&json).map_err(|e| GeneratorError::Fault(e.to_string()))?;
        Ok(match self.0.next_event(&own)? {
            GenerationEvent::Fragment { text } => GenerationEvent::Fragment {
                text: TYPOS.iter().fold(text, |t, (good, bad)| t.replace(good, bad)),
            },
            other => other,
        })
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let catalog = Arc::new(EnvironmentCatalog::load(demo_catalog_dir())?);
    let index = Arc::new(LexicalIndex::build(&catalog));
    for mode in [ConstrainMode::Off, ConstrainMode::Reject, ConstrainMode::Repair] {
        let generator = Arc::new(Sloppy(ReferenceGenerator::new(catalog.clone())));
        let config = OrchestrationConfig {
            auto_continue: true,
            constrain: mode,
            ..Default::default()
        };
        let orch = Orchestrator::new(catalog.clone(), index.clone(), generator, config);
        println!("== {mode:?}");
        match orch.start_session(REQUIREMENT) {
            Ok(s) => match &s.workflow {
                Some(w) if s.phase.is_terminal() => {
                    print!("{}", serialize_workflow(w));
                    println!("# {}", orch.validate(w).to_string().trim_end());
                }
                _ => println!("# ended in {:?}", s.phase),
            },
            Err(e) => println!("# {e}"),
        }
    }
    Ok(())
}
