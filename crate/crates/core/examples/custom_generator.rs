//! Plugging in a foundation model that only writes text.
//!
//!     cargo run --example custom_generator
//!
//! `KeywordModel` stands in for a model client. It asks for catalog choices
//! with a `choices:KIND query` line and picks the top choice it was given.
//! [`SentinelAdapter`] turns those lines into structured requests.

use std::sync::Arc;

use flowforge::catalog::EnvironmentCatalog;
use flowforge::fixtures::demo_catalog_dir;
use flowforge::model::serialize_workflow;
use flowforge::orchestrator::{OrchestrationConfig, Orchestrator};
use flowforge::protocol::{GeneratorError, PromptState, SentinelAdapter, SubTask, TextGenerator};
use flowforge::retriever::LexicalIndex;

struct KeywordModel;

fn top(state: &PromptState, i: usize) -> &str {
    &state.injected[i].choices.choices[0].payload
}

impl TextGenerator for KeywordModel {
    fn name(&self) -> &str {
        "keyword-model"
    }

    fn next_text(&self, state: &PromptState) -> Result<String, GeneratorError> {
        let text = match state.sub_task {
            SubTask::CreateFlow => match (state.injected.len(), state.emitted.contains("- name:")) {
                (0, _) => "choices:TABLE_NAME problem\n".to_owned(),
                (1, _) if state.emitted.is_empty() => {
                    format!("trigger:\n  event: created\n  table: {}\nsteps:\n", top(state, 0))
                }
                (1, _) => format!("choices:STEP_NAME {}\n", state.requirement),
                (2, false) => format!(
                    "  - name: {}\n    annotation: \"log the new problem\"\n    order: 1\n    block: 0\n",
                    top(state, 1)
                ),
                _ => String::new(),
            },
            SubTask::PopulateInputs if state.emitted.is_empty() => {
                "- name: message\n  value: \"{{trigger.record.short_description}}\"\n".to_owned()
            }
            SubTask::PopulateInputs => String::new(),
        };
        Ok(text)
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let catalog = Arc::new(EnvironmentCatalog::load(demo_catalog_dir())?);
    let index = Arc::new(LexicalIndex::build(&catalog));
    let generator = Arc::new(SentinelAdapter::new(KeywordModel));
    let config = OrchestrationConfig {
        auto_continue: true,
        ..Default::default()
    };
    let orch = Orchestrator::new(catalog, index, generator, config);

    let s = orch.start_session("When a problem is created, write it to the log.")?;
    let w = s.workflow.as_ref().expect("session completed");
    print!("{}", serialize_workflow(w));
    println!("# {}", orch.validate(w).to_string().trim_end());
    for r in &s.records {
        println!("# {:?}: {} retrieval call(s)", r.order, r.retrieval_call_count);
    }
    Ok(())
}
