//! A steerable session: outline first, then one step at a time, then a
//! changed requirement.
//!
//!     cargo run --example session

use std::sync::Arc;

use flowforge::catalog::EnvironmentCatalog;
use flowforge::fixtures::demo_catalog_dir;
use flowforge::orchestrator::{EventPayload, OrchestrationConfig, Orchestrator, SessionEvent};
use flowforge::protocol::ReferenceGenerator;
use flowforge::retriever::LexicalIndex;

const FIRST: &str = "When a P1 incident is created, look up the user assigned to the incident. \
If the user has a manager, send an email to the manager reminding them of the incident.";
const SECOND: &str = "When a P1 incident is created, send an email to the assigned user.";

fn print_event(e: &SessionEvent) {
    let detail = match &e.payload {
        EventPayload::Outline { outline } => format!("\n{outline}"),
        EventPayload::ChoicesOffered { choices, .. } => {
            let top: Vec<&str> = choices.choices.iter().map(|c| c.payload.as_str()).collect();
            format!("{} {:?} -> {top:?}", choices.kind, choices.query)
        }
        EventPayload::StepPopulated { order, name, .. } => format!("{order} {name}"),
        EventPayload::Completed { violations, .. } => format!("{violations} violation(s)"),
        EventPayload::Stopped { .. } => String::new(),
        EventPayload::Failed { message } => message.clone(),
    };
    println!("[{} #{}] {} {detail}", e.session_id, e.seq, e.payload.name());
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let catalog = Arc::new(EnvironmentCatalog::load(demo_catalog_dir())?);
    let index = Arc::new(LexicalIndex::build(&catalog));
    let generator = Arc::new(ReferenceGenerator::new(catalog.clone()));
    let orch = Orchestrator::new(catalog, index, generator, OrchestrationConfig::default());

    let mut s = orch.new_session(FIRST)?;
    s.set_sink(Arc::new(print_event));
    orch.create_outline(&mut s)?;
    orch.continue_session(&mut s, Some(1))?;
    println!("-- paused before step {:?}", s.next_step());
    orch.continue_session(&mut s, None)?;

    let mut next = orch.modify_requirement(&mut s, SECOND)?;
    next.set_sink(Arc::new(print_event));
    orch.run_session(&mut next)?;
    println!("-- {} superseded by {:?}", s.id, s.superseded_by);
    Ok(())
}
