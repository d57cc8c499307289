//! Flow Similarity between two workflows, with their trees.
//!
//!     cargo run --example similarity -- expected.flow.yaml generated.flow.yaml
//!
//! Without arguments a corpus workflow is compared with a copy that lost
//! its last step.

use flowforge::dataset::load_corpus;
use flowforge::eval::{flow_similarity, workflow_to_tree, TreeMode};
use flowforge::fixtures::demo_corpus_dir;
use flowforge::model::{parse_workflow, Workflow};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let (expected, generated): (Workflow, Workflow) = match args.as_slice() {
        [a, b] => (
            parse_workflow(&std::fs::read_to_string(a)?)?,
            parse_workflow(&std::fs::read_to_string(b)?)?,
        ),
        _ => {
            let corpus = load_corpus(demo_corpus_dir())?;
            let item = corpus
                .iter()
                .find(|i| i.id == "p1_incident_manager_email")
                .expect("demo item");
            let mut shorter = item.workflow.clone();
            shorter.steps.pop();
            (item.workflow.clone(), shorter)
        }
    };

    println!("expected:\n{}", workflow_to_tree(&expected, &TreeMode::Full).render());
    println!("generated:\n{}", workflow_to_tree(&generated, &TreeMode::Full).render());
    let mut modes = vec![TreeMode::Full, TreeMode::OutlineOnly];
    for s in &expected.steps {
        let m = TreeMode::SingleStep(s.name.clone());
        if !modes.contains(&m) {
            modes.push(m);
        }
    }
    for mode in modes {
        println!(
            "{:<24} {:.4}",
            mode.to_string(),
            flow_similarity(&expected, &generated, &mode)
        );
    }
    Ok(())
}
