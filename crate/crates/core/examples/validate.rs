//! Parse and validate workflow files against the demo catalog.
//!
//!     cargo run --example validate -- path/to/a.flow.yaml ...
//!
//! Without arguments a small broken workflow is checked.

use flowforge::catalog::EnvironmentCatalog;
use flowforge::fixtures::demo_catalog_dir;
use flowforge::model::{parse_workflow, validate_workflow};

const BROKEN: &str = r#"trigger:
  event: created
  table: incident
steps:
  - name: look_up_record
    order: 1
    block: 0
    inputs:
      - name: table
        value: sys_user
      - name: conditions
        value: "sys_id={{trigger.record.assigned_by}}"
  - name: send_mails
    order: 3
    block: 0
    inputs:
      - name: to
        value: "{{4.record}}"
"#;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let catalog = EnvironmentCatalog::load(demo_catalog_dir())?;
    let paths: Vec<String> = std::env::args().skip(1).collect();
    let docs: Vec<(String, String)> = if paths.is_empty() {
        vec![("<builtin>".into(), BROKEN.into())]
    } else {
        paths
            .into_iter()
            .map(|p| std::fs::read_to_string(&p).map(|t| (p, t)))
            .collect::<Result<_, _>>()?
    };
    for (name, text) in docs {
        match parse_workflow(&text) {
            Ok(w) => println!("{name}: {}", validate_workflow(&w, &catalog).to_string().trim_end()),
            Err(e) => println!("{name}: {e}"),
        }
    }
    Ok(())
}
