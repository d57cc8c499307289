#![allow(dead_code)]

pub mod gen;
pub mod oracle;

use std::path::PathBuf;
use std::sync::Arc;

use flowforge::catalog::{ArtifactKind, EnvironmentCatalog};
use flowforge::dataset::{load_corpus, LabeledWorkflow};
use flowforge::fixtures::{demo_catalog_dir, demo_corpus_dir};
use flowforge::model::Workflow;
use flowforge::orchestrator::{EventPayload, OrchestrationConfig, Orchestrator, SessionEvent};
use flowforge::protocol::{GenerationEvent, Generator, GeneratorError, PromptState, ReferenceGenerator};
use flowforge::retriever::{LexicalIndex, RetrievalSample, Retriever};

/// Corpus items the reference generator is expected to reproduce exactly.
pub const SOLVABLE: &[&str] = &[
    "change_approval_requester",
    "close_unassigned_tasks",
    "group_manager_email",
    "incident_create_problem",
    "incident_create_task",
    "incident_updated_work_note",
    "p1_assignee_email",
    "p1_incident_manager_email",
    "problem_create_task",
    "problem_log_message",
    "requested_item_log",
    "resolved_incident_caller_email",
    "user_welcome_email",
];

pub fn catalog() -> Arc<EnvironmentCatalog> {
    Arc::new(EnvironmentCatalog::load(demo_catalog_dir()).expect("demo catalog loads"))
}

pub fn index(catalog: &EnvironmentCatalog) -> Arc<LexicalIndex> {
    Arc::new(LexicalIndex::build(catalog))
}

pub fn corpus() -> Vec<LabeledWorkflow> {
    load_corpus(demo_corpus_dir()).expect("demo corpus loads")
}

pub fn reference_orchestrator(config: OrchestrationConfig) -> Orchestrator {
    let c = catalog();
    let idx = index(&c);
    let g = Arc::new(ReferenceGenerator::new(c.clone()));
    Orchestrator::new(c, idx, g, config)
}

pub fn auto_config() -> OrchestrationConfig {
    OrchestrationConfig {
        auto_continue: true,
        ..Default::default()
    }
}

pub fn golden_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

/// Compares against a golden file, writing it first when
/// `FLOWFORGE_BLESS=1` is set.
pub fn assert_golden(name: &str, actual: &str) {
    let path = golden_dir().join(name);
    if std::env::var("FLOWFORGE_BLESS").as_deref() == Ok("1") {
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(&path, actual).unwrap();
        return;
    }
    let expected = std::fs::read_to_string(&path).unwrap_or_else(|e| {
        panic!(
            "missing golden file {}: {e} (run with FLOWFORGE_BLESS=1)",
            path.display()
        )
    });
    assert_eq!(actual, expected, "golden mismatch for {name}");
}

pub fn golden_matches(name: &str, actual: &str) -> bool {
    std::fs::read_to_string(golden_dir().join(name)).is_ok_and(|e| e == actual)
}

/// Every (kind, scope) pair the demo catalog can be queried with.
pub fn all_scopes(c: &EnvironmentCatalog) -> Vec<(ArtifactKind, Option<String>)> {
    let mut out = vec![(ArtifactKind::StepName, None), (ArtifactKind::TableName, None)];
    for t in c.tables() {
        out.push((ArtifactKind::ColumnName, Some(t.name.clone())));
        out.push((ArtifactKind::ColumnValue, Some(t.name.clone())));
        for col in t.columns.iter().filter(|c| !c.values.is_empty()) {
            out.push((ArtifactKind::ColumnValue, Some(format!("{}.{}", t.name, col.name))));
        }
    }
    out
}

/// Artifacts whose exact-name query does not rank them first, out of all.
pub fn exact_name_misses(c: &EnvironmentCatalog, idx: &LexicalIndex) -> (Vec<String>, usize) {
    let mut misses = Vec::new();
    let mut total = 0;
    for (kind, scope) in all_scopes(c) {
        for doc in c.list_artifacts(kind, scope.as_deref()).unwrap() {
            total += 1;
            let got = idx.retrieve(kind, &doc.payload, scope.as_deref(), 1).unwrap();
            if got.top().map(|t| t.payload.as_str()) != Some(doc.payload.as_str()) {
                misses.push(format!("{kind}@{scope:?} {}", doc.payload));
            }
        }
    }
    (misses, total)
}

/// (recall@1, recall@4, recall@10, hit rate@4, MRR@10) recomputed from raw
/// top-10 rankings.
pub fn brute_force_metrics(idx: &LexicalIndex, samples: &[RetrievalSample]) -> [f64; 5] {
    let mut m = [0.0; 5];
    for s in samples {
        let ranking: Vec<String> = idx
            .retrieve(s.kind, &s.query, s.scope.as_deref(), 10)
            .unwrap()
            .payloads()
            .map(str::to_owned)
            .collect();
        let mut gold: Vec<&String> = s.gold.iter().collect();
        gold.sort();
        gold.dedup();
        let recall = |k: usize| {
            let hits = gold.iter().filter(|g| ranking.iter().take(k).any(|p| p == **g)).count();
            hits as f64 / gold.len() as f64
        };
        m[0] += recall(1);
        m[1] += recall(4);
        m[2] += recall(10);
        let first = ranking.iter().position(|p| gold.contains(&p));
        if first.is_some_and(|r| r < 4) {
            m[3] += 1.0;
        }
        if let Some(r) = first {
            m[4] += 1.0 / (r + 1) as f64;
        }
    }
    m.map(|v| v / samples.len() as f64)
}

/// Wraps a generator and swaps catalog names in its text for made-up names.
/// The inner generator sees its own, unaltered output.
pub struct Hallucinating<G>(pub G);

pub const FABRICATIONS: &[(&str, &str)] = &[
    ("look_up_record", "look_up_rekord"),
    ("send_email", "send_mails"),
    ("assigned_to", "assigned_by"),
    ("incident_task", "incident_todo"),
    ("update_record", "modify_record"),
];

impl<G: Generator> Generator for Hallucinating<G> {
    fn name(&self) -> &str {
        "hallucinating"
    }

    fn next_event(&self, state: &PromptState) -> Result<GenerationEvent, GeneratorError> {
        let json = serde_json::to_string(state).expect("state serializes");
        let json = FABRICATIONS.iter().fold(json, |t, (from, to)| t.replace(to, from));
        let own: PromptState = serde_json::from_str(&json).expect("state deserializes");
        Ok(match self.0.next_event(&own)? {
            GenerationEvent::Fragment { text } => {
                let text = FABRICATIONS.iter().fold(text, |t, (from, to)| t.replace(from, to));
                GenerationEvent::Fragment { text }
            }
            other => other,
        })
    }
}

/// Step, table and column names in `w` that the catalog does not define.
pub fn out_of_catalog_names(w: &Workflow, c: &EnvironmentCatalog) -> usize {
    use flowforge::model::{validate_workflow, ViolationCode};
    let r = validate_workflow(w, c);
    r.violations
        .iter()
        .filter(|v| match v.code {
            ViolationCode::UnknownStep | ViolationCode::UnknownTable | ViolationCode::UnknownColumn => true,
            ViolationCode::BadOutputPath => v.message.contains("no column"),
            _ => false,
        })
        .count()
}

/// One auto-continued reference generation.
pub struct Run {
    pub id: String,
    pub transcript: String,
    pub workflow: Workflow,
}

pub fn generate(item: &LabeledWorkflow) -> Run {
    let orch = reference_orchestrator(auto_config());
    let s = orch.start_session(item.requirement()).unwrap();
    Run {
        id: item.id.clone(),
        transcript: serde_json::to_string_pretty(&s.records).unwrap() + "\n",
        workflow: s.workflow.unwrap(),
    }
}

/// Checks outline-first, strictly increasing step order and contiguous
/// sequence numbers; returns the number of step events.
pub fn check_stream(events: &[SessionEvent]) -> Result<usize, String> {
    let first = events
        .iter()
        .position(|e| !matches!(e.payload, EventPayload::ChoicesOffered { .. }));
    match first.map(|i| &events[i].payload) {
        Some(EventPayload::Outline { .. }) => {}
        other => return Err(format!("first event is {other:?}")),
    }
    let mut last_order = 0;
    let mut steps = 0;
    let mut outline_seen = false;
    for (i, e) in events.iter().enumerate() {
        if e.seq != i as u64 + 1 {
            return Err(format!("seq {} at position {i}", e.seq));
        }
        match &e.payload {
            EventPayload::Outline { .. } => outline_seen = true,
            EventPayload::StepPopulated { order, .. } => {
                if !outline_seen || *order <= last_order {
                    return Err(format!("step {order} after {last_order}"));
                }
                last_order = *order;
                steps += 1;
            }
            _ => {}
        }
    }
    match events.last().map(|e| &e.payload) {
        Some(EventPayload::Completed { .. }) => Ok(steps),
        other => Err(format!("last event is {other:?}")),
    }
}
