mod common;

use common::{assert_golden, corpus, generate, Run, SOLVABLE};
use flowforge::eval::{evaluate_corpus, flow_similarity, EvaluationPair, TreeMode};
use flowforge::model::serialize_workflow;
use rayon::prelude::*;

#[test]
fn generation_is_deterministic_and_matches_goldens() {
    let items = corpus();
    assert!(items.len() >= 20);
    let first: Vec<Run> = items.iter().map(generate).collect();
    let second: Vec<Run> = items.par_iter().map(generate).collect();
    for (a, b) in first.iter().zip(&second) {
        assert_eq!(a.transcript, b.transcript, "transcript of {}", a.id);
        assert_eq!(
            serialize_workflow(&a.workflow),
            serialize_workflow(&b.workflow),
            "workflow of {}",
            a.id
        );
        assert_golden(&format!("transcripts/{}.json", a.id), &a.transcript);
        assert_golden(
            &format!("generated/{}.flow.yaml", a.id),
            &serialize_workflow(&a.workflow),
        );
    }
}

#[test]
fn solvable_items_score_one() {
    let items = corpus();
    assert!(SOLVABLE.len() >= 10);
    for id in SOLVABLE {
        let item = items
            .iter()
            .find(|i| i.id == *id)
            .unwrap_or_else(|| panic!("no corpus item {id}"));
        let run = generate(item);
        assert_eq!(
            flow_similarity(&item.workflow, &run.workflow, &TreeMode::Full),
            1.0,
            "{id}"
        );
    }
}

#[test]
fn regression_report_matches_baseline() {
    let pairs: Vec<EvaluationPair> = corpus()
        .iter()
        .filter(|i| !SOLVABLE.contains(&i.id.as_str()))
        .map(|i| EvaluationPair {
            id: i.id.clone(),
            expected: i.workflow.clone(),
            generated: generate(i).workflow,
        })
        .collect();
    assert!(!pairs.is_empty());
    let report = evaluate_corpus(&pairs).unwrap();
    assert!(
        report.pairs.iter().all(|p| p.full < 1.0),
        "a regression item is now solved"
    );
    assert_golden(
        "regression_report.json",
        &(serde_json::to_string_pretty(&report).unwrap() + "\n"),
    );
    assert_golden("regression_report.txt", &report.render_table());
}
