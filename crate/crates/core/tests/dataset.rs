mod common;

use std::collections::BTreeMap;

use flowforge::dataset::{
    derive_retrieval_samples, gold_presence, inject_teacher_forcing, read_jsonl, reassemble, split_create_flow,
    split_populate_inputs, write_jsonl, CreateFlowSample, PopulateInputsSample,
};
use flowforge::retriever::DEFAULT_K;

#[test]
fn split_then_reassemble_is_lossless() {
    let c = common::catalog();
    let corpus = common::corpus();
    let create = split_create_flow(&corpus, &c).unwrap();
    let populate = split_populate_inputs(&corpus, &c).unwrap();
    assert_eq!(create.len(), corpus.len());
    assert_eq!(
        populate.len(),
        corpus.iter().map(|i| i.workflow.steps.len()).sum::<usize>()
    );

    let mut by_item: BTreeMap<&str, Vec<PopulateInputsSample>> = BTreeMap::new();
    for p in &populate {
        let id = p.id.rsplit_once('#').unwrap().0;
        by_item.entry(id).or_default().push(p.clone());
    }
    for (item, cf) in corpus.iter().zip(&create) {
        let mut samples = by_item.remove(item.id.as_str()).unwrap_or_default();
        samples.reverse();
        assert_eq!(&reassemble(cf, &samples).unwrap(), item);
    }
}

#[test]
fn samples_survive_jsonl() {
    let c = common::catalog();
    let corpus = common::corpus();
    let dir = tempfile::tempdir().unwrap();
    let create = split_create_flow(&corpus, &c).unwrap();
    let populate = split_populate_inputs(&corpus, &c).unwrap();
    write_jsonl(dir.path().join("create.jsonl"), &create).unwrap();
    write_jsonl(dir.path().join("populate.jsonl"), &populate).unwrap();
    assert_eq!(
        read_jsonl::<CreateFlowSample>(dir.path().join("create.jsonl")).unwrap(),
        create
    );
    assert_eq!(
        read_jsonl::<PopulateInputsSample>(dir.path().join("populate.jsonl")).unwrap(),
        populate
    );
}

#[test]
fn teacher_forcing_puts_gold_in_every_site() {
    let c = common::catalog();
    let idx = common::index(&c);
    let samples = derive_retrieval_samples(&common::corpus(), &c);
    assert!(samples.iter().all(|s| !s.unresolved));
    let forced = inject_teacher_forcing(&samples, idx.as_ref(), DEFAULT_K);
    assert_eq!(gold_presence(&forced), 1.0);
    assert!(forced.iter().all(|t| t.choices.choices.len() <= DEFAULT_K));
    // Sites that already had the gold are left alone.
    for t in forced.iter().filter(|t| !t.forced) {
        let plain = flowforge::retriever::Retriever::retrieve(
            idx.as_ref(),
            t.sample.kind,
            &t.sample.query,
            t.sample.scope.as_deref(),
            DEFAULT_K,
        )
        .unwrap();
        assert_eq!(plain, t.choices);
    }
}
