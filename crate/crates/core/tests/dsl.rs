mod common;

use flowforge::model::{parse_workflow, serialize_workflow, validate_workflow};
use proptest::prelude::*;

#[test]
fn corpus_files_are_canonical() {
    let dir = flowforge::fixtures::demo_corpus_dir();
    let mut n = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let text = std::fs::read_to_string(&path).unwrap();
        let w = parse_workflow(&text).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        assert_eq!(serialize_workflow(&w), text, "{} is not canonical", path.display());
        n += 1;
    }
    assert!(n >= 20);
}

#[test]
fn corpus_validates() {
    let c = common::catalog();
    for item in common::corpus() {
        let r = validate_workflow(&item.workflow, &c);
        assert!(r.is_valid(), "{}: {r}", item.id);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn random_workflows_roundtrip(seed in any::<u64>()) {
        let c = common::catalog();
        let w = common::gen::random_workflow(&mut common::gen::rng(seed), &c, 8);
        let report = validate_workflow(&w, &c);
        prop_assert!(report.is_valid(), "generator produced an invalid workflow: {}", report);
        let text = serialize_workflow(&w);
        let back = parse_workflow(&text).map_err(|e| TestCaseError::fail(format!("{e}\n{text}")))?;
        prop_assert_eq!(&back, &w);
        prop_assert_eq!(serialize_workflow(&back), text);
    }
}
