mod common;

use common::gen::{all_trees_up_to, random_tree, random_workflow, rng};
use common::oracle::Oracle;
use flowforge::eval::{
    distance, flow_similarity, tree_edit_distance, tree_similarity, workflow_to_tree, EditCostModel, FlowTree,
    Postorder, TreeMode,
};
use proptest::prelude::*;

const AB: &[&str] = &["a", "b"];

fn unit() -> EditCostModel {
    EditCostModel::unit()
}

#[test]
fn oracle_hand_checked() {
    let l = FlowTree::leaf;
    let mut o = Oracle::new();
    assert_eq!(o.distance(&l("a"), &l("b")), 1);
    assert_eq!(o.distance(&FlowTree::node("a", [l("b")]), &l("a")), 1);
    let t1 = FlowTree::node(
        "f",
        [FlowTree::node("d", [l("a"), FlowTree::node("c", [l("b")])]), l("e")],
    );
    let t2 = FlowTree::node(
        "f",
        [FlowTree::node("c", [FlowTree::node("d", [l("a"), l("b")])]), l("e")],
    );
    assert_eq!(o.distance(&t1, &t2), 2);
}

#[test]
fn tree_counts_follow_catalan_numbers() {
    // Ordered trees with n nodes: Catalan(n-1) shapes, 2^n labelings.
    let counts: Vec<usize> = (1..=5).map(|n| common::gen::trees_of_size(n, AB).len()).collect();
    assert_eq!(counts, [2, 4, 16, 80, 448]);
}

#[test]
fn matches_oracle_on_all_small_trees() {
    let trees = all_trees_up_to(4, AB);
    let post: Vec<Postorder<'_>> = trees.iter().map(Postorder::new).collect();
    let mut o = Oracle::new();
    let ids: Vec<u32> = trees.iter().map(|t| o.intern(t)).collect();
    o.freeze();
    for (i, a) in post.iter().enumerate() {
        for (j, b) in post.iter().enumerate() {
            assert_eq!(distance(a, b, &unit()), o.forest_distance(ids[i], ids[j]) as u64);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn matches_oracle_on_random_pairs(seed in any::<u64>()) {
        let mut r = rng(seed);
        let a = random_tree(&mut r, 12, &["a", "b", "c"]);
        let b = random_tree(&mut r, 12, &["a", "b", "c"]);
        prop_assert_eq!(tree_edit_distance(&a, &b, &unit()), Oracle::new().distance(&a, &b) as u64);
    }

    #[test]
    fn metric_axioms(seed in any::<u64>()) {
        let mut r = rng(seed);
        let [a, b, c] = [0; 3].map(|_| random_tree(&mut r, 10, AB));
        let d = |x: &FlowTree, y: &FlowTree| tree_edit_distance(x, y, &unit());
        prop_assert_eq!(d(&a, &a), 0);
        prop_assert_eq!(d(&a, &b), d(&b, &a));
        prop_assert!(d(&a, &c) <= d(&a, &b) + d(&b, &c));
        prop_assert!(d(&a, &b) <= (a.len() + b.len()) as u64);
    }

    #[test]
    fn similarity_axioms(seed in any::<u64>()) {
        let c = common::catalog();
        let mut r = rng(seed);
        let a = random_workflow(&mut r, &c, 6);
        let b = random_workflow(&mut r, &c, 6);
        for mode in [TreeMode::Full, TreeMode::OutlineOnly] {
            let ab = flow_similarity(&a, &b, &mode);
            prop_assert!((0.0..=1.0).contains(&ab));
            prop_assert_eq!(ab, flow_similarity(&b, &a, &mode));
            prop_assert_eq!(flow_similarity(&a, &a, &mode), 1.0);
        }
    }

    #[test]
    fn outline_tree_is_a_projection(seed in any::<u64>()) {
        let c = common::catalog();
        let w = random_workflow(&mut rng(seed), &c, 8);
        let full = workflow_to_tree(&w, &TreeMode::Full);
        let outline = workflow_to_tree(&w, &TreeMode::OutlineOnly);
        let step_nodes = |t: &FlowTree| -> Vec<String> {
            t.preorder().into_iter().map(|i| t.label(i).to_owned()).filter(|l| c.step(l).is_some()).collect()
        };
        // Deleting every input subtree from the full tree gives the outline tree.
        let inputs: usize = w.steps.iter().map(|s| s.inputs.iter().map(|i| 1 + flowforge::eval::value_atoms(&i.value).len()).sum::<usize>()).sum();
        prop_assert_eq!(outline.len() + inputs, full.len());
        prop_assert_eq!(tree_edit_distance(&full, &outline, &unit()), inputs as u64);
        prop_assert_eq!(step_nodes(&full), step_nodes(&outline));
    }
}

#[test]
fn disjoint_labels_share_only_the_root() {
    let a = FlowTree::node("WORKFLOW", [FlowTree::leaf("x"), FlowTree::leaf("y")]);
    let b = FlowTree::node("WORKFLOW", [FlowTree::leaf("p")]);
    // Root kept, one relabel, one delete.
    assert_eq!(tree_edit_distance(&a, &b, &unit()), 2);
    assert_eq!(tree_similarity(&a, &b), 1.0 - 2.0 / 5.0);
}
