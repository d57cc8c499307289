//! Tree edit distance and Flow Similarity.
//!
//! A workflow becomes an ordered labeled tree: the root, the trigger subtree,
//! then one subtree per top-level step. A step's children are its inputs,
//! each holding one leaf per value atom, followed by the steps of its block.
//! Flow Similarity is `1 - TED(a, b) / (|a| + |b|)` under unit edit costs.

mod report;
mod ted;
mod tree;

pub use report::{evaluate_corpus, Aggregate, EvalError, EvaluationPair, EvaluationReport, PairScore, StepTypeRow};
pub use ted::{distance, tree_edit_distance, EditCostModel, Postorder};
pub use tree::{
    value_atoms, workflow_to_tree, workflow_to_tree_with, FlowTree, TreeMode, TreeOptions, ROOT_LABEL, TRIGGER_LABEL,
};

use crate::model::Workflow;

/// Similarity of two trees under unit costs.
pub fn tree_similarity(a: &FlowTree, b: &FlowTree) -> f64 {
    let ted = tree_edit_distance(a, b, &EditCostModel::unit());
    1.0 - ted as f64 / (a.len() + b.len()) as f64
}

pub fn flow_similarity(expected: &Workflow, generated: &Workflow, mode: &TreeMode) -> f64 {
    tree_similarity(&workflow_to_tree(expected, mode), &workflow_to_tree(generated, mode))
}
