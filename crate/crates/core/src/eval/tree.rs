use std::fmt;

use serde::{Deserialize, Serialize};

use crate::model::{Segment, Step, ValueExpr, Workflow};

pub const ROOT_LABEL: &str = "WORKFLOW";
pub const TRIGGER_LABEL: &str = "TRIGGER";

/// Which parts of a workflow a tree keeps.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode", content = "step")]
pub enum TreeMode {
    Full,
    OutlineOnly,
    /// Only the input subtrees of steps with this name, flattened under the
    /// root.
    SingleStep(String),
}

impl fmt::Display for TreeMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TreeMode::Full => f.write_str("full"),
            TreeMode::OutlineOnly => f.write_str("outline"),
            TreeMode::SingleStep(s) => write!(f, "step:{s}"),
        }
    }
}

impl std::str::FromStr for TreeMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "full" => Ok(TreeMode::Full),
            "outline" => Ok(TreeMode::OutlineOnly),
            _ => match s.strip_prefix("step:") {
                Some(name) if !name.is_empty() => Ok(TreeMode::SingleStep(name.to_owned())),
                _ => Err(format!("unknown mode `{s}` (full, outline or step:<name>)")),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TreeOptions {
    /// Adds each step's annotation as its first child.
    pub include_annotations: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct Node {
    label: String,
    children: Vec<usize>,
}

/// A rooted, ordered, labeled tree. Node 0 is the root.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FlowTree {
    nodes: Vec<Node>,
}

impl FlowTree {
    pub fn leaf(label: impl Into<String>) -> Self {
        Self {
            nodes: vec![Node {
                label: label.into(),
                children: Vec::new(),
            }],
        }
    }

    pub fn node(label: impl Into<String>, children: impl IntoIterator<Item = FlowTree>) -> Self {
        let mut t = Self::leaf(label);
        for c in children {
            t.push_subtree(0, c);
        }
        t
    }

    fn push(&mut self, parent: usize, label: impl Into<String>) -> usize {
        let id = self.nodes.len();
        self.nodes.push(Node {
            label: label.into(),
            children: Vec::new(),
        });
        self.nodes[parent].children.push(id);
        id
    }

    fn push_subtree(&mut self, parent: usize, sub: FlowTree) {
        let offset = self.nodes.len();
        self.nodes.extend(sub.nodes.into_iter().map(|mut n| {
            for c in &mut n.children {
                *c += offset;
            }
            n
        }));
        self.nodes[parent].children.push(offset);
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn root(&self) -> usize {
        0
    }

    pub fn label(&self, id: usize) -> &str {
        &self.nodes[id].label
    }

    pub fn children(&self, id: usize) -> &[usize] {
        &self.nodes[id].children
    }

    pub fn subtree_size(&self, id: usize) -> usize {
        1 + self.children(id).iter().map(|&c| self.subtree_size(c)).sum::<usize>()
    }

    /// First node with `label` in preorder.
    pub fn find(&self, label: &str) -> Option<usize> {
        self.preorder().into_iter().find(|&i| self.label(i) == label)
    }

    pub fn preorder(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.len());
        let mut stack = vec![0];
        while let Some(i) = stack.pop() {
            out.push(i);
            stack.extend(self.children(i).iter().rev());
        }
        out
    }

    pub fn is_descendant(&self, node: usize, ancestor: usize) -> bool {
        self.children(ancestor)
            .iter()
            .any(|&c| c == node || self.is_descendant(node, c))
    }

    /// Copy without the subtree rooted at `id` (which must not be the root).
    pub fn without_subtree(&self, id: usize) -> FlowTree {
        fn copy(src: &FlowTree, at: usize, skip: usize, dst: &mut FlowTree, parent: usize) {
            for &c in src.children(at) {
                if c != skip {
                    let n = dst.push(parent, src.label(c));
                    copy(src, c, skip, dst, n);
                }
            }
        }
        let mut out = FlowTree::leaf(self.label(0));
        copy(self, 0, id, &mut out, 0);
        out
    }

    /// Labels in preorder with depth, one line per node.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let mut stack = vec![(0usize, 0usize)];
        while let Some((i, depth)) = stack.pop() {
            out.push_str(&"  ".repeat(depth));
            out.push_str(self.label(i));
            out.push('\n');
            stack.extend(self.children(i).iter().rev().map(|&c| (c, depth + 1)));
        }
        out
    }
}

impl fmt::Display for FlowTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

pub fn workflow_to_tree(w: &Workflow, mode: &TreeMode) -> FlowTree {
    workflow_to_tree_with(w, mode, TreeOptions::default())
}

pub fn workflow_to_tree_with(w: &Workflow, mode: &TreeMode, opts: TreeOptions) -> FlowTree {
    let mut t = FlowTree::leaf(ROOT_LABEL);
    match mode {
        TreeMode::SingleStep(name) => {
            for step in w.steps.iter().filter(|s| &s.name == name) {
                let n = t.push(0, &step.name);
                step_children(&mut t, n, step, opts, true);
            }
        }
        _ => {
            trigger_subtree(&mut t, w);
            let inputs = *mode == TreeMode::Full;
            add_block(&mut t, 0, w, 0, inputs, opts);
        }
    }
    t
}

fn trigger_subtree(t: &mut FlowTree, w: &Workflow) {
    let n = t.push(0, TRIGGER_LABEL);
    let tr = &w.trigger;
    t.push(n, format!("event:{}", tr.event));
    if let Some(table) = &tr.table {
        t.push(n, format!("table:{table}"));
    }
    if let Some(c) = &tr.condition {
        for cj in &c.conjuncts {
            t.push(n, cj.encode());
        }
    }
    if let Some(s) = &tr.schedule {
        t.push(n, format!("schedule:{s}"));
    }
}

fn add_block(t: &mut FlowTree, parent: usize, w: &Workflow, block: u32, inputs: bool, opts: TreeOptions) {
    let mut placed = vec![false; w.steps.len()];
    add_nested(t, parent, w, block, inputs, opts, &mut placed);
}

/// `placed` stops block cycles in unvalidated input.
fn add_nested(
    t: &mut FlowTree,
    parent: usize,
    w: &Workflow,
    block: u32,
    inputs: bool,
    opts: TreeOptions,
    placed: &mut [bool],
) {
    for (i, step) in w.steps.iter().enumerate() {
        if step.block != block || placed[i] {
            continue;
        }
        placed[i] = true;
        let n = t.push(parent, &step.name);
        step_children(t, n, step, opts, inputs);
        add_nested(t, n, w, step.order, inputs, opts, placed);
    }
}

fn step_children(t: &mut FlowTree, n: usize, step: &Step, opts: TreeOptions, inputs: bool) {
    if opts.include_annotations && !step.annotation.is_empty() {
        t.push(n, format!("annotation:{}", step.annotation));
    }
    if !inputs {
        return;
    }
    for input in &step.inputs {
        let i = t.push(n, &input.name);
        for atom in value_atoms(&input.value) {
            t.push(i, atom);
        }
    }
}

/// Literals, references and conjuncts as canonical strings.
pub fn value_atoms(v: &ValueExpr) -> Vec<String> {
    match v {
        ValueExpr::Literal(s) => vec![s.clone()],
        ValueExpr::Ref(r) => vec![r.to_string()],
        ValueExpr::Condition(c) => c.conjuncts.iter().map(|cj| cj.encode()).collect(),
        ValueExpr::Composite(segs) => segs
            .iter()
            .map(|s| match s {
                Segment::Text(x) => x.clone(),
                Segment::Ref(r) => r.to_string(),
            })
            .collect(),
    }
}
