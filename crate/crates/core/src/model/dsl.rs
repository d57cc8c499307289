//! Canonical text form of workflows, outlines and step input lists.
//!
//! ```text
//! requirement: "When a P1 incident is created, ..."
//! trigger:
//!   event: created
//!   table: incident
//!   condition: "priority=1"
//! steps:
//!   - name: look_up_record
//!     annotation: "look up the user assigned to the incident"
//!     order: 1
//!     block: 0
//!     inputs:
//!       - name: table
//!         value: "sys_user"
//! ```
//!
//! Key order is fixed, indentation is two spaces, free text and values are
//! always double-quoted, and names are written plain when they are simple
//! identifiers.

use std::collections::BTreeSet;

use thiserror::Error;

use super::reader::{self, quote, Entry, Node, Pos};
use super::{ConditionExpr, EventKind, Outline, OutlineStep, Step, StepInput, Trigger, ValueExpr, Workflow};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("syntax error at {line}:{column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("unknown key `{key}` at {line}:{column}")]
    UnknownKey { key: String, line: usize, column: usize },
    #[error("duplicate step order {order} at line {line}")]
    DuplicateOrder { order: u32, line: usize },
}

impl ParseError {
    fn at(pos: Pos, message: impl Into<String>) -> Self {
        ParseError::Syntax {
            line: pos.line,
            column: pos.column,
            message: message.into(),
        }
    }
}

impl From<reader::ReadError> for ParseError {
    fn from(e: reader::ReadError) -> Self {
        ParseError::at(e.pos, e.message)
    }
}

fn as_map<'a>(node: &'a Node, what: &str) -> Result<&'a [Entry], ParseError> {
    match node {
        Node::Map { entries, .. } => Ok(entries),
        other => Err(ParseError::at(other.pos(), format!("{what} must be a mapping"))),
    }
}

fn as_seq<'a>(node: &'a Node, what: &str) -> Result<&'a [Node], ParseError> {
    match node {
        Node::Seq { items, .. } => Ok(items),
        other => Err(ParseError::at(other.pos(), format!("{what} must be a list"))),
    }
}

fn as_str<'a>(node: &'a Node, what: &str) -> Result<&'a str, ParseError> {
    match node {
        Node::Scalar { text, .. } => Ok(text),
        other => Err(ParseError::at(other.pos(), format!("{what} must be a scalar"))),
    }
}

fn as_u32(node: &Node, what: &str) -> Result<u32, ParseError> {
    let s = as_str(node, what)?;
    s.parse::<u32>()
        .map_err(|_| ParseError::at(node.pos(), format!("{what} must be a non-negative integer, got `{s}`")))
}

/// Fields of one mapping, checked against the allowed key set.
struct Fields<'a> {
    entries: &'a [Entry],
    pos: Pos,
}

impl<'a> Fields<'a> {
    fn new(node: &'a Node, what: &str, allowed: &[&str]) -> Result<Self, ParseError> {
        let entries = as_map(node, what)?;
        for e in entries {
            if !allowed.contains(&e.key.as_str()) {
                return Err(ParseError::UnknownKey {
                    key: e.key.clone(),
                    line: e.key_pos.line,
                    column: e.key_pos.column,
                });
            }
        }
        Ok(Self {
            entries,
            pos: node.pos(),
        })
    }

    fn get(&self, key: &str) -> Option<&'a Node> {
        self.entries.iter().find(|e| e.key == key).map(|e| &e.value)
    }

    fn require(&self, key: &str, what: &str) -> Result<&'a Node, ParseError> {
        self.get(key)
            .ok_or_else(|| ParseError::at(self.pos, format!("{what} is missing `{key}`")))
    }
}

fn parse_value(node: &Node) -> Result<ValueExpr, ParseError> {
    let s = as_str(node, "value")?;
    ValueExpr::parse(s).map_err(|e| ParseError::at(node.pos(), e.to_string()))
}

fn parse_trigger(node: &Node) -> Result<Trigger, ParseError> {
    let f = Fields::new(node, "trigger", &["event", "table", "condition", "schedule"])?;
    let event_node = f.require("event", "trigger")?;
    let event: EventKind = as_str(event_node, "event")?
        .parse()
        .map_err(|e: String| ParseError::at(event_node.pos(), e))?;
    let table = f
        .get("table")
        .map(|n| as_str(n, "table").map(str::to_owned))
        .transpose()?;
    let schedule = f
        .get("schedule")
        .map(|n| as_str(n, "schedule").map(str::to_owned))
        .transpose()?;
    let condition = match f.get("condition") {
        Some(n) => {
            let s = as_str(n, "condition")?;
            Some(ConditionExpr::parse(s).map_err(|e| ParseError::at(n.pos(), e.to_string()))?)
        }
        None => None,
    };
    match event {
        EventKind::Scheduled => {
            if schedule.is_none() {
                return Err(ParseError::at(f.pos, "scheduled trigger requires `schedule`"));
            }
            if table.is_some() {
                return Err(ParseError::at(f.pos, "scheduled trigger takes no `table`"));
            }
        }
        _ => {
            if table.is_none() {
                return Err(ParseError::at(f.pos, format!("{event} trigger requires `table`")));
            }
            if schedule.is_some() {
                return Err(ParseError::at(f.pos, "`schedule` is only valid for scheduled triggers"));
            }
        }
    }
    Ok(Trigger {
        event,
        table,
        condition,
        schedule,
    })
}

fn parse_input_list(node: &Node) -> Result<Vec<StepInput>, ParseError> {
    as_seq(node, "inputs")?
        .iter()
        .map(|item| {
            let f = Fields::new(item, "input", &["name", "value"])?;
            let name = as_str(f.require("name", "input")?, "input name")?.to_owned();
            let value = parse_value(f.require("value", "input")?)?;
            Ok(StepInput { name, value })
        })
        .collect()
}

fn parse_step(node: &Node) -> Result<Step, ParseError> {
    let f = Fields::new(node, "step", &["name", "annotation", "order", "block", "inputs"])?;
    let name = as_str(f.require("name", "step")?, "step name")?.to_owned();
    let annotation = f
        .get("annotation")
        .map(|n| as_str(n, "annotation").map(str::to_owned))
        .transpose()?
        .unwrap_or_default();
    let order_node = f.require("order", "step")?;
    let order = as_u32(order_node, "order")?;
    if order == 0 {
        return Err(ParseError::at(order_node.pos(), "order must be positive"));
    }
    let block = f.get("block").map(|n| as_u32(n, "block")).transpose()?.unwrap_or(0);
    let inputs = f.get("inputs").map(parse_input_list).transpose()?.unwrap_or_default();
    Ok(Step {
        name,
        annotation,
        order,
        block,
        inputs,
    })
}

/// Parses a workflow document.
pub fn parse_workflow(text: &str) -> Result<Workflow, ParseError> {
    let root = reader::read(text)?;
    let f = Fields::new(&root, "document", &["requirement", "trigger", "steps"])?;
    let requirement = f
        .get("requirement")
        .map(|n| as_str(n, "requirement").map(str::to_owned))
        .transpose()?
        .unwrap_or_default();
    let trigger = parse_trigger(f.require("trigger", "document")?)?;
    let mut steps = Vec::new();
    let mut seen = BTreeSet::new();
    if let Some(steps_node) = f.get("steps") {
        for item in as_seq(steps_node, "steps")? {
            let step = parse_step(item)?;
            if !seen.insert(step.order) {
                return Err(ParseError::DuplicateOrder {
                    order: step.order,
                    line: item.pos().line,
                });
            }
            steps.push(step);
        }
    }
    Ok(Workflow {
        requirement,
        trigger,
        steps,
    })
}

/// Parses an outline document: a workflow document whose steps have no inputs.
pub fn parse_outline(text: &str) -> Result<Outline, ParseError> {
    let w = parse_workflow(text)?;
    if let Some(s) = w.steps.iter().find(|s| !s.inputs.is_empty()) {
        return Err(ParseError::Syntax {
            line: 0,
            column: 0,
            message: format!("outline step {} must not carry inputs", s.order),
        });
    }
    Ok(w.extract_outline())
}

/// Parses a bare input list, the output of the input-population sub-task.
pub fn parse_inputs(text: &str) -> Result<Vec<StepInput>, ParseError> {
    if text.trim().is_empty() || text.trim() == "[]" {
        return Ok(Vec::new());
    }
    parse_input_list(&reader::read(text)?)
}

fn is_plain_name(s: &str) -> bool {
    !s.is_empty()
        && s.bytes()
            .all(|b| b.is_ascii_alphanumeric() || b == b'_' || b == b'-' || b == b'.')
        && !s.starts_with('-')
}

fn name(s: &str) -> String {
    if is_plain_name(s) {
        s.to_owned()
    } else {
        quote(s)
    }
}

fn write_trigger(out: &mut String, t: &Trigger) {
    out.push_str("trigger:\n");
    out.push_str(&format!("  event: {}\n", t.event));
    if let Some(table) = &t.table {
        out.push_str(&format!("  table: {}\n", name(table)));
    }
    if let Some(c) = &t.condition {
        out.push_str(&format!("  condition: {}\n", quote(&c.encode())));
    }
    if let Some(s) = &t.schedule {
        out.push_str(&format!("  schedule: {}\n", quote(s)));
    }
}

fn write_inputs(out: &mut String, inputs: &[StepInput], indent: usize) {
    let pad = " ".repeat(indent);
    for i in inputs {
        out.push_str(&format!("{pad}- name: {}\n", name(&i.name)));
        out.push_str(&format!("{pad}  value: {}\n", quote(&i.value.encode())));
    }
}

fn write_steps(out: &mut String, steps: &[Step], with_inputs: bool) {
    if steps.is_empty() {
        out.push_str("steps: []\n");
        return;
    }
    out.push_str("steps:\n");
    for s in steps {
        out.push_str(&format!("  - name: {}\n", name(&s.name)));
        if !s.annotation.is_empty() {
            out.push_str(&format!("    annotation: {}\n", quote(&s.annotation)));
        }
        out.push_str(&format!("    order: {}\n", s.order));
        out.push_str(&format!("    block: {}\n", s.block));
        if with_inputs && !s.inputs.is_empty() {
            out.push_str("    inputs:\n");
            write_inputs(out, &s.inputs, 6);
        }
    }
}

/// Canonical serialisation; `parse_workflow(&serialize_workflow(w)) == w`.
pub fn serialize_workflow(w: &Workflow) -> String {
    let mut out = String::new();
    if !w.requirement.is_empty() {
        out.push_str(&format!("requirement: {}\n", quote(&w.requirement)));
    }
    write_trigger(&mut out, &w.trigger);
    write_steps(&mut out, &w.steps, true);
    out
}

/// Outline text: trigger and step headers, no requirement and no inputs.
pub fn serialize_outline(o: &Outline) -> String {
    let mut out = String::new();
    write_trigger(&mut out, &o.trigger);
    let steps: Vec<Step> = o.steps.iter().map(|s| s.to_step()).collect();
    write_steps(&mut out, &steps, false);
    out
}

/// The `trigger:` block of a document.
pub fn serialize_trigger(t: &Trigger) -> String {
    let mut out = String::new();
    write_trigger(&mut out, t);
    out
}

/// One entry of a `steps:` list without inputs. Concatenating the trigger
/// block, `steps:\n` and every step entry yields [`serialize_outline`].
pub fn serialize_outline_step(s: &OutlineStep) -> String {
    let mut out = String::new();
    write_steps(&mut out, &[s.to_step()], false);
    out.split_off("steps:\n".len())
}

/// One entry of an input list. Concatenating the entries of a non-empty list
/// yields [`serialize_inputs`].
pub fn serialize_input(i: &StepInput) -> String {
    let mut out = String::new();
    write_inputs(&mut out, std::slice::from_ref(i), 0);
    out
}

/// A bare input list; `[]` when there are none.
pub fn serialize_inputs(inputs: &[StepInput]) -> String {
    if inputs.is_empty() {
        return "[]\n".to_owned();
    }
    let mut out = String::new();
    write_inputs(&mut out, inputs, 0);
    out
}
