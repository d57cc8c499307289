//! The workflow DSL: domain types, canonical text form and validation.

mod condition;
mod dsl;
mod reader;
mod validate;
mod value;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use condition::{ConditionExpr, Conjunct, Operator};
pub use dsl::{
    parse_inputs, parse_outline, parse_workflow, serialize_input, serialize_inputs, serialize_outline,
    serialize_outline_step, serialize_trigger, serialize_workflow, ParseError,
};
pub(crate) use validate::TableResolver;
pub use validate::{validate_workflow, Location, ValidationReport, Violation, ViolationCode};
pub use value::{OutputRef, Segment, StepRef, Template, ValueError, ValueExpr};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Created,
    Updated,
    Scheduled,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Created => "created",
            EventKind::Updated => "updated",
            EventKind::Scheduled => "scheduled",
        }
    }

    /// Outputs the trigger makes available to later steps.
    pub fn outputs(self) -> &'static [&'static str] {
        match self {
            EventKind::Created | EventKind::Updated => &["record"],
            EventKind::Scheduled => &["run_start_time"],
        }
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EventKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "created" => Ok(EventKind::Created),
            "updated" => Ok(EventKind::Updated),
            "scheduled" => Ok(EventKind::Scheduled),
            other => Err(format!("unknown trigger event `{other}`")),
        }
    }
}

/// Determines when the workflow runs. Record triggers carry a table; scheduled
/// triggers carry a schedule and no table.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Trigger {
    pub event: EventKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub condition: Option<ConditionExpr>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<String>,
}

impl Trigger {
    pub fn record(event: EventKind, table: impl Into<String>) -> Self {
        Self {
            event,
            table: Some(table.into()),
            condition: None,
            schedule: None,
        }
    }

    pub fn scheduled(schedule: impl Into<String>) -> Self {
        Self {
            event: EventKind::Scheduled,
            table: None,
            condition: None,
            schedule: Some(schedule.into()),
        }
    }

    pub fn with_condition(mut self, condition: ConditionExpr) -> Self {
        self.condition = Some(condition);
        self
    }

    /// Short human summary, e.g. `created incident (priority=1)`.
    pub fn summary(&self) -> String {
        let mut s = self.event.to_string();
        if let Some(t) = &self.table {
            s.push(' ');
            s.push_str(t);
        }
        if let Some(sch) = &self.schedule {
            s.push(' ');
            s.push_str(sch);
        }
        if let Some(c) = &self.condition {
            s.push_str(&format!(" ({c})"));
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StepInput {
    pub name: String,
    pub value: ValueExpr,
}

impl StepInput {
    pub fn new(name: impl Into<String>, value: ValueExpr) -> Self {
        Self {
            name: name.into(),
            value,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Step {
    pub name: String,
    #[serde(default)]
    pub annotation: String,
    pub order: u32,
    /// Order of the enclosing flow-control step; 0 at top level.
    #[serde(default)]
    pub block: u32,
    #[serde(default)]
    pub inputs: Vec<StepInput>,
}

impl Step {
    pub fn new(name: impl Into<String>, order: u32) -> Self {
        Self {
            name: name.into(),
            annotation: String::new(),
            order,
            block: 0,
            inputs: Vec::new(),
        }
    }

    pub fn annotated(mut self, annotation: impl Into<String>) -> Self {
        self.annotation = annotation.into();
        self
    }

    pub fn in_block(mut self, block: u32) -> Self {
        self.block = block;
        self
    }

    pub fn with_input(mut self, name: impl Into<String>, value: ValueExpr) -> Self {
        self.inputs.push(StepInput::new(name, value));
        self
    }

    pub fn input(&self, name: &str) -> Option<&ValueExpr> {
        self.inputs.iter().find(|i| i.name == name).map(|i| &i.value)
    }

    pub fn outline(&self) -> OutlineStep {
        OutlineStep {
            name: self.name.clone(),
            annotation: self.annotation.clone(),
            order: self.order,
            block: self.block,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Workflow {
    #[serde(default)]
    pub requirement: String,
    pub trigger: Trigger,
    #[serde(default)]
    pub steps: Vec<Step>,
}

impl Workflow {
    pub fn new(requirement: impl Into<String>, trigger: Trigger) -> Self {
        Self {
            requirement: requirement.into(),
            trigger,
            steps: Vec::new(),
        }
    }

    pub fn with_step(mut self, step: Step) -> Self {
        self.steps.push(step);
        self
    }

    pub fn step(&self, order: u32) -> Option<&Step> {
        self.steps.iter().find(|s| s.order == order)
    }

    pub fn step_mut(&mut self, order: u32) -> Option<&mut Step> {
        self.steps.iter_mut().find(|s| s.order == order)
    }

    /// Trigger summary plus `(name, annotation, order, block)` per step.
    pub fn extract_outline(&self) -> Outline {
        Outline {
            trigger: self.trigger.clone(),
            steps: self.steps.iter().map(Step::outline).collect(),
        }
    }
}

/// Step header without inputs.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct OutlineStep {
    pub name: String,
    #[serde(default)]
    pub annotation: String,
    pub order: u32,
    #[serde(default)]
    pub block: u32,
}

impl OutlineStep {
    pub fn to_step(&self) -> Step {
        Step {
            name: self.name.clone(),
            annotation: self.annotation.clone(),
            order: self.order,
            block: self.block,
            inputs: Vec::new(),
        }
    }
}

/// The workflow skeleton produced by the outline sub-task.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Outline {
    pub trigger: Trigger,
    pub steps: Vec<OutlineStep>,
}

impl Outline {
    /// Number of rows: the trigger plus one per step.
    pub fn rows(&self) -> usize {
        self.steps.len() + 1
    }

    pub fn step(&self, order: u32) -> Option<&OutlineStep> {
        self.steps.iter().find(|s| s.order == order)
    }

    /// A workflow with every step present and no inputs.
    pub fn to_workflow(&self, requirement: impl Into<String>) -> Workflow {
        Workflow {
            requirement: requirement.into(),
            trigger: self.trigger.clone(),
            steps: self.steps.iter().map(OutlineStep::to_step).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn outline_of_trigger_only_workflow_has_one_row() {
        let w = Workflow::new("", Trigger::record(EventKind::Created, "incident"));
        assert_eq!(w.extract_outline().rows(), 1);
    }

    #[test]
    fn outline_of_long_workflow_preserves_order() {
        let mut w = Workflow::new("", Trigger::scheduled("daily"));
        for i in 1..=25 {
            w = w.with_step(Step::new("log_message", i).annotated(format!("log {i}")));
        }
        let o = w.extract_outline();
        assert_eq!(o.rows(), 26);
        assert!(o.steps.windows(2).all(|p| p[0].order < p[1].order));
        assert!(o.steps.iter().all(|s| !s.annotation.is_empty()));
    }
}
