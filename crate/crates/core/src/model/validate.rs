//! Catalog-aware validation of a parsed workflow.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{EventKind, OutputRef, StepRef, ValueExpr, Workflow};
use crate::catalog::{EnvironmentCatalog, OutputSchema, ValueKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ViolationCode {
    UnknownStep,
    UnknownTable,
    UnknownColumn,
    ForwardRef,
    BadBlock,
    OrderGap,
    UnknownInputName,
    MissingRequiredInput,
    BadOutputPath,
}

impl ViolationCode {
    pub const ALL: [ViolationCode; 9] = [
        ViolationCode::UnknownStep,
        ViolationCode::UnknownTable,
        ViolationCode::UnknownColumn,
        ViolationCode::ForwardRef,
        ViolationCode::BadBlock,
        ViolationCode::OrderGap,
        ViolationCode::UnknownInputName,
        ViolationCode::MissingRequiredInput,
        ViolationCode::BadOutputPath,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ViolationCode::UnknownStep => "UNKNOWN_STEP",
            ViolationCode::UnknownTable => "UNKNOWN_TABLE",
            ViolationCode::UnknownColumn => "UNKNOWN_COLUMN",
            ViolationCode::ForwardRef => "FORWARD_REF",
            ViolationCode::BadBlock => "BAD_BLOCK",
            ViolationCode::OrderGap => "ORDER_GAP",
            ViolationCode::UnknownInputName => "UNKNOWN_INPUT_NAME",
            ViolationCode::MissingRequiredInput => "MISSING_REQUIRED_INPUT",
            ViolationCode::BadOutputPath => "BAD_OUTPUT_PATH",
        }
    }
}

impl fmt::Display for ViolationCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Where a violation sits: the trigger (no order), a step, or one of its inputs.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Location {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub order: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input: Option<String>,
}

impl Location {
    pub fn trigger() -> Self {
        Self::default()
    }

    pub fn step(order: u32) -> Self {
        Self {
            order: Some(order),
            input: None,
        }
    }

    pub fn input(order: u32, input: impl Into<String>) -> Self {
        Self {
            order: Some(order),
            input: Some(input.into()),
        }
    }
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (&self.order, &self.input) {
            (None, _) => f.write_str("trigger"),
            (Some(o), None) => write!(f, "step {o}"),
            (Some(o), Some(i)) => write!(f, "step {o} input `{i}`"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub code: ViolationCode,
    pub location: Location,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} at {}: {}", self.code, self.location, self.message)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn codes(&self) -> BTreeSet<ViolationCode> {
        self.violations.iter().map(|v| v.code).collect()
    }

    pub fn count(&self, code: ViolationCode) -> usize {
        self.violations.iter().filter(|v| v.code == code).count()
    }

    fn push(&mut self, code: ViolationCode, location: Location, message: String) {
        self.violations.push(Violation {
            code,
            location,
            message,
        });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_valid() {
            return f.write_str("valid");
        }
        for v in &self.violations {
            writeln!(f, "{v}")?;
        }
        Ok(())
    }
}

/// Resolves which table a step or output reference is about.
pub(crate) struct TableResolver<'a> {
    workflow: &'a Workflow,
    catalog: &'a EnvironmentCatalog,
}

impl<'a> TableResolver<'a> {
    pub(crate) fn new(workflow: &'a Workflow, catalog: &'a EnvironmentCatalog) -> Self {
        Self { workflow, catalog }
    }

    /// The table a step's conditions and columns are interpreted against: its
    /// table input, else the table of the record its reference input points at.
    pub(crate) fn step_table(&self, order: u32) -> Option<String> {
        self.step_table_depth(order, 0)
    }

    fn step_table_depth(&self, order: u32, depth: usize) -> Option<String> {
        if depth > self.workflow.steps.len() {
            return None;
        }
        let step = self.workflow.step(order)?;
        let def = self.catalog.step(&step.name)?;
        if let Some(decl) = def.table_input() {
            let t = step.input(&decl.name)?.as_literal()?;
            return self.catalog.table(t).map(|t| t.name.clone());
        }
        let decl = def.inputs.iter().find(|i| i.kind == ValueKind::Reference)?;
        match step.input(&decl.name)? {
            ValueExpr::Ref(r) => self.ref_table_depth(r, depth + 1),
            _ => None,
        }
    }

    /// The table of the record(s) an output reference denotes, following
    /// reference columns along the path.
    pub(crate) fn ref_table(&self, r: &OutputRef) -> Option<String> {
        self.ref_table_depth(r, 0)
    }

    fn ref_table_depth(&self, r: &OutputRef, depth: usize) -> Option<String> {
        let (mut table, schema) = self.output_base(r, depth)?;
        if schema == OutputSchema::Scalar {
            return None;
        }
        for col in r.path.iter().skip(1) {
            table = self.catalog.column(&table, col)?.reference.clone()?;
        }
        Some(table)
    }

    /// Table and schema of the referenced output itself (first path segment).
    fn output_base(&self, r: &OutputRef, depth: usize) -> Option<(String, OutputSchema)> {
        match r.step {
            StepRef::Trigger => {
                let t = &self.workflow.trigger;
                if t.event == EventKind::Scheduled || r.output() != "record" {
                    return None;
                }
                Some((
                    self.catalog.table(t.table.as_deref()?)?.name.clone(),
                    OutputSchema::Record,
                ))
            }
            StepRef::Order(n) => {
                let step = self.workflow.step(n)?;
                let out = self.catalog.step(&step.name)?.output(r.output())?;
                Some((self.step_table_depth(n, depth + 1)?, out.schema))
            }
        }
    }
}

/// Checks a workflow against its structural invariants and the catalog.
pub fn validate_workflow(w: &Workflow, catalog: &EnvironmentCatalog) -> ValidationReport {
    let mut report = ValidationReport::default();
    let resolver = TableResolver::new(w, catalog);
    validate_trigger(w, catalog, &mut report);

    for (i, step) in w.steps.iter().enumerate() {
        if step.order != i as u32 + 1 {
            report.push(
                ViolationCode::OrderGap,
                Location::step(step.order),
                format!("step at position {} has order {}", i + 1, step.order),
            );
            break;
        }
    }

    for step in &w.steps {
        let loc = Location::step(step.order);
        if step.block != 0 {
            let parent = w.step(step.block).filter(|p| p.order < step.order);
            match parent {
                None => report.push(
                    ViolationCode::BadBlock,
                    loc.clone(),
                    format!("block {} is not an earlier step", step.block),
                ),
                Some(p) => {
                    if let Some(def) = catalog.step(&p.name) {
                        if !def.flow_control {
                            report.push(
                                ViolationCode::BadBlock,
                                loc.clone(),
                                format!("block parent `{}` is not a flow-control step", p.name),
                            );
                        }
                    }
                }
            }
        }

        let Some(def) = catalog.step(&step.name) else {
            report.push(
                ViolationCode::UnknownStep,
                loc,
                format!("no step named `{}`", step.name),
            );
            continue;
        };

        let mut seen = BTreeSet::new();
        for input in &step.inputs {
            let iloc = Location::input(step.order, &input.name);
            if !seen.insert(input.name.as_str()) {
                report.push(
                    ViolationCode::UnknownInputName,
                    iloc,
                    format!("input `{}` given twice", input.name),
                );
                continue;
            }
            let Some(decl) = def.input(&input.name) else {
                report.push(
                    ViolationCode::UnknownInputName,
                    iloc,
                    format!("`{}` declares no input `{}`", step.name, input.name),
                );
                continue;
            };
            check_refs(w, catalog, &resolver, step.order, &input.value, &iloc, &mut report);
            match decl.kind {
                ValueKind::Table => match input.value.as_literal() {
                    Some(t) if catalog.table(t).is_some() => {}
                    _ => report.push(ViolationCode::UnknownTable, iloc, format!("no table `{}`", input.value)),
                },
                ValueKind::Column => {
                    if let Some(table) = resolver.step_table(step.order) {
                        match input.value.as_literal() {
                            Some(c) if catalog.column(&table, c).is_some() => {}
                            _ => report.push(
                                ViolationCode::UnknownColumn,
                                iloc,
                                format!("no column `{}` on `{table}`", input.value),
                            ),
                        }
                    }
                }
                ValueKind::Condition => {
                    if let Some(table) = resolver.step_table(step.order) {
                        check_condition_columns(catalog, &table, &input.value, &iloc, &mut report);
                    }
                }
                ValueKind::Reference | ValueKind::Text | ValueKind::EmailBody => {}
            }
        }
        for decl in def.inputs.iter().filter(|d| d.required) {
            if step.input(&decl.name).is_none() {
                report.push(
                    ViolationCode::MissingRequiredInput,
                    Location::input(step.order, &decl.name),
                    format!("`{}` requires input `{}`", step.name, decl.name),
                );
            }
        }
    }
    report
}

fn validate_trigger(w: &Workflow, catalog: &EnvironmentCatalog, report: &mut ValidationReport) {
    let t = &w.trigger;
    if t.event == EventKind::Scheduled {
        return;
    }
    let Some(name) = t.table.as_deref() else {
        report.push(
            ViolationCode::UnknownTable,
            Location::trigger(),
            "record trigger without a table".into(),
        );
        return;
    };
    if catalog.table(name).is_none() {
        report.push(
            ViolationCode::UnknownTable,
            Location::trigger(),
            format!("no table `{name}`"),
        );
        return;
    }
    if let Some(c) = &t.condition {
        let value = ValueExpr::Condition(c.clone());
        check_condition_columns(catalog, name, &value, &Location::trigger(), report);
        for r in value.refs() {
            report.push(
                ViolationCode::ForwardRef,
                Location::trigger(),
                format!("trigger condition cannot reference {r}"),
            );
        }
    }
}

fn check_condition_columns(
    catalog: &EnvironmentCatalog,
    table: &str,
    value: &ValueExpr,
    loc: &Location,
    report: &mut ValidationReport,
) {
    let Some(cond) = value.as_condition() else {
        report.push(
            ViolationCode::UnknownColumn,
            loc.clone(),
            format!("`{value}` is not a condition"),
        );
        return;
    };
    for cj in &cond.conjuncts {
        if catalog.column(table, &cj.column).is_none() {
            report.push(
                ViolationCode::UnknownColumn,
                loc.clone(),
                format!("no column `{}` on `{table}`", cj.column),
            );
        }
    }
}

fn check_refs(
    w: &Workflow,
    catalog: &EnvironmentCatalog,
    resolver: &TableResolver<'_>,
    order: u32,
    value: &ValueExpr,
    loc: &Location,
    report: &mut ValidationReport,
) {
    for r in value.refs() {
        let (outputs, base_table): (Vec<(String, OutputSchema)>, Option<String>) = match r.step {
            StepRef::Trigger => {
                let schema = |o: &str| {
                    if o == "record" {
                        OutputSchema::Record
                    } else {
                        OutputSchema::Scalar
                    }
                };
                let outs = w
                    .trigger
                    .event
                    .outputs()
                    .iter()
                    .map(|o| (o.to_string(), schema(o)))
                    .collect();
                let table = w.trigger.table.clone().filter(|t| catalog.table(t).is_some());
                (outs, table)
            }
            StepRef::Order(n) => {
                if n >= order {
                    report.push(
                        ViolationCode::ForwardRef,
                        loc.clone(),
                        format!("{r} does not refer to an earlier step"),
                    );
                    continue;
                }
                let Some(target) = w.step(n) else {
                    report.push(ViolationCode::BadOutputPath, loc.clone(), format!("{r}: no step {n}"));
                    continue;
                };
                let Some(def) = catalog.step(&target.name) else {
                    continue;
                };
                let outs = def.outputs.iter().map(|o| (o.name.clone(), o.schema)).collect();
                (outs, resolver.step_table(n))
            }
        };
        let Some((_, schema)) = outputs.iter().find(|(name, _)| name == r.output()) else {
            report.push(
                ViolationCode::BadOutputPath,
                loc.clone(),
                format!("{r}: no output `{}`", r.output()),
            );
            continue;
        };
        let rest = &r.path[1..];
        if rest.is_empty() {
            continue;
        }
        if *schema != OutputSchema::Record {
            report.push(
                ViolationCode::BadOutputPath,
                loc.clone(),
                format!("{r}: output `{}` has no fields", r.output()),
            );
            continue;
        }
        let Some(mut table) = base_table else {
            continue;
        };
        for (i, col) in rest.iter().enumerate() {
            let Some(c) = catalog.column(&table, col) else {
                report.push(
                    ViolationCode::BadOutputPath,
                    loc.clone(),
                    format!("{r}: no column `{col}` on `{table}`"),
                );
                break;
            };
            if i + 1 < rest.len() {
                match &c.reference {
                    Some(next) => table = next.clone(),
                    None => {
                        report.push(
                            ViolationCode::BadOutputPath,
                            loc.clone(),
                            format!("{r}: `{col}` is not a reference column"),
                        );
                        break;
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::CatalogDocument;
    use crate::model::{parse_workflow, StepInput};

    const STEPS: &str = r#"
- name: look_up_record
  inputs:
    - { name: table, kind: table }
    - { name: conditions, kind: condition }
  outputs:
    - { name: record, schema: record }
- name: IF
  flow_control: true
  inputs:
    - { name: record, kind: reference }
    - { name: condition, kind: condition }
- name: send_email
  inputs:
    - { name: to, kind: reference }
    - { name: subject, kind: text, required: false }
"#;

    const TABLES: &str = r#"
- name: incident
  columns:
    - { name: priority, values: [ { value: "1", label: "1 - Critical" } ] }
    - { name: assigned_to, reference: sys_user }
- name: sys_user
  columns:
    - { name: manager, reference: sys_user }
    - { name: email }
"#;

    const DOC: &str = r#"requirement: "r"
trigger:
  event: created
  table: incident
  condition: "priority=1"
steps:
  - name: look_up_record
    order: 1
    block: 0
    inputs:
      - name: table
        value: "sys_user"
      - name: conditions
        value: "sys_id={{trigger.record.assigned_to}}"
  - name: IF
    order: 2
    block: 0
    inputs:
      - name: record
        value: "{{1.record}}"
      - name: condition
        value: "managerISNOTEMPTY"
  - name: send_email
    order: 3
    block: 2
    inputs:
      - name: to
        value: "{{1.record.manager}}"
"#;

    fn catalog() -> EnvironmentCatalog {
        EnvironmentCatalog::from_documents(
            &[CatalogDocument::new("s", STEPS)],
            &[CatalogDocument::new("t", TABLES)],
        )
        .unwrap()
    }

    fn codes(w: &Workflow) -> Vec<ViolationCode> {
        validate_workflow(w, &catalog())
            .violations
            .iter()
            .map(|v| v.code)
            .collect()
    }

    #[test]
    fn valid_document_has_empty_report() {
        let w = parse_workflow(DOC).unwrap();
        let r = validate_workflow(&w, &catalog());
        assert!(r.is_valid(), "{r}");
    }

    #[test]
    fn typo_in_step_name() {
        let mut w = parse_workflow(DOC).unwrap();
        w.steps[2].name = "send_emial".into();
        assert_eq!(codes(&w), [ViolationCode::UnknownStep]);
    }

    #[test]
    fn forward_reference() {
        let mut w = parse_workflow(DOC).unwrap();
        w.steps[1].inputs[0].value = ValueExpr::Ref(OutputRef::step(2, "record"));
        assert_eq!(codes(&w), [ViolationCode::ForwardRef]);
    }

    #[test]
    fn block_must_be_flow_control() {
        let mut w = parse_workflow(DOC).unwrap();
        w.steps[2].block = 1;
        assert_eq!(codes(&w), [ViolationCode::BadBlock]);
        w.steps[2].block = 3;
        assert_eq!(codes(&w), [ViolationCode::BadBlock]);
    }

    #[test]
    fn order_gap_reported_once() {
        let mut w = parse_workflow(DOC).unwrap();
        w.steps.remove(0);
        let c = codes(&w);
        assert!(c.contains(&ViolationCode::OrderGap));
        assert_eq!(c.iter().filter(|c| **c == ViolationCode::OrderGap).count(), 1);
    }

    #[test]
    fn unknown_table_skips_column_checks() {
        let mut w = parse_workflow(DOC).unwrap();
        w.steps[0].inputs[0].value = ValueExpr::literal("userz");
        assert_eq!(codes(&w), [ViolationCode::UnknownTable]);
    }

    #[test]
    fn unknown_column_in_condition_and_path() {
        let mut w = parse_workflow(DOC).unwrap();
        w.steps[1].inputs[1].value = ValueExpr::parse("bossISNOTEMPTY").unwrap();
        assert_eq!(codes(&w), [ViolationCode::UnknownColumn]);
        let mut w = parse_workflow(DOC).unwrap();
        w.steps[2].inputs[0].value = ValueExpr::Ref(OutputRef::step(1, "record.boss"));
        assert_eq!(codes(&w), [ViolationCode::BadOutputPath]);
        w.steps[2].inputs[0].value = ValueExpr::Ref(OutputRef::step(1, "result"));
        assert_eq!(codes(&w), [ViolationCode::BadOutputPath]);
    }

    #[test]
    fn dot_walking_follows_reference_columns() {
        let mut w = parse_workflow(DOC).unwrap();
        w.steps[2].inputs[0].value = ValueExpr::Ref(OutputRef::trigger("record.assigned_to.manager.email"));
        assert!(codes(&w).is_empty());
        w.steps[2].inputs[0].value = ValueExpr::Ref(OutputRef::trigger("record.priority.email"));
        assert_eq!(codes(&w), [ViolationCode::BadOutputPath]);
    }

    #[test]
    fn input_names() {
        let mut w = parse_workflow(DOC).unwrap();
        w.steps[2].inputs.push(StepInput::new("cc", ValueExpr::literal("x")));
        assert_eq!(codes(&w), [ViolationCode::UnknownInputName]);
        let mut w = parse_workflow(DOC).unwrap();
        w.steps[2].inputs.clear();
        assert_eq!(codes(&w), [ViolationCode::MissingRequiredInput]);
        let mut w = parse_workflow(DOC).unwrap();
        let dup = w.steps[2].inputs[0].clone();
        w.steps[2].inputs.push(dup);
        assert_eq!(codes(&w), [ViolationCode::UnknownInputName]);
    }

    #[test]
    fn trigger_table_and_columns() {
        let mut w = parse_workflow(DOC).unwrap();
        w.trigger.table = Some("incidnet".into());
        assert!(codes(&w).contains(&ViolationCode::UnknownTable));
        let mut w = parse_workflow(DOC).unwrap();
        w.trigger.condition = Some(crate::model::ConditionExpr::parse("severity=1").unwrap());
        assert_eq!(codes(&w), [ViolationCode::UnknownColumn]);
    }

    #[test]
    fn resolver_follows_references() {
        let w = parse_workflow(DOC).unwrap();
        let c = catalog();
        let r = TableResolver::new(&w, &c);
        assert_eq!(r.step_table(1).as_deref(), Some("sys_user"));
        assert_eq!(r.step_table(2).as_deref(), Some("sys_user"));
        assert_eq!(
            r.ref_table(&OutputRef::trigger("record.assigned_to")).as_deref(),
            Some("sys_user")
        );
    }
}
