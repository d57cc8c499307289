//! Grounding check for sub-task outputs: artifact names must come from the
//! choices offered at request sites, or from the catalog for fields no site
//! covered.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{SubTask, SubTaskResult};
use crate::catalog::{ArtifactKind, EnvironmentCatalog, OutputSchema, ValueKind, SYS_ID};
use crate::model::{
    parse_inputs, parse_outline, serialize_inputs, serialize_outline, ConditionExpr, Operator, OutputRef, Step,
    StepRef, TableResolver, Template, ValueExpr, Workflow,
};
use crate::retriever::RankedChoices;

/// An artifact token that was not offered.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Offense {
    pub kind: ArtifactKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scope: Option<String>,
    pub token: String,
    /// Where the token sits, e.g. `step 2 name` or `input table`.
    pub location: String,
}

impl fmt::Display for Offense {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} `{}` at {}", self.kind, self.token, self.location)?;
        if let Some(s) = &self.scope {
            write!(f, " (scope {s})")?;
        }
        Ok(())
    }
}

/// What repair mode did about one offense. `replacement` is `None` when the
/// offending input or conjunct was dropped.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Repair {
    pub offense: Offense,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replacement: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConstraintViolation {
    #[error("{} ungrounded token(s): {}", .0.len(), list(.0))]
    Offending(Vec<Offense>),
    #[error("output does not parse: {0}")]
    Unparsable(String),
}

fn list(offenses: &[Offense]) -> String {
    offenses.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

enum Verdict {
    Keep,
    Replace(String),
    Drop,
}

struct Checker<'a> {
    sites: &'a [RankedChoices],
    /// Offset in `output` at which each site's choices were injected.
    anchors: Vec<Option<usize>>,
    output: &'a str,
    /// Search start in `output` for the next token of each kind.
    cursors: HashMap<ArtifactKind, usize>,
    catalog: &'a EnvironmentCatalog,
    repair: bool,
    offenses: Vec<Offense>,
    repairs: Vec<Repair>,
    /// Offenses repair mode could neither replace nor drop.
    stuck: Vec<Offense>,
}

impl Checker<'_> {
    /// Payloads offered for `(kind, scope)`, including `column=value` pairs
    /// offered for the whole table. `None` when no site covered the field.
    fn offered(&self, kind: ArtifactKind, scope: Option<&str>) -> Option<Vec<String>> {
        let mut out: Vec<String> = Vec::new();
        let mut covered = false;
        for s in self
            .sites
            .iter()
            .filter(|s| s.kind == kind && s.scope.as_deref() == scope)
        {
            covered = true;
            out.extend(s.payloads().map(str::to_owned));
        }
        let table_wide = |table: &str| -> Vec<(String, String)> {
            self.sites
                .iter()
                .filter(|s| s.kind == ArtifactKind::ColumnValue && s.scope.as_deref() == Some(table))
                .flat_map(|s| s.payloads())
                .filter_map(|p| p.split_once('=').map(|(c, v)| (c.to_owned(), v.to_owned())))
                .collect()
        };
        match (kind, scope) {
            (ArtifactKind::ColumnName, Some(t)) => {
                for (c, _) in table_wide(t) {
                    covered = true;
                    out.push(c);
                }
            }
            (ArtifactKind::ColumnValue, Some(scope)) => {
                if let Some((t, col)) = scope.split_once('.') {
                    for (c, v) in table_wide(t) {
                        if c == col {
                            covered = true;
                            out.push(v);
                        }
                    }
                }
            }
            _ => {}
        }
        covered.then_some(out)
    }

    /// Where `token` next occurs in the output, advancing the cursor for
    /// its kind.
    fn locate(&mut self, kind: ArtifactKind, token: &str) -> Option<usize> {
        let from = self.cursors.get(&kind).copied().unwrap_or(0);
        let at = from + self.output.get(from..)?.find(token)?;
        self.cursors.insert(kind, at + token.len());
        Some(at)
    }

    /// The top catalog-valid choice of the last covering site injected
    /// before `at`, else the first valid choice offered anywhere.
    fn replacement(&self, kind: ArtifactKind, scope: Option<&str>, at: Option<usize>) -> Option<String> {
        let valid = |p: &&str| self.catalog.contains(kind, p, scope);
        let anchored = at.and_then(|at| {
            self.sites
                .iter()
                .zip(&self.anchors)
                .rfind(|(s, a)| s.kind == kind && s.scope.as_deref() == scope && a.is_some_and(|a| a <= at))
                .and_then(|(s, _)| s.payloads().find(valid).map(str::to_owned))
        });
        anchored.or_else(|| {
            self.offered(kind, scope)
                .into_iter()
                .flatten()
                .find(|p| self.catalog.contains(kind, p, scope))
        })
    }

    fn check(&mut self, kind: ArtifactKind, scope: Option<&str>, token: &str, location: String) -> Verdict {
        let at = self.locate(kind, token);
        if kind == ArtifactKind::ColumnName && token == SYS_ID && self.catalog.contains(kind, token, scope) {
            return Verdict::Keep;
        }
        let ok = match self.offered(kind, scope) {
            Some(o) => o.iter().any(|p| p == token),
            None => self.catalog.contains(kind, token, scope),
        };
        if ok {
            return Verdict::Keep;
        }
        self.offend(kind, scope, token, location, at)
    }

    /// Like [`Checker::check`] but for fields no site is asked for, such as
    /// columns inside reference paths: any catalog column passes.
    fn check_known(&mut self, kind: ArtifactKind, scope: Option<&str>, token: &str, location: String) -> Verdict {
        let at = self.locate(kind, token);
        if self.catalog.contains(kind, token, scope) {
            return Verdict::Keep;
        }
        self.offend(kind, scope, token, location, at)
    }

    fn offend(
        &mut self,
        kind: ArtifactKind,
        scope: Option<&str>,
        token: &str,
        location: String,
        at: Option<usize>,
    ) -> Verdict {
        let offense = Offense {
            kind,
            scope: scope.map(str::to_owned),
            token: token.to_owned(),
            location,
        };
        if !self.repair {
            self.offenses.push(offense);
            return Verdict::Keep;
        }
        let top = self.replacement(kind, scope, at);
        self.repairs.push(Repair {
            offense,
            replacement: top.clone(),
        });
        match top {
            Some(t) => Verdict::Replace(t),
            None => Verdict::Drop,
        }
    }

    /// Checks columns and enum values of `cond` against `table`; returns
    /// whether anything changed.
    fn condition(&mut self, cond: &mut ConditionExpr, table: &str, location: &str) -> bool {
        let mut changed = false;
        let mut kept = Vec::new();
        for mut c in std::mem::take(&mut cond.conjuncts) {
            match self.check(
                ArtifactKind::ColumnName,
                Some(table),
                &c.column,
                format!("{location} column"),
            ) {
                Verdict::Keep => {}
                Verdict::Replace(col) => {
                    c.column = col;
                    changed = true;
                }
                Verdict::Drop => {
                    changed = true;
                    continue;
                }
            }
            let enumerated = self
                .catalog
                .column(table, &c.column)
                .is_some_and(|d| !d.values.is_empty());
            if let (true, Operator::Eq | Operator::Neq, Some(v)) = (enumerated, c.op, c.literal_operand()) {
                let scope = format!("{table}.{}", c.column);
                match self.check(ArtifactKind::ColumnValue, Some(&scope), &v, format!("{location} value")) {
                    Verdict::Keep => {}
                    Verdict::Replace(nv) => {
                        c.operand = Some(Template::text(nv));
                        changed = true;
                    }
                    Verdict::Drop => {
                        changed = true;
                        continue;
                    }
                }
            }
            kept.push(c);
        }
        cond.conjuncts = kept;
        changed
    }
}

/// Checks every artifact-valued token of `result` against the choices
/// injected at its request sites. In repair mode offending tokens are
/// replaced by the top offered choice, or dropped when nothing was offered;
/// the repairs are recorded on the result. Otherwise any offense is an error.
pub fn constrain_output(
    mut result: SubTaskResult,
    sites: &[RankedChoices],
    catalog: &EnvironmentCatalog,
    repair: bool,
) -> Result<SubTaskResult, ConstraintViolation> {
    let anchors = sites
        .iter()
        .enumerate()
        .map(|(i, site)| {
            let inj = result.state.injected.get(i)?;
            (inj.choices == *site).then_some(inj.at)
        })
        .collect();
    let output = result.output.clone();
    let mut ck = Checker {
        sites,
        anchors,
        output: &output,
        cursors: HashMap::new(),
        catalog,
        repair,
        offenses: Vec::new(),
        repairs: Vec::new(),
        stuck: Vec::new(),
    };
    let rewritten = match result.sub_task {
        SubTask::CreateFlow => constrain_outline(&mut ck, &result.output)?,
        SubTask::PopulateInputs => constrain_inputs(&mut ck, &result)?,
    };
    if !ck.offenses.is_empty() {
        return Err(ConstraintViolation::Offending(ck.offenses));
    }
    if !ck.stuck.is_empty() {
        return Err(ConstraintViolation::Offending(ck.stuck));
    }
    if let Some(out) = rewritten {
        result.output = out;
    }
    result.repairs.extend(ck.repairs);
    Ok(result)
}

fn constrain_outline(ck: &mut Checker<'_>, output: &str) -> Result<Option<String>, ConstraintViolation> {
    let mut outline = parse_outline(output).map_err(|e| ConstraintViolation::Unparsable(e.to_string()))?;
    let mut changed = false;
    if let Some(table) = outline.trigger.table.clone() {
        match ck.check(ArtifactKind::TableName, None, &table, "trigger table".into()) {
            Verdict::Keep => {}
            Verdict::Replace(t) => {
                outline.trigger.table = Some(t);
                changed = true;
            }
            Verdict::Drop => ck.stuck.extend(ck.repairs.pop().map(|r| r.offense)),
        }
    }
    if let (Some(table), Some(mut cond)) = (outline.trigger.table.clone(), outline.trigger.condition.take()) {
        if ck.catalog.table(&table).is_some() {
            changed |= ck.condition(&mut cond, &table, "trigger condition");
        }
        if !cond.conjuncts.is_empty() {
            outline.trigger.condition = Some(cond);
        }
    }
    for s in &mut outline.steps {
        match ck.check(ArtifactKind::StepName, None, &s.name, format!("step {} name", s.order)) {
            Verdict::Keep => {}
            Verdict::Drop => ck.stuck.extend(ck.repairs.pop().map(|r| r.offense)),
            Verdict::Replace(n) => {
                s.name = n;
                changed = true;
            }
        }
    }
    Ok(changed.then(|| serialize_outline(&outline)))
}

fn constrain_inputs(ck: &mut Checker<'_>, result: &SubTaskResult) -> Result<Option<String>, ConstraintViolation> {
    let unparsable = |e: &dyn fmt::Display| ConstraintViolation::Unparsable(e.to_string());
    let inputs = parse_inputs(&result.output).map_err(|e| unparsable(&e))?;
    let Some(target) = result.state.target.as_ref() else {
        return Err(ConstraintViolation::Unparsable(
            "populate result without a target step".into(),
        ));
    };
    let Some(def) = ck.catalog.step(&target.name) else {
        return Ok(None);
    };
    let mut changed = false;
    let mut step: Step = target.to_step();

    // Input names and tables first so that column scopes are final.
    for mut input in inputs {
        let Some(decl) = def.input(&input.name) else {
            let offense = Offense {
                kind: ArtifactKind::StepName,
                scope: Some(def.name.clone()),
                token: input.name.clone(),
                location: "input name".into(),
            };
            if ck.repair {
                ck.repairs.push(Repair {
                    offense,
                    replacement: None,
                });
                changed = true;
            } else {
                ck.offenses.push(offense);
            }
            continue;
        };
        if decl.kind == ValueKind::Table {
            if let Some(t) = input.value.as_literal().map(str::to_owned) {
                match ck.check(ArtifactKind::TableName, None, &t, format!("input {}", input.name)) {
                    Verdict::Keep => {}
                    Verdict::Replace(nt) => {
                        input.value = ValueExpr::literal(nt);
                        changed = true;
                    }
                    Verdict::Drop => {
                        changed = true;
                        continue;
                    }
                }
            }
        }
        step.inputs.push(input);
    }

    let w = result.state.working_workflow(&step).map_err(|e| unparsable(&e))?;
    let table = TableResolver::new(&w, ck.catalog).step_table(step.order);
    if let Some(table) = table {
        let mut kept = Vec::new();
        for mut input in std::mem::take(&mut step.inputs) {
            let kind = def.input(&input.name).map(|d| d.kind);
            let location = format!("input {}", input.name);
            match (kind, &mut input.value) {
                (Some(ValueKind::Column), ValueExpr::Literal(col)) => {
                    match ck.check(ArtifactKind::ColumnName, Some(&table), col, location) {
                        Verdict::Keep => {}
                        Verdict::Replace(nc) => {
                            *col = nc;
                            changed = true;
                        }
                        Verdict::Drop => {
                            changed = true;
                            continue;
                        }
                    }
                }
                (_, ValueExpr::Condition(cond)) => {
                    changed |= ck.condition(cond, &table, &location);
                    if cond.conjuncts.is_empty() {
                        continue;
                    }
                }
                _ => {}
            }
            kept.push(input);
        }
        step.inputs = kept;
    }

    let resolver = TableResolver::new(&w, ck.catalog);
    ck.cursors.remove(&ArtifactKind::ColumnName);
    let mut kept = Vec::new();
    'inputs: for mut input in std::mem::take(&mut step.inputs) {
        let location = format!("input {} reference", input.name);
        for r in input.value.refs_mut() {
            let Some(mut table) = ref_table(&w, ck.catalog, &resolver, r) else {
                continue;
            };
            for i in 1..r.path.len() {
                match ck.check_known(ArtifactKind::ColumnName, Some(&table), &r.path[i], location.clone()) {
                    Verdict::Keep => {}
                    Verdict::Replace(col) => {
                        r.path[i] = col;
                        changed = true;
                    }
                    Verdict::Drop => {
                        changed = true;
                        continue 'inputs;
                    }
                }
                match ck.catalog.column(&table, &r.path[i]).and_then(|c| c.reference.clone()) {
                    Some(next) => table = next,
                    None => break,
                }
            }
        }
        kept.push(input);
    }
    step.inputs = kept;
    Ok(changed.then(|| serialize_inputs(&step.inputs)))
}

/// Table of the record a reference starts from, when it is a record.
fn ref_table(
    w: &Workflow,
    catalog: &EnvironmentCatalog,
    resolver: &TableResolver<'_>,
    r: &OutputRef,
) -> Option<String> {
    match r.step {
        StepRef::Trigger => (r.output() == "record")
            .then(|| w.trigger.table.clone())
            .flatten()
            .filter(|t| catalog.table(t).is_some()),
        StepRef::Order(n) => {
            let def = catalog.step(&w.step(n)?.name)?;
            def.outputs
                .iter()
                .any(|o| o.name == r.output() && o.schema == OutputSchema::Record)
                .then(|| resolver.step_table(n))
                .flatten()
        }
    }
}
