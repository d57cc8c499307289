use super::segment;
use super::ReferenceGenerator;
use crate::catalog::{ArtifactKind, OutputSchema, StepDefinition, ValueKind, SYS_ID};
use crate::model::{
    serialize_input, ConditionExpr, Conjunct, EventKind, Operator, OutputRef, Segment, Step, StepInput, StepRef,
    TableResolver, Template, ValueExpr, Workflow,
};
use crate::protocol::script::{Halt, Script};
use crate::protocol::{GeneratorError, PromptState};

const OBJECT_BOUNDARIES: &[&str] = &[
    " assigned to ",
    " that ",
    " with ",
    " where ",
    " whose ",
    " who ",
    " which ",
    " for ",
    " to ",
    " of ",
    " in ",
    " from ",
    " on ",
    " about ",
];
const LEADING_VERBS: &[&str] = &[
    "look", "up", "find", "get", "fetch", "retrieve", "search", "query", "list", "create", "open", "raise", "make",
    "add", "insert", "delete", "remove", "update", "close", "the", "a", "an", "all", "every", "each", "new",
];
const BODY_CUES: &[&str] = &["remind", "inform", "about", "details", " of the "];

/// A record-valued reference available to the target step.
#[derive(Debug, Clone)]
struct Candidate {
    r: OutputRef,
    table: Option<String>,
    single: bool,
}

/// The object of an action clause, used as the table query: text up to the
/// first preposition or relative marker, without the leading verb.
fn object_phrase(annotation: &str) -> String {
    let padded = format!(" {annotation} ");
    let lower = padded.to_lowercase();
    let cut = OBJECT_BOUNDARIES
        .iter()
        .filter_map(|b| lower.find(b))
        .min()
        .unwrap_or(padded.len());
    let words: Vec<&str> = padded[..cut].split_whitespace().collect();
    let start = words
        .iter()
        .position(|w| !LEADING_VERBS.contains(&w.to_lowercase().as_str()))
        .unwrap_or(words.len());
    let object = words[start..].join(" ");
    if object.is_empty() {
        annotation.to_owned()
    } else {
        object
    }
}

fn parse_fault(e: impl std::fmt::Display) -> Halt {
    GeneratorError::Fault(format!("unreadable prompt state: {e}")).into()
}

fn candidates(gen: &ReferenceGenerator, w: &Workflow, target: u32) -> Vec<Candidate> {
    let resolver = TableResolver::new(w, &gen.catalog);
    let mut out = Vec::new();
    if w.trigger.event != EventKind::Scheduled {
        let r = OutputRef::trigger("record");
        out.push(Candidate {
            table: resolver.ref_table(&r),
            r,
            single: true,
        });
    }
    for step in w.steps.iter().filter(|s| s.order < target) {
        let Some(def) = gen.catalog.step(&step.name) else {
            continue;
        };
        for o in &def.outputs {
            if o.schema == OutputSchema::Scalar {
                continue;
            }
            let r = OutputRef::step(step.order, &o.name);
            out.push(Candidate {
                table: resolver.ref_table(&r),
                r,
                single: o.schema == OutputSchema::Record,
            });
        }
        if def.flow_control {
            out.extend(condition_candidates(gen, def, step, &resolver));
        }
    }
    out
}

/// Reference columns a flow-control step tests for presence, e.g. the
/// manager of the record an `IF` checks.
fn condition_candidates(
    gen: &ReferenceGenerator,
    def: &StepDefinition,
    step: &Step,
    resolver: &TableResolver<'_>,
) -> Vec<Candidate> {
    let Some(ValueExpr::Ref(base)) = def
        .inputs
        .iter()
        .find(|i| i.kind == ValueKind::Reference)
        .and_then(|i| step.input(&i.name))
    else {
        return Vec::new();
    };
    let Some(table) = resolver.ref_table(base) else {
        return Vec::new();
    };
    let mut out = Vec::new();
    for decl in def.inputs.iter().filter(|i| i.kind == ValueKind::Condition) {
        let Some(cond) = step.input(&decl.name).and_then(ValueExpr::as_condition) else {
            continue;
        };
        for c in cond.conjuncts.iter().filter(|c| c.op == Operator::IsNotEmpty) {
            let Some(target) = gen.catalog.column(&table, &c.column).and_then(|d| d.reference.clone()) else {
                continue;
            };
            let mut r = base.clone();
            r.path.push(c.column.clone());
            out.push(Candidate {
                r,
                table: Some(target),
                single: true,
            });
        }
    }
    out
}

/// Columns of `table` that reference `target`.
fn referencing_columns(gen: &ReferenceGenerator, table: &str, target: &str) -> Vec<String> {
    gen.catalog
        .table(table)
        .map(|t| {
            t.columns
                .iter()
                .filter(|c| c.reference.as_deref() == Some(target))
                .map(|c| c.name.clone())
                .collect()
        })
        .unwrap_or_default()
}

/// Asks for columns of `table` matching `query` and keeps the first one that
/// references `target`.
fn referencing_column<'s>(
    gen: &ReferenceGenerator,
    script: &mut Script<'s>,
    table: &str,
    target: &str,
    query: &str,
) -> Result<Option<String>, Halt> {
    let allowed = referencing_columns(gen, table, target);
    if allowed.is_empty() {
        return Ok(None);
    }
    let cols = script.ask(ArtifactKind::ColumnName, query, Some(table))?;
    Ok(cols
        .payloads()
        .find(|p| allowed.iter().any(|a| a == p))
        .map(str::to_owned))
}

pub(super) fn populate<'s>(
    gen: &ReferenceGenerator,
    state: &'s PromptState,
    script: &mut Script<'s>,
) -> Result<(), Halt> {
    let target = state
        .target
        .as_ref()
        .ok_or_else(|| GeneratorError::Fault("populate state without a target step".into()))?;
    let def = gen
        .catalog
        .step(&target.name)
        .ok_or_else(|| GeneratorError::Fault(format!("unknown step `{}`", target.name)))?;
    let annotation = target.annotation.trim();
    let mut step = target.to_step();

    for decl in &def.inputs {
        let w = state.working_workflow(&step).map_err(parse_fault)?;
        let value = match decl.kind {
            ValueKind::Table => {
                let query = object_phrase(annotation);
                let tables = script.ask(ArtifactKind::TableName, &query, None)?;
                Some(ValueExpr::literal(gen.table_choice(tables, &query)?))
            }
            ValueKind::Column => {
                let table = TableResolver::new(&w, &gen.catalog).step_table(step.order);
                match table {
                    Some(t) => {
                        let cols = script.ask(ArtifactKind::ColumnName, annotation, Some(&t))?;
                        cols.top().map(|c| ValueExpr::literal(c.payload.clone()))
                    }
                    None => None,
                }
            }
            ValueKind::Condition => condition_value(gen, script, &w, &step, def, decl.required, annotation)?,
            ValueKind::Reference => {
                reference_value(gen, script, &w, step.order, decl.reference_table.as_deref(), annotation)?
            }
            ValueKind::Text => (!annotation.is_empty()).then(|| ValueExpr::literal(annotation)),
            ValueKind::EmailBody => {
                let lower = format!(" {} ", annotation.to_lowercase());
                if BODY_CUES.iter().any(|c| lower.contains(c)) {
                    Some(email_body(gen, &w, step.order, annotation))
                } else {
                    None
                }
            }
        };
        if let Some(v) = value {
            let input = StepInput::new(decl.name.clone(), v);
            script.emit(serialize_input(&input));
            step.inputs.push(input);
        }
    }
    if step.inputs.is_empty() {
        script.emit("[]\n");
    }
    Ok(())
}

fn condition_value<'s>(
    gen: &ReferenceGenerator,
    script: &mut Script<'s>,
    w: &Workflow,
    step: &Step,
    def: &StepDefinition,
    required: bool,
    annotation: &str,
) -> Result<Option<ValueExpr>, Halt> {
    let Some(table) = TableResolver::new(w, &gen.catalog).step_table(step.order) else {
        return Ok(None);
    };
    let phrase =
        segment::relative_phrase(annotation).or_else(|| def.table_input().is_none().then(|| annotation.to_owned()));
    if let Some(phrase) = phrase {
        return Ok(gen
            .phrase_conjunct(script, &table, &phrase)?
            .map(|c| ValueExpr::Condition(ConditionExpr::single(c))));
    }
    if !required {
        return Ok(None);
    }
    // Join on a record that points at the looked-up table.
    let join = candidates(gen, w, step.order)
        .into_iter()
        .rev()
        .filter(|c| c.single)
        .find_map(|c| {
            let t = c.table.clone()?;
            (!referencing_columns(gen, &t, &table).is_empty()).then_some((c, t))
        });
    let conj = match join {
        Some((cand, t)) => match referencing_column(gen, script, &t, &table, annotation)? {
            Some(col) => {
                let mut r = cand.r.clone();
                r.path.push(col);
                Conjunct::binary(SYS_ID, Operator::Eq, Template::reference(r))
            }
            None => Conjunct::unary(SYS_ID, Operator::IsNotEmpty),
        },
        None => Conjunct::unary(SYS_ID, Operator::IsNotEmpty),
    };
    Ok(Some(ValueExpr::Condition(ConditionExpr::single(conj))))
}

fn reference_value<'s>(
    gen: &ReferenceGenerator,
    script: &mut Script<'s>,
    w: &Workflow,
    order: u32,
    reference_table: Option<&str>,
    annotation: &str,
) -> Result<Option<ValueExpr>, Halt> {
    let cands = candidates(gen, w, order);
    let Some(rt) = reference_table else {
        // Prefer the latest record whose table the annotation mentions.
        let words = segment_words(annotation);
        let mentioned = cands.iter().rev().find(|c| {
            c.table.as_deref().and_then(|t| gen.catalog.table(t)).is_some_and(|t| {
                let label = segment_words(&t.label);
                !label.is_empty() && label.iter().all(|l| words.iter().any(|w| stem_eq(w, l)))
            })
        });
        return Ok(mentioned.or(cands.last()).map(|c| ValueExpr::Ref(c.r.clone())));
    };
    if let Some(c) = cands.iter().rev().find(|c| c.single && c.table.as_deref() == Some(rt)) {
        return Ok(Some(ValueExpr::Ref(c.r.clone())));
    }
    if let Some(c) = cands.iter().rev().find(|c| c.single && c.table.is_some()) {
        let t = c.table.clone().expect("filtered");
        if let Some(col) = referencing_column(gen, script, &t, rt, annotation)? {
            let mut r = c.r.clone();
            r.path.push(col);
            return Ok(Some(ValueExpr::Ref(r)));
        }
    }
    Ok(cands.last().map(|c| ValueExpr::Ref(c.r.clone())))
}

fn segment_words(s: &str) -> Vec<String> {
    s.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect()
}

fn stem_eq(a: &str, b: &str) -> bool {
    a.trim_end_matches('s') == b.trim_end_matches('s')
}

/// `<annotation>: <number>` of the triggering record, or of the latest record
/// that has a number.
fn email_body(gen: &ReferenceGenerator, w: &Workflow, order: u32, annotation: &str) -> ValueExpr {
    let has_number = |c: &Candidate| {
        c.single
            && c.table
                .as_deref()
                .is_some_and(|t| gen.catalog.column(t, "number").is_some())
    };
    let cands = candidates(gen, w, order);
    let pick = cands
        .iter()
        .find(|c| c.r.step == StepRef::Trigger && has_number(c))
        .or_else(|| cands.iter().rev().find(|c| has_number(c)));
    match pick {
        Some(c) => {
            let mut r = c.r.clone();
            r.path.push("number".into());
            ValueExpr::from_template(Template::new([
                Segment::Text(format!("{annotation}: ")),
                Segment::Ref(r),
            ]))
        }
        None => ValueExpr::literal(annotation),
    }
}
