//! Seeded generators: labeled trees, valid workflows and violation injectors.

use flowforge::catalog::{EnvironmentCatalog, OutputSchema, StepDefinition, ValueKind};
use flowforge::eval::FlowTree;
use flowforge::model::{
    ConditionExpr, Conjunct, EventKind, Operator, OutputRef, Segment, Step, StepInput, StepRef, Template, Trigger,
    ValueExpr, ViolationCode, Workflow,
};
use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};

pub fn rng(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}

/// Every ordered tree with exactly `n` nodes over `alphabet`.
pub fn trees_of_size(n: usize, alphabet: &[&str]) -> Vec<FlowTree> {
    if n == 0 {
        return Vec::new();
    }
    let mut out = Vec::new();
    for forest in forests_of_size(n - 1, alphabet) {
        for l in alphabet {
            out.push(FlowTree::node(*l, forest.clone()));
        }
    }
    out
}

fn forests_of_size(n: usize, alphabet: &[&str]) -> Vec<Vec<FlowTree>> {
    if n == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for first in 1..=n {
        for t in trees_of_size(first, alphabet) {
            for rest in forests_of_size(n - first, alphabet) {
                let mut f = vec![t.clone()];
                f.extend(rest);
                out.push(f);
            }
        }
    }
    out
}

pub fn all_trees_up_to(max: usize, alphabet: &[&str]) -> Vec<FlowTree> {
    (1..=max).flat_map(|n| trees_of_size(n, alphabet)).collect()
}

/// A random ordered tree with between 1 and `max` nodes.
pub fn random_tree(rng: &mut StdRng, max: usize, alphabet: &[&str]) -> FlowTree {
    let n = rng.gen_range(1..=max);
    // Random parent sequence in preorder: node i attaches to a node on the
    // current rightmost path.
    let mut labels = Vec::with_capacity(n);
    let mut parent = vec![usize::MAX; n];
    let mut path = vec![0usize];
    labels.push(*alphabet.choose(rng).unwrap());
    for i in 1..n {
        let depth = rng.gen_range(0..path.len());
        path.truncate(depth + 1);
        parent[i] = path[depth];
        path.push(i);
        labels.push(*alphabet.choose(rng).unwrap());
    }
    fn build(i: usize, labels: &[&str], parent: &[usize]) -> FlowTree {
        let kids = (0..labels.len())
            .filter(|&c| parent[c] == i)
            .map(|c| build(c, labels, parent));
        FlowTree::node(labels[i], kids.collect::<Vec<_>>())
    }
    build(0, &labels, &parent)
}

const TEXT_POOL: &[char] = &[
    'a', 'b', 'c', 'x', 'y', 'z', 'A', 'Q', '0', '1', '7', ' ', ' ', '.', ',', ':', ';', '!', '?', '\'', '"', '-', '_',
    '=', '<', '>', '^', '(', ')', '[', ']', '/', '\\', '#', '&', 'é', 'ß', '中', '🚀', '\n', '\t',
];
const OPERAND_POOL: &[char] = &['a', 'b', 'k', 'Z', '0', '5', '9', '_', '.', '-', ' '];

pub fn text(rng: &mut StdRng, max: usize) -> String {
    let n = rng.gen_range(0..=max);
    (0..n).map(|_| *TEXT_POOL.choose(rng).unwrap()).collect::<String>()
}

fn operand(rng: &mut StdRng) -> String {
    let n = rng.gen_range(1..=8);
    let s: String = (0..n).map(|_| *OPERAND_POOL.choose(rng).unwrap()).collect();
    let s = s.trim().to_owned();
    if s.is_empty() {
        "v".into()
    } else {
        s
    }
}

#[derive(Clone)]
struct Avail {
    r: OutputRef,
    table: Option<String>,
    record: bool,
}

/// A random workflow over `catalog` that validates.
pub fn random_workflow(rng: &mut StdRng, catalog: &EnvironmentCatalog, max_steps: usize) -> Workflow {
    let tables: Vec<String> = catalog.tables().map(|t| t.name.clone()).collect();
    let mut avail: Vec<Avail> = Vec::new();
    let trigger = if rng.gen_bool(0.25) {
        Trigger::scheduled(*["daily", "weekly", "hourly", "every 5 minutes"].choose(rng).unwrap())
    } else {
        let table = tables.choose(rng).unwrap().clone();
        let event = if rng.gen_bool(0.5) {
            EventKind::Created
        } else {
            EventKind::Updated
        };
        avail.push(Avail {
            r: OutputRef::trigger("record"),
            table: Some(table.clone()),
            record: true,
        });
        let mut t = Trigger::record(event, table.clone());
        if rng.gen_bool(0.5) {
            let n = rng.gen_range(1..=2);
            let conj = (0..n).map(|_| literal_conjunct(rng, catalog, &table)).collect();
            t = t.with_condition(ConditionExpr::new(conj));
        }
        t
    };
    let mut w = Workflow::new(text(rng, 40).trim().to_owned() + "req", trigger);
    let defs: Vec<&StepDefinition> = catalog.steps().collect();
    let n = rng.gen_range(0..=max_steps);
    let mut flow_control: Vec<u32> = Vec::new();

    for i in 0..n {
        let order = i as u32 + 1;
        let (def, step_table, primary_ref) = loop {
            let def = *defs.choose(rng).unwrap();
            if def.table_input().is_some() {
                break (def, Some(tables.choose(rng).unwrap().clone()), None);
            }
            let needs_ref = def.inputs.iter().any(|d| d.kind == ValueKind::Reference);
            if !needs_ref {
                break (def, None, None);
            }
            let pool: Vec<&Avail> = avail.iter().filter(|a| a.table.is_some()).collect();
            if let Some(a) = pool.choose(rng) {
                let a = walk(rng, catalog, a);
                break (def, a.table.clone(), Some(a));
            }
        };
        let mut step = Step::new(def.name.clone(), order).annotated(text(rng, 30).trim().to_owned());
        if !flow_control.is_empty() && rng.gen_bool(0.4) {
            step.block = *flow_control.choose(rng).unwrap();
        }
        let mut first_ref = true;
        for decl in &def.inputs {
            if !decl.required && rng.gen_bool(0.3) {
                continue;
            }
            let value = match decl.kind {
                ValueKind::Table => ValueExpr::literal(step_table.clone().unwrap()),
                ValueKind::Column => {
                    let t = step_table.clone().unwrap();
                    let cols: Vec<String> = catalog
                        .table(&t)
                        .unwrap()
                        .columns
                        .iter()
                        .map(|c| c.name.clone())
                        .collect();
                    ValueExpr::literal(cols.choose(rng).unwrap().clone())
                }
                ValueKind::Condition => {
                    let t = step_table.clone().unwrap();
                    let n = rng.gen_range(1..=3);
                    let conj = (0..n).map(|_| conjunct(rng, catalog, &t, &avail)).collect();
                    ValueExpr::Condition(ConditionExpr::new(conj))
                }
                ValueKind::Reference => {
                    let r = if first_ref {
                        primary_ref.clone().map(|a| a.r)
                    } else {
                        avail
                            .iter()
                            .filter(|a| a.record)
                            .collect::<Vec<_>>()
                            .choose(rng)
                            .map(|a| a.r.clone())
                    };
                    first_ref = false;
                    match r {
                        Some(r) => ValueExpr::Ref(r),
                        None if decl.required => ValueExpr::Ref(primary_ref.clone().unwrap().r),
                        None => continue,
                    }
                }
                ValueKind::Text => template(rng, &avail, false),
                ValueKind::EmailBody => template(rng, &avail, true),
            };
            step.inputs.push(StepInput::new(decl.name.clone(), value));
        }
        for o in &def.outputs {
            avail.push(Avail {
                r: OutputRef::step(order, &o.name),
                table: if o.schema == OutputSchema::Scalar {
                    None
                } else {
                    step_table.clone()
                },
                record: o.schema != OutputSchema::Scalar,
            });
        }
        if def.flow_control {
            flow_control.push(order);
        }
        w.steps.push(step);
    }
    w
}

/// Optionally extends a single-record reference along a reference column.
fn walk(rng: &mut StdRng, catalog: &EnvironmentCatalog, a: &Avail) -> Avail {
    let mut out = a.clone();
    let single = match out.r.step {
        StepRef::Trigger => true,
        StepRef::Order(_) => out.r.output() == "record" || out.r.output() == "item",
    };
    if single && out.r.path.len() == 1 && rng.gen_bool(0.4) {
        let t = out.table.clone().unwrap();
        let refs: Vec<_> = catalog
            .table(&t)
            .unwrap()
            .columns
            .iter()
            .filter_map(|c| c.reference.clone().map(|r| (c.name.clone(), r)))
            .collect();
        if let Some((col, target)) = refs.choose(rng) {
            out.r.path.push(col.clone());
            out.table = Some(target.clone());
        }
    }
    out
}

fn literal_conjunct(rng: &mut StdRng, catalog: &EnvironmentCatalog, table: &str) -> Conjunct {
    let t = catalog.table(table).unwrap();
    let col = t.columns.choose(rng).unwrap();
    let op = *Operator::ALL.choose(rng).unwrap();
    if op.is_unary() {
        return Conjunct::unary(col.name.clone(), op);
    }
    let v = match col.values.choose(rng) {
        Some(v) if rng.gen_bool(0.7) => v.value.clone(),
        _ => operand(rng),
    };
    Conjunct::binary(col.name.clone(), op, Template::text(v))
}

fn conjunct(rng: &mut StdRng, catalog: &EnvironmentCatalog, table: &str, avail: &[Avail]) -> Conjunct {
    let c = literal_conjunct(rng, catalog, table);
    if c.operand.is_some() && rng.gen_bool(0.25) {
        if let Some(a) = avail.choose(rng) {
            return Conjunct::binary(c.column, c.op, Template::reference(a.r.clone()));
        }
    }
    c
}

fn template(rng: &mut StdRng, avail: &[Avail], with_ref: bool) -> ValueExpr {
    let mut segs = vec![Segment::Text(text(rng, 20))];
    if (with_ref || rng.gen_bool(0.3)) && !avail.is_empty() {
        segs.push(Segment::Ref(avail.choose(rng).unwrap().r.clone()));
        segs.push(Segment::Text(text(rng, 10)));
    }
    ValueExpr::from_template(Template::new(segs))
}

/// A top-level chain of `n` steps: a record lookup followed by alternating
/// updates, conditionals and notes, all grounded in the demo catalog.
pub fn synthetic_workflow(n: u32) -> Workflow {
    let mut w = Workflow::new(
        "When an incident is created, process it in many steps",
        Trigger::record(EventKind::Created, "incident"),
    );
    w.steps.push(
        Step::new("look_up_record", 1)
            .annotated("look up the assigned user")
            .with_input("table", ValueExpr::literal("sys_user"))
            .with_input(
                "conditions",
                ValueExpr::Condition(ConditionExpr::single(Conjunct::binary(
                    "sys_id",
                    Operator::Eq,
                    Template::reference(OutputRef::new(StepRef::Trigger, "record.assigned_to")),
                ))),
            ),
    );
    let mut last_if = 0;
    for order in 2..=n {
        let step = match order % 3 {
            0 => {
                last_if = order;
                Step::new("IF", order)
                    .with_input("record", ValueExpr::parse("{{trigger.record}}").unwrap())
                    .with_input(
                        "condition",
                        ValueExpr::Condition(ConditionExpr::single(Conjunct::eq("state", "2"))),
                    )
            }
            1 => Step::new("update_record", order)
                .in_block(last_if)
                .with_input("record", ValueExpr::parse("{{trigger.record}}").unwrap())
                .with_input(
                    "values",
                    ValueExpr::Condition(ConditionExpr::single(Conjunct::eq(
                        "priority",
                        (order % 5 + 1).to_string(),
                    ))),
                ),
            _ => Step::new("add_work_note", order)
                .with_input("record", ValueExpr::parse("{{trigger.record}}").unwrap())
                .with_input(
                    "note",
                    ValueExpr::parse(&format!("note {order} for {{{{1.record.name}}}}")).unwrap(),
                ),
        };
        w.steps.push(step.annotated(format!("step {order}")));
    }
    w
}

/// Changes a few atoms and step names of `w`.
pub fn mutate(rng: &mut StdRng, w: &Workflow, edits: usize) -> Workflow {
    let mut out = w.clone();
    for _ in 0..edits {
        if out.steps.is_empty() {
            break;
        }
        let i = rng.gen_range(0..out.steps.len());
        let step = &mut out.steps[i];
        match rng.gen_range(0..3) {
            0 => step.name = "log_message".into(),
            1 => {
                step.inputs.pop();
            }
            _ => step.inputs.push(StepInput::new("note", ValueExpr::literal("changed"))),
        }
    }
    out
}

/// Applies a minimal edit to a valid workflow that should raise `code`.
/// `None` when the workflow has nothing to attach the violation to.
pub fn inject(w: &Workflow, catalog: &EnvironmentCatalog, code: ViolationCode) -> Option<Workflow> {
    let mut m = w.clone();
    match code {
        ViolationCode::UnknownStep => {
            m.steps.first_mut()?.name = "no_such_step".into();
        }
        ViolationCode::UnknownTable => {
            if m.trigger.event != EventKind::Scheduled {
                m.trigger.table = Some("no_such_table".into());
            } else {
                let (si, ii) = find_input(&m, catalog, |k| k == ValueKind::Table)?;
                m.steps[si].inputs[ii].value = ValueExpr::literal("no_such_table");
            }
        }
        ViolationCode::UnknownColumn => {
            if m.trigger.event != EventKind::Scheduled {
                let cond = m
                    .trigger
                    .condition
                    .get_or_insert_with(|| ConditionExpr::new(Vec::new()));
                cond.conjuncts.push(Conjunct::eq("no_such_column", "1"));
            } else {
                let (si, ii) = find_input(&m, catalog, |k| k == ValueKind::Condition)?;
                let ValueExpr::Condition(c) = &mut m.steps[si].inputs[ii].value else {
                    return None;
                };
                c.conjuncts.push(Conjunct::eq("no_such_column", "1"));
            }
        }
        ViolationCode::ForwardRef => {
            let step = m.steps.iter_mut().find(|s| !s.inputs.is_empty())?;
            let order = step.order;
            step.inputs[0].value = ValueExpr::Ref(OutputRef::step(order, "record"));
        }
        ViolationCode::BadBlock => {
            let step = m.steps.first_mut()?;
            step.block = step.order;
        }
        ViolationCode::OrderGap => {
            m.steps.last_mut()?.order += 1;
        }
        ViolationCode::UnknownInputName => {
            m.steps
                .first_mut()?
                .inputs
                .push(StepInput::new("no_such_input", ValueExpr::literal("x")));
        }
        ViolationCode::MissingRequiredInput => {
            let (si, ii) = m.steps.iter().enumerate().find_map(|(si, s)| {
                let def = catalog.step(&s.name)?;
                s.inputs
                    .iter()
                    .position(|i| def.input(&i.name).is_some_and(|d| d.required))
                    .map(|ii| (si, ii))
            })?;
            m.steps[si].inputs.remove(ii);
        }
        ViolationCode::BadOutputPath => {
            let step = m.steps.iter_mut().find(|s| !s.inputs.is_empty())?;
            step.inputs[0].value = ValueExpr::Ref(OutputRef::trigger("no_such_output"));
        }
    }
    Some(m)
}

fn find_input(w: &Workflow, catalog: &EnvironmentCatalog, want: impl Fn(ValueKind) -> bool) -> Option<(usize, usize)> {
    w.steps.iter().enumerate().find_map(|(si, s)| {
        let def = catalog.step(&s.name)?;
        s.inputs
            .iter()
            .position(|i| def.input(&i.name).is_some_and(|d| want(d.kind)))
            .map(|ii| (si, ii))
    })
}
