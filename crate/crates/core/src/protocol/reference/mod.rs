//! Deterministic rule-based generator.
//!
//! `CREATE_FLOW` splits the requirement into a trigger clause and step
//! clauses, asks for step-name choices per clause and takes the top choice.
//! A clause opening with "if" takes the best flow-control choice and the
//! clauses after it in the same sentence are nested in its block.
//!
//! `POPULATE_INPUTS` fills every declared input of the target step from its
//! annotation: tables, columns and values are asked for, references pick the
//! latest compatible output of an earlier step, and text inputs reuse the
//! annotation.

mod populate;
mod segment;

use std::sync::Arc;

use super::script::{self, Halt, Script};
use super::{GenerationEvent, Generator, GeneratorError, PromptState, SubTask};
use crate::catalog::{ArtifactKind, EnvironmentCatalog};
use crate::model::{serialize_outline_step, serialize_trigger, ConditionExpr, Conjunct, OutlineStep, Trigger};
use crate::retriever::RankedChoices;

use segment::OperatorCue;

/// Minimum score a table choice needs to be used.
pub const DEFAULT_EPSILON: f64 = 0.05;

#[derive(Debug, Clone)]
pub struct ReferenceGenerator {
    catalog: Arc<EnvironmentCatalog>,
    epsilon: f64,
}

impl ReferenceGenerator {
    pub fn new(catalog: Arc<EnvironmentCatalog>) -> Self {
        Self {
            catalog,
            epsilon: DEFAULT_EPSILON,
        }
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }

    fn run<'s>(&self, state: &'s PromptState, script: &mut Script<'s>) -> Result<(), Halt> {
        match state.sub_task {
            SubTask::CreateFlow => self.create_flow(&state.requirement, script),
            SubTask::PopulateInputs => populate::populate(self, state, script),
        }
    }

    fn table_choice(&self, choices: &RankedChoices, query: &str) -> Result<String, Halt> {
        match choices.top() {
            Some(c) if c.score >= self.epsilon => Ok(c.payload.clone()),
            _ => Err(GeneratorError::UnresolvedTable {
                query: query.to_owned(),
            }
            .into()),
        }
    }

    /// A conjunct for `phrase` on `table`: column from retrieval, operator
    /// from negation and possession cues, value from retrieval.
    fn phrase_conjunct<'s>(
        &self,
        script: &mut Script<'s>,
        table: &str,
        phrase: &str,
    ) -> Result<Option<Conjunct>, Halt> {
        let cols = script.ask(ArtifactKind::ColumnName, phrase, Some(table))?;
        let Some(col) = cols.top().map(|c| c.payload.clone()) else {
            return Ok(None);
        };
        let def = self.catalog.column(table, &col);
        let conj = match segment::operator_cue(phrase) {
            OperatorCue::Empty => Conjunct::unary(col, crate::model::Operator::IsEmpty),
            OperatorCue::NotEmpty => Conjunct::unary(col, crate::model::Operator::IsNotEmpty),
            OperatorCue::Equals if def.is_some_and(|d| !d.values.is_empty()) => {
                let scope = format!("{table}.{col}");
                let vals = script.ask(ArtifactKind::ColumnValue, phrase, Some(&scope))?;
                match vals.top() {
                    Some(v) => Conjunct::eq(col, v.payload.clone()),
                    None => Conjunct::unary(col, crate::model::Operator::IsNotEmpty),
                }
            }
            OperatorCue::Equals => Conjunct::unary(col, crate::model::Operator::IsNotEmpty),
        };
        Ok(Some(conj))
    }

    fn create_flow<'s>(&self, requirement: &str, script: &mut Script<'s>) -> Result<(), Halt> {
        let seg = segment::segment(requirement).ok_or(GeneratorError::NoTriggerClause)?;
        let tc = &seg.trigger;

        let trigger = match tc.schedule.clone() {
            Some(s) => Trigger::scheduled(s),
            None => {
                let noun = segment::trigger_noun(&tc.text);
                let query = if noun.is_empty() {
                    tc.text.as_str()
                } else {
                    noun.as_str()
                };
                let query = if query.is_empty() { requirement } else { query };
                let tables = script.ask(ArtifactKind::TableName, query, None)?;
                let table = self.table_choice(tables, query)?;
                let mut conjuncts = Vec::new();
                if let Some(p) = segment::priority_shorthand(&tc.text) {
                    let v = p.to_string();
                    let known = self
                        .catalog
                        .column(&table, "priority")
                        .is_some_and(|c| c.values.iter().any(|x| x.value == v));
                    if known {
                        let cols = script.ask(ArtifactKind::ColumnName, "priority", Some(&table))?;
                        if cols.contains("priority") {
                            let scope = format!("{table}.priority");
                            let vals = script.ask(ArtifactKind::ColumnValue, &v, Some(&scope))?;
                            if vals.contains(&v) {
                                conjuncts.push(Conjunct::eq("priority", v));
                            }
                        }
                    }
                }
                if let Some(phrase) = segment::relative_phrase(&tc.text) {
                    let phrase = segment::strip_event_tail(&phrase);
                    if !phrase.is_empty() {
                        if let Some(c) = self.phrase_conjunct(script, &table, &phrase)? {
                            conjuncts.push(c);
                        }
                    }
                }
                if let Some(verb) = &tc.state_verb {
                    let vals = script.ask(ArtifactKind::ColumnValue, verb, Some(&table))?;
                    if let Some((col, val)) = vals
                        .top()
                        .filter(|c| c.score >= self.epsilon)
                        .and_then(|c| c.payload.split_once('='))
                    {
                        conjuncts.push(Conjunct::eq(col, val));
                    }
                }
                let mut t = Trigger::record(tc.event, table);
                if !conjuncts.is_empty() {
                    t = t.with_condition(ConditionExpr::new(conjuncts));
                }
                t
            }
        };
        script.emit(serialize_trigger(&trigger));

        if seg.sentences.is_empty() {
            script.emit("steps: []\n");
            return Ok(());
        }
        script.emit("steps:\n");
        let mut order = 0;
        for sentence in &seg.sentences {
            let mut block = 0;
            for clause in sentence {
                order += 1;
                let choices = script.ask(ArtifactKind::StepName, clause, None)?;
                let flow_control = |name: &str| self.catalog.step(name).is_some_and(|d| d.flow_control);
                let pick = if segment::is_conditional(clause) {
                    choices
                        .payloads()
                        .find(|p| flow_control(p))
                        .or_else(|| choices.payloads().next())
                } else {
                    choices.payloads().next()
                };
                let name = pick
                    .ok_or_else(|| GeneratorError::Fault(format!("no step choices for `{clause}`")))?
                    .to_owned();
                let opens_block = flow_control(&name);
                script.emit(serialize_outline_step(&OutlineStep {
                    name,
                    annotation: clause.clone(),
                    order,
                    block,
                }));
                if opens_block {
                    block = order;
                }
            }
        }
        Ok(())
    }
}

impl Generator for ReferenceGenerator {
    fn name(&self) -> &str {
        "reference"
    }

    fn next_event(&self, state: &PromptState) -> Result<GenerationEvent, GeneratorError> {
        let mut s = Script::new(&state.injected);
        let complete = match self.run(state, &mut s) {
            Ok(()) => true,
            Err(Halt::Suspend) => false,
            Err(Halt::Error(e)) => return Err(e),
        };
        script::next_event(&s.into_items(), complete, state)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::demo_catalog_dir;
    use crate::model::{parse_inputs, parse_outline, serialize_inputs};
    use crate::protocol::{run_sub_task, RunConfig, TeacherForcing};
    use crate::retriever::LexicalIndex;

    fn setup() -> (Arc<EnvironmentCatalog>, LexicalIndex) {
        let c = Arc::new(EnvironmentCatalog::load(demo_catalog_dir()).unwrap());
        let idx = LexicalIndex::build(&c);
        (c, idx)
    }

    fn run(g: &ReferenceGenerator, idx: &LexicalIndex, state: PromptState) -> String {
        run_sub_task(g, state, idx, &RunConfig::default(), &TeacherForcing::off())
            .unwrap()
            .output
    }

    fn populate_all(g: &ReferenceGenerator, idx: &LexicalIndex, req: &str, outline: &str) -> Vec<String> {
        let outline = parse_outline(outline).unwrap();
        let mut earlier: Vec<crate::model::Step> = Vec::new();
        let mut out = Vec::new();
        for s in &outline.steps {
            let st = PromptState::populate(req, &outline, &earlier, s.order).unwrap();
            let inputs = run(g, idx, st);
            let mut step = s.to_step();
            step.inputs = parse_inputs(&inputs).unwrap();
            earlier.push(step);
            out.push(inputs);
        }
        out
    }

    const MANAGER_EMAIL: &str = "When a P1 incident is created, look up the user assigned to the incident. \
                        If the user has a manager, send an email to the manager reminding them of the incident.";

    #[test]
    fn manager_email_outline_and_inputs() {
        let (c, idx) = setup();
        let g = ReferenceGenerator::new(c);
        let outline = run(&g, &idx, PromptState::create_flow(MANAGER_EMAIL));
        let parsed = parse_outline(&outline).unwrap();
        assert_eq!(parsed.trigger.summary(), "created incident (priority=1)");
        let names: Vec<&str> = parsed.steps.iter().map(|s| s.name.as_str()).collect();
        assert_eq!(names, ["look_up_record", "IF", "send_email"]);
        assert_eq!(parsed.steps[2].block, 2);

        let inputs = populate_all(&g, &idx, MANAGER_EMAIL, &outline);
        assert!(inputs[0].contains("\"sys_user\""));
        assert!(inputs[0].contains("sys_id={{trigger.record.assigned_to}}"));
        assert!(inputs[1].contains("{{1.record}}") && inputs[1].contains("managerISNOTEMPTY"));
        assert!(inputs[2].contains("{{1.record.manager}}"));
    }

    #[test]
    fn scheduled_close_tasks() {
        let (c, idx) = setup();
        let g = ReferenceGenerator::new(c);
        let req = "Every day, look up incident tasks that do not have assignees and close them";
        let outline = run(&g, &idx, PromptState::create_flow(req));
        let parsed = parse_outline(&outline).unwrap();
        assert_eq!(parsed.trigger, Trigger::scheduled("daily"));
        let names: Vec<&str> = parsed.steps.iter().map(|s| s.name.as_str()).collect();
        assert_eq!(names, ["look_up_records", "update_record"]);
        let inputs = populate_all(&g, &idx, req, &outline);
        assert_eq!(
            inputs[0],
            "- name: table\n  value: \"incident_task\"\n- name: conditions\n  value: \"assigned_toISEMPTY\"\n"
        );
        assert_eq!(
            inputs[1],
            "- name: record\n  value: \"{{1.records}}\"\n- name: values\n  value: \"state=3\"\n"
        );
    }

    #[test]
    fn no_cue_is_an_error() {
        let (c, idx) = setup();
        let g = ReferenceGenerator::new(c);
        let e = run_sub_task(
            &g,
            PromptState::create_flow("look up the user"),
            &idx,
            &RunConfig::default(),
            &TeacherForcing::off(),
        )
        .unwrap_err();
        assert!(matches!(
            e,
            crate::protocol::ProtocolError::Generator(GeneratorError::NoTriggerClause)
        ));
    }

    #[test]
    fn step_without_inputs_makes_no_requests() {
        use crate::catalog::CatalogDocument;
        use crate::model::{EventKind, Outline};
        let c = EnvironmentCatalog::from_documents(
            &[CatalogDocument::new("s.yaml", "- name: end_flow\n")],
            &[CatalogDocument::new("t.yaml", "- name: incident\n  columns: []\n")],
        )
        .unwrap();
        let idx = LexicalIndex::build(&c);
        let g = ReferenceGenerator::new(Arc::new(c));
        let outline = Outline {
            trigger: Trigger::record(EventKind::Created, "incident"),
            steps: vec![OutlineStep {
                name: "end_flow".into(),
                annotation: "stop".into(),
                order: 1,
                block: 0,
            }],
        };
        let st = PromptState::populate("r", &outline, &[], 1).unwrap();
        let r = run_sub_task(&g, st, &idx, &RunConfig::default(), &TeacherForcing::off()).unwrap();
        assert_eq!(r.output, serialize_inputs(&[]));
        assert_eq!(r.retrieval_call_count, 0);
    }
}
