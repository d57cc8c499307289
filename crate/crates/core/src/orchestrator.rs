//! Steerable generation sessions.
//!
//! A session first generates the outline, then populates the inputs of each
//! step in order. The caller decides when to continue, may stop at any point
//! and may replace the requirement, which starts a linked session. Every
//! change is published as a numbered [`SessionEvent`].

use std::fs::OpenOptions;
use std::io::Write;
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::EnvironmentCatalog;
use crate::model::{
    parse_inputs, parse_outline, serialize_inputs, serialize_outline, serialize_workflow, validate_workflow, Outline,
    ParseError, Step, StepInput, ValidationReport, Workflow,
};
use crate::protocol::{
    constrain_output, run_sub_task, ConstraintViolation, Generator, PromptState, ProtocolError, RunConfig, SubTask,
    SubTaskResult, TeacherForcing, TranscriptEntry, DEFAULT_BUDGET,
};
use crate::retriever::{RankedChoices, Retriever, DEFAULT_K};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstrainMode {
    /// Outputs are used as generated.
    Off,
    /// Ungrounded tokens fail the sub-task.
    Reject,
    /// Ungrounded tokens are replaced by the top offered choice.
    Repair,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PopulateMode {
    /// One step at a time, each seeing the populated steps before it.
    Sequential,
    /// All steps at once with outline-only context.
    Parallel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrchestrationConfig {
    pub k: usize,
    pub budget: usize,
    pub constrain: ConstrainMode,
    pub context_expansion: bool,
    pub auto_continue: bool,
    pub populate_mode: PopulateMode,
    /// Directory for append-only per-session event logs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub event_log_dir: Option<PathBuf>,
}

impl Default for OrchestrationConfig {
    fn default() -> Self {
        Self {
            k: DEFAULT_K,
            budget: DEFAULT_BUDGET,
            constrain: ConstrainMode::Repair,
            context_expansion: false,
            auto_continue: false,
            populate_mode: PopulateMode::Sequential,
            event_log_dir: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "phase", content = "step", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Phase {
    Idle,
    OutlineReady,
    /// Waiting to populate, or populating, this step.
    Populating(u32),
    Complete,
    Stopped,
    Failed,
}

impl Phase {
    pub fn is_terminal(self) -> bool {
        matches!(self, Phase::Complete | Phase::Stopped | Phase::Failed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum EventPayload {
    Outline {
        outline: String,
    },
    ChoicesOffered {
        sub_task: SubTask,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        order: Option<u32>,
        choices: RankedChoices,
        #[serde(default, skip_serializing_if = "std::ops::Not::not")]
        retrieval_failed: bool,
    },
    StepPopulated {
        order: u32,
        name: String,
        inputs: String,
    },
    Completed {
        workflow: String,
        violations: usize,
    },
    Stopped {
        workflow: String,
    },
    Failed {
        message: String,
    },
}

impl EventPayload {
    pub fn name(&self) -> &'static str {
        match self {
            EventPayload::Outline { .. } => "outline",
            EventPayload::ChoicesOffered { .. } => "choices_offered",
            EventPayload::StepPopulated { .. } => "step_populated",
            EventPayload::Completed { .. } => "completed",
            EventPayload::Stopped { .. } => "stopped",
            EventPayload::Failed { .. } => "failed",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionEvent {
    pub session_id: String,
    pub seq: u64,
    #[serde(flatten)]
    pub payload: EventPayload,
}

pub trait EventSink: Send + Sync {
    fn publish(&self, event: &SessionEvent);
}

impl<F: Fn(&SessionEvent) + Send + Sync> EventSink for F {
    fn publish(&self, event: &SessionEvent) {
        self(event)
    }
}

/// The transcript of one sub-task run; `order` is `None` for the outline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubTaskRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub order: Option<u32>,
    pub transcript: Vec<TranscriptEntry>,
    pub retrieval_call_count: usize,
}

#[derive(Serialize, Deserialize)]
pub struct GenerationSession {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub superseded_by: Option<String>,
    pub requirement: String,
    pub phase: Phase,
    pub outline: Option<Outline>,
    /// Outline steps with the inputs populated so far.
    pub workflow: Option<Workflow>,
    pub events: Vec<SessionEvent>,
    pub records: Vec<SubTaskRecord>,
    #[serde(skip)]
    cancel: Arc<AtomicBool>,
    #[serde(skip)]
    sink: Option<Arc<dyn EventSink>>,
}

impl std::fmt::Debug for GenerationSession {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GenerationSession")
            .field("id", &self.id)
            .field("parent_id", &self.parent_id)
            .field("phase", &self.phase)
            .field("events", &self.events.len())
            .finish_non_exhaustive()
    }
}

impl GenerationSession {
    /// Flag that stops the running sub-task at its next event.
    pub fn cancel_handle(&self) -> Arc<AtomicBool> {
        self.cancel.clone()
    }

    pub fn set_sink(&mut self, sink: Arc<dyn EventSink>) {
        self.sink = Some(sink);
    }

    /// Events with a sequence number above `after`.
    pub fn events_after(&self, after: u64) -> &[SessionEvent] {
        let start = self.events.partition_point(|e| e.seq <= after);
        &self.events[start..]
    }

    /// Number of the next step to populate, if any.
    pub fn next_step(&self) -> Option<u32> {
        match self.phase {
            Phase::OutlineReady => self.outline.as_ref().and_then(|o| o.steps.first()).map(|s| s.order),
            Phase::Populating(n) => Some(n),
            _ => None,
        }
    }
}

#[derive(Debug, Error)]
pub enum OrchestratorError {
    #[error("requirement is empty")]
    EmptyRequirement,
    #[error("operation `{op}` not allowed in phase {phase:?}")]
    InvalidPhase { op: &'static str, phase: Phase },
    #[error("session was superseded by {0}")]
    Superseded(String),
    #[error("generation failed: {0}")]
    GenerationFailed(String),
    #[error("cancelled")]
    Cancelled,
    #[error("invalid populate request: {0}")]
    Context(ProtocolError),
}

impl From<ProtocolError> for OrchestratorError {
    fn from(e: ProtocolError) -> Self {
        OrchestratorError::GenerationFailed(e.to_string())
    }
}

impl From<ConstraintViolation> for OrchestratorError {
    fn from(e: ConstraintViolation) -> Self {
        OrchestratorError::GenerationFailed(e.to_string())
    }
}

impl From<ParseError> for OrchestratorError {
    fn from(e: ParseError) -> Self {
        OrchestratorError::GenerationFailed(format!("generated text does not parse: {e}"))
    }
}

/// Runs sessions against one catalog, retriever and generator.
pub struct Orchestrator {
    catalog: Arc<EnvironmentCatalog>,
    retriever: Arc<dyn Retriever>,
    generator: Arc<dyn Generator>,
    config: OrchestrationConfig,
    next_id: Arc<AtomicU64>,
}

impl Orchestrator {
    pub fn new(
        catalog: Arc<EnvironmentCatalog>,
        retriever: Arc<dyn Retriever>,
        generator: Arc<dyn Generator>,
        config: OrchestrationConfig,
    ) -> Self {
        Self {
            catalog,
            retriever,
            generator,
            config,
            next_id: Arc::new(AtomicU64::new(1)),
        }
    }

    /// Draws session ids from `counter`, so that orchestrators replacing
    /// each other never reuse an id.
    pub fn with_session_ids(mut self, counter: Arc<AtomicU64>) -> Self {
        self.next_id = counter;
        self
    }

    /// Runs the outline sub-task on its own, outside any session.
    pub fn create_flow(&self, requirement: &str) -> Result<(Outline, SubTaskRecord), OrchestratorError> {
        if requirement.trim().is_empty() {
            return Err(OrchestratorError::EmptyRequirement);
        }
        let r = self.sub_task(PromptState::create_flow(requirement.trim()), None)?;
        let outline = parse_outline(&r.output)?;
        Ok((outline, record_of(None, &r)))
    }

    /// Runs one populate sub-task on its own. `prefix` holds the populated
    /// steps before `order`.
    pub fn populate_inputs(
        &self,
        requirement: &str,
        outline: &Outline,
        prefix: &[Step],
        order: u32,
    ) -> Result<(Vec<StepInput>, SubTaskRecord, Vec<RankedChoices>), OrchestratorError> {
        let state = PromptState::populate(requirement, outline, prefix, order).map_err(OrchestratorError::Context)?;
        let r = self.sub_task(state, None)?;
        let inputs = parse_inputs(&r.output)?;
        Ok((inputs, record_of(Some(order), &r), r.sites()))
    }

    pub fn config(&self) -> &OrchestrationConfig {
        &self.config
    }

    pub fn catalog(&self) -> &Arc<EnvironmentCatalog> {
        &self.catalog
    }

    pub fn generator(&self) -> &Arc<dyn Generator> {
        &self.generator
    }

    fn run_config(&self, cancel: Option<Arc<AtomicBool>>) -> RunConfig {
        RunConfig {
            k: self.config.k,
            budget: self.config.budget,
            context_expansion: self.config.context_expansion,
            cancel,
        }
    }

    /// A new session in `IDLE`.
    pub fn new_session(&self, requirement: &str) -> Result<GenerationSession, OrchestratorError> {
        if requirement.trim().is_empty() {
            return Err(OrchestratorError::EmptyRequirement);
        }
        let n = self.next_id.fetch_add(1, Ordering::SeqCst);
        Ok(GenerationSession {
            id: format!("s{n:06}"),
            parent_id: None,
            superseded_by: None,
            requirement: requirement.trim().to_owned(),
            phase: Phase::Idle,
            outline: None,
            workflow: None,
            events: Vec::new(),
            records: Vec::new(),
            cancel: Arc::new(AtomicBool::new(false)),
            sink: None,
        })
    }

    /// Creates a session, generates its outline and, with `auto_continue`,
    /// populates every step.
    pub fn start_session(&self, requirement: &str) -> Result<GenerationSession, OrchestratorError> {
        let mut s = self.new_session(requirement)?;
        self.run_session(&mut s)?;
        Ok(s)
    }

    /// Drives an `IDLE` session through the outline and, with
    /// `auto_continue`, to the end.
    pub fn run_session(&self, s: &mut GenerationSession) -> Result<(), OrchestratorError> {
        self.create_outline(s)?;
        if self.config.auto_continue && s.phase == Phase::OutlineReady {
            match self.config.populate_mode {
                PopulateMode::Sequential => self.continue_session(s, None)?,
                PopulateMode::Parallel => self.batch_populate(s)?,
            }
        }
        Ok(())
    }

    pub fn create_outline(&self, s: &mut GenerationSession) -> Result<(), OrchestratorError> {
        self.check_live(s, "create_outline", &[Phase::Idle])?;
        let state = PromptState::create_flow(&s.requirement);
        let outcome = self.sub_task(state, Some(s.cancel.clone())).and_then(|r| {
            let outline = parse_outline(&r.output)?;
            Ok((r, outline))
        });
        let (result, outline) = match outcome {
            Ok(v) => v,
            Err(e) => return self.fail_or_stop(s, e),
        };
        self.record(s, None, &result);
        let text = serialize_outline(&outline);
        s.workflow = Some(outline.to_workflow(&s.requirement));
        s.outline = Some(outline);
        s.phase = Phase::OutlineReady;
        self.emit(s, EventPayload::Outline { outline: text });
        Ok(())
    }

    /// Populates steps in order through `up_to` (default: all).
    pub fn continue_session(&self, s: &mut GenerationSession, up_to: Option<u32>) -> Result<(), OrchestratorError> {
        self.check_live(s, "continue", &[])?;
        if !matches!(s.phase, Phase::OutlineReady | Phase::Populating(_)) {
            return Err(OrchestratorError::InvalidPhase {
                op: "continue",
                phase: s.phase,
            });
        }
        let outline = s.outline.clone().expect("outline present after OUTLINE_READY");
        let last = outline.steps.last().map_or(0, |st| st.order);
        let up_to = up_to.unwrap_or(last).min(last);
        let orders: Vec<u32> = outline
            .steps
            .iter()
            .map(|st| st.order)
            .filter(|o| s.next_step().is_some_and(|n| *o >= n) && *o <= up_to)
            .collect();

        for order in orders {
            if s.cancel.load(Ordering::SeqCst) {
                self.stop_now(s);
                return Ok(());
            }
            s.phase = Phase::Populating(order);
            let prefix: Vec<Step> = s
                .workflow
                .as_ref()
                .map(|w| w.steps.iter().filter(|st| st.order < order).cloned().collect())
                .unwrap_or_default();
            let outcome = PromptState::populate(&s.requirement, &outline, &prefix, order)
                .map_err(OrchestratorError::from)
                .and_then(|state| self.sub_task(state, Some(s.cancel.clone())))
                .and_then(|r| {
                    let inputs = parse_inputs(&r.output)?;
                    Ok((r, inputs))
                });
            match outcome {
                Ok((r, inputs)) => self.apply_step(s, order, &r, inputs),
                Err(e) => return self.fail_or_stop(s, e),
            }
            s.phase = match outline.steps.iter().find(|st| st.order > order) {
                Some(next) => Phase::Populating(next.order),
                None => Phase::Populating(order + 1),
            };
        }
        if s.next_step().is_none_or(|n| n > last) {
            self.complete(s);
        }
        Ok(())
    }

    /// Populates every step concurrently, each with outline-only context,
    /// and assembles the results in outline order.
    pub fn batch_populate(&self, s: &mut GenerationSession) -> Result<(), OrchestratorError> {
        self.check_live(s, "batch_populate", &[Phase::OutlineReady])?;
        let outline = s.outline.clone().expect("outline present after OUTLINE_READY");
        let cancel = s.cancel.clone();
        type Populated = (u32, SubTaskResult, Vec<StepInput>);
        let results: Vec<Result<Populated, OrchestratorError>> = outline
            .steps
            .par_iter()
            .map(|st| {
                let state = PromptState::populate_outline_only(&s.requirement, &outline, st.order)?;
                let r = self.sub_task(state, Some(cancel.clone()))?;
                let inputs = parse_inputs(&r.output)?;
                Ok((st.order, r, inputs))
            })
            .collect();
        for res in results {
            match res {
                Ok((order, r, inputs)) => {
                    s.phase = Phase::Populating(order);
                    self.apply_step(s, order, &r, inputs);
                }
                Err(e) => return self.fail_or_stop(s, e),
            }
        }
        self.complete(s);
        Ok(())
    }

    /// Stops a session that is waiting between steps. A running sub-task is
    /// stopped through [`GenerationSession::cancel_handle`].
    pub fn stop_session(&self, s: &mut GenerationSession) -> Result<(), OrchestratorError> {
        if !matches!(s.phase, Phase::OutlineReady | Phase::Populating(_)) {
            return Err(OrchestratorError::InvalidPhase {
                op: "stop",
                phase: s.phase,
            });
        }
        s.cancel.store(true, Ordering::SeqCst);
        self.stop_now(s);
        Ok(())
    }

    /// Supersedes `s` with a fresh `IDLE` session for `requirement`.
    pub fn modify_requirement(
        &self,
        s: &mut GenerationSession,
        requirement: &str,
    ) -> Result<GenerationSession, OrchestratorError> {
        if s.phase == Phase::Failed {
            return Err(OrchestratorError::InvalidPhase {
                op: "modify",
                phase: s.phase,
            });
        }
        if let Some(id) = &s.superseded_by {
            return Err(OrchestratorError::Superseded(id.clone()));
        }
        let mut next = self.new_session(requirement)?;
        next.parent_id = Some(s.id.clone());
        s.cancel.store(true, Ordering::SeqCst);
        s.superseded_by = Some(next.id.clone());
        Ok(next)
    }

    fn check_live(&self, s: &GenerationSession, op: &'static str, allowed: &[Phase]) -> Result<(), OrchestratorError> {
        if let Some(id) = &s.superseded_by {
            return Err(OrchestratorError::Superseded(id.clone()));
        }
        if !allowed.is_empty() && !allowed.contains(&s.phase) {
            return Err(OrchestratorError::InvalidPhase { op, phase: s.phase });
        }
        Ok(())
    }

    fn sub_task(
        &self,
        state: PromptState,
        cancel: Option<Arc<AtomicBool>>,
    ) -> Result<SubTaskResult, OrchestratorError> {
        let result = run_sub_task(
            self.generator.as_ref(),
            state,
            self.retriever.as_ref(),
            &self.run_config(cancel),
            &TeacherForcing::off(),
        )
        .map_err(|e| match e {
            ProtocolError::Cancelled => OrchestratorError::Cancelled,
            other => other.into(),
        })?;
        let sites = result.sites();
        match self.config.constrain {
            ConstrainMode::Off => Ok(result),
            ConstrainMode::Reject => Ok(constrain_output(result, &sites, &self.catalog, false)?),
            ConstrainMode::Repair => Ok(constrain_output(result, &sites, &self.catalog, true)?),
        }
    }

    fn record(&self, s: &mut GenerationSession, order: Option<u32>, r: &SubTaskResult) {
        s.records.push(record_of(order, r));
        for inj in &r.state.injected {
            self.emit(
                s,
                EventPayload::ChoicesOffered {
                    sub_task: r.sub_task,
                    order,
                    choices: inj.choices.clone(),
                    retrieval_failed: inj.retrieval_failed,
                },
            );
        }
    }

    fn apply_step(&self, s: &mut GenerationSession, order: u32, r: &SubTaskResult, inputs: Vec<StepInput>) {
        self.record(s, Some(order), r);
        let text = serialize_inputs(&inputs);
        let mut name = String::new();
        if let Some(step) = s.workflow.as_mut().and_then(|w| w.step_mut(order)) {
            step.inputs = inputs;
            name = step.name.clone();
        }
        self.emit(
            s,
            EventPayload::StepPopulated {
                order,
                name,
                inputs: text,
            },
        );
    }

    fn complete(&self, s: &mut GenerationSession) {
        s.phase = Phase::Complete;
        let w = s
            .workflow
            .clone()
            .unwrap_or_else(|| Workflow::new(&s.requirement, crate::model::Trigger::scheduled("")));
        let report = self.validate(&w);
        self.emit(
            s,
            EventPayload::Completed {
                workflow: serialize_workflow(&w),
                violations: report.violations.len(),
            },
        );
    }

    pub fn validate(&self, w: &Workflow) -> ValidationReport {
        validate_workflow(w, &self.catalog)
    }

    fn stop_now(&self, s: &mut GenerationSession) {
        s.phase = Phase::Stopped;
        let workflow = s.workflow.as_ref().map(serialize_workflow).unwrap_or_default();
        self.emit(s, EventPayload::Stopped { workflow });
    }

    /// Moves to `STOPPED` when the failure came from a cancellation, else to
    /// `FAILED`.
    fn fail_or_stop(&self, s: &mut GenerationSession, e: OrchestratorError) -> Result<(), OrchestratorError> {
        if s.cancel.load(Ordering::SeqCst) || matches!(e, OrchestratorError::Cancelled) {
            self.stop_now(s);
            return Ok(());
        }
        s.phase = Phase::Failed;
        self.emit(s, EventPayload::Failed { message: e.to_string() });
        Err(e)
    }

    fn emit(&self, s: &mut GenerationSession, payload: EventPayload) {
        let event = SessionEvent {
            session_id: s.id.clone(),
            seq: s.events.last().map_or(1, |e| e.seq + 1),
            payload,
        };
        if let Some(dir) = &self.config.event_log_dir {
            let path = dir.join(format!("{}.events.jsonl", s.id));
            if let Ok(mut f) = OpenOptions::new().create(true).append(true).open(path) {
                if let Ok(line) = serde_json::to_string(&event) {
                    let _ = writeln!(f, "{line}");
                }
            }
        }
        if let Some(sink) = &s.sink {
            sink.publish(&event);
        }
        s.events.push(event);
    }
}

fn record_of(order: Option<u32>, r: &SubTaskResult) -> SubTaskRecord {
    SubTaskRecord {
        order,
        transcript: r.transcript.clone(),
        retrieval_call_count: r.retrieval_call_count,
    }
}
