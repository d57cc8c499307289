//! Adaptive retrieval generation.
//!
//! A [`Generator`] is asked for one [`GenerationEvent`] at a time. When it
//! emits a [`GenerationEvent::ChoicesRequest`] the engine queries the
//! retriever, appends the ranked choices to the prompt state and asks again.
//! Generation ends with [`GenerationEvent::Done`].
//!
//! There are two sub-tasks: `CREATE_FLOW` writes an outline, and
//! `POPULATE_INPUTS` writes the input list of one outline step.

mod constrain;
pub mod reference;
mod registry;
mod script;
mod scripted;
mod sentinel;

use std::io::{BufRead, Write};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::ArtifactKind;
use crate::model::{
    parse_outline, parse_workflow, serialize_outline, serialize_workflow, Outline, OutlineStep, ParseError, Step,
    Workflow,
};
use crate::retriever::{Choice, RankedChoices, Retriever, DEFAULT_K};

pub use constrain::{constrain_output, ConstraintViolation, Offense, Repair};
pub use reference::ReferenceGenerator;
pub use registry::{GeneratorFactory, GeneratorRegistry};
pub use scripted::ScriptedGenerator;
pub use sentinel::{parse_sentinel, SentinelAdapter, TextGenerator, SENTINEL};

pub const DEFAULT_BUDGET: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SubTask {
    CreateFlow,
    PopulateInputs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum GenerationEvent {
    Fragment {
        text: String,
    },
    ChoicesRequest {
        kind: ArtifactKind,
        query: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        scope: Option<String>,
    },
    Done,
}

/// Choices placed into the prompt at one request site.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InjectedChoices {
    /// Length of the emitted text when the choices were injected.
    pub at: usize,
    pub choices: RankedChoices,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub retrieval_failed: bool,
}

/// One line of a transcript.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum TranscriptEntry {
    Fragment {
        text: String,
    },
    ChoicesRequest {
        kind: ArtifactKind,
        query: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        scope: Option<String>,
    },
    ChoicesInjected(InjectedChoices),
    Done,
}

impl From<GenerationEvent> for TranscriptEntry {
    fn from(e: GenerationEvent) -> Self {
        match e {
            GenerationEvent::Fragment { text } => TranscriptEntry::Fragment { text },
            GenerationEvent::ChoicesRequest { kind, query, scope } => {
                TranscriptEntry::ChoicesRequest { kind, query, scope }
            }
            GenerationEvent::Done => TranscriptEntry::Done,
        }
    }
}

/// Everything a generator may look at.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptState {
    pub sub_task: SubTask,
    pub requirement: String,
    /// Serialized outline of the whole workflow (populate only).
    #[serde(default)]
    pub outline: String,
    /// Serialized trigger and already populated steps with a smaller order
    /// than the target (populate only). Empty in outline-only mode.
    #[serde(default)]
    pub context: String,
    /// Header of the step whose inputs are being written (populate only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<OutlineStep>,
    #[serde(default)]
    pub injected: Vec<InjectedChoices>,
    #[serde(default)]
    pub emitted: String,
}

impl PromptState {
    pub fn create_flow(requirement: impl Into<String>) -> Self {
        Self {
            sub_task: SubTask::CreateFlow,
            requirement: requirement.into(),
            outline: String::new(),
            context: String::new(),
            target: None,
            injected: Vec::new(),
            emitted: String::new(),
        }
    }

    /// State for populating `target_order`, with `earlier` as populated
    /// context. Every step in `earlier` must precede the target.
    pub fn populate(
        requirement: impl Into<String>,
        outline: &Outline,
        earlier: &[Step],
        target_order: u32,
    ) -> Result<Self, ProtocolError> {
        let target = outline
            .step(target_order)
            .ok_or(ProtocolError::UnknownTarget(target_order))?
            .clone();
        if let Some(bad) = earlier.iter().find(|s| s.order >= target_order) {
            return Err(ProtocolError::ForwardContext {
                target: target_order,
                found: bad.order,
            });
        }
        let context = if earlier.is_empty() {
            String::new()
        } else {
            let w = Workflow {
                requirement: String::new(),
                trigger: outline.trigger.clone(),
                steps: earlier.to_vec(),
            };
            serialize_workflow(&w)
        };
        Ok(Self {
            sub_task: SubTask::PopulateInputs,
            requirement: requirement.into(),
            outline: serialize_outline(outline),
            context,
            target: Some(target),
            injected: Vec::new(),
            emitted: String::new(),
        })
    }

    /// Outline-only state: no populated context, as used for batched runs.
    pub fn populate_outline_only(
        requirement: impl Into<String>,
        outline: &Outline,
        target_order: u32,
    ) -> Result<Self, ProtocolError> {
        Self::populate(requirement, outline, &[], target_order)
    }

    pub fn parsed_outline(&self) -> Result<Outline, ParseError> {
        parse_outline(&self.outline)
    }

    /// Populated earlier steps carried in `context`.
    pub fn earlier_steps(&self) -> Result<Vec<Step>, ParseError> {
        if self.context.trim().is_empty() {
            return Ok(Vec::new());
        }
        Ok(parse_workflow(&self.context)?.steps)
    }

    /// Trigger, earlier steps (populated where context has them) and `target`.
    pub(crate) fn working_workflow(&self, target: &Step) -> Result<Workflow, ParseError> {
        let outline = self.parsed_outline()?;
        let earlier = self.earlier_steps()?;
        let mut w = Workflow::new("", outline.trigger.clone());
        for s in outline.steps.iter().filter(|s| s.order < target.order) {
            let step = earlier
                .iter()
                .find(|e| e.order == s.order)
                .cloned()
                .unwrap_or_else(|| s.to_step());
            w.steps.push(step);
        }
        w.steps.push(target.clone());
        Ok(w)
    }

    /// Plain-text prompt for generators that read text.
    pub fn render_prompt(&self) -> String {
        let mut p = format!("task: {:?}\nrequirement: {}\n", self.sub_task, self.requirement);
        if !self.outline.is_empty() {
            p.push_str("outline:\n");
            p.push_str(&self.outline);
        }
        if !self.context.is_empty() {
            p.push_str("context:\n");
            p.push_str(&self.context);
        }
        if let Some(t) = &self.target {
            p.push_str(&format!("target: {} (order {}) {}\n", t.name, t.order, t.annotation));
        }
        let mut cursor = 0;
        for inj in &self.injected {
            p.push_str(&self.emitted[cursor..inj.at]);
            cursor = inj.at;
            p.push_str(&format!("choices ({}):\n", inj.choices.kind));
            p.push_str(&inj.choices.render());
        }
        p.push_str(&self.emitted[cursor..]);
        p
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GeneratorError {
    #[error("no trigger clause found in requirement")]
    NoTriggerClause,
    #[error("no table choice for `{query}` scores above the floor")]
    UnresolvedTable { query: String },
    #[error("generator fault: {0}")]
    Fault(String),
    #[error("generator transport error: {0}")]
    Transport(String),
}

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("event budget of {0} exhausted")]
    BudgetExceeded(usize),
    #[error(transparent)]
    Generator(#[from] GeneratorError),
    #[error("cancelled")]
    Cancelled,
    #[error("outline has no step {0}")]
    UnknownTarget(u32),
    #[error("context for step {target} contains step {found}")]
    ForwardContext { target: u32, found: u32 },
    #[error("output does not parse: {0}")]
    BadOutput(#[from] ParseError),
}

/// Ground-truth payloads per request site, in request order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TeacherForcing {
    pub enabled: bool,
    pub gold: Vec<Option<String>>,
}

impl TeacherForcing {
    pub fn off() -> Self {
        Self::default()
    }

    pub fn with_gold(gold: Vec<Option<String>>) -> Self {
        Self { enabled: true, gold }
    }
}

/// Makes sure `gold` is among the choices. A missed gold replaces the item at
/// rank `k`, or is appended when fewer than `k` choices were found. Returns
/// whether the list changed.
pub fn force_gold(choices: &mut RankedChoices, gold: &str, k: usize) -> bool {
    if choices.contains(gold) {
        return false;
    }
    let forced = Choice {
        payload: gold.to_owned(),
        score: 0.0,
        forced: true,
    };
    if choices.choices.len() >= k.max(1) {
        choices.choices.truncate(k.max(1));
        *choices.choices.last_mut().expect("k >= 1") = forced;
    } else {
        choices.choices.push(forced);
    }
    true
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub k: usize,
    pub budget: usize,
    /// Appends the requirement to column-name queries.
    pub context_expansion: bool,
    pub cancel: Option<Arc<AtomicBool>>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            k: DEFAULT_K,
            budget: DEFAULT_BUDGET,
            context_expansion: false,
            cancel: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubTaskResult {
    pub sub_task: SubTask,
    pub output: String,
    pub transcript: Vec<TranscriptEntry>,
    pub retrieval_call_count: usize,
    pub retrieval_failures: usize,
    /// Final prompt state, including every injected choice list.
    pub state: PromptState,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub repairs: Vec<Repair>,
}

impl SubTaskResult {
    pub fn sites(&self) -> Vec<RankedChoices> {
        self.state.injected.iter().map(|i| i.choices.clone()).collect()
    }
}

pub trait Generator: Send + Sync {
    fn name(&self) -> &str;

    /// The next event given everything generated so far. Implementations
    /// keep no state between calls.
    fn next_event(&self, state: &PromptState) -> Result<GenerationEvent, GeneratorError>;
}

impl<G: Generator + ?Sized> Generator for Arc<G> {
    fn name(&self) -> &str {
        (**self).name()
    }

    fn next_event(&self, state: &PromptState) -> Result<GenerationEvent, GeneratorError> {
        (**self).next_event(state)
    }
}

/// Runs one sub-task to completion.
pub fn run_sub_task(
    generator: &dyn Generator,
    mut state: PromptState,
    retriever: &dyn Retriever,
    config: &RunConfig,
    tf: &TeacherForcing,
) -> Result<SubTaskResult, ProtocolError> {
    let mut transcript = Vec::new();
    let mut calls = 0;
    let mut failures = 0;
    for _ in 0..config.budget {
        if config.cancel.as_ref().is_some_and(|c| c.load(Ordering::SeqCst)) {
            return Err(ProtocolError::Cancelled);
        }
        let event = generator.next_event(&state)?;
        match event {
            GenerationEvent::Fragment { ref text } => {
                state.emitted.push_str(text);
                transcript.push(event.into());
            }
            GenerationEvent::ChoicesRequest {
                kind,
                ref query,
                ref scope,
            } => {
                if query.trim().is_empty() {
                    return Err(GeneratorError::Fault("choices request with an empty query".into()).into());
                }
                let q = if config.context_expansion && kind == ArtifactKind::ColumnName {
                    format!("{query} {}", state.requirement)
                } else {
                    query.clone()
                };
                calls += 1;
                let (mut choices, failed) = match retriever.retrieve(kind, &q, scope.as_deref(), config.k) {
                    Ok(c) => (c, false),
                    Err(_) => {
                        failures += 1;
                        (RankedChoices::empty(kind, &q, scope.as_deref(), config.k), true)
                    }
                };
                if tf.enabled {
                    if let Some(Some(gold)) = tf.gold.get(state.injected.len()) {
                        force_gold(&mut choices, gold, config.k);
                    }
                }
                let injected = InjectedChoices {
                    at: state.emitted.len(),
                    choices,
                    retrieval_failed: failed,
                };
                transcript.push(event.into());
                transcript.push(TranscriptEntry::ChoicesInjected(injected.clone()));
                state.injected.push(injected);
            }
            GenerationEvent::Done => {
                transcript.push(TranscriptEntry::Done);
                return Ok(SubTaskResult {
                    sub_task: state.sub_task,
                    output: state.emitted.clone(),
                    transcript,
                    retrieval_call_count: calls,
                    retrieval_failures: failures,
                    state,
                    repairs: Vec::new(),
                });
            }
        }
    }
    Err(ProtocolError::BudgetExceeded(config.budget))
}

/// Checks that every request is answered before anything else happens and
/// that nothing follows `done`.
pub fn is_well_bracketed(transcript: &[TranscriptEntry]) -> bool {
    let mut pending = false;
    let mut done = false;
    for e in transcript {
        if done {
            return false;
        }
        match e {
            TranscriptEntry::ChoicesRequest { .. } => {
                if pending {
                    return false;
                }
                pending = true;
            }
            TranscriptEntry::ChoicesInjected(_) => {
                if !pending {
                    return false;
                }
                pending = false;
            }
            TranscriptEntry::Fragment { .. } => {
                if pending {
                    return false;
                }
            }
            TranscriptEntry::Done => {
                if pending {
                    return false;
                }
                done = true;
            }
        }
    }
    !pending
}

/// Writes one JSON object per line.
pub fn write_transcript(mut w: impl Write, transcript: &[TranscriptEntry]) -> std::io::Result<()> {
    for e in transcript {
        serde_json::to_writer(&mut w, e)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn transcript_to_string(transcript: &[TranscriptEntry]) -> String {
    let mut buf = Vec::new();
    write_transcript(&mut buf, transcript).expect("writing to memory");
    String::from_utf8(buf).expect("json is utf-8")
}

pub fn read_transcript(r: impl BufRead) -> std::io::Result<Vec<TranscriptEntry>> {
    let mut out = Vec::new();
    for line in r.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}
