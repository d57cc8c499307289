//! Sub-task and retrieval datasets from labeled workflows.
//!
//! A labeled workflow is a complete workflow document whose steps all carry
//! annotations. It is split into one outline sample and one input sample per
//! step; retrieval samples pair annotations with the artifacts they led to.
//! Samples are stored as JSON lines.

use std::collections::BTreeSet;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::{ArtifactKind, EnvironmentCatalog, ValueKind};
use crate::model::{
    parse_inputs, parse_outline, parse_workflow, serialize_inputs, serialize_outline, validate_workflow, OutlineStep,
    StepRef, TableResolver, ValueExpr, Workflow,
};
use crate::protocol::{force_gold, PromptState};
use crate::retriever::{RankedChoices, Retriever};

pub use crate::retriever::RetrievalSample;

/// File suffix of corpus documents.
pub const CORPUS_SUFFIX: &str = ".flow.yaml";

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("corpus item {index} ({source_name}): {reason}")]
    InvalidCorpusItem {
        index: usize,
        source_name: String,
        reason: String,
    },
    #[error("sample set does not reassemble: {0}")]
    Reassembly(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("line {line}: {source}")]
    Json {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledWorkflow {
    /// File stem or other identifier.
    pub id: String,
    pub workflow: Workflow,
}

impl LabeledWorkflow {
    pub fn requirement(&self) -> &str {
        &self.workflow.requirement
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CreateFlowSample {
    pub id: String,
    pub input: String,
    /// Outline text with annotations.
    pub target: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PopulateInputsSample {
    pub id: String,
    pub requirement: String,
    pub outline: String,
    /// Populated steps with a smaller order than the target.
    pub context: String,
    pub target_step: OutlineStep,
    /// The target step's input list.
    pub target: String,
}

impl PopulateInputsSample {
    /// The generation state this sample trains.
    pub fn prompt_state(&self) -> PromptState {
        PromptState {
            sub_task: crate::protocol::SubTask::PopulateInputs,
            requirement: self.requirement.clone(),
            outline: self.outline.clone(),
            context: self.context.clone(),
            target: Some(self.target_step.clone()),
            injected: Vec::new(),
            emitted: String::new(),
        }
    }
}

impl CreateFlowSample {
    pub fn prompt_state(&self) -> PromptState {
        PromptState::create_flow(self.input.clone())
    }
}

/// Renders a generation state as training prompt text.
pub trait PromptFormat {
    fn render(&self, state: &PromptState) -> String;
}

/// The text [`PromptState::render_prompt`] produces at generation time.
pub struct CanonicalPrompt;

impl PromptFormat for CanonicalPrompt {
    fn render(&self, state: &PromptState) -> String {
        state.render_prompt()
    }
}

impl<F: Fn(&PromptState) -> String> PromptFormat for F {
    fn render(&self, state: &PromptState) -> String {
        self(state)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptPair {
    pub id: String,
    pub prompt: String,
    pub completion: String,
}

/// Prompt/completion pairs for both sub-tasks, outline samples first.
pub fn render_samples(
    create: &[CreateFlowSample],
    populate: &[PopulateInputsSample],
    format: &dyn PromptFormat,
) -> Vec<PromptPair> {
    let outlines = create.iter().map(|c| PromptPair {
        id: c.id.clone(),
        prompt: format.render(&c.prompt_state()),
        completion: c.target.clone(),
    });
    let inputs = populate.iter().map(|p| PromptPair {
        id: p.id.clone(),
        prompt: format.render(&p.prompt_state()),
        completion: p.target.clone(),
    });
    outlines.chain(inputs).collect()
}

/// A retrieval sample with the choices a training prompt would show.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeacherForcedSample {
    pub sample: RetrievalSample,
    pub choices: RankedChoices,
    /// Whether the gold payload had to be inserted.
    pub forced: bool,
}

/// Reads every `*.flow.yaml` file in `dir`, sorted by file name.
pub fn load_corpus(dir: impl AsRef<Path>) -> Result<Vec<LabeledWorkflow>, DatasetError> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.to_string_lossy().ends_with(CORPUS_SUFFIX))
        .collect();
    paths.sort();
    paths
        .iter()
        .enumerate()
        .map(|(index, p)| {
            let name = p
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default();
            let id = name.trim_end_matches(CORPUS_SUFFIX).to_owned();
            let text = fs::read_to_string(p)?;
            let workflow = parse_workflow(&text).map_err(|e| DatasetError::InvalidCorpusItem {
                index,
                source_name: name.clone(),
                reason: e.to_string(),
            })?;
            Ok(LabeledWorkflow { id, workflow })
        })
        .collect()
}

/// Checks that every item validates, has a requirement and annotates every
/// step.
pub fn check_corpus(corpus: &[LabeledWorkflow], catalog: &EnvironmentCatalog) -> Result<(), DatasetError> {
    for (index, item) in corpus.iter().enumerate() {
        let bad = |reason: String| DatasetError::InvalidCorpusItem {
            index,
            source_name: item.id.clone(),
            reason,
        };
        if item.requirement().trim().is_empty() {
            return Err(bad("missing requirement".into()));
        }
        if let Some(s) = item.workflow.steps.iter().find(|s| s.annotation.trim().is_empty()) {
            return Err(bad(format!("step {} has no annotation", s.order)));
        }
        let report = validate_workflow(&item.workflow, catalog);
        if !report.is_valid() {
            return Err(bad(report.to_string()));
        }
    }
    Ok(())
}

pub fn split_create_flow(
    corpus: &[LabeledWorkflow],
    catalog: &EnvironmentCatalog,
) -> Result<Vec<CreateFlowSample>, DatasetError> {
    check_corpus(corpus, catalog)?;
    Ok(corpus
        .iter()
        .map(|item| CreateFlowSample {
            id: item.id.clone(),
            input: item.requirement().to_owned(),
            target: serialize_outline(&item.workflow.extract_outline()),
        })
        .collect())
}

pub fn split_populate_inputs(
    corpus: &[LabeledWorkflow],
    catalog: &EnvironmentCatalog,
) -> Result<Vec<PopulateInputsSample>, DatasetError> {
    check_corpus(corpus, catalog)?;
    let per_item: Vec<Vec<PopulateInputsSample>> = corpus
        .par_iter()
        .map(|item| {
            let w = &item.workflow;
            let outline = w.extract_outline();
            w.steps
                .iter()
                .map(|step| {
                    let earlier: Vec<_> = w.steps.iter().filter(|s| s.order < step.order).cloned().collect();
                    let state = PromptState::populate(w.requirement.clone(), &outline, &earlier, step.order)
                        .expect("validated corpus has consecutive orders");
                    PopulateInputsSample {
                        id: format!("{}#{}", item.id, step.order),
                        requirement: state.requirement,
                        outline: state.outline,
                        context: state.context,
                        target_step: step.outline(),
                        target: serialize_inputs(&step.inputs),
                    }
                })
                .collect()
        })
        .collect();
    Ok(per_item.into_iter().flatten().collect())
}

/// Rebuilds the labeled workflow from its outline sample and its input
/// samples (any order).
pub fn reassemble(
    create: &CreateFlowSample,
    populate: &[PopulateInputsSample],
) -> Result<LabeledWorkflow, DatasetError> {
    let bad = |m: String| DatasetError::Reassembly(m);
    let outline = parse_outline(&create.target).map_err(|e| bad(e.to_string()))?;
    let mut w = outline.to_workflow(create.input.clone());
    if populate.len() != w.steps.len() {
        return Err(bad(format!(
            "{} steps but {} input samples for {}",
            w.steps.len(),
            populate.len(),
            create.id
        )));
    }
    for p in populate {
        let step = w
            .step_mut(p.target_step.order)
            .ok_or_else(|| bad(format!("no step {} in {}", p.target_step.order, create.id)))?;
        if step.outline() != p.target_step {
            return Err(bad(format!("step {} header differs", p.target_step.order)));
        }
        step.inputs = parse_inputs(&p.target).map_err(|e| bad(e.to_string()))?;
    }
    Ok(LabeledWorkflow {
        id: create.id.clone(),
        workflow: w,
    })
}

/// Retrieval samples mined from a corpus: step names and table inputs by
/// annotation, trigger tables by requirement, and the columns and values
/// used in conditions and output references.
pub fn derive_retrieval_samples(corpus: &[LabeledWorkflow], catalog: &EnvironmentCatalog) -> Vec<RetrievalSample> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    let mut push = |kind: ArtifactKind, query: &str, scope: Option<String>, gold: String| {
        if seen.insert((kind, query.to_owned(), scope.clone(), gold.clone())) {
            let unresolved = !catalog.contains(kind, &gold, scope.as_deref());
            out.push(RetrievalSample {
                kind,
                query: query.to_owned(),
                scope,
                gold: vec![gold],
                unresolved,
            });
        }
    };

    for item in corpus {
        let w = &item.workflow;
        let resolver = TableResolver::new(w, catalog);
        let req = w.requirement.as_str();
        if let Some(t) = &w.trigger.table {
            push(ArtifactKind::TableName, req, None, t.clone());
            if let Some(c) = &w.trigger.condition {
                for cj in &c.conjuncts {
                    push(ArtifactKind::ColumnName, req, Some(t.clone()), cj.column.clone());
                    if let Some(v) = value_gold(catalog, t, cj) {
                        push(ArtifactKind::ColumnValue, req, Some(format!("{t}.{}", cj.column)), v);
                    }
                }
            }
        }
        for step in &w.steps {
            let q = step.annotation.as_str();
            push(ArtifactKind::StepName, q, None, step.name.clone());
            let Some(def) = catalog.step(&step.name) else { continue };
            let table = resolver.step_table(step.order);
            for input in &step.inputs {
                let kind = def.input(&input.name).map(|d| d.kind);
                match (&input.value, kind) {
                    (ValueExpr::Literal(t), Some(ValueKind::Table)) => {
                        push(ArtifactKind::TableName, q, None, t.clone());
                    }
                    (ValueExpr::Literal(c), Some(ValueKind::Column)) => {
                        if let Some(t) = &table {
                            push(ArtifactKind::ColumnName, q, Some(t.clone()), c.clone());
                        }
                    }
                    (ValueExpr::Condition(cond), _) => {
                        if let Some(t) = &table {
                            for cj in &cond.conjuncts {
                                push(ArtifactKind::ColumnName, q, Some(t.clone()), cj.column.clone());
                                if let Some(v) = value_gold(catalog, t, cj) {
                                    push(ArtifactKind::ColumnValue, q, Some(format!("{t}.{}", cj.column)), v);
                                }
                            }
                        }
                    }
                    _ => {}
                }
                // Columns walked through by output references.
                for r in input.value.refs() {
                    let mut base = r.clone();
                    base.path.truncate(1);
                    let Some(mut t) = resolver.ref_table(&base) else {
                        continue;
                    };
                    if r.step == StepRef::Trigger && w.trigger.table.is_none() {
                        continue;
                    }
                    for col in r.path.iter().skip(1) {
                        push(ArtifactKind::ColumnName, q, Some(t.clone()), col.clone());
                        match catalog.column(&t, col).and_then(|c| c.reference.clone()) {
                            Some(next) => t = next,
                            None => break,
                        }
                    }
                }
            }
        }
    }
    out
}

fn value_gold(catalog: &EnvironmentCatalog, table: &str, cj: &crate::model::Conjunct) -> Option<String> {
    let enumerated = catalog.column(table, &cj.column).is_some_and(|c| !c.values.is_empty());
    enumerated.then(|| cj.literal_operand()).flatten()
}

/// Top-`k` choices per sample with the gold payload forced in when missed.
pub fn inject_teacher_forcing(
    samples: &[RetrievalSample],
    retriever: &dyn Retriever,
    k: usize,
) -> Vec<TeacherForcedSample> {
    samples
        .iter()
        .map(|s| {
            let mut choices = retriever
                .retrieve(s.kind, &s.query, s.scope.as_deref(), k)
                .unwrap_or_else(|_| RankedChoices::empty(s.kind, &s.query, s.scope.as_deref(), k));
            let mut forced = false;
            for g in &s.gold {
                forced |= force_gold(&mut choices, g, k);
            }
            TeacherForcedSample {
                sample: s.clone(),
                choices,
                forced,
            }
        })
        .collect()
}

/// Share of sites whose choices contain every gold payload.
pub fn gold_presence(samples: &[TeacherForcedSample]) -> f64 {
    if samples.is_empty() {
        return 1.0;
    }
    let ok = samples
        .iter()
        .filter(|t| t.sample.gold.iter().all(|g| t.choices.contains(g)))
        .count();
    ok as f64 / samples.len() as f64
}

/// Writes one JSON object per line, replacing `path` atomically.
pub fn write_jsonl<T: Serialize>(path: impl AsRef<Path>, items: &[T]) -> Result<(), DatasetError> {
    let path = path.as_ref();
    let tmp = path.with_extension("jsonl.tmp");
    {
        let mut f = std::io::BufWriter::new(fs::File::create(&tmp)?);
        for item in items {
            serde_json::to_writer(&mut f, item).map_err(|e| DatasetError::Json { line: 0, source: e })?;
            f.write_all(b"\n")?;
        }
        f.flush()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn read_jsonl<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<Vec<T>, DatasetError> {
    let f = BufReader::new(fs::File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in f.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| DatasetError::Json { line: i + 1, source: e })?);
    }
    Ok(out)
}
