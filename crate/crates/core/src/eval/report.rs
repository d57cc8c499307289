use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{flow_similarity, TreeMode};
use crate::model::Workflow;
use crate::retriever::RetrievalReport;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EvalError {
    #[error("nothing to evaluate")]
    EmptyCorpus,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvaluationPair {
    pub id: String,
    pub expected: Workflow,
    pub generated: Workflow,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub count: usize,
    pub mean: f64,
    pub median: f64,
}

impl Aggregate {
    /// Summarizes `values` in the given order; `None` when empty.
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        let median = if n % 2 == 1 {
            sorted[n / 2]
        } else {
            (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
        };
        Some(Self {
            count: n,
            mean: values.iter().sum::<f64>() / n as f64,
            median,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairScore {
    pub id: String,
    pub outline: f64,
    pub full: f64,
    /// Input similarity per step type present in either workflow.
    pub steps: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepTypeRow {
    pub step: String,
    #[serde(flatten)]
    pub scores: Aggregate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub pairs: Vec<PairScore>,
    pub outline: Aggregate,
    pub full: Aggregate,
    /// Over every (pair, step type) input score.
    pub inputs: Aggregate,
    /// Ascending by mean, so the weakest step types come first.
    pub per_step: Vec<StepTypeRow>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub retrieval: Option<RetrievalReport>,
}

pub fn evaluate_corpus(pairs: &[EvaluationPair]) -> Result<EvaluationReport, EvalError> {
    if pairs.is_empty() {
        return Err(EvalError::EmptyCorpus);
    }
    let scores: Vec<PairScore> = pairs.par_iter().map(score_pair).collect();

    let outline: Vec<f64> = scores.iter().map(|s| s.outline).collect();
    let full: Vec<f64> = scores.iter().map(|s| s.full).collect();
    let mut by_step: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    let mut inputs = Vec::new();
    for s in &scores {
        for (step, v) in &s.steps {
            by_step.entry(step).or_default().push(*v);
            inputs.push(*v);
        }
    }
    let mut per_step: Vec<StepTypeRow> = by_step
        .into_iter()
        .map(|(step, v)| StepTypeRow {
            step: step.to_owned(),
            scores: Aggregate::of(&v).expect("non-empty"),
        })
        .collect();
    per_step.sort_by(|a, b| {
        a.scores
            .mean
            .total_cmp(&b.scores.mean)
            .then_with(|| a.step.cmp(&b.step))
    });

    let empty = Aggregate {
        count: 0,
        mean: 1.0,
        median: 1.0,
    };
    Ok(EvaluationReport {
        outline: Aggregate::of(&outline).expect("non-empty"),
        full: Aggregate::of(&full).expect("non-empty"),
        inputs: Aggregate::of(&inputs).unwrap_or(empty),
        pairs: scores,
        per_step,
        retrieval: None,
    })
}

fn score_pair(p: &EvaluationPair) -> PairScore {
    let names: std::collections::BTreeSet<&str> = p
        .expected
        .steps
        .iter()
        .chain(&p.generated.steps)
        .map(|s| s.name.as_str())
        .collect();
    PairScore {
        id: p.id.clone(),
        outline: flow_similarity(&p.expected, &p.generated, &TreeMode::OutlineOnly),
        full: flow_similarity(&p.expected, &p.generated, &TreeMode::Full),
        steps: names
            .into_iter()
            .map(|n| {
                let mode = TreeMode::SingleStep(n.to_owned());
                (n.to_owned(), flow_similarity(&p.expected, &p.generated, &mode))
            })
            .collect(),
    }
}

impl EvaluationReport {
    pub fn with_retrieval(mut self, r: RetrievalReport) -> Self {
        self.retrieval = Some(r);
        self
    }

    /// Plain-text summary and per-step table.
    pub fn render_table(&self) -> String {
        let mut s = String::new();
        let row = |s: &mut String, name: &str, a: &Aggregate| {
            let _ = writeln!(s, "{name:<24} {:>5} {:>8.4} {:>8.4}", a.count, a.mean, a.median);
        };
        let _ = writeln!(s, "{:<24} {:>5} {:>8} {:>8}", "group", "n", "mean", "median");
        row(&mut s, "outline", &self.outline);
        row(&mut s, "full", &self.full);
        row(&mut s, "inputs", &self.inputs);
        s.push('\n');
        let _ = writeln!(s, "{:<24} {:>5} {:>8} {:>8}", "step type", "n", "mean", "median");
        for r in &self.per_step {
            row(&mut s, &r.step, &r.scores);
        }
        if let Some(r) = &self.retrieval {
            let o = &r.overall;
            let _ = writeln!(
                s,
                "\nretrieval: n={} R@1={:.4} R@4={:.4} MRR@10={:.4}",
                o.samples, o.recall_at_1, o.recall_at_4, o.mrr_at_10
            );
        }
        s
    }
}
