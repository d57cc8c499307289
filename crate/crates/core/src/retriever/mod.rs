//! Ranked artifact choices for generation.
//!
//! [`LexicalIndex`] scores artifacts by cosine similarity of IDF-weighted
//! word and character-trigram vectors. Anything implementing [`Retriever`]
//! can replace it, and [`Filtered`] narrows any retriever with a
//! per-artifact predicate (for example user permissions).

mod eval;
mod index;
pub mod text;

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::{ArtifactKind, CatalogVersion};

pub use eval::{evaluate_retrieval, KindMetrics, RetrievalReport, RetrievalSample, SampleFlag, SampleOutcome};
pub use index::{BuildStatus, LexicalIndex, SubIndex};

/// Default number of choices offered per request.
pub const DEFAULT_K: usize = 4;

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error("k must be at least 1")]
    InvalidK,
    #[error("{0} queries require a scope")]
    ScopeRequired(ArtifactKind),
    #[error("index built from catalog {index} but catalog is {catalog}")]
    StaleIndex {
        index: CatalogVersion,
        catalog: CatalogVersion,
    },
    #[error("no retrieval samples")]
    EmptySampleSet,
    #[error("retriever unavailable: {0}")]
    Unavailable(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Choice {
    pub payload: String,
    pub score: f64,
    /// Inserted by teacher forcing rather than retrieved.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub forced: bool,
}

impl Choice {
    pub fn new(payload: impl Into<String>, score: f64) -> Self {
        Self {
            payload: payload.into(),
            score,
            forced: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedChoices {
    pub query: String,
    pub kind: ArtifactKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scope: Option<String>,
    pub k: usize,
    pub choices: Vec<Choice>,
}

impl RankedChoices {
    pub fn empty(kind: ArtifactKind, query: &str, scope: Option<&str>, k: usize) -> Self {
        Self {
            query: query.to_owned(),
            kind,
            scope: scope.map(str::to_owned),
            k,
            choices: Vec::new(),
        }
    }

    pub fn payloads(&self) -> impl Iterator<Item = &str> {
        self.choices.iter().map(|c| c.payload.as_str())
    }

    pub fn contains(&self, payload: &str) -> bool {
        self.payloads().any(|p| p == payload)
    }

    pub fn top(&self) -> Option<&Choice> {
        self.choices.first()
    }

    /// Numbered, payload-only list as placed into a prompt.
    pub fn render(&self) -> String {
        self.choices
            .iter()
            .enumerate()
            .map(|(i, c)| format!("{}. {}\n", i + 1, c.payload))
            .collect()
    }
}

pub trait Retriever: Send + Sync {
    fn retrieve(
        &self,
        kind: ArtifactKind,
        query: &str,
        scope: Option<&str>,
        k: usize,
    ) -> Result<RankedChoices, RetrievalError>;
}

impl<R: Retriever + ?Sized> Retriever for Arc<R> {
    fn retrieve(
        &self,
        kind: ArtifactKind,
        query: &str,
        scope: Option<&str>,
        k: usize,
    ) -> Result<RankedChoices, RetrievalError> {
        (**self).retrieve(kind, query, scope, k)
    }
}

impl<R: Retriever + ?Sized> Retriever for &R {
    fn retrieve(
        &self,
        kind: ArtifactKind,
        query: &str,
        scope: Option<&str>,
        k: usize,
    ) -> Result<RankedChoices, RetrievalError> {
        (**self).retrieve(kind, query, scope, k)
    }
}

pub type ArtifactFilter = Arc<dyn Fn(ArtifactKind, Option<&str>, &str) -> bool + Send + Sync>;

/// Drops choices the filter rejects, then truncates to `k`.
pub struct Filtered<R> {
    inner: R,
    allow: ArtifactFilter,
}

impl<R: Retriever> Filtered<R> {
    pub fn new(inner: R, allow: ArtifactFilter) -> Self {
        Self { inner, allow }
    }
}

impl<R: Retriever> Retriever for Filtered<R> {
    fn retrieve(
        &self,
        kind: ArtifactKind,
        query: &str,
        scope: Option<&str>,
        k: usize,
    ) -> Result<RankedChoices, RetrievalError> {
        if k == 0 {
            return Err(RetrievalError::InvalidK);
        }
        let mut r = self.inner.retrieve(kind, query, scope, usize::MAX)?;
        r.choices.retain(|c| (self.allow)(kind, scope, &c.payload));
        r.choices.truncate(k);
        r.k = k;
        Ok(r)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{CatalogDocument, EnvironmentCatalog};

    #[test]
    fn filter_hides_artifacts() {
        let steps = "- { name: send_email }\n- { name: send_sms }\n- { name: send_slack }\n";
        let c = EnvironmentCatalog::from_documents(&[CatalogDocument::new("s", steps)], &[]).unwrap();
        let idx = LexicalIndex::build(&c);
        let f = Filtered::new(&idx, Arc::new(|_, _, p: &str| p != "send_email"));
        let r = f.retrieve(ArtifactKind::StepName, "send email", None, 1).unwrap();
        assert_eq!(r.choices.len(), 1);
        assert_ne!(r.choices[0].payload, "send_email");
    }

    #[test]
    fn render_is_numbered() {
        let r = RankedChoices {
            query: "q".into(),
            kind: ArtifactKind::TableName,
            scope: None,
            k: 4,
            choices: vec![Choice::new("incident", 0.9), Choice::new("problem", 0.2)],
        };
        assert_eq!(r.render(), "1. incident\n2. problem\n");
    }
}
