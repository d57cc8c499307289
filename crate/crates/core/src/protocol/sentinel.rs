//! Adapter for generators that write plain text and ask for choices with a
//! literal sentinel line: `choices:KIND[@scope] query`.

use super::{GenerationEvent, Generator, GeneratorError, PromptState};
use crate::catalog::ArtifactKind;

pub const SENTINEL: &str = "choices:";

/// A generator that produces raw text chunks. An empty chunk ends generation.
pub trait TextGenerator: Send + Sync {
    fn name(&self) -> &str;
    fn next_text(&self, state: &PromptState) -> Result<String, GeneratorError>;
}

/// Parses `KIND[@scope] query` (the part after the sentinel).
pub fn parse_sentinel(line: &str) -> Result<GenerationEvent, GeneratorError> {
    let bad = || GeneratorError::Fault(format!("malformed choices request `{line}`"));
    let line = line.trim();
    let (head, query) = line.split_once(char::is_whitespace).ok_or_else(bad)?;
    let (kind, scope) = match head.split_once('@') {
        Some((k, s)) => (k, Some(s.to_owned())),
        None => (head, None),
    };
    let kind: ArtifactKind = kind.parse().map_err(|_| bad())?;
    let query = query.trim();
    if query.is_empty() {
        return Err(bad());
    }
    Ok(GenerationEvent::ChoicesRequest {
        kind,
        query: query.to_owned(),
        scope,
    })
}

/// Turns sentinel lines in a text stream into structured requests. Text
/// before a sentinel is emitted first; the inner generator is expected to
/// continue from the new prompt state.
pub struct SentinelAdapter<T> {
    inner: T,
}

impl<T: TextGenerator> SentinelAdapter<T> {
    pub fn new(inner: T) -> Self {
        Self { inner }
    }
}

impl<T: TextGenerator> Generator for SentinelAdapter<T> {
    fn name(&self) -> &str {
        self.inner.name()
    }

    fn next_event(&self, state: &PromptState) -> Result<GenerationEvent, GeneratorError> {
        let text = self.inner.next_text(state)?;
        if text.is_empty() {
            return Ok(GenerationEvent::Done);
        }
        match text.find(SENTINEL) {
            Some(0) => {
                let rest = &text[SENTINEL.len()..];
                parse_sentinel(rest.split('\n').next().unwrap_or(""))
            }
            Some(i) => Ok(GenerationEvent::Fragment {
                text: text[..i].to_owned(),
            }),
            None => Ok(GenerationEvent::Fragment { text }),
        }
    }
}
