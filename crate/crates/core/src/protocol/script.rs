//! Stateless replay: a generator describes its whole output as a script and
//! the position within it is recovered from the prompt state.

use super::{GenerationEvent, GeneratorError, InjectedChoices, PromptState};
use crate::catalog::ArtifactKind;
use crate::retriever::RankedChoices;

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum ScriptItem {
    Text(String),
    Ask {
        kind: ArtifactKind,
        query: String,
        scope: Option<String>,
    },
}

/// Why a script stopped before its end.
#[derive(Debug)]
pub(crate) enum Halt {
    /// The next request has not been answered yet.
    Suspend,
    Error(GeneratorError),
}

impl From<GeneratorError> for Halt {
    fn from(e: GeneratorError) -> Self {
        Halt::Error(e)
    }
}

/// Collects script items, answering requests from the choices injected so far.
pub(crate) struct Script<'s> {
    items: Vec<ScriptItem>,
    answers: &'s [InjectedChoices],
}

impl<'s> Script<'s> {
    pub(crate) fn new(answers: &'s [InjectedChoices]) -> Self {
        Self {
            items: Vec::new(),
            answers,
        }
    }

    pub(crate) fn emit(&mut self, text: impl Into<String>) {
        let text = text.into();
        if !text.is_empty() {
            self.items.push(ScriptItem::Text(text));
        }
    }

    pub(crate) fn ask(
        &mut self,
        kind: ArtifactKind,
        query: &str,
        scope: Option<&str>,
    ) -> Result<&'s RankedChoices, Halt> {
        let asked = self
            .items
            .iter()
            .filter(|i| matches!(i, ScriptItem::Ask { .. }))
            .count();
        self.items.push(ScriptItem::Ask {
            kind,
            query: query.to_owned(),
            scope: scope.map(str::to_owned),
        });
        match self.answers.get(asked) {
            Some(a) => Ok(&a.choices),
            None => Err(Halt::Suspend),
        }
    }

    pub(crate) fn into_items(self) -> Vec<ScriptItem> {
        self.items
    }
}

/// The event that follows `state` in `items`. `complete` says whether the
/// script runs to its end or stops at an unanswered request.
pub(crate) fn next_event(
    items: &[ScriptItem],
    complete: bool,
    state: &PromptState,
) -> Result<GenerationEvent, GeneratorError> {
    let emitted = state.emitted.as_str();
    let mut pos = 0;
    let mut asked = 0;
    for item in items {
        match item {
            ScriptItem::Text(t) => {
                let end = pos + t.len();
                if end <= emitted.len() {
                    if &emitted[pos..end] != t {
                        return Err(diverged());
                    }
                    pos = end;
                    continue;
                }
                let done = &emitted[pos..];
                if !t.starts_with(done) {
                    return Err(diverged());
                }
                return Ok(GenerationEvent::Fragment {
                    text: t[done.len()..].to_owned(),
                });
            }
            ScriptItem::Ask { kind, query, scope } => {
                if asked < state.injected.len() {
                    asked += 1;
                    continue;
                }
                if pos != emitted.len() {
                    return Err(diverged());
                }
                return Ok(GenerationEvent::ChoicesRequest {
                    kind: *kind,
                    query: query.clone(),
                    scope: scope.clone(),
                });
            }
        }
    }
    if pos != emitted.len() || asked != state.injected.len() {
        return Err(diverged());
    }
    if complete {
        Ok(GenerationEvent::Done)
    } else {
        Err(GeneratorError::Fault(
            "script suspended without a pending request".into(),
        ))
    }
}

fn diverged() -> GeneratorError {
    GeneratorError::Fault("prompt state does not follow this generator's output".into())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::SubTask;

    fn state(emitted: &str, injected: usize) -> PromptState {
        let mut s = PromptState::create_flow("r");
        assert_eq!(s.sub_task, SubTask::CreateFlow);
        s.emitted = emitted.into();
        s.injected = (0..injected)
            .map(|_| InjectedChoices {
                at: 0,
                choices: RankedChoices::empty(ArtifactKind::StepName, "q", None, 4),
                retrieval_failed: false,
            })
            .collect();
        s
    }

    #[test]
    fn walks_the_script() {
        let items = vec![
            ScriptItem::Text("ab".into()),
            ScriptItem::Ask {
                kind: ArtifactKind::StepName,
                query: "q".into(),
                scope: None,
            },
            ScriptItem::Text("cd".into()),
        ];
        assert_eq!(
            next_event(&items, true, &state("", 0)).unwrap(),
            GenerationEvent::Fragment { text: "ab".into() }
        );
        assert!(matches!(
            next_event(&items, true, &state("ab", 0)).unwrap(),
            GenerationEvent::ChoicesRequest { .. }
        ));
        assert_eq!(
            next_event(&items, true, &state("ab", 1)).unwrap(),
            GenerationEvent::Fragment { text: "cd".into() }
        );
        assert_eq!(
            next_event(&items, true, &state("abc", 1)).unwrap(),
            GenerationEvent::Fragment { text: "d".into() }
        );
        assert_eq!(
            next_event(&items, true, &state("abcd", 1)).unwrap(),
            GenerationEvent::Done
        );
        assert!(next_event(&items, true, &state("xx", 0)).is_err());
    }
}
