use super::script::{self, ScriptItem};
use super::{GenerationEvent, Generator, GeneratorError, PromptState, TranscriptEntry};

/// Replays the fragments and requests of a recorded transcript.
#[derive(Debug, Clone)]
pub struct ScriptedGenerator {
    items: Vec<ScriptItem>,
}

impl ScriptedGenerator {
    pub fn from_transcript(transcript: &[TranscriptEntry]) -> Self {
        let items = transcript
            .iter()
            .filter_map(|e| match e {
                TranscriptEntry::Fragment { text } => Some(ScriptItem::Text(text.clone())),
                TranscriptEntry::ChoicesRequest { kind, query, scope } => Some(ScriptItem::Ask {
                    kind: *kind,
                    query: query.clone(),
                    scope: scope.clone(),
                }),
                TranscriptEntry::ChoicesInjected(_) | TranscriptEntry::Done => None,
            })
            .collect();
        Self { items }
    }

    /// Emits `text` in one fragment without requests.
    pub fn fixed(text: impl Into<String>) -> Self {
        Self {
            items: vec![ScriptItem::Text(text.into())],
        }
    }
}

impl Generator for ScriptedGenerator {
    fn name(&self) -> &str {
        "scripted"
    }

    fn next_event(&self, state: &PromptState) -> Result<GenerationEvent, GeneratorError> {
        script::next_event(&self.items, true, state)
    }
}
