//! A generator served over HTTP.
//!
//! Each call posts the [`PromptState`] as JSON and expects one
//! [`GenerationEvent`] back, e.g. `{"event":"fragment","text":"..."}`,
//! `{"event":"choices_request","kind":"TABLE_NAME","query":"..."}` or
//! `{"event":"done"}`.

use std::time::Duration;

use flowforge::protocol::{GenerationEvent, Generator, GeneratorError, PromptState};

pub const NAME: &str = "http";

pub struct HttpGenerator {
    url: String,
    agent: ureq::Agent,
}

impl HttpGenerator {
    pub fn new(url: impl Into<String>) -> Self {
        Self::with_timeout(url, Duration::from_secs(60))
    }

    pub fn with_timeout(url: impl Into<String>, timeout: Duration) -> Self {
        Self {
            url: url.into(),
            agent: ureq::AgentBuilder::new().timeout(timeout).build(),
        }
    }
}

impl Generator for HttpGenerator {
    fn name(&self) -> &str {
        NAME
    }

    fn next_event(&self, state: &PromptState) -> Result<GenerationEvent, GeneratorError> {
        let transport = |e: &dyn std::fmt::Display| GeneratorError::Transport(format!("{}: {e}", self.url));
        let resp = self.agent.post(&self.url).send_json(state).map_err(|e| transport(&e))?;
        resp.into_json::<GenerationEvent>().map_err(|e| transport(&e))
    }
}
