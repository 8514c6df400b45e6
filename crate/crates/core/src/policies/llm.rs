use std::sync::Arc;

use super::parse::parse_llm_decision;
use super::prompt::{render_prompt, PromptSet};
use super::{DecisionKind, Policy, PolicyContext, PolicyDecision, PolicyError};
use crate::llm::{ChatBackend, ChatMessage};

pub const DEFAULT_MAX_ATTEMPTS: u32 = 3;

/// Agent driven by a chat model.
///
/// A reply that fails to parse is echoed back with the error and the model
/// gets another try, up to `max_attempts` in total.
pub struct LlmPolicy {
    backend: Arc<dyn ChatBackend>,
    prompts: Arc<PromptSet>,
    max_attempts: u32,
    label: String,
}

impl LlmPolicy {
    pub fn new(backend: Arc<dyn ChatBackend>, prompts: Arc<PromptSet>, model: &str) -> Self {
        Self { backend, prompts, max_attempts: DEFAULT_MAX_ATTEMPTS, label: format!("llm:{model}") }
    }

    pub fn with_max_attempts(mut self, n: u32) -> Self {
        self.max_attempts = n.max(1);
        self
    }
}

impl Policy for LlmPolicy {
    fn name(&self) -> String {
        self.label.clone()
    }

    fn interactive(&self) -> bool {
        true
    }

    fn decide(&self, kind: DecisionKind, ctx: &PolicyContext) -> Result<PolicyDecision, PolicyError> {
        let prompt = render_prompt(&self.prompts, kind, ctx)?;
        let mut messages = vec![ChatMessage::user(prompt.user)];
        let mut last = String::new();
        for _ in 0..self.max_attempts {
            let reply = self.backend.complete(&prompt.system, &messages)?;
            match parse_llm_decision(kind, &reply, ctx) {
                Ok(d) => return Ok(d),
                Err(PolicyError::MalformedDecision(why)) => {
                    tracing::debug!(agent = %ctx.me(), ?kind, %why, "unparseable reply");
                    messages.push(ChatMessage::assistant(reply));
                    messages.push(ChatMessage::user(format!(
                        "Your previous reply could not be used: {why}. Reply again and end with a valid ```decision block."
                    )));
                    last = why;
                }
                Err(e) => return Err(e),
            }
        }
        Err(PolicyError::MalformedDecision(last))
    }
}
