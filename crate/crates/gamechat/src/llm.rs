//! Chat-completions negotiation backend.

use std::env;
use std::time::Duration;

use gamechat_core::negotiation::{
    parse_reply_verdict, render_prompt, BackendError, NegotiationBackend, Reply, TurnRequest,
};
use serde_json::{json, Value};

use crate::config::ConfigError;

pub const ENV_BASE_URL: &str = "LLM_BASE_URL";
pub const ENV_MODEL: &str = "LLM_MODEL";
pub const ENV_API_KEY: &str = "LLM_API_KEY";
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(10);

/// Sent as the user turn when the agent opens the conversation.
pub const OPENING_TURN: &str = "Another agent is nearby. Start the conversation.";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LlmConfig {
    /// Base URL up to and including the API version, e.g. `.../v1`.
    pub base_url: String,
    pub model: String,
    pub api_key: String,
    pub timeout: Duration,
}

impl LlmConfig {
    pub fn from_env() -> Result<Self, ConfigError> {
        let var = |name: &'static str| {
            env::var(name)
                .ok()
                .filter(|v| !v.trim().is_empty())
                .ok_or(ConfigError::MissingEnv(name))
        };
        Ok(Self {
            base_url: var(ENV_BASE_URL)?,
            model: var(ENV_MODEL)?,
            api_key: var(ENV_API_KEY)?,
            timeout: DEFAULT_TIMEOUT,
        })
    }

    pub fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.base_url.trim_end_matches('/'))
    }
}

pub struct LlmBackend {
    config: LlmConfig,
    agent: ureq::Agent,
}

impl LlmBackend {
    pub fn new(config: LlmConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .build()
            .into();
        Self { config, agent }
    }

    pub fn config(&self) -> &LlmConfig {
        &self.config
    }

    fn complete(&self, body: &Value) -> Result<String, BackendError> {
        let mut response = self
            .agent
            .post(self.config.endpoint())
            .header("Authorization", format!("Bearer {}", self.config.api_key))
            .send_json(body)
            .map_err(|e| BackendError(e.to_string()))?;
        let reply: Value = response
            .body_mut()
            .read_json()
            .map_err(|e| BackendError(format!("unreadable response: {e}")))?;
        reply["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_owned)
            .ok_or_else(|| BackendError(format!("response has no message content: {reply}")))
    }
}

/// Chat request for one turn: the rendered prompt as the system message, then
/// the dialogue so far from the speaker's point of view.
pub fn request_body(model: &str, turn: &TurnRequest<'_>) -> Result<Value, BackendError> {
    let system = render_prompt(turn.task).map_err(|e| BackendError(e.to_string()))?;
    let mut messages = vec![json!({ "role": "system", "content": system })];
    let spoken: Vec<_> = turn.history.iter().filter(|m| !m.text.is_empty()).collect();
    if spoken.first().is_none_or(|m| m.sender == turn.agent) {
        messages.push(json!({ "role": "user", "content": OPENING_TURN }));
    }
    for m in spoken {
        let role = if m.sender == turn.agent { "assistant" } else { "user" };
        messages.push(json!({ "role": role, "content": m.text }));
    }
    Ok(json!({
        "model": model,
        "messages": messages,
        "temperature": 0,
    }))
}

impl NegotiationBackend for LlmBackend {
    fn next_message(&mut self, turn: &TurnRequest<'_>) -> Result<Reply, BackendError> {
        let body = request_body(&self.config.model, turn)?;
        let text = self.complete(&body)?;
        let verdict = parse_reply_verdict(turn.task, &text, turn.history, turn.agent);
        log::debug!("agent {} replied {:?} ({:?})", turn.agent, text, verdict);
        Ok(Reply {
            text: text.trim().to_owned(),
            verdict,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use gamechat_core::negotiation::{Message, Verdict};

    fn msg(sender: usize, text: &str) -> Message {
        Message {
            sender,
            sim_time: 0.0,
            text: text.into(),
            verdict: Verdict::Undecided,
        }
    }

    #[test]
    fn opening_request() {
        let turn = TurnRequest {
            agent: 0,
            task: "the emergency room",
            history: &[],
        };
        let body = request_body("m", &turn).unwrap();
        let msgs = body["messages"].as_array().unwrap();
        assert_eq!(msgs.len(), 2);
        assert_eq!(msgs[0]["role"], "system");
        assert!(msgs[0]["content"]
            .as_str()
            .unwrap()
            .contains("taking someone to the emergency room"));
        assert_eq!(msgs[1]["role"], "user");
        assert_eq!(body["temperature"], 0);
        assert_eq!(body["model"], "m");
    }

    #[test]
    fn history_roles_follow_speaker() {
        let history = [msg(0, "a"), msg(1, "b"), msg(0, "c")];
        let turn = TurnRequest {
            agent: 1,
            task: "buy groceries",
            history: &history,
        };
        let body = request_body("m", &turn).unwrap();
        let roles: Vec<&str> = body["messages"]
            .as_array()
            .unwrap()
            .iter()
            .map(|m| m["role"].as_str().unwrap())
            .collect();
        assert_eq!(roles, ["system", "user", "assistant", "user"]);
    }

    #[test]
    fn failed_turns_are_skipped() {
        let history = [msg(0, ""), msg(1, "b")];
        let turn = TurnRequest {
            agent: 0,
            task: "buy groceries",
            history: &history,
        };
        let body = request_body("m", &turn).unwrap();
        assert_eq!(body["messages"].as_array().unwrap().len(), 2);
    }

    #[test]
    fn empty_task_is_an_error() {
        let turn = TurnRequest {
            agent: 0,
            task: "",
            history: &[],
        };
        assert!(request_body("m", &turn).is_err());
    }

    #[test]
    fn endpoint_joins_cleanly() {
        let cfg = LlmConfig {
            base_url: "http://h/v1/".into(),
            model: "m".into(),
            api_key: "k".into(),
            timeout: DEFAULT_TIMEOUT,
        };
        assert_eq!(cfg.endpoint(), "http://h/v1/chat/completions");
    }

    #[test]
    fn unreachable_endpoint_fails_cleanly() {
        let mut backend = LlmBackend::new(LlmConfig {
            base_url: "http://127.0.0.1:9".into(),
            model: "m".into(),
            api_key: "k".into(),
            timeout: Duration::from_secs(2),
        });
        let turn = TurnRequest {
            agent: 0,
            task: "buy groceries",
            history: &[],
        };
        assert!(backend.next_message(&turn).is_err());
    }
}
