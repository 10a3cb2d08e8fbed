//! OpenAI-compatible chat-completions transport.

use std::time::Duration;

use hetgcot_core::llm::{LlmSettings, Transport, TransportError};
use serde_json::{json, Value};

pub struct HttpTransport {
    agent: ureq::Agent,
    api_key: Option<String>,
}

impl HttpTransport {
    pub fn new(settings: &LlmSettings, api_key: Option<String>) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(settings.timeout_ms)))
            .http_status_as_error(false)
            .build()
            .into();
        Self { agent, api_key }
    }
}

fn transient(message: String) -> TransportError {
    TransportError {
        transient: true,
        message,
    }
}

fn fatal(message: String) -> TransportError {
    TransportError {
        transient: false,
        message,
    }
}

/// The assistant text of the first choice.
pub fn completion_text(body: &Value) -> Option<&str> {
    body.get("choices")?.get(0)?.get("message")?.get("content")?.as_str()
}

impl Transport for HttpTransport {
    fn send(&self, system: &str, user: &str, settings: &LlmSettings) -> Result<String, TransportError> {
        let body = json!({
            "model": settings.model,
            "temperature": settings.temperature,
            "max_tokens": settings.max_output_tokens,
            "messages": [
                {"role": "system", "content": system},
                {"role": "user", "content": user},
            ],
        });
        let mut req = self.agent.post(&settings.endpoint).header("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = match req.send_json(&body) {
            Ok(r) => r,
            Err(ureq::Error::Timeout(t)) => return Err(transient(format!("timed out ({t})"))),
            Err(ureq::Error::Io(e)) => return Err(transient(format!("i/o error: {e}"))),
            Err(ureq::Error::ConnectionFailed) => return Err(transient(String::from("connection failed"))),
            Err(e) => return Err(fatal(e.to_string())),
        };
        let status = resp.status().as_u16();
        let text = resp.body_mut().read_to_string().unwrap_or_default();
        if status == 429 || status >= 500 {
            return Err(transient(format!("HTTP {status}: {}", snippet(&text))));
        }
        if status >= 400 {
            return Err(fatal(format!("HTTP {status}: {}", snippet(&text))));
        }
        let parsed: Value = serde_json::from_str(&text).map_err(|e| fatal(format!("invalid response JSON: {e}")))?;
        completion_text(&parsed)
            .map(str::to_string)
            .ok_or_else(|| fatal(format!("response has no message content: {}", snippet(&text))))
    }
}

fn snippet(s: &str) -> String {
    s.chars().take(200).collect()
}
