//! Chat-completion transport over an external `curl` process.

use std::io::Write as _;
use std::path::PathBuf;
use std::process::{Command, Stdio};
use std::sync::atomic::{AtomicU64, Ordering};

use necc::chat::{ChatClient, ChatError, ChatRequest, ChatResponse};
use serde_json::{json, Value};

/// Environment variable holding the API secret.
pub const API_KEY_VAR: &str = "NECC_API_KEY";
pub const DEFAULT_URL: &str = "https://api.openai.com/v1/chat/completions";

static BODY_COUNTER: AtomicU64 = AtomicU64::new(0);

/// OpenAI-compatible endpoint. The key reaches curl on stdin, never on the
/// command line.
pub struct CurlClient {
    pub url: String,
    pub api_key: String,
    pub curl: PathBuf,
    pub timeout_s: u64,
}

impl CurlClient {
    pub fn from_env(url: &str) -> Result<Self, String> {
        let api_key = std::env::var(API_KEY_VAR).map_err(|_| format!("{API_KEY_VAR} is not set"))?;
        Ok(CurlClient { url: url.to_string(), api_key, curl: "curl".into(), timeout_s: 300 })
    }
}

pub fn request_body(request: &ChatRequest) -> Value {
    json!({
        "model": request.model,
        "temperature": request.temperature,
        "messages": request.messages,
    })
}

pub fn parse_completion(body: &str) -> Result<ChatResponse, ChatError> {
    let v: Value = serde_json::from_str(body).map_err(|e| ChatError::Malformed(e.to_string()))?;
    if let Some(err) = v.get("error") {
        let msg = err.get("message").and_then(Value::as_str).unwrap_or("unknown error");
        return Err(ChatError::Transport(msg.to_string()));
    }
    let text = v
        .pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .ok_or_else(|| ChatError::Malformed("no choices[0].message.content".into()))?;
    let usage = |k: &str| v.pointer(&format!("/usage/{k}")).and_then(Value::as_u64).unwrap_or(0);
    Ok(ChatResponse { text: text.to_string(), prompt_tokens: usage("prompt_tokens"), completion_tokens: usage("completion_tokens") })
}

fn quote(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

impl ChatClient for CurlClient {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, ChatError> {
        let n = BODY_COUNTER.fetch_add(1, Ordering::Relaxed);
        let body_path = std::env::temp_dir().join(format!("necc-body-{}-{n}.json", std::process::id()));
        std::fs::write(&body_path, request_body(request).to_string()).map_err(|e| ChatError::Transport(e.to_string()))?;
        let config = format!("header = {}\n", quote(&format!("Authorization: Bearer {}", self.api_key)));
        let child = Command::new(&self.curl)
            .args(["--silent", "--show-error", "--max-time", &self.timeout_s.to_string(), "--config", "-"])
            .args(["-H", "Content-Type: application/json", "--data-binary"])
            .arg(format!("@{}", body_path.display()))
            .arg(&self.url)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn();
        let result = child.map_err(|e| ChatError::Transport(format!("cannot run curl: {e}"))).and_then(|mut child| {
            child
                .stdin
                .take()
                .expect("piped stdin")
                .write_all(config.as_bytes())
                .map_err(|e| ChatError::Transport(e.to_string()))?;
            child.wait_with_output().map_err(|e| ChatError::Transport(e.to_string()))
        });
        let _ = std::fs::remove_file(&body_path);
        let out = result?;
        if !out.status.success() {
            return Err(ChatError::Transport(String::from_utf8_lossy(&out.stderr).trim().to_string()));
        }
        parse_completion(&String::from_utf8_lossy(&out.stdout))
    }
}
