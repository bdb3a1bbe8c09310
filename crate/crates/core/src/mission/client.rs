use std::collections::BTreeMap;
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::plan::Prompt;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ClientError {
    #[error("scripted client exhausted after {0} responses")]
    Exhausted(usize),
    #[error("transport error: {0}")]
    Transport(String),
    #[error("endpoint returned status {status}: {body}")]
    Status { status: u16, body: String },
    #[error("malformed completion response: {0}")]
    Malformed(String),
    #[error("client configuration: {0}")]
    Config(String),
}

/// Anything that turns a prompt into raw model text.
pub trait ModelClient: Send {
    fn name(&self) -> &str;
    fn complete(&mut self, prompt: &Prompt) -> Result<String, ClientError>;
}

impl ModelClient for Box<dyn ModelClient> {
    fn name(&self) -> &str {
        (**self).name()
    }

    fn complete(&mut self, prompt: &Prompt) -> Result<String, ClientError> {
        (**self).complete(prompt)
    }
}

/// Responds when every `when` string occurs in the prompt text and no
/// `unless` string does.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ScriptRule {
    #[serde(default)]
    pub when: Vec<String>,
    #[serde(default)]
    pub unless: Vec<String>,
    pub respond: String,
}

impl ScriptRule {
    fn matches(&self, text: &str) -> bool {
        self.when.iter().all(|w| text.contains(w.as_str()))
            && !self.unless.iter().any(|u| text.contains(u.as_str()))
    }
}

/// Deterministic stand-in for a model.
///
/// Lookup order: exact prompt digest, then the first matching rule, then the
/// next unused ordered response, then the fallback. Nothing left is an error.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ScriptedClient {
    #[serde(default = "default_name")]
    pub name: String,
    #[serde(default)]
    pub responses: Vec<String>,
    #[serde(default)]
    pub by_digest: BTreeMap<String, String>,
    #[serde(default)]
    pub rules: Vec<ScriptRule>,
    #[serde(default)]
    pub fallback: Option<String>,
    #[serde(skip)]
    cursor: usize,
    #[serde(skip)]
    served: usize,
}

fn default_name() -> String {
    "scripted".into()
}

impl ScriptedClient {
    pub fn new(responses: Vec<String>) -> Self {
        Self {
            name: default_name(),
            responses,
            ..Default::default()
        }
    }

    pub fn with_rule(mut self, when: &[&str], respond: impl Into<String>) -> Self {
        self.rules.push(ScriptRule {
            when: when.iter().map(|s| s.to_string()).collect(),
            unless: Vec::new(),
            respond: respond.into(),
        });
        self
    }

    pub fn with_fallback(mut self, respond: impl Into<String>) -> Self {
        self.fallback = Some(respond.into());
        self
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn from_json(text: &str) -> Result<Self, ClientError> {
        serde_json::from_str(text).map_err(|e| ClientError::Config(format!("invalid script: {e}")))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ClientError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| {
            ClientError::Config(format!("cannot read script {}: {e}", path.display()))
        })?;
        Self::from_json(&text)
    }

    /// Number of completions served so far.
    pub fn served(&self) -> usize {
        self.served
    }
}

impl ModelClient for ScriptedClient {
    fn name(&self) -> &str {
        &self.name
    }

    fn complete(&mut self, prompt: &Prompt) -> Result<String, ClientError> {
        let out = if let Some(r) = self.by_digest.get(&prompt.digest()) {
            r.clone()
        } else {
            let text = prompt.text();
            if let Some(rule) = self.rules.iter().find(|r| r.matches(&text)) {
                rule.respond.clone()
            } else if let Some(r) = self.responses.get(self.cursor) {
                self.cursor += 1;
                r.clone()
            } else if let Some(f) = &self.fallback {
                f.clone()
            } else {
                return Err(ClientError::Exhausted(self.served));
            }
        };
        self.served += 1;
        Ok(out)
    }
}

/// Settings for a chat-completions endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteConfig {
    /// Base URL; `/chat/completions` is appended.
    pub endpoint: String,
    #[serde(default)]
    pub api_key: Option<String>,
    pub model: String,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default = "default_timeout")]
    pub timeout_s: u64,
    /// Extra attempts after a transport failure. Zero means no retry.
    #[serde(default)]
    pub retries: u32,
}

fn default_timeout() -> u64 {
    120
}

pub const ENV_ENDPOINT: &str = "GROUNDPLAN_ENDPOINT";
pub const ENV_API_KEY: &str = "GROUNDPLAN_API_KEY";
pub const ENV_MODEL: &str = "GROUNDPLAN_MODEL";
pub const ENV_TEMPERATURE: &str = "GROUNDPLAN_TEMPERATURE";

impl RemoteConfig {
    /// Reads the endpoint, key, model and temperature from the environment.
    pub fn from_env() -> Result<Self, ClientError> {
        let var = |k: &str| std::env::var(k).ok().filter(|v| !v.is_empty());
        let endpoint = var(ENV_ENDPOINT)
            .ok_or_else(|| ClientError::Config(format!("{ENV_ENDPOINT} is not set")))?;
        let model =
            var(ENV_MODEL).ok_or_else(|| ClientError::Config(format!("{ENV_MODEL} is not set")))?;
        let temperature = match var(ENV_TEMPERATURE) {
            Some(t) => t.parse().map_err(|_| {
                ClientError::Config(format!("{ENV_TEMPERATURE} is not a number: {t}"))
            })?,
            None => 0.0,
        };
        Ok(Self {
            endpoint,
            api_key: var(ENV_API_KEY),
            model,
            temperature,
            seed: None,
            timeout_s: default_timeout(),
            retries: 0,
        })
    }
}

/// Client for the widely used chat-completions HTTP protocol.
pub struct RemoteClient {
    config: RemoteConfig,
    http: reqwest::blocking::Client,
}

impl RemoteClient {
    pub fn new(config: RemoteConfig) -> Result<Self, ClientError> {
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_s))
            .build()
            .map_err(|e| ClientError::Config(e.to_string()))?;
        Ok(Self { config, http })
    }

    pub fn request_body(&self, prompt: &Prompt) -> Value {
        let mut body = json!({
            "model": self.config.model,
            "messages": [
                {"role": "system", "content": prompt.system},
                {"role": "user", "content": prompt.user},
            ],
            "temperature": self.config.temperature,
        });
        if let Some(seed) = self.config.seed {
            body["seed"] = json!(seed);
        }
        body
    }

    fn once(&self, body: &Value) -> Result<String, ClientError> {
        let url = format!(
            "{}/chat/completions",
            self.config.endpoint.trim_end_matches('/')
        );
        let mut req = self.http.post(url).json(body);
        if let Some(key) = &self.config.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req
            .send()
            .map_err(|e| ClientError::Transport(e.to_string()))?;
        let status = resp.status();
        let text = resp
            .text()
            .map_err(|e| ClientError::Transport(e.to_string()))?;
        if !status.is_success() {
            return Err(ClientError::Status {
                status: status.as_u16(),
                body: text,
            });
        }
        let v: Value =
            serde_json::from_str(&text).map_err(|e| ClientError::Malformed(e.to_string()))?;
        v.pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| ClientError::Malformed("no choices[0].message.content".into()))
    }
}

impl ModelClient for RemoteClient {
    fn name(&self) -> &str {
        &self.config.model
    }

    fn complete(&mut self, prompt: &Prompt) -> Result<String, ClientError> {
        let body = self.request_body(prompt);
        let mut attempt = 0;
        loop {
            match self.once(&body) {
                Err(ClientError::Transport(e)) if attempt < self.config.retries => {
                    tracing::warn!(attempt, error = %e, "completion request failed, retrying");
                    attempt += 1;
                }
                other => return other,
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;

    fn prompt(user: &str) -> Prompt {
        Prompt {
            system: "sys".into(),
            user: user.into(),
        }
    }

    #[test]
    fn scripted_lookup_order() {
        let p = prompt("hello");
        let mut c = ScriptedClient::new(vec!["one".into(), "two".into()])
            .with_rule(&["[feedback]"], "fixed");
        c.by_digest
            .insert(prompt("keyed").digest(), "by hash".into());
        assert_eq!(c.complete(&prompt("keyed")).unwrap(), "by hash");
        assert_eq!(c.complete(&p).unwrap(), "one");
        assert_eq!(c.complete(&prompt("x [feedback] y")).unwrap(), "fixed");
        assert_eq!(c.complete(&p).unwrap(), "two");
        assert_eq!(c.complete(&p), Err(ClientError::Exhausted(4)));
        let mut c = c.with_fallback("again");
        assert_eq!(c.complete(&p).unwrap(), "again");
    }

    #[test]
    fn script_file_format() {
        let c = ScriptedClient::from_json(
            r#"{"responses": ["a"], "rules": [{"when": ["alpha"], "unless": ["beta"], "respond": "b"}]}"#,
        )
        .unwrap();
        let mut c2 = c.clone();
        assert_eq!(c2.complete(&prompt("alpha")).unwrap(), "b");
        assert_eq!(c2.complete(&prompt("alpha beta")).unwrap(), "a");
        assert!(ScriptedClient::from_json("[1]").is_err());
    }

    /// Serves one canned HTTP response and hands back the request body.
    fn serve_once(status: &str, body: &str) -> (String, std::thread::JoinHandle<String>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let response = format!(
            "HTTP/1.1 {status}\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
            body.len()
        );
        let handle = std::thread::spawn(move || {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream);
            let mut len = 0;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if line == "\r\n" {
                    break;
                }
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
            }
            let mut buf = vec![0; len];
            reader.read_exact(&mut buf).unwrap();
            reader.get_mut().write_all(response.as_bytes()).unwrap();
            String::from_utf8(buf).unwrap()
        });
        (format!("http://{addr}/v1"), handle)
    }

    fn config(endpoint: String) -> RemoteConfig {
        RemoteConfig {
            endpoint,
            api_key: Some("k".into()),
            model: "m".into(),
            temperature: 0.0,
            seed: Some(7),
            timeout_s: 5,
            retries: 0,
        }
    }

    #[test]
    fn remote_reads_first_choice() {
        let (url, h) = serve_once(
            "200 OK",
            r#"{"choices":[{"message":{"role":"assistant","content":"plan text"}}]}"#,
        );
        let mut c = RemoteClient::new(config(url)).unwrap();
        assert_eq!(c.complete(&prompt("u")).unwrap(), "plan text");
        let sent: Value = serde_json::from_str(&h.join().unwrap()).unwrap();
        assert_eq!(sent["messages"][0]["role"], "system");
        assert_eq!(sent["messages"][1]["content"], "u");
        assert_eq!(sent["temperature"], 0.0);
        assert_eq!(sent["seed"], 7);
    }

    #[test]
    fn remote_surfaces_errors() {
        let (url, h) = serve_once("500 Internal Server Error", r#"{"error":"boom"}"#);
        let mut c = RemoteClient::new(config(url)).unwrap();
        assert!(matches!(
            c.complete(&prompt("u")),
            Err(ClientError::Status { status: 500, .. })
        ));
        h.join().unwrap();
        let (url, h) = serve_once("200 OK", r#"{"choices":[]}"#);
        let mut c = RemoteClient::new(config(url)).unwrap();
        assert!(matches!(
            c.complete(&prompt("u")),
            Err(ClientError::Malformed(_))
        ));
        h.join().unwrap();
        let mut c = RemoteClient::new(config("http://127.0.0.1:1".into())).unwrap();
        assert!(matches!(
            c.complete(&prompt("u")),
            Err(ClientError::Transport(_))
        ));
    }
}
