//! HTTP judge client for chat-completions style endpoints.
//!
//! The API key is read from the `TWODPO_JUDGE_API_KEY` environment variable;
//! it is never accepted as a flag or stored in config files.

use std::time::Duration;

use serde_json::json;
use twodpo_core::annotation::{JudgeClient, JudgeConfig, JudgeError};

pub const API_KEY_VAR: &str = "TWODPO_JUDGE_API_KEY";

pub struct HttpJudge {
    config: JudgeConfig,
    client: reqwest::blocking::Client,
    api_key: Option<String>,
}

impl HttpJudge {
    pub fn new(config: JudgeConfig) -> Result<Self, String> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| e.to_string())?;
        Ok(HttpJudge {
            client,
            api_key: std::env::var(API_KEY_VAR).ok(),
            config,
        })
    }
}

impl JudgeClient for HttpJudge {
    fn complete(&self, prompt: &str) -> Result<String, JudgeError> {
        let body = json!({
            "model": self.config.model,
            "messages": [{"role": "user", "content": prompt}],
        });
        let mut request = self.client.post(&self.config.endpoint).json(&body);
        if let Some(key) = &self.api_key {
            request = request.bearer_auth(key);
        }
        let response = request
            .send()
            .map_err(|e| JudgeError::Unavailable(e.to_string()))?;
        if !response.status().is_success() {
            return Err(JudgeError::Unavailable(format!(
                "endpoint returned {}",
                response.status()
            )));
        }
        let value: serde_json::Value = response
            .json()
            .map_err(|e| JudgeError::Unavailable(format!("unreadable reply: {e}")))?;
        value["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| JudgeError::Unavailable("reply has no message content".to_string()))
    }

    fn name(&self) -> String {
        format!("http:{}", self.config.model)
    }
}
