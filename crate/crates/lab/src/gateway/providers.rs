//! Vendor adapters and an offline simulated model.

use std::fmt;
use std::time::Duration;

use rand::Rng;
use serde_json::{json, Value};

use peerflip_core::{seed, Answer};

use super::{ChatRequest, Transport, TransportError};
use crate::error::{LabError, Result};

/// An API key. Never printed, never serialized.
#[derive(Clone)]
pub struct Credential(String);

impl Credential {
    pub fn from_env(var: &str) -> Result<Credential> {
        match std::env::var(var) {
            Ok(v) if !v.is_empty() => Ok(Credential(v)),
            _ => Err(LabError::MissingCredential(var.to_string())),
        }
    }

    pub fn new(secret: impl Into<String>) -> Credential {
        Credential(secret.into())
    }

    fn expose(&self) -> &str {
        &self.0
    }
}

impl fmt::Debug for Credential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Credential(<redacted>)")
    }
}

fn http_agent(timeout: Duration) -> ureq::Agent {
    ureq::AgentBuilder::new().timeout(timeout).build()
}

fn post_json(agent: &ureq::Agent, url: &str, headers: &[(&str, &str)], body: &Value) -> Result<Value, TransportError> {
    let mut req = agent.post(url);
    for (k, v) in headers {
        req = req.set(k, v);
    }
    match req.send_json(body) {
        Ok(resp) => resp
            .into_json::<Value>()
            .map_err(|e| TransportError::Malformed(e.to_string())),
        Err(ureq::Error::Status(429, _)) => Err(TransportError::RateLimited),
        Err(ureq::Error::Status(status, resp)) => Err(TransportError::Http {
            status,
            body: resp.into_string().unwrap_or_default(),
        }),
        Err(e) => Err(TransportError::Network(e.to_string())),
    }
}

pub const OPENAI_ENDPOINT: &str = "https://api.openai.com/v1/chat/completions";
pub const GEMINI_ENDPOINT: &str = "https://generativelanguage.googleapis.com/v1beta/models";

/// OpenAI-style chat completions.
pub struct OpenAi {
    endpoint: String,
    credential: Credential,
    agent: ureq::Agent,
}

impl OpenAi {
    pub fn new(endpoint: Option<&str>, credential: Credential, timeout: Duration) -> OpenAi {
        OpenAi {
            endpoint: endpoint.unwrap_or(OPENAI_ENDPOINT).to_string(),
            credential,
            agent: http_agent(timeout),
        }
    }

    pub fn body(request: &ChatRequest) -> Value {
        let mut body = json!({
            "model": request.model,
            "messages": [{"role": "user", "content": request.prompt}],
        });
        if let Some(t) = request.temperature {
            body["temperature"] = json!(t);
        }
        body
    }

    pub fn reply(response: &Value) -> Result<String, TransportError> {
        response["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| TransportError::Malformed("missing choices[0].message.content".into()))
    }
}

impl Transport for OpenAi {
    fn complete(&self, request: &ChatRequest) -> Result<String, TransportError> {
        let auth = format!("Bearer {}", self.credential.expose());
        let response = post_json(&self.agent, &self.endpoint, &[("Authorization", &auth)], &Self::body(request))?;
        Self::reply(&response)
    }
}

/// Gemini `generateContent`.
pub struct Gemini {
    endpoint: String,
    credential: Credential,
    agent: ureq::Agent,
}

impl Gemini {
    pub fn new(endpoint: Option<&str>, credential: Credential, timeout: Duration) -> Gemini {
        Gemini {
            endpoint: endpoint.unwrap_or(GEMINI_ENDPOINT).trim_end_matches('/').to_string(),
            credential,
            agent: http_agent(timeout),
        }
    }

    pub fn url(&self, model: &str) -> String {
        format!("{}/{}:generateContent", self.endpoint, model)
    }

    pub fn body(request: &ChatRequest) -> Value {
        let mut body = json!({
            "contents": [{"role": "user", "parts": [{"text": request.prompt}]}],
        });
        if let Some(t) = request.temperature {
            body["generationConfig"] = json!({ "temperature": t });
        }
        body
    }

    pub fn reply(response: &Value) -> Result<String, TransportError> {
        let parts = response["candidates"][0]["content"]["parts"]
            .as_array()
            .ok_or_else(|| TransportError::Malformed("missing candidates[0].content.parts".into()))?;
        Ok(parts.iter().filter_map(|p| p["text"].as_str()).collect())
    }
}

impl Transport for Gemini {
    fn complete(&self, request: &ChatRequest) -> Result<String, TransportError> {
        let response = post_json(
            &self.agent,
            &self.url(&request.model),
            &[("x-goog-api-key", self.credential.expose())],
            &Self::body(request),
        )?;
        Self::reply(&response)
    }
}

/// An offline stand-in that reads the prompt like a model would: it flips
/// with a logistic probability in the stated disagreement and occasionally
/// answers off-format. Replies depend only on the request.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Simulated {
    pub theta: f64,
    pub scale: f64,
    pub invalid_rate: f64,
}

impl Simulated {
    fn read_prompt(prompt: &str) -> Option<(Answer, f64)> {
        let previous = prompt.split("Previously, you answered: \"").nth(1)?;
        let current: Answer = previous.split('"').next()?.parse().ok()?;
        let line = prompt.lines().find(|l| l.ends_with("% answered the opposite."))?;
        let d: f64 = line.trim_start_matches("- ").split('%').next()?.parse().ok()?;
        Some((current, d))
    }
}

impl Transport for Simulated {
    fn complete(&self, request: &ChatRequest) -> Result<String, TransportError> {
        let Some((current, d)) = Self::read_prompt(&request.prompt) else {
            return Ok("I cannot answer that.".into());
        };
        let mut rng = seed::rng(seed::derive(request.seed, &[seed::label_coord(&request.prompt)]));
        if rng.random::<f64>() < self.invalid_rate {
            return Ok("It depends.".into());
        }
        let p = 1.0 / (1.0 + (-(d - self.theta) / self.scale).exp());
        let answer = if rng.random::<f64>() < p { current.negate() } else { current };
        Ok(format!("{answer}."))
    }
}

/// Delays every request of the wrapped transport.
pub struct WithLatency<T> {
    inner: T,
    delay: Duration,
}

impl<T> WithLatency<T> {
    pub fn new(inner: T, delay: Duration) -> Self {
        WithLatency { inner, delay }
    }
}

impl<T: Transport> Transport for WithLatency<T> {
    fn complete(&self, request: &ChatRequest) -> Result<String, TransportError> {
        if !self.delay.is_zero() {
            std::thread::sleep(self.delay);
        }
        self.inner.complete(request)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn request(temperature: Option<f64>) -> ChatRequest {
        ChatRequest {
            model: "m-1".into(),
            prompt: "hello".into(),
            temperature,
            seed: 0,
        }
    }

    #[test]
    fn openai_wire_format() {
        let body = OpenAi::body(&request(None));
        assert_eq!(body, json!({"model": "m-1", "messages": [{"role": "user", "content": "hello"}]}));
        assert_eq!(OpenAi::body(&request(Some(0.5)))["temperature"], json!(0.5));
        let reply = json!({"choices": [{"message": {"role": "assistant", "content": "Yes"}}]});
        assert_eq!(OpenAi::reply(&reply).unwrap(), "Yes");
        assert!(OpenAi::reply(&json!({})).is_err());
    }

    #[test]
    fn gemini_wire_format() {
        let body = Gemini::body(&request(None));
        assert_eq!(body, json!({"contents": [{"role": "user", "parts": [{"text": "hello"}]}]}));
        assert_eq!(Gemini::body(&request(Some(1.0)))["generationConfig"]["temperature"], json!(1.0));
        let reply = json!({"candidates": [{"content": {"parts": [{"text": "No"}, {"text": "\n"}]}}]});
        assert_eq!(Gemini::reply(&reply).unwrap(), "No\n");
        let g = Gemini::new(None, Credential::new("k"), Duration::from_secs(1));
        assert_eq!(g.url("gemini-1.5-flash"), format!("{GEMINI_ENDPOINT}/gemini-1.5-flash:generateContent"));
    }

    #[test]
    fn credentials_stay_hidden() {
        let c = Credential::new("sk-very-secret");
        assert!(!format!("{c:?}").contains("very-secret"));
        assert!(matches!(
            Credential::from_env("PEERFLIP_SURELY_UNSET_VARIABLE"),
            Err(LabError::MissingCredential(_))
        ));
    }

    #[test]
    fn simulated_model_reads_prompts() {
        use peerflip_core::{render_prompt, Ordering, PeerSummary};
        let sim = Simulated {
            theta: 50.0,
            scale: 0.01,
            invalid_rate: 0.0,
        };
        let ask = |agree: u8| {
            let prompt = render_prompt("Q?", Answer::No, &PeerSummary::from_agreement(10, agree).unwrap(), Ordering::NoFirst);
            sim.complete(&ChatRequest {
                model: "sim".into(),
                prompt,
                temperature: None,
                seed: 3,
            })
            .unwrap()
        };
        assert_eq!(ask(90), "No.");
        assert_eq!(ask(10), "Yes.");
        assert_eq!(ask(10), ask(10));
    }
}
