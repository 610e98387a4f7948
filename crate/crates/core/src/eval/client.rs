//! Model clients: deterministic mocks and a live chat-with-image endpoint.

use std::collections::HashMap;
use std::io::BufRead;
use std::path::{Path, PathBuf};
use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

use base64::Engine;
use serde::{Deserialize, Serialize};

use crate::scenarios::Category;

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("payload too large: {bytes} bytes exceeds {limit}")]
    PayloadTooLarge { bytes: usize, limit: usize },
    #[error("transient failure: {0}")]
    Transient(String),
    #[error("request rejected with status {status}: {body}")]
    Rejected { status: u16, body: String },
    #[error("malformed response: {0}")]
    BadResponse(String),
    #[error("retries exhausted after {attempts} attempts: {last}")]
    Exhausted { attempts: u32, last: String },
    #[error("no scripted response for {0}")]
    NoScript(String),
    #[error("oracle query without ground truth for {0}")]
    NoTruth(String),
    #[error("script {path}: {msg}")]
    Script { path: PathBuf, msg: String },
}

impl ClientError {
    pub fn is_transient(&self) -> bool {
        matches!(self, ClientError::Transient(_))
    }

    /// Stable short name for error logs.
    pub fn kind(&self) -> &'static str {
        match self {
            ClientError::Auth(_) => "auth",
            ClientError::PayloadTooLarge { .. } => "payload_too_large",
            ClientError::Transient(_) => "transient",
            ClientError::Rejected { .. } => "rejected",
            ClientError::BadResponse(_) => "bad_response",
            ClientError::Exhausted { .. } => "exhausted",
            ClientError::NoScript(_) => "no_script",
            ClientError::NoTruth(_) => "no_truth",
            ClientError::Script { .. } => "script",
        }
    }
}

/// One (image, text) question.
#[derive(Debug, Clone)]
pub struct QueryRequest {
    pub scenario_id: String,
    pub category: Category,
    pub frame_count: usize,
    pub prompt: String,
    pub image_png: Vec<u8>,
    /// Only the oracle mock reads this.
    pub truth: Option<String>,
}

pub trait ModelClient: Send + Sync {
    fn tag(&self) -> &str;
    fn query(&self, req: &QueryRequest) -> Result<String, ClientError>;
    /// Live clients are subject to spacing and in-flight limits.
    fn is_live(&self) -> bool {
        false
    }
}

/// Answers with the ground-truth label.
#[derive(Debug, Clone)]
pub struct OracleClient {
    tag: String,
}

impl OracleClient {
    pub fn new() -> Self {
        Self { tag: "oracle".into() }
    }
}

impl Default for OracleClient {
    fn default() -> Self {
        Self::new()
    }
}

impl ModelClient for OracleClient {
    fn tag(&self) -> &str {
        &self.tag
    }

    fn query(&self, req: &QueryRequest) -> Result<String, ClientError> {
        let truth = req.truth.as_deref().ok_or_else(|| ClientError::NoTruth(req.scenario_id.clone()))?;
        let mut out = String::new();
        for k in 1..=req.frame_count {
            out.push_str(&format!("Frame {k}: the scene is consistent with {truth}.\n"));
        }
        out.push_str(&format!("ANSWER: {truth}"));
        Ok(out)
    }
}

/// Always gives the same answer per category, mirroring common model biases.
#[derive(Debug, Clone)]
pub struct BiasedClient {
    tag: String,
}

impl BiasedClient {
    pub fn new() -> Self {
        Self { tag: "biased".into() }
    }

    pub fn answer(category: Category) -> &'static str {
        match category {
            Category::ForwardBackward => "forward",
            Category::AccelDecel => "decelerate",
            Category::LeftRight => "left",
            Category::Traffic => "no_traffic",
            Category::Speeding => "no_speeding",
            Category::OpenSetObject => "yes",
            Category::Plane => "can_keep_moving",
            Category::Planning => "green",
        }
    }
}

impl Default for BiasedClient {
    fn default() -> Self {
        Self::new()
    }
}

impl ModelClient for BiasedClient {
    fn tag(&self) -> &str {
        &self.tag
    }

    fn query(&self, req: &QueryRequest) -> Result<String, ClientError> {
        let a = Self::answer(req.category);
        Ok(format!("The frames look like a typical drive.\nANSWER: {a}"))
    }
}

#[derive(Debug, Deserialize)]
struct ScriptLine {
    scenario_id: String,
    #[serde(default)]
    frame_count: Option<usize>,
    #[serde(default)]
    model: Option<String>,
    #[serde(alias = "response")]
    raw: String,
}

/// Canned responses keyed by scenario id and optionally frame count.
#[derive(Debug, Clone, Default)]
pub struct ScriptedClient {
    tag: String,
    by_frames: HashMap<(String, usize), String>,
    by_id: HashMap<String, String>,
}

impl ScriptedClient {
    pub fn new(tag: impl Into<String>) -> Self {
        Self {
            tag: tag.into(),
            ..Default::default()
        }
    }

    pub fn insert(&mut self, scenario_id: &str, frame_count: Option<usize>, raw: impl Into<String>) {
        match frame_count {
            Some(n) => {
                self.by_frames.insert((scenario_id.to_string(), n), raw.into());
            }
            None => {
                self.by_id.insert(scenario_id.to_string(), raw.into());
            }
        }
    }

    /// Loads JSONL lines with `scenario_id`, `raw` (or `response`), and
    /// optional `frame_count` and `model`. When `model` is given only
    /// matching lines are kept and the tag becomes that model.
    pub fn from_jsonl(path: &Path, model: Option<&str>) -> Result<Self, ClientError> {
        let err = |msg: String| ClientError::Script {
            path: path.to_path_buf(),
            msg,
        };
        let file = std::fs::File::open(path).map_err(|e| err(e.to_string()))?;
        let mut client = Self::new(model.unwrap_or("scripted"));
        for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| err(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let s: ScriptLine = serde_json::from_str(&line).map_err(|e| err(format!("line {}: {e}", i + 1)))?;
            if let (Some(want), Some(have)) = (model, s.model.as_deref()) {
                if want != have {
                    continue;
                }
            }
            client.insert(&s.scenario_id, s.frame_count, s.raw);
        }
        Ok(client)
    }

    pub fn len(&self) -> usize {
        self.by_frames.len() + self.by_id.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl ModelClient for ScriptedClient {
    fn tag(&self) -> &str {
        &self.tag
    }

    fn query(&self, req: &QueryRequest) -> Result<String, ClientError> {
        self.by_frames
            .get(&(req.scenario_id.clone(), req.frame_count))
            .or_else(|| self.by_id.get(&req.scenario_id))
            .cloned()
            .ok_or_else(|| ClientError::NoScript(format!("{}/{}", req.scenario_id, req.frame_count)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PayloadStyle {
    OpenAiChat,
    AnthropicMessages,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HttpClientConfig {
    pub endpoint: String,
    pub model: String,
    /// Name of the environment variable holding the credential.
    pub api_key_env: String,
    pub style: PayloadStyle,
    #[serde(default = "default_max_image_bytes")]
    pub max_image_bytes: usize,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: f64,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
}

fn default_max_image_bytes() -> usize {
    5 * 1024 * 1024
}

fn default_timeout_secs() -> f64 {
    120.0
}

fn default_max_tokens() -> u32 {
    1024
}

/// Chat-with-image endpoint; the image goes out as base64 PNG.
pub struct HttpClient {
    config: HttpClientConfig,
    api_key: Option<String>,
    agent: ureq::Agent,
}

impl HttpClient {
    /// Reads the credential from the configured environment variable.
    pub fn new(config: HttpClientConfig) -> Self {
        let key = std::env::var(&config.api_key_env).ok().filter(|k| !k.is_empty());
        Self::with_key(config, key)
    }

    pub fn with_key(config: HttpClientConfig, api_key: Option<String>) -> Self {
        let cfg = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(config.timeout_secs)))
            .http_status_as_error(false)
            .build();
        Self {
            config,
            api_key,
            agent: ureq::Agent::new_with_config(cfg),
        }
    }

    pub fn payload(&self, prompt: &str, image_png: &[u8]) -> serde_json::Value {
        let data = base64::engine::general_purpose::STANDARD.encode(image_png);
        match self.config.style {
            PayloadStyle::OpenAiChat => serde_json::json!({
                "model": self.config.model,
                "max_tokens": self.config.max_tokens,
                "messages": [{
                    "role": "user",
                    "content": [
                        {"type": "text", "text": prompt},
                        {"type": "image_url", "image_url": {"url": format!("data:image/png;base64,{data}")}}
                    ]
                }]
            }),
            PayloadStyle::AnthropicMessages => serde_json::json!({
                "model": self.config.model,
                "max_tokens": self.config.max_tokens,
                "messages": [{
                    "role": "user",
                    "content": [
                        {"type": "image", "source": {"type": "base64", "media_type": "image/png", "data": data}},
                        {"type": "text", "text": prompt}
                    ]
                }]
            }),
        }
    }

    fn extract_text(&self, v: &serde_json::Value) -> Option<String> {
        match self.config.style {
            PayloadStyle::OpenAiChat => {
                let content = v.pointer("/choices/0/message/content")?;
                match content {
                    serde_json::Value::String(s) => Some(s.clone()),
                    serde_json::Value::Array(parts) => Some(
                        parts
                            .iter()
                            .filter_map(|p| p.get("text").and_then(|t| t.as_str()))
                            .collect::<Vec<_>>()
                            .join(""),
                    ),
                    _ => None,
                }
            }
            PayloadStyle::AnthropicMessages => {
                let parts = v.get("content")?.as_array()?;
                Some(
                    parts
                        .iter()
                        .filter_map(|p| p.get("text").and_then(|t| t.as_str()))
                        .collect::<Vec<_>>()
                        .join(""),
                )
            }
        }
    }
}

impl ModelClient for HttpClient {
    fn tag(&self) -> &str {
        &self.config.model
    }

    fn is_live(&self) -> bool {
        true
    }

    fn query(&self, req: &QueryRequest) -> Result<String, ClientError> {
        let key = self
            .api_key
            .as_deref()
            .ok_or_else(|| ClientError::Auth(format!("environment variable {} is not set", self.config.api_key_env)))?;
        let encoded_len = req.image_png.len().div_ceil(3) * 4;
        if encoded_len > self.config.max_image_bytes {
            return Err(ClientError::PayloadTooLarge {
                bytes: encoded_len,
                limit: self.config.max_image_bytes,
            });
        }
        let body = self.payload(&req.prompt, &req.image_png);
        let mut request = self.agent.post(&self.config.endpoint).header("content-type", "application/json");
        request = match self.config.style {
            PayloadStyle::OpenAiChat => request.header("authorization", format!("Bearer {key}")),
            PayloadStyle::AnthropicMessages => request
                .header("x-api-key", key)
                .header("anthropic-version", "2023-06-01"),
        };
        let mut resp = request
            .send_json(&body)
            .map_err(|e| ClientError::Transient(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| ClientError::Transient(e.to_string()))?;
        match status {
            200..=299 => {
                let v: serde_json::Value =
                    serde_json::from_str(&text).map_err(|e| ClientError::BadResponse(e.to_string()))?;
                self.extract_text(&v)
                    .ok_or_else(|| ClientError::BadResponse("no text content in response".into()))
            }
            401 | 403 => Err(ClientError::Auth(format!("status {status}"))),
            413 => Err(ClientError::PayloadTooLarge {
                bytes: encoded_len,
                limit: self.config.max_image_bytes,
            }),
            408 | 429 | 500..=599 => Err(ClientError::Transient(format!("status {status}"))),
            _ => Err(ClientError::Rejected { status, body: text }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RatePolicy {
    pub max_in_flight: usize,
    pub min_spacing_secs: f64,
    pub max_retries: u32,
    pub base_backoff_secs: f64,
}

impl Default for RatePolicy {
    fn default() -> Self {
        Self {
            max_in_flight: 2,
            min_spacing_secs: 1.0,
            max_retries: 3,
            base_backoff_secs: 1.0,
        }
    }
}

/// Shared gate enforcing in-flight and spacing limits for live clients.
pub struct RateLimiter {
    policy: RatePolicy,
    state: Mutex<LimiterState>,
    freed: Condvar,
}

struct LimiterState {
    in_flight: usize,
    next_start: Instant,
}

struct Permit<'a>(&'a RateLimiter);

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut s = self.0.state.lock().unwrap_or_else(|e| e.into_inner());
        s.in_flight -= 1;
        self.0.freed.notify_one();
    }
}

impl RateLimiter {
    pub fn new(policy: RatePolicy) -> Self {
        Self {
            policy,
            state: Mutex::new(LimiterState {
                in_flight: 0,
                next_start: Instant::now(),
            }),
            freed: Condvar::new(),
        }
    }

    pub fn policy(&self) -> &RatePolicy {
        &self.policy
    }

    fn acquire(&self) -> Permit<'_> {
        let limit = self.policy.max_in_flight.max(1);
        let mut s = self.state.lock().unwrap_or_else(|e| e.into_inner());
        while s.in_flight >= limit {
            s = self.freed.wait(s).unwrap_or_else(|e| e.into_inner());
        }
        s.in_flight += 1;
        let now = Instant::now();
        let start = s.next_start.max(now);
        s.next_start = start + Duration::from_secs_f64(self.policy.min_spacing_secs.max(0.0));
        drop(s);
        if start > now {
            std::thread::sleep(start - now);
        }
        Permit(self)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryOutcome {
    pub raw: String,
    pub latency_secs: f64,
    pub attempts: u32,
}

/// Queries with retry on transient failures and exponential backoff.
/// Authentication and payload errors are returned at once.
pub fn query_model(
    client: &dyn ModelClient,
    req: &QueryRequest,
    limiter: &RateLimiter,
) -> Result<QueryOutcome, ClientError> {
    let policy = limiter.policy().clone();
    let mut attempts = 0;
    loop {
        attempts += 1;
        let permit = client.is_live().then(|| limiter.acquire());
        let start = Instant::now();
        let result = client.query(req);
        let latency_secs = start.elapsed().as_secs_f64();
        drop(permit);
        match result {
            Ok(raw) => {
                return Ok(QueryOutcome {
                    raw,
                    latency_secs,
                    attempts,
                })
            }
            Err(e) if e.is_transient() => {
                if attempts > policy.max_retries {
                    return Err(ClientError::Exhausted {
                        attempts,
                        last: e.to_string(),
                    });
                }
                let wait = policy.base_backoff_secs.max(0.0) * 2f64.powi(attempts as i32 - 1);
                std::thread::sleep(Duration::from_secs_f64(wait));
            }
            Err(e) => return Err(e),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicU32, Ordering};

    fn req(truth: Option<&str>) -> QueryRequest {
        QueryRequest {
            scenario_id: "traffic_000".into(),
            category: Category::Traffic,
            frame_count: 3,
            prompt: "p".into(),
            image_png: vec![1, 2, 3],
            truth: truth.map(str::to_string),
        }
    }

    fn fast() -> RateLimiter {
        RateLimiter::new(RatePolicy {
            max_in_flight: 2,
            min_spacing_secs: 0.0,
            max_retries: 3,
            base_backoff_secs: 0.001,
        })
    }

    struct Flaky {
        calls: AtomicU32,
        fail_first: u32,
    }

    impl ModelClient for Flaky {
        fn tag(&self) -> &str {
            "flaky"
        }
        fn query(&self, _: &QueryRequest) -> Result<String, ClientError> {
            let n = self.calls.fetch_add(1, Ordering::SeqCst);
            if n < self.fail_first {
                Err(ClientError::Transient("reset".into()))
            } else {
                Ok("ok".into())
            }
        }
    }

    #[test]
    fn oracle_contains_truth() {
        let out = query_model(&OracleClient::new(), &req(Some("no_traffic")), &fast()).unwrap();
        assert!(out.raw.ends_with("ANSWER: no_traffic"));
        assert!(OracleClient::new().query(&req(None)).is_err());
    }

    #[test]
    fn scripted_exact_text() {
        let mut c = ScriptedClient::new("s");
        c.insert("traffic_000", Some(3), "canned\ntext");
        c.insert("traffic_000", None, "fallback");
        assert_eq!(c.query(&req(None)).unwrap(), "canned\ntext");
        let mut r = req(None);
        r.frame_count = 6;
        assert_eq!(c.query(&r).unwrap(), "fallback");
        r.scenario_id = "x".into();
        assert!(matches!(c.query(&r), Err(ClientError::NoScript(_))));
    }

    #[test]
    fn retries_then_succeeds() {
        let c = Flaky {
            calls: AtomicU32::new(0),
            fail_first: 2,
        };
        let out = query_model(&c, &req(None), &fast()).unwrap();
        assert_eq!(out.attempts, 3);
    }

    #[test]
    fn retries_exhausted() {
        let c = Flaky {
            calls: AtomicU32::new(0),
            fail_first: 100,
        };
        let err = query_model(&c, &req(None), &fast()).unwrap_err();
        assert!(matches!(err, ClientError::Exhausted { attempts: 4, .. }));
        assert_eq!(c.calls.load(Ordering::SeqCst), 4);
    }

    #[test]
    fn missing_credential_is_auth_error() {
        let cfg = HttpClientConfig {
            endpoint: "http://127.0.0.1:9/".into(),
            model: "m".into(),
            api_key_env: "WORLDSIM_TEST_UNSET_KEY".into(),
            style: PayloadStyle::OpenAiChat,
            max_image_bytes: 1000,
            timeout_secs: 1.0,
            max_tokens: 10,
        };
        let c = HttpClient::with_key(cfg, None);
        let err = query_model(&c, &req(None), &fast()).unwrap_err();
        assert!(matches!(err, ClientError::Auth(_)));
    }

    #[test]
    fn payload_shapes() {
        let mut cfg = HttpClientConfig {
            endpoint: "http://x".into(),
            model: "m".into(),
            api_key_env: "K".into(),
            style: PayloadStyle::OpenAiChat,
            max_image_bytes: 1000,
            timeout_secs: 1.0,
            max_tokens: 10,
        };
        let c = HttpClient::with_key(cfg.clone(), Some("k".into()));
        let p = c.payload("hi", &[0, 1, 2]);
        assert_eq!(
            p.pointer("/messages/0/content/1/image_url/url").unwrap(),
            "data:image/png;base64,AAEC"
        );
        cfg.style = PayloadStyle::AnthropicMessages;
        let c = HttpClient::with_key(cfg, Some("k".into()));
        let p = c.payload("hi", &[0, 1, 2]);
        assert_eq!(p.pointer("/messages/0/content/0/source/data").unwrap(), "AAEC");
    }

    #[test]
    fn limiter_spacing() {
        let l = RateLimiter::new(RatePolicy {
            max_in_flight: 1,
            min_spacing_secs: 0.02,
            max_retries: 0,
            base_backoff_secs: 0.0,
        });
        let t = Instant::now();
        for _ in 0..3 {
            drop(l.acquire());
        }
        assert!(t.elapsed() >= Duration::from_millis(40));
    }
}
