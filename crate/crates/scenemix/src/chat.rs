//! Chat-model access for scene generation.
//!
//! [`ChatClient`] submits a rendered prompt to one of three backends: an
//! HTTP endpoint taking a single concatenated prompt, an HTTP endpoint
//! taking history and prompt separately, or a local fixture that answers
//! from a scripted corpus (falling back to a deterministic synthetic scene),
//! so the full pipeline runs without any service.
//!
//! [`ChatClient::generate_scene_info`] wraps one submission in the filter
//! checks and retries rejected responses up to `max_retries` times with the
//! identical prompt — sampling temperature (or the fixture's attempt index)
//! is what makes retries productive, not prompt edits.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::limit::Limiter;
use crate::prompt::BetTemplate;
use crate::scene::{self, FilterConfig, FilterReport, NoiseSource, SceneInfo, Vec3};
use crate::seeds::{child_seed, stable_hash64};

#[derive(Debug, Error)]
pub enum ChatError {
    #[error("transport: {0}")]
    Transport(#[from] reqwest::Error),
    #[error("chat endpoint returned HTTP {0}")]
    HttpStatus(u16),
    #[error("chat response body is missing a string 'content' field")]
    MalformedResponse,
    #[error("all {attempts} attempts were rejected by the scene filters")]
    ExhaustedRetries {
        attempts: u32,
        rejected: Vec<RejectedResponse>,
    },
    #[error("invalid chat backend config: {0}")]
    Config(&'static str),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("fixture corpus {path} line {line}: {source}")]
    Corpus {
        path: String,
        line: usize,
        source: serde_json::Error,
    },
}

/// A response the filters rejected, kept for diagnostics.
#[derive(Debug, Clone, Serialize)]
pub struct RejectedResponse {
    pub text: String,
    pub report: FilterReport,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChatBackendKind {
    /// Local deterministic fixture; no network.
    Fixture,
    /// HTTP endpoint taking one concatenated prompt string.
    HttpSingle,
    /// HTTP endpoint taking history turns and the task prompt separately.
    HttpDual,
}

/// Where and how scene queries are submitted.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChatBackend {
    pub kind: ChatBackendKind,
    #[serde(default)]
    pub endpoint: String,
    #[serde(default = "default_model")]
    pub model: String,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: f64,
    /// Retries after the first attempt; total attempts = max_retries + 1.
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub api_key: Option<String>,
    #[serde(default = "default_max_in_flight")]
    pub max_in_flight: usize,
    /// Extra decoding options passed through verbatim in the request body
    /// (e.g. temperature).
    #[serde(default, skip_serializing_if = "serde_json::Map::is_empty")]
    pub options: serde_json::Map<String, Value>,
}

fn default_model() -> String {
    "default".to_string()
}
fn default_timeout_secs() -> f64 {
    30.0
}
fn default_max_retries() -> u32 {
    3
}
fn default_max_in_flight() -> usize {
    4
}

impl ChatBackend {
    pub fn fixture() -> Self {
        ChatBackend {
            kind: ChatBackendKind::Fixture,
            endpoint: String::new(),
            model: default_model(),
            timeout_secs: default_timeout_secs(),
            max_retries: default_max_retries(),
            api_key: None,
            max_in_flight: default_max_in_flight(),
            options: serde_json::Map::new(),
        }
    }

    pub fn http_single(endpoint: &str, model: &str) -> Self {
        ChatBackend {
            kind: ChatBackendKind::HttpSingle,
            endpoint: endpoint.to_string(),
            model: model.to_string(),
            ..ChatBackend::fixture()
        }
    }

    pub fn http_dual(endpoint: &str, model: &str) -> Self {
        ChatBackend {
            kind: ChatBackendKind::HttpDual,
            ..ChatBackend::http_single(endpoint, model)
        }
    }

    pub fn validate(&self) -> Result<(), ChatError> {
        if self.kind != ChatBackendKind::Fixture && self.endpoint.trim().is_empty() {
            return Err(ChatError::Config("http backend needs an endpoint"));
        }
        if !self.timeout_secs.is_finite() || self.timeout_secs <= 0.0 {
            return Err(ChatError::Config("timeout must be positive"));
        }
        Ok(())
    }
}

/// Scripted responses for the fixture backend, keyed by the rendered task
/// query. Repeated keys build a per-attempt sequence: attempt 0 gets the
/// first entry, attempt 1 the second, and so on. Attempts past the script
/// (or unknown keys) fall back to a deterministic synthetic scene.
#[derive(Debug, Clone, Default)]
pub struct FixtureChatCorpus {
    scripted: HashMap<String, Vec<String>>,
}

#[derive(Serialize, Deserialize)]
struct CorpusLine {
    key: String,
    response: String,
}

impl FixtureChatCorpus {
    pub fn new() -> Self {
        Self::default()
    }

    /// Load a JSONL file of `{"key": ..., "response": ...}` lines.
    pub fn load(path: &Path) -> Result<Self, ChatError> {
        let display = path.display().to_string();
        let file = std::fs::File::open(path).map_err(|source| ChatError::Io {
            path: display.clone(),
            source,
        })?;
        let mut corpus = FixtureChatCorpus::new();
        for (number, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|source| ChatError::Io {
                path: display.clone(),
                source,
            })?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: CorpusLine =
                serde_json::from_str(&line).map_err(|source| ChatError::Corpus {
                    path: display.clone(),
                    line: number + 1,
                    source,
                })?;
            corpus.push(&parsed.key, &parsed.response);
        }
        Ok(corpus)
    }

    /// Write back as JSONL, keys sorted, per-key sequences in order.
    pub fn save(&self, path: &Path) -> Result<(), ChatError> {
        let display = path.display().to_string();
        let mut file = std::fs::File::create(path).map_err(|source| ChatError::Io {
            path: display.clone(),
            source,
        })?;
        let mut keys: Vec<&String> = self.scripted.keys().collect();
        keys.sort();
        for key in keys {
            for response in &self.scripted[key] {
                let line = serde_json::to_string(&CorpusLine {
                    key: key.clone(),
                    response: response.clone(),
                })
                .expect("corpus line serializes");
                writeln!(file, "{line}").map_err(|source| ChatError::Io {
                    path: display.clone(),
                    source,
                })?;
            }
        }
        Ok(())
    }

    /// Append a scripted response for `key`.
    pub fn push(&mut self, key: &str, response: &str) {
        self.scripted
            .entry(key.to_string())
            .or_default()
            .push(response.to_string());
    }

    pub fn is_empty(&self) -> bool {
        self.scripted.is_empty()
    }

    /// The response the fixture backend gives for `key` on a given attempt.
    pub fn response_for_attempt(&self, key: &str, seed: u64, attempt: u32) -> String {
        if let Some(sequence) = self.scripted.get(key) {
            if let Some(response) = sequence.get(attempt as usize) {
                return response.clone();
            }
        }
        synthetic_response(key, seed, attempt)
    }
}

/// A deterministic, always-valid scene for (key, seed, attempt): dimensions
/// and positions are drawn from ranges that keep every location strictly
/// interior, the microphone comfortably away from all sources, and at least
/// two distinct noise types.
pub fn synthetic_response(key: &str, seed: u64, attempt: u32) -> String {
    let key_hash = stable_hash64(&[b"chat-fixture", key.as_bytes()]);
    let mut rng = ChaCha8Rng::seed_from_u64(child_seed(
        key_hash,
        "chat-fixture",
        &[seed, u64::from(attempt)],
    ));
    let dims = Vec3::new(
        4.0 + 6.0 * rng.random::<f64>(),
        2.4 + 1.1 * rng.random::<f64>(),
        4.0 + 6.0 * rng.random::<f64>(),
    );
    let frac = |rng: &mut ChaCha8Rng, lo: f64, hi: f64| lo + (hi - lo) * rng.random::<f64>();
    let mic = Vec3::new(
        dims.x * frac(&mut rng, 0.35, 0.45),
        dims.y * frac(&mut rng, 0.4, 0.5),
        dims.z * frac(&mut rng, 0.3, 0.4),
    );
    let speaker = Vec3::new(
        dims.x * frac(&mut rng, 0.6, 0.7),
        dims.y * frac(&mut rng, 0.5, 0.6),
        dims.z * frac(&mut rng, 0.5, 0.6),
    );
    const TYPE_POOL: [&str; 8] = [
        "the sound of footsteps",
        "distant traffic rumble",
        "a murmuring crowd",
        "wind through trees",
        "a humming air conditioner",
        "clinking dishes",
        "a barking dog",
        "rain against a window",
    ];
    let count = 2 + rng.random_range(0..2usize);
    let first_type = rng.random_range(0..TYPE_POOL.len());
    let noise_sources: Vec<NoiseSource> = (0..count)
        .map(|k| {
            // Consecutive pool entries: distinct types without bookkeeping.
            let noise_type = TYPE_POOL[(first_type + k) % TYPE_POOL.len()];
            NoiseSource {
                noise_type: noise_type.to_string(),
                location: Vec3::new(
                    dims.x * frac(&mut rng, 0.1, 0.22),
                    dims.y * frac(&mut rng, 0.2, 0.35),
                    dims.z * frac(&mut rng, 0.65, 0.85),
                ),
            }
        })
        .collect();
    SceneInfo {
        dimensions: dims,
        scene_type: key.to_lowercase(),
        mic_location: mic,
        speaker_location: speaker,
        noise_sources,
        raw_text: String::new(),
    }
    .render()
}

/// A successful generation: the accepted scene plus how it was reached.
#[derive(Debug, Clone)]
pub struct GenerationOutcome {
    pub scene: SceneInfo,
    /// The raw response the scene was parsed from.
    pub response_text: String,
    /// Total attempts consumed, including the successful one.
    pub attempts: u32,
    pub rejected: Vec<RejectedResponse>,
}

/// A connected chat client: backend config plus (for the fixture kind) the
/// scripted corpus.
pub struct ChatClient {
    backend: ChatBackend,
    corpus: FixtureChatCorpus,
    http: Option<reqwest::blocking::Client>,
    limiter: Limiter,
}

impl ChatClient {
    pub fn new(backend: ChatBackend) -> Result<Self, ChatError> {
        Self::with_corpus(backend, FixtureChatCorpus::new())
    }

    pub fn with_corpus(backend: ChatBackend, corpus: FixtureChatCorpus) -> Result<Self, ChatError> {
        backend.validate()?;
        let http = match backend.kind {
            ChatBackendKind::Fixture => None,
            ChatBackendKind::HttpSingle | ChatBackendKind::HttpDual => Some(
                reqwest::blocking::Client::builder()
                    .timeout(Duration::from_secs_f64(backend.timeout_secs))
                    .build()?,
            ),
        };
        let limiter = Limiter::new(backend.max_in_flight);
        Ok(ChatClient {
            backend,
            corpus,
            http,
            limiter,
        })
    }

    pub fn backend(&self) -> &ChatBackend {
        &self.backend
    }

    /// Generate one scene for the template's task, retrying (same prompt)
    /// while the filters reject responses. Transport failures abort
    /// immediately; only filter rejections consume retries.
    pub fn generate_scene_info(
        &self,
        template: &BetTemplate,
        filter: &FilterConfig,
        seed: u64,
    ) -> Result<GenerationOutcome, ChatError> {
        let max_attempts = self.backend.max_retries + 1;
        let mut rejected = Vec::new();
        for attempt in 0..max_attempts {
            let text = self.submit_attempt(template, seed, attempt)?;
            let (report, parsed) = scene::evaluate(&text, filter);
            if report.passed {
                let scene = parsed.expect("passing report implies a parsed scene");
                return Ok(GenerationOutcome {
                    scene,
                    response_text: text,
                    attempts: attempt + 1,
                    rejected,
                });
            }
            rejected.push(RejectedResponse { text, report });
        }
        Err(ChatError::ExhaustedRetries {
            attempts: max_attempts,
            rejected,
        })
    }

    fn submit_attempt(
        &self,
        template: &BetTemplate,
        seed: u64,
        attempt: u32,
    ) -> Result<String, ChatError> {
        match self.backend.kind {
            ChatBackendKind::Fixture => {
                let key = template.task().render();
                Ok(self.corpus.response_for_attempt(&key, seed, attempt))
            }
            ChatBackendKind::HttpSingle | ChatBackendKind::HttpDual => self.submit_http(template),
        }
    }

    fn submit_http(&self, template: &BetTemplate) -> Result<String, ChatError> {
        let client = self.http.as_ref().expect("http client for http backend");
        let _permit = self.limiter.acquire();

        let mut body = serde_json::Map::new();
        body.insert("model".to_string(), json!(self.backend.model));
        match self.backend.kind {
            ChatBackendKind::HttpSingle => {
                body.insert("prompt".to_string(), json!(template.render_single()));
            }
            ChatBackendKind::HttpDual => {
                let (history, prompt) = template.render_dual();
                body.insert(
                    "history".to_string(),
                    serde_json::to_value(&history).expect("turns serialize"),
                );
                body.insert("prompt".to_string(), json!(prompt));
            }
            ChatBackendKind::Fixture => unreachable!("fixture handled by submit_attempt"),
        }
        for (key, value) in &self.backend.options {
            body.insert(key.clone(), value.clone());
        }

        let mut builder = client
            .post(&self.backend.endpoint)
            .json(&Value::Object(body));
        if let Some(key) = &self.backend.api_key {
            builder = builder.bearer_auth(key);
        }
        let response = builder.send()?;
        if !response.status().is_success() {
            return Err(ChatError::HttpStatus(response.status().as_u16()));
        }
        let value: Value = response.json()?;
        value
            .get("content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or(ChatError::MalformedResponse)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prompt::ScenePrompt;
    use crate::scene::validate;

    fn template() -> BetTemplate {
        BetTemplate::builtin(ScenePrompt::new("noisy", "pedestrian street").unwrap())
    }

    #[test]
    fn synthetic_responses_always_pass_default_filters() {
        let cfg = FilterConfig::default();
        for key in ["Noisy pedestrian street", "Quiet attic", "Busy market hall"] {
            for seed in 0..8 {
                for attempt in 0..2 {
                    let text = synthetic_response(key, seed, attempt);
                    let report = validate(&text, &cfg);
                    assert!(report.passed, "{key} seed {seed} attempt {attempt}: {text}");
                }
            }
        }
    }

    #[test]
    fn synthetic_is_deterministic_and_seed_sensitive() {
        let a = synthetic_response("Noisy pedestrian street", 5, 0);
        let b = synthetic_response("Noisy pedestrian street", 5, 0);
        assert_eq!(a, b);
        let c = synthetic_response("Noisy pedestrian street", 6, 0);
        assert_ne!(a, c);
        let d = synthetic_response("Noisy pedestrian street", 5, 1);
        assert_ne!(a, d);
    }

    #[test]
    fn fixture_generation_accepts_first_valid_response() {
        let client = ChatClient::new(ChatBackend::fixture()).unwrap();
        let outcome = client
            .generate_scene_info(&template(), &FilterConfig::default(), 42)
            .unwrap();
        assert_eq!(outcome.attempts, 1);
        assert!(outcome.rejected.is_empty());
        assert_eq!(outcome.scene.scene_type, "noisy pedestrian street");
        assert!(outcome.scene.noise_sources.len() >= 2);

        // Determinism: the same seed regenerates the same scene.
        let again = client
            .generate_scene_info(&template(), &FilterConfig::default(), 42)
            .unwrap();
        assert_eq!(again.scene, outcome.scene);
        let other = client
            .generate_scene_info(&template(), &FilterConfig::default(), 43)
            .unwrap();
        assert_ne!(other.scene, outcome.scene);
    }

    #[test]
    fn scripted_rejections_consume_retries_then_succeed() {
        let mut corpus = FixtureChatCorpus::new();
        let key = "Noisy pedestrian street";
        corpus.push(key, "this cannot be parsed");
        corpus.push(
            key,
            // Parses, but only one noise type.
            "dimensions: (5, 3, 4)\nmicrophone: (2, 1, 2)\nspeaker: (3, 1.5, 2.5)\n\
             noise: type=hum location=(1, 1, 3)\n",
        );
        let client = ChatClient::with_corpus(ChatBackend::fixture(), corpus).unwrap();
        let outcome = client
            .generate_scene_info(&template(), &FilterConfig::default(), 7)
            .unwrap();
        assert_eq!(outcome.attempts, 3);
        assert_eq!(outcome.rejected.len(), 2);
        assert!(outcome.rejected[0].report.response_error);
        assert!(outcome.rejected[1].report.types_less_than_target);
        assert!(!outcome.rejected[1].report.response_error);
    }

    #[test]
    fn exhausted_retries_is_distinguishable() {
        let mut corpus = FixtureChatCorpus::new();
        let key = "Noisy pedestrian street";
        for _ in 0..4 {
            corpus.push(key, "junk");
        }
        let mut backend = ChatBackend::fixture();
        backend.max_retries = 3;
        let client = ChatClient::with_corpus(backend, corpus).unwrap();
        let err = client
            .generate_scene_info(&template(), &FilterConfig::default(), 0)
            .unwrap_err();
        match err {
            ChatError::ExhaustedRetries { attempts, rejected } => {
                assert_eq!(attempts, 4);
                assert_eq!(rejected.len(), 4);
            }
            other => panic!("expected ExhaustedRetries, got {other:?}"),
        }
    }

    #[test]
    fn corpus_jsonl_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("corpus.jsonl");
        let mut corpus = FixtureChatCorpus::new();
        corpus.push("A", "first");
        corpus.push("A", "second");
        corpus.push("B", "only");
        corpus.save(&path).unwrap();

        let loaded = FixtureChatCorpus::load(&path).unwrap();
        assert_eq!(loaded.response_for_attempt("A", 0, 0), "first");
        assert_eq!(loaded.response_for_attempt("A", 0, 1), "second");
        assert_eq!(loaded.response_for_attempt("B", 0, 0), "only");
        // Past the script: deterministic synthetic fallback.
        assert_eq!(
            loaded.response_for_attempt("B", 9, 1),
            synthetic_response("B", 9, 1)
        );
    }

    #[test]
    fn corpus_load_reports_bad_lines() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.jsonl");
        std::fs::write(&path, "{\"key\": \"A\", \"response\": \"ok\"}\nnot json\n").unwrap();
        match FixtureChatCorpus::load(&path).unwrap_err() {
            ChatError::Corpus { line, .. } => assert_eq!(line, 2),
            other => panic!("expected Corpus error, got {other:?}"),
        }
    }

    #[test]
    fn backend_validation() {
        assert!(ChatBackend::fixture().validate().is_ok());
        let mut bad = ChatBackend::http_single("", "m");
        assert!(bad.validate().is_err());
        bad.endpoint = "http://localhost:1/v1/chat".into();
        bad.timeout_secs = 0.0;
        assert!(bad.validate().is_err());
    }
}
