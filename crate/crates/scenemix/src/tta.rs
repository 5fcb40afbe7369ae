//! Noise clip acquisition from a text-to-audio backend.
//!
//! Each noise type in a scene ("the sound of footsteps") becomes a text
//! prompt to a text-to-audio model. Two backends implement [`TtaBackend`]:
//! [`HttpTta`] posts to a generation service, and [`FixtureTta`] synthesizes
//! a deterministic stand-in clip locally (shaped noise with a prompt-derived
//! spectral tilt and amplitude modulation), so everything downstream can run
//! reproducibly with no service.
//!
//! [`NoiseBank`] caches clips on disk keyed by (noise type, seed, duration,
//! sample rate). Clips are quantized to the 16-bit grid *before* first use,
//! so a clip served from the cache is bit-identical to the one returned when
//! it was first synthesized.

use std::collections::{BTreeMap, HashMap};
use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::{AudioClip, AudioError};
use crate::limit::Limiter;
use crate::seeds::{child_seed, stable_digest, stable_hash64};

pub const DEFAULT_DDIM_STEPS: u32 = 200;
pub const DEFAULT_GUIDANCE_SCALE: f64 = 2.5;
pub const DEFAULT_DURATION_SECS: f64 = 5.0;
pub const DEFAULT_SAMPLE_RATE: u32 = 16_000;

/// Hard cap on requested samples (rate x duration), a guard against
/// accidental hour-long requests.
const MAX_REQUEST_SAMPLES: f64 = 1e8;

#[derive(Debug, Error)]
pub enum TtaError {
    #[error("invalid request: {0}")]
    InvalidRequest(&'static str),
    #[error("volume percent must be one of 0, 25, 50, 75, 100; got {0}")]
    InvalidLevel(u8),
    #[error("transport: {0}")]
    Transport(#[from] reqwest::Error),
    #[error("noise service returned HTTP {0}")]
    HttpStatus(u16),
    #[error("noise service returned unusable audio: {0}")]
    BadAudio(String),
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// One generation request to a text-to-audio backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TtaRequest {
    pub prompt_text: String,
    #[serde(default = "default_ddim_steps")]
    pub ddim_steps: u32,
    #[serde(default = "default_guidance_scale")]
    pub guidance_scale: f64,
    /// Clip length in seconds.
    #[serde(default = "default_duration")]
    pub duration: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_sample_rate")]
    pub sample_rate: u32,
}

fn default_ddim_steps() -> u32 {
    DEFAULT_DDIM_STEPS
}
fn default_guidance_scale() -> f64 {
    DEFAULT_GUIDANCE_SCALE
}
fn default_duration() -> f64 {
    DEFAULT_DURATION_SECS
}
fn default_sample_rate() -> u32 {
    DEFAULT_SAMPLE_RATE
}

impl TtaRequest {
    /// A request for `prompt_text` with all parameters at their defaults.
    pub fn new(prompt_text: &str, seed: u64) -> Self {
        TtaRequest {
            prompt_text: prompt_text.to_string(),
            ddim_steps: DEFAULT_DDIM_STEPS,
            guidance_scale: DEFAULT_GUIDANCE_SCALE,
            duration: DEFAULT_DURATION_SECS,
            seed,
            sample_rate: DEFAULT_SAMPLE_RATE,
        }
    }

    pub fn validate(&self) -> Result<(), TtaError> {
        if self.prompt_text.trim().is_empty() {
            return Err(TtaError::InvalidRequest("prompt text is empty"));
        }
        if !self.duration.is_finite() || self.duration <= 0.0 {
            return Err(TtaError::InvalidRequest("duration must be positive"));
        }
        if self.sample_rate == 0 {
            return Err(TtaError::InvalidRequest("sample rate must be positive"));
        }
        if self.duration * f64::from(self.sample_rate) > MAX_REQUEST_SAMPLES {
            return Err(TtaError::InvalidRequest("requested clip is absurdly long"));
        }
        Ok(())
    }

    /// Exact output length: `round(duration * sample_rate)` samples.
    pub fn expected_samples(&self) -> usize {
        (self.duration * f64::from(self.sample_rate)).round() as usize
    }
}

pub trait TtaBackend: Send + Sync {
    fn synthesize(&self, request: &TtaRequest) -> Result<AudioClip, TtaError>;
}

/// Synthesize through `backend` and enforce the output contract
/// (`expected_samples` at the requested rate).
pub fn synthesize_noise(
    request: &TtaRequest,
    backend: &dyn TtaBackend,
) -> Result<AudioClip, TtaError> {
    request.validate()?;
    let clip = backend.synthesize(request)?;
    if clip.sample_rate() != request.sample_rate {
        return Err(TtaError::BadAudio(format!(
            "sample rate {} != requested {}",
            clip.sample_rate(),
            request.sample_rate
        )));
    }
    if clip.len() != request.expected_samples() {
        return Err(TtaError::BadAudio(format!(
            "length {} != requested {}",
            clip.len(),
            request.expected_samples()
        )));
    }
    Ok(clip)
}

/// Deterministic local synthesizer standing in for a text-to-audio service.
///
/// The prompt text picks a stable sonic character (pink/white blend, slow
/// amplitude modulation); the seed picks the noise realization. Identical
/// requests produce identical clips, different prompts or seeds different
/// ones.
#[derive(Debug, Clone, Copy, Default)]
pub struct FixtureTta;

impl TtaBackend for FixtureTta {
    fn synthesize(&self, request: &TtaRequest) -> Result<AudioClip, TtaError> {
        request.validate()?;
        Ok(fixture_clip(request))
    }
}

fn fixture_clip(request: &TtaRequest) -> AudioClip {
    let n = request.expected_samples();
    let digest = stable_digest(&[b"tta-fixture", request.prompt_text.as_bytes()]);
    let unit = |chunk: usize| -> f64 {
        let bytes: [u8; 8] = digest[chunk * 8..(chunk + 1) * 8]
            .try_into()
            .expect("digest is 32 bytes");
        (u64::from_le_bytes(bytes) >> 11) as f64 / (1u64 << 53) as f64
    };
    let tilt = 0.25 + 0.7 * unit(0);
    let am_rate = 0.25 + 3.75 * unit(1);
    let am_depth = 0.1 + 0.4 * unit(2);
    let am_phase = 2.0 * PI * unit(3);

    let prompt_hash = stable_hash64(&[request.prompt_text.as_bytes()]);
    let mut rng =
        ChaCha8Rng::seed_from_u64(child_seed(request.seed, "tta-fixture", &[prompt_hash]));
    let fs = f64::from(request.sample_rate);
    // Paul Kellet's economy pink-noise filter, blended with the white input.
    let (mut b0, mut b1, mut b2) = (0.0f64, 0.0f64, 0.0f64);
    let mut samples = Vec::with_capacity(n);
    for i in 0..n {
        let white: f64 = rng.random::<f64>() * 2.0 - 1.0;
        b0 = 0.99765 * b0 + white * 0.099_046;
        b1 = 0.963 * b1 + white * 0.296_516_4;
        b2 = 0.57 * b2 + white * 1.052_691_3;
        let pink = (b0 + b1 + b2 + white * 0.1848) * 0.2;
        let base = tilt * pink + (1.0 - tilt) * white;
        let am = 1.0 + am_depth * (2.0 * PI * am_rate * i as f64 / fs + am_phase).sin();
        samples.push(base * am);
    }
    let peak = samples.iter().fold(0.0f64, |acc, &s| acc.max(s.abs()));
    if peak > 0.0 {
        let gain = 0.5 / peak;
        for sample in &mut samples {
            *sample *= gain;
        }
    }
    AudioClip::new(samples, request.sample_rate).expect("fixture synthesis stays in range")
}

#[derive(Deserialize)]
struct TtaWireResponse {
    sample_rate: u32,
    samples: Vec<f64>,
}

/// Client for an HTTP text-to-audio service.
///
/// Requests are posted as JSON (`prompt`, `ddim_steps`, `guidance_scale`,
/// `duration`, `seed`, `sample_rate`); the service answers with
/// `{"sample_rate": ..., "samples": [...]}`. Out-of-range samples are
/// clamped; a rate mismatch is resampled when `resample` is set, otherwise
/// rejected. At most `max_in_flight` requests run concurrently.
pub struct HttpTta {
    endpoint: String,
    client: reqwest::blocking::Client,
    api_key: Option<String>,
    limiter: Limiter,
    resample: bool,
}

impl HttpTta {
    pub fn new(
        endpoint: &str,
        timeout: Duration,
        api_key: Option<String>,
        max_in_flight: usize,
        resample: bool,
    ) -> Result<Self, TtaError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()?;
        Ok(HttpTta {
            endpoint: endpoint.to_string(),
            client,
            api_key,
            limiter: Limiter::new(max_in_flight),
            resample,
        })
    }
}

impl TtaBackend for HttpTta {
    fn synthesize(&self, request: &TtaRequest) -> Result<AudioClip, TtaError> {
        request.validate()?;
        let _permit = self.limiter.acquire();
        let body = serde_json::json!({
            "prompt": request.prompt_text,
            "ddim_steps": request.ddim_steps,
            "guidance_scale": request.guidance_scale,
            "duration": request.duration,
            "seed": request.seed,
            "sample_rate": request.sample_rate,
        });
        let mut builder = self.client.post(&self.endpoint).json(&body);
        if let Some(key) = &self.api_key {
            builder = builder.bearer_auth(key);
        }
        let response = builder.send()?;
        if !response.status().is_success() {
            return Err(TtaError::HttpStatus(response.status().as_u16()));
        }
        let wire: TtaWireResponse = response.json()?;
        if wire.sample_rate == 0 {
            return Err(TtaError::BadAudio("service reported sample rate 0".into()));
        }
        for value in &wire.samples {
            if !value.is_finite() {
                return Err(TtaError::BadAudio("non-finite sample".into()));
            }
        }
        let clamped: Vec<f64> = wire.samples.iter().map(|s| s.clamp(-1.0, 1.0)).collect();
        let mut clip = AudioClip::new(clamped, wire.sample_rate)?;
        if clip.sample_rate() != request.sample_rate {
            if !self.resample {
                return Err(TtaError::BadAudio(format!(
                    "service rate {} != requested {} and resampling is disabled",
                    clip.sample_rate(),
                    request.sample_rate
                )));
            }
            clip = clip.resampled(request.sample_rate)?;
        }
        fit_length(clip, request.expected_samples())
    }
}

/// Trim or zero-pad small length drift (e.g. resampling round-off); anything
/// beyond 1% of the target is a service error.
fn fit_length(clip: AudioClip, expected: usize) -> Result<AudioClip, TtaError> {
    let len = clip.len();
    if len == expected {
        return Ok(clip);
    }
    let slack = (expected / 100).max(2);
    if len.abs_diff(expected) > slack {
        return Err(TtaError::BadAudio(format!(
            "length {len} too far from requested {expected}"
        )));
    }
    let mut samples = clip.samples().to_vec();
    samples.resize(expected, 0.0);
    Ok(AudioClip::new(samples, clip.sample_rate()).expect("trim/pad keeps samples valid"))
}

/// One of the five noise volume levels: 0, 25, 50, 75, or 100 percent,
/// applied as a linear gain of `percent / 100`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct VolumeLevel(u8);

impl VolumeLevel {
    pub const LEVELS: [VolumeLevel; 5] = [
        VolumeLevel(0),
        VolumeLevel(25),
        VolumeLevel(50),
        VolumeLevel(75),
        VolumeLevel(100),
    ];

    pub fn new(percent: u8) -> Result<Self, TtaError> {
        if percent <= 100 && percent % 25 == 0 {
            Ok(VolumeLevel(percent))
        } else {
            Err(TtaError::InvalidLevel(percent))
        }
    }

    pub fn percent(self) -> u8 {
        self.0
    }

    pub fn gain(self) -> f64 {
        f64::from(self.0) / 100.0
    }
}

impl TryFrom<u8> for VolumeLevel {
    type Error = TtaError;
    fn try_from(percent: u8) -> Result<Self, TtaError> {
        VolumeLevel::new(percent)
    }
}

impl From<VolumeLevel> for u8 {
    fn from(level: VolumeLevel) -> u8 {
        level.0
    }
}

/// The clip at all five volume levels, quietest first.
pub fn volume_variants(clip: &AudioClip) -> Vec<AudioClip> {
    VolumeLevel::LEVELS
        .iter()
        .map(|level| clip.scaled(level.gain()))
        .collect()
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct BankIndex {
    entries: BTreeMap<String, BankEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct BankEntry {
    noise_type: String,
    seed: u64,
    file: String,
}

/// Disk-backed cache of synthesized noise clips.
///
/// Keys combine noise type, seed, duration, and sample rate, so banks for
/// different configurations can share a directory. Clips are quantized to
/// the 16-bit grid before being stored *and* before being returned on a
/// cache miss, so hit and miss return identical samples.
pub struct NoiseBank {
    dir: PathBuf,
    duration: f64,
    sample_rate: u32,
    mem: RwLock<HashMap<String, Arc<AudioClip>>>,
    index: Mutex<BankIndex>,
}

impl NoiseBank {
    /// Open (or create) a bank directory. A missing or unreadable index is
    /// treated as an empty cache — the bank is a cache, not a store of
    /// record — and is rebuilt as entries are added.
    pub fn open(dir: &Path, duration: f64, sample_rate: u32) -> Result<Self, TtaError> {
        if !duration.is_finite() || duration <= 0.0 {
            return Err(TtaError::InvalidRequest("duration must be positive"));
        }
        if sample_rate == 0 {
            return Err(TtaError::InvalidRequest("sample rate must be positive"));
        }
        std::fs::create_dir_all(dir).map_err(|source| TtaError::Io {
            path: dir.display().to_string(),
            source,
        })?;
        let index_path = dir.join("index.json");
        let index = std::fs::read_to_string(&index_path)
            .ok()
            .and_then(|text| serde_json::from_str(&text).ok())
            .unwrap_or_default();
        Ok(NoiseBank {
            dir: dir.to_path_buf(),
            duration,
            sample_rate,
            mem: RwLock::new(HashMap::new()),
            index: Mutex::new(index),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Stable cache key for a (noise type, seed) pair under this bank's
    /// duration and rate.
    pub fn key(&self, noise_type: &str, seed: u64) -> String {
        let digest = stable_digest(&[
            b"noise-bank",
            noise_type.as_bytes(),
            &seed.to_le_bytes(),
            &self.duration.to_bits().to_le_bytes(),
            &self.sample_rate.to_le_bytes(),
        ]);
        digest[..16].iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn contains(&self, noise_type: &str, seed: u64) -> bool {
        let key = self.key(noise_type, seed);
        if self.mem.read().expect("bank lock").contains_key(&key) {
            return true;
        }
        self.index
            .lock()
            .expect("bank lock")
            .entries
            .contains_key(&key)
    }

    /// Number of clips known to the bank (on disk or in memory).
    pub fn len(&self) -> usize {
        self.index.lock().expect("bank lock").entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Fetch the clip for (noise type, seed), synthesizing through `backend`
    /// on a miss.
    pub fn get(
        &self,
        noise_type: &str,
        seed: u64,
        backend: &dyn TtaBackend,
    ) -> Result<Arc<AudioClip>, TtaError> {
        let key = self.key(noise_type, seed);
        if let Some(clip) = self.mem.read().expect("bank lock").get(&key) {
            return Ok(Arc::clone(clip));
        }

        // Single writer while a clip is loaded or synthesized; other keys
        // still hit the memory map above without contention.
        let mut index = self.index.lock().expect("bank lock");
        if let Some(clip) = self.mem.read().expect("bank lock").get(&key) {
            return Ok(Arc::clone(clip));
        }

        if let Some(entry) = index.entries.get(&key) {
            let path = self.dir.join(&entry.file);
            if path.exists() {
                let clip = Arc::new(AudioClip::read_wav(&path)?);
                self.mem
                    .write()
                    .expect("bank lock")
                    .insert(key, Arc::clone(&clip));
                return Ok(clip);
            }
        }

        let request = TtaRequest {
            prompt_text: noise_type.to_string(),
            duration: self.duration,
            sample_rate: self.sample_rate,
            ..TtaRequest::new(noise_type, seed)
        };
        let clip = synthesize_noise(&request, backend)?.quantized();
        let file = format!("{key}.wav");
        clip.write_wav(&self.dir.join(&file))?;
        index.entries.insert(
            key.clone(),
            BankEntry {
                noise_type: noise_type.to_string(),
                seed,
                file,
            },
        );
        self.persist_index(&index)?;
        let clip = Arc::new(clip);
        self.mem
            .write()
            .expect("bank lock")
            .insert(key, Arc::clone(&clip));
        Ok(clip)
    }

    /// Drop everything: cached clips, files, and the index.
    pub fn clear(&self) -> Result<(), TtaError> {
        let mut index = self.index.lock().expect("bank lock");
        for entry in index.entries.values() {
            let path = self.dir.join(&entry.file);
            if path.exists() {
                std::fs::remove_file(&path).map_err(|source| TtaError::Io {
                    path: path.display().to_string(),
                    source,
                })?;
            }
        }
        index.entries.clear();
        self.persist_index(&index)?;
        self.mem.write().expect("bank lock").clear();
        Ok(())
    }

    fn persist_index(&self, index: &BankIndex) -> Result<(), TtaError> {
        let path = self.dir.join("index.json");
        let tmp = self.dir.join("index.json.tmp");
        let text = serde_json::to_string_pretty(index).expect("index serializes");
        std::fs::write(&tmp, text).map_err(|source| TtaError::Io {
            path: tmp.display().to_string(),
            source,
        })?;
        std::fs::rename(&tmp, &path).map_err(|source| TtaError::Io {
            path: path.display().to_string(),
            source,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};

    struct CountingTta {
        calls: AtomicUsize,
    }

    impl CountingTta {
        fn new() -> Self {
            CountingTta {
                calls: AtomicUsize::new(0),
            }
        }
    }

    impl TtaBackend for CountingTta {
        fn synthesize(&self, request: &TtaRequest) -> Result<AudioClip, TtaError> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            FixtureTta.synthesize(request)
        }
    }

    #[test]
    fn request_defaults_and_length() {
        let request = TtaRequest::new("the sound of footsteps", 11);
        assert_eq!(request.ddim_steps, 200);
        assert_eq!(request.guidance_scale, 2.5);
        assert_eq!(request.duration, 5.0);
        assert_eq!(request.sample_rate, 16_000);
        assert_eq!(request.expected_samples(), 80_000);

        let odd = TtaRequest {
            duration: 0.33,
            ..request
        };
        assert_eq!(odd.expected_samples(), 5_280);
    }

    #[test]
    fn request_validation() {
        assert!(TtaRequest::new(" ", 0).validate().is_err());
        let mut request = TtaRequest::new("rain", 0);
        request.duration = -1.0;
        assert!(request.validate().is_err());
        request.duration = 1e9;
        assert!(request.validate().is_err());
    }

    #[test]
    fn fixture_is_deterministic_and_prompt_sensitive() {
        let backend = FixtureTta;
        let request = TtaRequest::new("the sound of footsteps", 3);
        let a = synthesize_noise(&request, &backend).unwrap();
        let b = synthesize_noise(&request, &backend).unwrap();
        assert_eq!(a.samples(), b.samples());
        assert_eq!(a.len(), 80_000);
        assert_eq!(a.sample_rate(), 16_000);
        assert!((a.peak() - 0.5).abs() < 1e-12);

        let other_prompt = TtaRequest::new("distant traffic rumble", 3);
        let c = synthesize_noise(&other_prompt, &backend).unwrap();
        assert_ne!(a.samples(), c.samples());

        let other_seed = TtaRequest::new("the sound of footsteps", 4);
        let d = synthesize_noise(&other_seed, &backend).unwrap();
        assert_ne!(a.samples(), d.samples());
    }

    #[test]
    fn volume_levels_and_energy_identity() {
        let gains: Vec<f64> = VolumeLevel::LEVELS.iter().map(|l| l.gain()).collect();
        assert_eq!(gains, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        assert!(VolumeLevel::new(30).is_err());
        assert!(VolumeLevel::new(101).is_err());

        let clip = synthesize_noise(
            &TtaRequest {
                duration: 0.5,
                ..TtaRequest::new("rain on a tin roof", 5)
            },
            &FixtureTta,
        )
        .unwrap();
        let variants = volume_variants(&clip);
        assert_eq!(variants.len(), 5);
        let energy = clip.energy();
        for (level, variant) in VolumeLevel::LEVELS.iter().zip(&variants) {
            let expected = level.gain() * level.gain() * energy;
            let error = (variant.energy() - expected).abs();
            assert!(
                error <= 1e-9 * expected.max(1.0),
                "{}%: {error}",
                level.percent()
            );
        }
    }

    #[test]
    fn bank_hit_and_miss_are_identical() {
        let dir = tempfile::tempdir().unwrap();
        let backend = CountingTta::new();
        let bank = NoiseBank::open(dir.path(), 0.25, 16_000).unwrap();
        assert!(!bank.contains("crowd murmur", 9));

        let first = bank.get("crowd murmur", 9, &backend).unwrap();
        assert_eq!(backend.calls.load(Ordering::SeqCst), 1);
        assert!(bank.contains("crowd murmur", 9));
        assert_eq!(bank.len(), 1);

        // Memory hit: no new synthesis.
        let second = bank.get("crowd murmur", 9, &backend).unwrap();
        assert_eq!(backend.calls.load(Ordering::SeqCst), 1);
        assert_eq!(first.samples(), second.samples());

        // Disk hit through a fresh bank over the same directory.
        let reopened = NoiseBank::open(dir.path(), 0.25, 16_000).unwrap();
        let third = reopened.get("crowd murmur", 9, &backend).unwrap();
        assert_eq!(backend.calls.load(Ordering::SeqCst), 1);
        assert_eq!(first.samples(), third.samples());

        // Clearing forces a fresh synthesis, which matches the original.
        reopened.clear().unwrap();
        assert_eq!(reopened.len(), 0);
        let fourth = reopened.get("crowd murmur", 9, &backend).unwrap();
        assert_eq!(backend.calls.load(Ordering::SeqCst), 2);
        assert_eq!(first.samples(), fourth.samples());
    }

    #[test]
    fn bank_keys_separate_type_seed_and_config() {
        let dir = tempfile::tempdir().unwrap();
        let bank = NoiseBank::open(dir.path(), 0.25, 16_000).unwrap();
        let base = bank.key("rain", 1);
        assert_ne!(base, bank.key("rain", 2));
        assert_ne!(base, bank.key("wind", 1));
        let other_cfg = NoiseBank::open(dir.path(), 0.5, 16_000).unwrap();
        assert_ne!(base, other_cfg.key("rain", 1));
    }

    #[test]
    fn fit_length_pads_and_rejects() {
        let clip = AudioClip::new(vec![0.1; 1_000], 16_000).unwrap();
        let padded = fit_length(clip.clone(), 1_002).unwrap();
        assert_eq!(padded.len(), 1_002);
        assert_eq!(padded.samples()[1_001], 0.0);
        let trimmed = fit_length(clip.clone(), 995).unwrap();
        assert_eq!(trimmed.len(), 995);
        assert!(fit_length(clip, 1_500).is_err());
    }
}
