//! Dataset-level augmentation.
//!
//! [`augment_dataset`] walks an input manifest (JSONL, one utterance per
//! line) and, per utterance, flips a seeded coin with probability `anr`
//! (augmentation noise rate). Heads: a scene is generated (or taken from the
//! pool of already-generated scenes), noise clips come from the bank at a
//! seeded volume level each, and the utterance is rendered through the room
//! simulation. Tails: the input file is copied through byte-identical.
//!
//! Everything derives from `AugmentConfig::seed` through labeled child
//! seeds, so a rerun reproduces the same decisions, scenes, volumes, and
//! alignments — which is also what makes resumption safe: an output manifest
//! entry whose `seed_used` matches is trusted and skipped.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::acoustics::{
    simulate_scene, AcousticsError, Environment, KernelConfig, SceneRender, SceneSimParams,
    SPEED_OF_SOUND,
};
use crate::audio::{AudioClip, AudioError};
use crate::chat::{ChatClient, ChatError};
use crate::prompt::{PromptError, ScenePrompt, TemplateDoc};
use crate::scene::{FilterConfig, SceneInfo};
use crate::seeds::child_seed;
use crate::tta::{NoiseBank, TtaBackend, TtaError, VolumeLevel};

#[derive(Debug, Error)]
pub enum AugmentError {
    #[error("invalid augment config: {0}")]
    Config(&'static str),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("manifest {path} line {line}: {source}")]
    Manifest {
        path: String,
        line: usize,
        source: serde_json::Error,
    },
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error(transparent)]
    Chat(#[from] ChatError),
    #[error(transparent)]
    Tta(#[from] TtaError),
    #[error(transparent)]
    Acoustics(#[from] AcousticsError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("failed to build worker pool: {0}")]
    ThreadPool(#[from] rayon::ThreadPoolBuildError),
}

/// Everything that controls one augmentation run.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentConfig {
    /// Probability that an utterance is augmented rather than copied.
    pub anr: f64,
    /// Root seed; all randomness in the run derives from it.
    pub seed: u64,
    /// Working rate; inputs at other rates are resampled before simulation.
    pub sample_rate: u32,
    pub rt60: f64,
    pub max_order: u32,
    pub environment: Environment,
    pub kernel: KernelConfig,
    pub normalize_peak: f64,
    /// Length of synthesized noise clips, seconds.
    pub noise_duration: f64,
    /// Distinct scenes kept per prompt; utterances draw a slot from this
    /// range, so at most this many chat generations happen per prompt.
    pub scene_pool: usize,
    pub scene_prompts: Vec<ScenePrompt>,
    pub filter: FilterConfig,
    /// Worker threads (0 = one per core).
    pub jobs: usize,
    /// Noise bank directory; default is `<out_dir>/noise-bank`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bank_dir: Option<PathBuf>,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            anr: 0.2,
            seed: 0,
            sample_rate: 16_000,
            rt60: 0.5,
            max_order: 1,
            environment: Environment::Indoor,
            kernel: KernelConfig::default(),
            normalize_peak: 0.95,
            noise_duration: 5.0,
            scene_pool: 100,
            scene_prompts: vec![
                ScenePrompt::new("noisy", "pedestrian street").expect("default prompt is valid")
            ],
            filter: FilterConfig::default(),
            jobs: 0,
            bank_dir: None,
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<(), AugmentError> {
        if !self.anr.is_finite() || !(0.0..=1.0).contains(&self.anr) {
            return Err(AugmentError::Config("anr must lie in [0, 1]"));
        }
        if self.sample_rate == 0 {
            return Err(AugmentError::Config("sample rate must be positive"));
        }
        if !self.rt60.is_finite() || self.rt60 <= 0.0 {
            return Err(AugmentError::Config("rt60 must be positive"));
        }
        if !self.normalize_peak.is_finite()
            || self.normalize_peak <= 0.0
            || self.normalize_peak > 1.0
        {
            return Err(AugmentError::Config("normalize peak must lie in (0, 1]"));
        }
        if !self.noise_duration.is_finite() || self.noise_duration <= 0.0 {
            return Err(AugmentError::Config("noise duration must be positive"));
        }
        if self.scene_pool == 0 {
            return Err(AugmentError::Config(
                "scene pool must hold at least one scene",
            ));
        }
        if self.scene_prompts.is_empty() {
            return Err(AugmentError::Config(
                "at least one scene prompt is required",
            ));
        }
        self.filter
            .validate()
            .map_err(|_| AugmentError::Config("overlap epsilon must be positive"))?;
        Ok(())
    }

    fn sim_params(&self, utterance_index: u64) -> SceneSimParams {
        SceneSimParams {
            rt60: self.rt60,
            max_order: self.max_order,
            sample_rate: self.sample_rate,
            speed_of_sound: SPEED_OF_SOUND,
            environment: self.environment,
            kernel: self.kernel,
            seed: child_seed(self.seed, "sim", &[utterance_index]),
            normalize_peak: self.normalize_peak,
        }
    }
}

/// Seeded per-utterance augment/copy decision; exact at the endpoints
/// (`anr` 0 never augments, 1 always does).
pub fn should_augment(cfg: &AugmentConfig, utterance_index: u64) -> bool {
    let mut rng = ChaCha8Rng::seed_from_u64(child_seed(cfg.seed, "anr", &[utterance_index]));
    rng.random::<f64>() < cfg.anr
}

/// Seeded volume level for one noise source of one utterance, uniform over
/// the five levels.
pub fn pick_volume(cfg: &AugmentConfig, utterance_index: u64, source_index: u64) -> VolumeLevel {
    let mut rng = ChaCha8Rng::seed_from_u64(child_seed(
        cfg.seed,
        "vol",
        &[utterance_index, source_index],
    ));
    VolumeLevel::LEVELS[rng.random_range(0..VolumeLevel::LEVELS.len())]
}

/// Seeded choice among the configured scene prompts.
pub fn pick_prompt(cfg: &AugmentConfig, utterance_index: u64) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(child_seed(cfg.seed, "prompt", &[utterance_index]));
    rng.random_range(0..cfg.scene_prompts.len())
}

/// Seeded scene-pool slot for an utterance.
pub fn scene_slot(cfg: &AugmentConfig, utterance_index: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(child_seed(cfg.seed, "slot", &[utterance_index]));
    rng.random_range(0..cfg.scene_pool as u64)
}

/// The seed recorded in an utterance's manifest entry; resumption trusts an
/// existing entry only when this matches.
pub fn utterance_seed(cfg: &AugmentConfig, utterance_index: u64) -> u64 {
    child_seed(cfg.seed, "utterance", &[utterance_index])
}

fn tta_seed(cfg: &AugmentConfig) -> u64 {
    child_seed(cfg.seed, "tta", &[])
}

fn scene_seed(cfg: &AugmentConfig, prompt_index: usize, slot: u64) -> u64 {
    child_seed(cfg.seed, "scene", &[prompt_index as u64, slot])
}

/// One line of the input manifest.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InputEntry {
    #[serde(alias = "id")]
    pub utterance_id: String,
    /// Audio path, absolute or relative to the manifest's directory.
    pub path: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transcript: Option<String>,
}

/// One line of the output manifest.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub utterance_id: String,
    pub input_path: String,
    /// Relative to the output directory; absent when processing failed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_path: Option<String>,
    pub augmented: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scene: Option<SceneInfo>,
    /// Per noise source, in scene order.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub volume_levels: Vec<VolumeLevel>,
    pub normalization_gain: f64,
    pub seed_used: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub original_sample_rate: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transcript: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Render one utterance through its scene: fetch each source's clip from the
/// bank, apply that source's seeded volume level, and simulate. Returns the
/// render plus the chosen levels (in scene order).
pub fn augment_utterance(
    speech: &AudioClip,
    scene: &SceneInfo,
    bank: &NoiseBank,
    tta: &dyn TtaBackend,
    cfg: &AugmentConfig,
    utterance_index: u64,
) -> Result<(SceneRender, Vec<VolumeLevel>), AugmentError> {
    let noise_seed = tta_seed(cfg);
    let mut pairs = Vec::with_capacity(scene.noise_sources.len());
    let mut levels = Vec::with_capacity(scene.noise_sources.len());
    for (source_index, source) in scene.noise_sources.iter().enumerate() {
        let clip = bank.get(&source.noise_type, noise_seed, tta)?;
        let level = pick_volume(cfg, utterance_index, source_index as u64);
        levels.push(level);
        pairs.push((source.clone(), clip.scaled(level.gain())));
    }
    let render = simulate_scene(scene, speech, &pairs, &cfg.sim_params(utterance_index))?;
    Ok((render, levels))
}

/// Outcome counts for a dataset run. `failed` entries carry their error in
/// the manifest; the run itself still succeeds.
#[derive(Debug, Clone, Serialize)]
pub struct AugmentSummary {
    pub total: usize,
    pub augmented: usize,
    pub copied: usize,
    /// Entries skipped because a matching output already existed.
    pub reused: usize,
    pub failed: usize,
    pub manifest_path: PathBuf,
}

struct ScenePool {
    slots: Mutex<HashMap<(usize, u64), Arc<SceneInfo>>>,
}

impl ScenePool {
    fn new() -> Self {
        ScenePool {
            slots: Mutex::new(HashMap::new()),
        }
    }

    fn get_or_generate<F>(
        &self,
        prompt_index: usize,
        slot: u64,
        generate: F,
    ) -> Result<Arc<SceneInfo>, AugmentError>
    where
        F: FnOnce() -> Result<SceneInfo, AugmentError>,
    {
        if let Some(scene) = self
            .slots
            .lock()
            .expect("pool lock")
            .get(&(prompt_index, slot))
        {
            return Ok(Arc::clone(scene));
        }
        // Generated outside the lock; a concurrent duplicate is harmless
        // because the same (prompt, slot) seed yields the same scene.
        let scene = Arc::new(generate()?);
        let mut slots = self.slots.lock().expect("pool lock");
        Ok(Arc::clone(
            slots.entry((prompt_index, slot)).or_insert(scene),
        ))
    }
}

fn read_input_manifest(path: &Path) -> Result<Vec<InputEntry>, AugmentError> {
    let display = path.display().to_string();
    let file = std::fs::File::open(path).map_err(|source| AugmentError::Io {
        path: display.clone(),
        source,
    })?;
    let mut entries = Vec::new();
    for (number, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| AugmentError::Io {
            path: display.clone(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let entry: InputEntry =
            serde_json::from_str(&line).map_err(|source| AugmentError::Manifest {
                path: display.clone(),
                line: number + 1,
                source,
            })?;
        entries.push(entry);
    }
    Ok(entries)
}

fn read_output_manifest(path: &Path) -> HashMap<String, ManifestEntry> {
    // Best effort: a missing or partially written manifest just means less
    // to resume.
    let Ok(file) = std::fs::File::open(path) else {
        return HashMap::new();
    };
    let mut entries = HashMap::new();
    for line in BufReader::new(file).lines() {
        let Ok(line) = line else { break };
        if let Ok(entry) = serde_json::from_str::<ManifestEntry>(&line) {
            entries.insert(entry.utterance_id.clone(), entry);
        }
    }
    entries
}

/// Replace path separators and other non-portable characters so utterance
/// ids map to flat file names.
fn sanitize_id(id: &str) -> String {
    let cleaned: String = id
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.' {
                c
            } else {
                '_'
            }
        })
        .collect();
    if cleaned.is_empty() {
        "utterance".to_string()
    } else {
        cleaned
    }
}

fn resolve_input(manifest_dir: &Path, path: &str) -> PathBuf {
    let p = Path::new(path);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        manifest_dir.join(p)
    }
}

/// Run the full augmentation over a dataset.
///
/// Reads `input_manifest`, writes `<out_dir>/audio/<id>.wav` per utterance
/// and `<out_dir>/manifest.jsonl` (one entry per input line, in input
/// order). Output conservation: every input id gets an entry even when its
/// processing fails; the error is recorded on the entry.
pub fn augment_dataset(
    input_manifest: &Path,
    out_dir: &Path,
    template: &TemplateDoc,
    cfg: &AugmentConfig,
    chat: &ChatClient,
    tta: &dyn TtaBackend,
) -> Result<AugmentSummary, AugmentError> {
    cfg.validate()?;
    let entries = read_input_manifest(input_manifest)?;
    let manifest_dir = input_manifest
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));

    let audio_dir = out_dir.join("audio");
    std::fs::create_dir_all(&audio_dir).map_err(|source| AugmentError::Io {
        path: audio_dir.display().to_string(),
        source,
    })?;
    let bank_dir = cfg
        .bank_dir
        .clone()
        .unwrap_or_else(|| out_dir.join("noise-bank"));
    let bank = NoiseBank::open(&bank_dir, cfg.noise_duration, cfg.sample_rate)?;

    let manifest_path = out_dir.join("manifest.jsonl");
    let previous = read_output_manifest(&manifest_path);
    let pool = ScenePool::new();
    let reused_count = AtomicUsize::new(0);

    let process = |(index, entry): (usize, &InputEntry)| -> ManifestEntry {
        let utterance_index = index as u64;
        let seed_used = utterance_seed(cfg, utterance_index);
        let out_name = format!("{}.wav", sanitize_id(&entry.utterance_id));
        let out_rel = format!("audio/{out_name}");

        if let Some(prev) = previous.get(&entry.utterance_id) {
            let output_intact = prev
                .output_path
                .as_ref()
                .is_some_and(|p| out_dir.join(p).exists());
            if prev.seed_used == seed_used && prev.error.is_none() && output_intact {
                reused_count.fetch_add(1, Ordering::Relaxed);
                return prev.clone();
            }
        }

        let input_path = resolve_input(&manifest_dir, &entry.path);
        let mut result = ManifestEntry {
            utterance_id: entry.utterance_id.clone(),
            input_path: entry.path.clone(),
            output_path: None,
            augmented: false,
            scene: None,
            volume_levels: Vec::new(),
            normalization_gain: 1.0,
            seed_used,
            original_sample_rate: None,
            transcript: entry.transcript.clone(),
            error: None,
        };

        let outcome = (|| -> Result<(), AugmentError> {
            let clip = AudioClip::read_wav(&input_path)?;
            result.original_sample_rate = Some(clip.sample_rate());

            if !should_augment(cfg, utterance_index) {
                // Pass-through stays byte-identical to the input.
                std::fs::copy(&input_path, audio_dir.join(&out_name)).map_err(|source| {
                    AugmentError::Io {
                        path: input_path.display().to_string(),
                        source,
                    }
                })?;
                result.output_path = Some(out_rel.clone());
                return Ok(());
            }

            let speech = if clip.sample_rate() == cfg.sample_rate {
                clip
            } else {
                clip.resampled(cfg.sample_rate)?
            };
            let prompt_index = pick_prompt(cfg, utterance_index);
            let slot = scene_slot(cfg, utterance_index);
            let scene = pool.get_or_generate(prompt_index, slot, || {
                let task = cfg.scene_prompts[prompt_index].clone();
                let built = template.clone().into_template(task)?;
                let outcome = chat.generate_scene_info(
                    &built,
                    &cfg.filter,
                    scene_seed(cfg, prompt_index, slot),
                )?;
                Ok(outcome.scene)
            })?;
            let (render, levels) =
                augment_utterance(&speech, &scene, &bank, tta, cfg, utterance_index)?;
            render.audio.write_wav(&audio_dir.join(&out_name))?;
            result.output_path = Some(out_rel.clone());
            result.augmented = true;
            result.scene = Some((*scene).clone());
            result.volume_levels = levels;
            result.normalization_gain = render.normalization_gain;
            Ok(())
        })();

        if let Err(error) = outcome {
            result.error = Some(error.to_string());
            result.output_path = None;
            result.augmented = false;
        }
        result
    };

    let results: Vec<ManifestEntry> = if cfg.jobs == 1 {
        entries.iter().enumerate().map(process).collect()
    } else {
        let pool_builder = rayon::ThreadPoolBuilder::new().num_threads(cfg.jobs);
        pool_builder
            .build()?
            .install(|| entries.par_iter().enumerate().map(process).collect())
    };

    let mut file = std::fs::File::create(&manifest_path).map_err(|source| AugmentError::Io {
        path: manifest_path.display().to_string(),
        source,
    })?;
    for entry in &results {
        let line = serde_json::to_string(entry).expect("manifest entry serializes");
        writeln!(file, "{line}").map_err(|source| AugmentError::Io {
            path: manifest_path.display().to_string(),
            source,
        })?;
    }

    let reused = reused_count.load(Ordering::Relaxed);
    let failed = results.iter().filter(|e| e.error.is_some()).count();
    let augmented = results
        .iter()
        .filter(|e| e.error.is_none() && e.augmented)
        .count();
    let copied = results.len() - failed - augmented;
    Ok(AugmentSummary {
        total: results.len(),
        augmented,
        copied,
        reused,
        failed,
        manifest_path,
    })
}
