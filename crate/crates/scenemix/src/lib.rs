//! Scene-based noise augmentation for speech datasets.
//!
//! The pipeline turns clean speech into noisy, room-simulated speech in four
//! stages, each usable on its own:
//!
//! 1. [`prompt`] assembles few-shot chat prompts (background, examples, task)
//!    that ask a chat model to describe an acoustic scene.
//! 2. [`scene`] parses the model's response into a [`SceneInfo`] and screens it
//!    with four filter metrics (format, microphone overlap, location bounds,
//!    noise-type count).
//! 3. [`tta`] acquires one audio clip per noise type from a text-to-audio
//!    backend (HTTP service or deterministic fixture) and caches them in a
//!    [`NoiseBank`], with five volume-level variants per clip.
//! 4. [`acoustics`] simulates the scene as a shoebox room with the image
//!    source method and mixes speech and noise through per-source impulse
//!    responses.
//!
//! [`augment`] drives the whole pipeline over dataset manifests, applying the
//! augmentation to each utterance with a configurable probability, fully
//! deterministic under a seed.

pub mod acoustics;
pub mod audio;
pub mod augment;
pub mod chat;
pub mod fixtures;
pub mod prompt;
pub mod scene;
pub mod tta;

pub(crate) mod limit;
pub(crate) mod seeds;

pub use acoustics::{Environment, KernelConfig, Rir, RoomModel, SceneSimParams};
pub use audio::AudioClip;
pub use augment::{AugmentConfig, AugmentSummary, ManifestEntry};
pub use chat::{ChatBackend, ChatBackendKind, ChatClient, GenerationOutcome};
pub use prompt::{BetTemplate, ChatTurn, FewShotExample, ScenePrompt, TemplateDoc};
pub use scene::{CorpusMetrics, FilterConfig, FilterReport, NoiseSource, SceneInfo, Vec3};
pub use tta::{NoiseBank, TtaRequest, VolumeLevel};
