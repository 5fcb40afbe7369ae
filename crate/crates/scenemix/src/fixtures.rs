//! Deterministic fixtures for tests, examples, and offline demo runs.
//!
//! Nothing here touches the network. The corpus built by
//! [`engineered_corpus`] is sized so the four validation metrics land on
//! exact one-decimal percentages, which makes it useful as a known-answer
//! input for `corpus_metrics`.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::audio::AudioClip;
use crate::augment::InputEntry;
use crate::scene::{NoiseSource, SceneInfo, Vec3};
use crate::seeds::child_seed;

/// The balcony scene used throughout the unit tests: a 4 x 2.5 x 4 room with
/// a microphone near one corner, a speaker mid-room, and two noise sources.
pub fn balcony_scene() -> SceneInfo {
    SceneInfo {
        dimensions: Vec3::new(4.0, 2.5, 4.0),
        scene_type: "balcony overlooking a busy street".to_string(),
        mic_location: Vec3::new(3.5, 0.5, 1.2),
        speaker_location: Vec3::new(2.0, 1.5, 1.6),
        noise_sources: vec![
            NoiseSource {
                noise_type: "footsteps".to_string(),
                location: Vec3::new(0.5, 0.5, 1.2),
            },
            NoiseSource {
                noise_type: "distant traffic rumble".to_string(),
                location: Vec3::new(1.0, 0.8, 3.1),
            },
        ],
        raw_text: String::new(),
    }
}

/// The balcony scene in canonical response text.
pub fn balcony_response() -> String {
    balcony_scene().render()
}

const TYPE_PAIRS: [(&str, &str); 6] = [
    ("footsteps", "distant traffic rumble"),
    ("air conditioner hum", "keyboard typing"),
    ("rain on a window", "muffled conversation"),
    ("espresso machine", "clinking cutlery"),
    ("dog barking", "wind through trees"),
    ("printer whirring", "elevator chime"),
];

fn variant_scene(k: usize) -> SceneInfo {
    // Vary the room width and rotate through noise-type pairs so the corpus
    // is not forty copies of one response.
    let width = 4.0 + 0.25 * (k % 8) as f64;
    let (a, b) = TYPE_PAIRS[k % TYPE_PAIRS.len()];
    SceneInfo {
        dimensions: Vec3::new(width, 2.5, 4.0),
        scene_type: String::new(),
        mic_location: Vec3::new(0.8 * width, 0.5, 1.2),
        speaker_location: Vec3::new(0.4 * width, 1.5, 1.6),
        noise_sources: vec![
            NoiseSource {
                noise_type: a.to_string(),
                location: Vec3::new(0.15 * width, 0.5, 1.2),
            },
            NoiseSource {
                noise_type: b.to_string(),
                location: Vec3::new(0.25 * width, 0.8, 3.1),
            },
        ],
        raw_text: String::new(),
    }
}

fn json_response(scene: &SceneInfo) -> String {
    serde_json::to_string_pretty(scene).expect("scene serializes")
}

/// Forty scripted chat responses with known validation outcomes:
/// 26 pass, 4 fail to parse, 2 place the microphone on top of a source, and
/// 8 put a location outside the room. Metric percentages over the corpus are
/// exactly 10.0 / 5.0 / 20.0 / 0.0.
pub fn engineered_corpus() -> Vec<String> {
    let mut corpus = Vec::with_capacity(40);

    // 26 valid: 18 canonical, 6 wrapped in chat prose, 2 in JSON.
    for k in 0..18 {
        corpus.push(variant_scene(k).render());
    }
    for k in 18..24 {
        corpus.push(format!(
            "Sure! Here is a scene that fits the description:\n\n{}\nHope this helps.",
            variant_scene(k).render()
        ));
    }
    for k in 24..26 {
        corpus.push(json_response(&variant_scene(k)));
    }

    // 4 parse failures.
    corpus.push(String::new());
    corpus.push("I cannot help with that request.".to_string());
    corpus.push(
        "The room measures about four by three meters and has two noisy corners.".to_string(),
    );
    corpus.push("{\"dimensions\": [4, 2.5".to_string());

    // 2 overlaps, both strictly in bounds with two distinct types.
    let mut on_mic = balcony_scene();
    on_mic.scene_type = String::new();
    on_mic.noise_sources[0].location = on_mic.mic_location;
    corpus.push(on_mic.render());

    let mut near_mic = variant_scene(1);
    near_mic.speaker_location = Vec3::new(
        near_mic.mic_location.x - 0.05,
        near_mic.mic_location.y,
        near_mic.mic_location.z,
    );
    corpus.push(near_mic.render());

    // 8 out of bounds, one bad coordinate each, microphone kept clear of
    // every source so the overlap metric stays untouched.
    let out_of_bounds: [fn(&mut SceneInfo); 8] = [
        |s| s.mic_location.x = s.dimensions.x,       // on the far wall
        |s| s.speaker_location.y = 0.0,              // on the floor
        |s| s.noise_sources[0].location.z = -0.4,    // behind a wall
        |s| s.mic_location.y = s.dimensions.y + 0.3, // above the ceiling
        |s| s.speaker_location.x = -1.0,             // outside entirely
        |s| s.noise_sources[1].location.x = s.dimensions.x, // on the wall
        |s| s.speaker_location.z = s.dimensions.z + 2.0,
        |s| s.mic_location.x = 0.0, // on the near wall
    ];
    for (k, tweak) in out_of_bounds.iter().enumerate() {
        let mut scene = variant_scene(k + 2);
        tweak(&mut scene);
        corpus.push(scene.render());
    }

    assert_eq!(corpus.len(), 40);
    corpus
}

/// Write [`engineered_corpus`] as numbered text files (`response-00.txt` ...)
/// under `dir`. Returns the paths in corpus order.
pub fn write_corpus_dir(dir: &Path) -> std::io::Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut paths = Vec::new();
    for (i, response) in engineered_corpus().iter().enumerate() {
        let path = dir.join(format!("response-{i:02}.txt"));
        std::fs::write(&path, response)?;
        paths.push(path);
    }
    Ok(paths)
}

/// A deterministic speech-like clip: a seeded fundamental with two
/// harmonics, pulsed at a syllable-ish 3 Hz, peak 0.4.
pub fn demo_speech(seed: u64, duration_secs: f64, sample_rate: u32) -> AudioClip {
    let mut rng = ChaCha8Rng::seed_from_u64(child_seed(seed, "demo-speech", &[]));
    let f0 = 110.0 + 110.0 * rng.random::<f64>();
    let phase: f64 = rng.random::<f64>() * std::f64::consts::TAU;
    let len = (duration_secs * f64::from(sample_rate)).round() as usize;
    let mut samples = Vec::with_capacity(len);
    let mut peak = 0.0f64;
    for n in 0..len {
        let t = n as f64 / f64::from(sample_rate);
        let envelope = 0.55 + 0.45 * (std::f64::consts::TAU * 3.0 * t + phase).sin();
        let mut v = 0.0;
        for harmonic in 1..=3u32 {
            v += (std::f64::consts::TAU * f0 * f64::from(harmonic) * t).sin() / f64::from(harmonic);
        }
        let s = envelope * v;
        peak = peak.max(s.abs());
        samples.push(s);
    }
    if peak > 0.0 {
        let gain = 0.4 / peak;
        for s in &mut samples {
            *s *= gain;
        }
    }
    AudioClip::new(samples, sample_rate).expect("demo speech is in range")
}

/// Write a small demo dataset: `count` speech WAVs under `<dir>/speech/` and
/// an input manifest at `<dir>/input.jsonl` referencing them by relative
/// path. Returns the manifest path.
pub fn write_demo_dataset(
    dir: &Path,
    count: usize,
    sample_rate: u32,
    seed: u64,
) -> std::io::Result<PathBuf> {
    let speech_dir = dir.join("speech");
    std::fs::create_dir_all(&speech_dir)?;
    let manifest_path = dir.join("input.jsonl");
    let mut lines = String::new();
    for i in 0..count {
        let rel = format!("speech/utt-{i:03}.wav");
        let clip = demo_speech(
            child_seed(seed, "demo-utterance", &[i as u64]),
            2.0,
            sample_rate,
        );
        clip.write_wav(&dir.join(&rel))
            .map_err(std::io::Error::other)?;
        let entry = InputEntry {
            utterance_id: format!("utt-{i:03}"),
            path: rel,
            transcript: Some(format!("demo utterance {i}")),
        };
        lines.push_str(&serde_json::to_string(&entry).expect("entry serializes"));
        lines.push('\n');
    }
    std::fs::write(&manifest_path, lines)?;
    Ok(manifest_path)
}
