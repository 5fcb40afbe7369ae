//! Shoebox-room acoustic simulation via the image source method.
//!
//! A scene's room is modeled as a rectangular box with uniform wall
//! absorption derived from a target reverberation time (Sabine's relation).
//! Each sound path from a source to the microphone is represented by mirror
//! images of the source across the walls; every image contributes one
//! attenuated, delayed tap to the room impulse response. Taps fall at
//! fractional sample delays and are spread onto the sample grid by a short
//! raised-cosine kernel (optionally multiplied by a sinc for band-limited
//! interpolation).
//!
//! [`simulate_scene`] ties it together: speech convolved with the
//! speaker-to-mic impulse response, plus each noise clip looped/cropped to
//! the speech length and convolved with its own impulse response, summed and
//! peak-normalized.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::AudioClip;
use crate::scene::{NoiseSource, SceneInfo, Vec3};
use crate::seeds::child_seed;

pub const SPEED_OF_SOUND: f64 = 343.0;
pub const SABINE_COEFFICIENT: f64 = 0.1611;

#[derive(Debug, Error)]
pub enum AcousticsError {
    #[error("room dimensions must be strictly positive and finite, got {0}")]
    DegenerateRoom(Vec3),
    #[error("absorption must lie in [0, 1], got {0}")]
    InvalidAbsorption(f64),
    #[error("rt60 must be positive and finite, got {0}")]
    InvalidRt60(f64),
    #[error("kernel width must be an odd tap count >= 3, got {0}")]
    InvalidKernel(u32),
    #[error("normalization peak must lie in (0, 1], got {0}")]
    InvalidNormalizePeak(f64),
    #[error("sample rate must be positive")]
    ZeroSampleRate,
    #[error("speed of sound must be positive and finite, got {0}")]
    InvalidSpeedOfSound(f64),
    #[error("source at {0} is not strictly inside the room")]
    SourceOutsideRoom(Vec3),
    #[error("microphone at {0} is not strictly inside the room")]
    MicOutsideRoom(Vec3),
    #[error("microphone coincides with a source at {0}")]
    CoincidentMicSource(Vec3),
    #[error("expected sample rate {expected}, got {got}")]
    SampleRateMismatch { expected: u32, got: u32 },
    #[error("scene lists {expected} noise sources but {got} clips were supplied")]
    NoiseCountMismatch { expected: usize, got: usize },
    #[error("audio clip is empty")]
    EmptyClip,
}

/// Indoor rooms reflect up to the configured order; outdoor scenes keep at
/// most first-order reflections (ground and nearby facades, no reverberant
/// box).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Environment {
    Indoor,
    Outdoor,
}

/// Geometry and wall behavior of one shoebox room.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RoomModel {
    pub dimensions: Vec3,
    /// Uniform wall absorption coefficient in `[0, 1]`.
    pub absorption: f64,
    pub max_order: u32,
    pub sample_rate: u32,
    pub speed_of_sound: f64,
    pub environment: Environment,
}

impl RoomModel {
    pub fn new(dimensions: Vec3, absorption: f64) -> Result<Self, AcousticsError> {
        let room = RoomModel {
            dimensions,
            absorption,
            max_order: 1,
            sample_rate: 16_000,
            speed_of_sound: SPEED_OF_SOUND,
            environment: Environment::Indoor,
        };
        room.validate()?;
        Ok(room)
    }

    /// Build a room whose absorption realizes the given reverberation time.
    pub fn from_rt60(dimensions: Vec3, rt60: f64) -> Result<Self, AcousticsError> {
        let absorption = absorption_from_rt60(rt60, dimensions)?;
        RoomModel::new(dimensions, absorption)
    }

    pub fn validate(&self) -> Result<(), AcousticsError> {
        let d = self.dimensions;
        if !(d.is_finite() && d.x > 0.0 && d.y > 0.0 && d.z > 0.0) {
            return Err(AcousticsError::DegenerateRoom(d));
        }
        if !self.absorption.is_finite() || !(0.0..=1.0).contains(&self.absorption) {
            return Err(AcousticsError::InvalidAbsorption(self.absorption));
        }
        if self.sample_rate == 0 {
            return Err(AcousticsError::ZeroSampleRate);
        }
        if !self.speed_of_sound.is_finite() || self.speed_of_sound <= 0.0 {
            return Err(AcousticsError::InvalidSpeedOfSound(self.speed_of_sound));
        }
        Ok(())
    }

    pub fn volume(&self) -> f64 {
        self.dimensions.x * self.dimensions.y * self.dimensions.z
    }

    pub fn surface_area(&self) -> f64 {
        let d = self.dimensions;
        2.0 * (d.x * d.y + d.x * d.z + d.y * d.z)
    }

    pub fn effective_max_order(&self) -> u32 {
        match self.environment {
            Environment::Indoor => self.max_order,
            Environment::Outdoor => self.max_order.min(1),
        }
    }
}

/// Sabine's relation: `alpha = 0.1611 * V / (S * rt60)`, clamped to at most
/// full absorption.
pub fn absorption_from_rt60(rt60: f64, dimensions: Vec3) -> Result<f64, AcousticsError> {
    if !rt60.is_finite() || rt60 <= 0.0 {
        return Err(AcousticsError::InvalidRt60(rt60));
    }
    if !(dimensions.is_finite() && dimensions.x > 0.0 && dimensions.y > 0.0 && dimensions.z > 0.0) {
        return Err(AcousticsError::DegenerateRoom(dimensions));
    }
    let volume = dimensions.x * dimensions.y * dimensions.z;
    let surface = 2.0
        * (dimensions.x * dimensions.y + dimensions.x * dimensions.z + dimensions.y * dimensions.z);
    Ok((SABINE_COEFFICIENT * volume / (surface * rt60)).min(1.0))
}

/// One mirror image of a source (order 0 is the source itself).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ImageSource {
    pub location: Vec3,
    /// Total number of wall reflections on this image's path.
    pub order: u32,
}

/// Enumerate the source and its mirror images up to the room's effective
/// reflection order, sorted by (order, x, y, z).
///
/// Per axis, the images of coordinate `s` in a box of length `L` are
/// `(1 - 2q) * s + 2 m L` for `q` in {0, 1} and integer `m`, reached after
/// `|m - q| + |m|` reflections; an image's order is the sum over axes.
pub fn enumerate_image_sources(
    room: &RoomModel,
    source: &Vec3,
) -> Result<Vec<ImageSource>, AcousticsError> {
    room.validate()?;
    if !strictly_inside(source, &room.dimensions) {
        return Err(AcousticsError::SourceOutsideRoom(*source));
    }
    let max_order = room.effective_max_order();
    let xs = axis_images(source.x, room.dimensions.x, max_order);
    let ys = axis_images(source.y, room.dimensions.y, max_order);
    let zs = axis_images(source.z, room.dimensions.z, max_order);

    let mut images = Vec::new();
    for &(x, rx) in &xs {
        for &(y, ry) in &ys {
            if rx + ry > max_order {
                continue;
            }
            for &(z, rz) in &zs {
                let order = rx + ry + rz;
                if order <= max_order {
                    images.push(ImageSource {
                        location: Vec3::new(x, y, z),
                        order,
                    });
                }
            }
        }
    }
    images.sort_by(|a, b| {
        (a.order, a.location.x, a.location.y, a.location.z)
            .partial_cmp(&(b.order, b.location.x, b.location.y, b.location.z))
            .expect("image coordinates are finite")
    });
    Ok(images)
}

fn axis_images(s: f64, length: f64, max_order: u32) -> Vec<(f64, u32)> {
    let reach = max_order as i64;
    let mut out = Vec::new();
    for q in 0..=1i64 {
        for m in -reach..=reach {
            let reflections = ((m - q).unsigned_abs() + m.unsigned_abs()) as u32;
            if reflections <= max_order {
                out.push((
                    (1 - 2 * q) as f64 * s + 2.0 * m as f64 * length,
                    reflections,
                ));
            }
        }
    }
    out
}

fn strictly_inside(p: &Vec3, dims: &Vec3) -> bool {
    p.x > 0.0 && p.x < dims.x && p.y > 0.0 && p.y < dims.y && p.z > 0.0 && p.z < dims.z
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelKind {
    /// The raised-cosine pulse alone.
    RaisedCosine,
    /// Raised cosine times `sinc(fs * t)`: band-limited fractional-delay
    /// interpolation with near-unit passband gain.
    WindowedSinc,
}

/// Shape of the fractional-delay spreading kernel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KernelConfig {
    /// Support width in taps; must be odd so the kernel is symmetric around
    /// the exact delay.
    pub width_taps: u32,
    pub kind: KernelKind,
}

impl Default for KernelConfig {
    fn default() -> Self {
        KernelConfig {
            width_taps: 81,
            kind: KernelKind::RaisedCosine,
        }
    }
}

impl KernelConfig {
    pub fn validate(&self) -> Result<(), AcousticsError> {
        if self.width_taps < 3 || self.width_taps % 2 == 0 {
            return Err(AcousticsError::InvalidKernel(self.width_taps));
        }
        Ok(())
    }

    /// Kernel support in seconds (`T_w`).
    pub fn window_seconds(&self, sample_rate: u32) -> f64 {
        f64::from(self.width_taps) / f64::from(sample_rate)
    }

    /// Kernel value at time offset `t` seconds from the exact delay.
    pub fn evaluate(&self, t: f64, sample_rate: u32) -> f64 {
        let window = self.window_seconds(sample_rate);
        match self.kind {
            KernelKind::RaisedCosine => raised_cosine(t, window),
            KernelKind::WindowedSinc => raised_cosine(t, window) * sinc(f64::from(sample_rate) * t),
        }
    }
}

/// `0.5 * (1 + cos(2 pi t / window))` for `|t| <= window / 2`, else zero.
/// Peak value 1 at `t = 0`, even in `t`.
pub fn raised_cosine(t: f64, window: f64) -> f64 {
    if t.abs() <= window / 2.0 {
        0.5 * (1.0 + (2.0 * PI * t / window).cos())
    } else {
        0.0
    }
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// One image's contribution to an impulse response.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ImageContribution {
    pub location: Vec3,
    pub order: u32,
    pub distance: f64,
    /// `(1 - alpha)^order / (4 pi distance)`.
    pub gain: f64,
    /// Fractional delay in samples: `fs * distance / c`.
    pub delay_samples: f64,
}

/// The per-image gains and delays for a source-microphone pair, before
/// spreading onto the sample grid. Sorted like [`enumerate_image_sources`].
pub fn image_contributions(
    room: &RoomModel,
    source: &Vec3,
    mic: &Vec3,
) -> Result<Vec<ImageContribution>, AcousticsError> {
    if !strictly_inside(mic, &room.dimensions) {
        return Err(AcousticsError::MicOutsideRoom(*mic));
    }
    let images = enumerate_image_sources(room, source)?;
    let reflection_loss = 1.0 - room.absorption;
    let mut contributions = Vec::with_capacity(images.len());
    for image in images {
        let distance = mic.distance(&image.location);
        if distance == 0.0 {
            return Err(AcousticsError::CoincidentMicSource(image.location));
        }
        contributions.push(ImageContribution {
            location: image.location,
            order: image.order,
            distance,
            gain: reflection_loss.powi(image.order as i32) / (4.0 * PI * distance),
            delay_samples: f64::from(room.sample_rate) * distance / room.speed_of_sound,
        });
    }
    Ok(contributions)
}

/// A sampled room impulse response.
#[derive(Debug, Clone, PartialEq)]
pub struct Rir {
    pub taps: Vec<f64>,
    pub sample_rate: u32,
}

impl Rir {
    pub fn len(&self) -> usize {
        self.taps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taps.is_empty()
    }

    pub fn energy(&self) -> f64 {
        self.taps.iter().map(|&t| t * t).sum()
    }
}

/// Compute the impulse response from `source` to `mic`.
///
/// Each image contributes `gain * kernel(n/fs - delay/fs)` to every tap `n`
/// within the kernel's support around its fractional delay; the response is
/// long enough to hold the farthest image's full kernel.
pub fn compute_rir(
    room: &RoomModel,
    source: &Vec3,
    mic: &Vec3,
    kernel: &KernelConfig,
) -> Result<Rir, AcousticsError> {
    kernel.validate()?;
    let contributions = image_contributions(room, source, mic)?;
    let half_width = f64::from(kernel.width_taps) / 2.0;
    let max_delay = contributions
        .iter()
        .map(|c| c.delay_samples)
        .fold(0.0f64, f64::max);
    let len = (max_delay + half_width).ceil() as usize + 1;
    let mut taps = vec![0.0f64; len];
    let sample_rate = room.sample_rate;
    for c in &contributions {
        let first = ((c.delay_samples - half_width).ceil().max(0.0)) as usize;
        let last = ((c.delay_samples + half_width).floor() as usize).min(len - 1);
        for (n, tap) in taps.iter_mut().enumerate().take(last + 1).skip(first) {
            let t = (n as f64 - c.delay_samples) / f64::from(sample_rate);
            *tap += c.gain * kernel.evaluate(t, sample_rate);
        }
    }
    Ok(Rir { taps, sample_rate })
}

/// Full linear convolution: output length `n + m - 1` (empty if either input
/// is empty). Uses an FFT above a small size product; both paths agree with
/// the direct sum to within 1e-6 absolute.
pub fn convolve(signal: &[f64], kernel: &[f64]) -> Vec<f64> {
    if signal.is_empty() || kernel.is_empty() {
        return Vec::new();
    }
    if signal.len().saturating_mul(kernel.len()) <= 1 << 16 {
        convolve_direct(signal, kernel)
    } else {
        convolve_fft(signal, kernel)
    }
}

fn convolve_direct(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0f64; a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        for (j, &y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

fn convolve_fft(a: &[f64], b: &[f64]) -> Vec<f64> {
    let out_len = a.len() + b.len() - 1;
    let n = out_len.next_power_of_two();
    let mut planner = FftPlanner::new();
    let forward = planner.plan_fft_forward(n);
    let inverse = planner.plan_fft_inverse(n);

    let mut fa: Vec<Complex<f64>> = a.iter().map(|&x| Complex::new(x, 0.0)).collect();
    fa.resize(n, Complex::new(0.0, 0.0));
    let mut fb: Vec<Complex<f64>> = b.iter().map(|&x| Complex::new(x, 0.0)).collect();
    fb.resize(n, Complex::new(0.0, 0.0));

    forward.process(&mut fa);
    forward.process(&mut fb);
    for (x, y) in fa.iter_mut().zip(&fb) {
        *x *= *y;
    }
    inverse.process(&mut fa);
    let scale = 1.0 / n as f64;
    fa.truncate(out_len);
    fa.iter().map(|c| c.re * scale).collect()
}

/// Parameters of a whole-scene simulation.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneSimParams {
    pub rt60: f64,
    pub max_order: u32,
    pub sample_rate: u32,
    pub speed_of_sound: f64,
    pub environment: Environment,
    pub kernel: KernelConfig,
    /// Seed for the per-source noise alignment offsets.
    pub seed: u64,
    /// Peak amplitude the mix is scaled down to when it clips above this.
    pub normalize_peak: f64,
}

impl Default for SceneSimParams {
    fn default() -> Self {
        SceneSimParams {
            rt60: 0.5,
            max_order: 1,
            sample_rate: 16_000,
            speed_of_sound: SPEED_OF_SOUND,
            environment: Environment::Indoor,
            kernel: KernelConfig::default(),
            seed: 0,
            normalize_peak: 0.95,
        }
    }
}

impl SceneSimParams {
    pub fn validate(&self) -> Result<(), AcousticsError> {
        if !self.rt60.is_finite() || self.rt60 <= 0.0 {
            return Err(AcousticsError::InvalidRt60(self.rt60));
        }
        if self.sample_rate == 0 {
            return Err(AcousticsError::ZeroSampleRate);
        }
        if !self.speed_of_sound.is_finite() || self.speed_of_sound <= 0.0 {
            return Err(AcousticsError::InvalidSpeedOfSound(self.speed_of_sound));
        }
        self.kernel.validate()?;
        if !self.normalize_peak.is_finite()
            || self.normalize_peak <= 0.0
            || self.normalize_peak > 1.0
        {
            return Err(AcousticsError::InvalidNormalizePeak(self.normalize_peak));
        }
        Ok(())
    }

    fn room_for(&self, scene: &SceneInfo) -> Result<RoomModel, AcousticsError> {
        Ok(RoomModel {
            dimensions: scene.dimensions,
            absorption: absorption_from_rt60(self.rt60, scene.dimensions)?,
            max_order: self.max_order,
            sample_rate: self.sample_rate,
            speed_of_sound: self.speed_of_sound,
            environment: self.environment,
        })
    }
}

/// Result of [`simulate_scene`]: the rendered mix and the gain that was
/// applied to keep its peak at or below the configured level (1.0 when no
/// scaling was needed).
#[derive(Debug, Clone)]
pub struct SceneRender {
    pub audio: AudioClip,
    pub normalization_gain: f64,
}

/// Render a scene: speech through the speaker-to-mic impulse response plus
/// every noise clip (looped/cropped to the speech length at a seeded offset)
/// through its own, summed at the microphone and trimmed to the speech
/// length.
///
/// `noises` pairs each of the scene's sources with its clip, in
/// `scene.noise_sources` order. The mix is deterministic in
/// (`scene`, clips, `params.seed`).
pub fn simulate_scene(
    scene: &SceneInfo,
    speech: &AudioClip,
    noises: &[(NoiseSource, AudioClip)],
    params: &SceneSimParams,
) -> Result<SceneRender, AcousticsError> {
    params.validate()?;
    if speech.sample_rate() != params.sample_rate {
        return Err(AcousticsError::SampleRateMismatch {
            expected: params.sample_rate,
            got: speech.sample_rate(),
        });
    }
    if speech.is_empty() {
        return Err(AcousticsError::EmptyClip);
    }
    if noises.len() != scene.noise_sources.len() {
        return Err(AcousticsError::NoiseCountMismatch {
            expected: scene.noise_sources.len(),
            got: noises.len(),
        });
    }

    let room = params.room_for(scene)?;
    let out_len = speech.len();
    let mut mix = vec![0.0f64; out_len];

    let speech_rir = compute_rir(
        &room,
        &scene.speaker_location,
        &scene.mic_location,
        &params.kernel,
    )?;
    add_truncated(&mut mix, &convolve(speech.samples(), &speech_rir.taps));

    for (index, (source, clip)) in noises.iter().enumerate() {
        if clip.sample_rate() != params.sample_rate {
            return Err(AcousticsError::SampleRateMismatch {
                expected: params.sample_rate,
                got: clip.sample_rate(),
            });
        }
        if clip.is_empty() {
            return Err(AcousticsError::EmptyClip);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(child_seed(params.seed, "align", &[index as u64]));
        let offset = rng.random_range(0..clip.len());
        let aligned = loop_crop(clip.samples(), out_len, offset);
        let rir = compute_rir(&room, &source.location, &scene.mic_location, &params.kernel)?;
        add_truncated(&mut mix, &convolve(&aligned, &rir.taps));
    }

    let peak = mix.iter().fold(0.0f64, |acc, &s| acc.max(s.abs()));
    let normalization_gain = if peak > params.normalize_peak {
        params.normalize_peak / peak
    } else {
        1.0
    };
    let samples: Vec<f64> = mix.iter().map(|&s| s * normalization_gain).collect();
    let audio = AudioClip::new(samples, params.sample_rate)
        .expect("normalized mix is finite and within range");
    Ok(SceneRender {
        audio,
        normalization_gain,
    })
}

fn add_truncated(mix: &mut [f64], addend: &[f64]) {
    for (slot, &value) in mix.iter_mut().zip(addend) {
        *slot += value;
    }
}

/// Repeat `samples` from `offset` (wrapping) until `len` values are taken.
fn loop_crop(samples: &[f64], len: usize, offset: usize) -> Vec<f64> {
    (0..len)
        .map(|i| samples[(offset + i) % samples.len()])
        .collect()
}
