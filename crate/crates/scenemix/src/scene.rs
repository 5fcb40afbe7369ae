//! Scene descriptions, response parsing, and validation filters.
//!
//! A chat model answers a scene prompt with a small structured description:
//! room dimensions, a scene type, microphone and speaker locations, and a
//! list of noise sources. [`parse_scene_info`] accepts two shapes of
//! response: the canonical line grammar produced by [`SceneInfo::render`]
//! (labeled `key: value` lines, prose lines ignored) and a JSON object with
//! the same fields embedded anywhere in the text.
//!
//! Parsed scenes are screened by four filter checks before being used for
//! simulation; [`corpus_metrics`] aggregates those checks over a corpus of
//! raw responses.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// A point or extent in meters.
///
/// Serialized as a three-element array `[x, y, z]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3 { x, y, z }
    }

    pub fn distance(&self, other: &Vec3) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        let dz = self.z - other.z;
        (dx * dx + dy * dy + dz * dz).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    /// Canonical text form, `(x, y, z)`, with shortest-round-trip floats.
    pub fn render(&self) -> String {
        format!("({}, {}, {})", self.x, self.y, self.z)
    }
}

impl fmt::Display for Vec3 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

impl Serialize for Vec3 {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        [self.x, self.y, self.z].serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Vec3 {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let [x, y, z] = <[f64; 3]>::deserialize(deserializer)?;
        Ok(Vec3 { x, y, z })
    }
}

/// One noise source: a free-text type (fed to the text-to-audio backend as a
/// prompt) and its position in the room.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSource {
    #[serde(rename = "type")]
    pub noise_type: String,
    pub location: Vec3,
}

/// A full acoustic scene description.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SceneInfo {
    pub dimensions: Vec3,
    #[serde(rename = "scene", default)]
    pub scene_type: String,
    #[serde(rename = "microphone")]
    pub mic_location: Vec3,
    #[serde(rename = "speaker")]
    pub speaker_location: Vec3,
    #[serde(default)]
    pub noise_sources: Vec<NoiseSource>,
    /// The verbatim response text this scene was parsed from, empty for
    /// scenes built in code.
    #[serde(skip)]
    pub raw_text: String,
}

// raw_text is provenance, not content: a scene rendered and reparsed, or the
// same scene parsed out of two differently-worded responses, compares equal.
impl PartialEq for SceneInfo {
    fn eq(&self, other: &Self) -> bool {
        self.dimensions == other.dimensions
            && self.scene_type == other.scene_type
            && self.mic_location == other.mic_location
            && self.speaker_location == other.speaker_location
            && self.noise_sources == other.noise_sources
    }
}

impl SceneInfo {
    /// Render in the canonical line grammar. `parse_scene_info` recovers an
    /// equal scene from the result.
    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("dimensions: {}\n", self.dimensions.render()));
        if !self.scene_type.is_empty() {
            out.push_str(&format!("scene: {}\n", self.scene_type));
        }
        out.push_str(&format!("microphone: {}\n", self.mic_location.render()));
        out.push_str(&format!("speaker: {}\n", self.speaker_location.render()));
        for source in &self.noise_sources {
            out.push_str(&format!(
                "noise: type={} location={}\n",
                source.noise_type,
                source.location.render()
            ));
        }
        out
    }

    /// Number of distinct noise types (exact string match on trimmed types).
    pub fn distinct_type_count(&self) -> usize {
        self.noise_sources
            .iter()
            .map(|s| s.noise_type.trim())
            .collect::<BTreeSet<_>>()
            .len()
    }
}

#[derive(Debug, Error)]
pub enum ParseError {
    #[error("empty response")]
    Empty,
    #[error("no recognizable scene structure in response")]
    Unrecognized,
    #[error("response has no {0} line")]
    MissingField(&'static str),
    #[error("malformed coordinate tuple {0:?}")]
    MalformedTuple(String),
    #[error("malformed noise entry {0:?}")]
    MalformedNoise(String),
    #[error("non-finite coordinate in {0}")]
    NonFinite(&'static str),
    #[error("dimensions must be strictly positive, got {0}")]
    NonPositiveDimensions(Vec3),
}

/// Parse a chat-model response into a [`SceneInfo`].
///
/// A JSON object embedded in the text is tried first; otherwise the canonical
/// line grammar is applied (unlabeled prose lines are skipped, labeled lines
/// with malformed values are errors). Either way the result is checked for
/// finite coordinates, strictly positive dimensions, and non-empty noise
/// types.
pub fn parse_scene_info(text: &str) -> Result<SceneInfo, ParseError> {
    if text.trim().is_empty() {
        return Err(ParseError::Empty);
    }
    if let (Some(start), Some(end)) = (text.find('{'), text.rfind('}')) {
        if start < end {
            if let Ok(mut scene) = serde_json::from_str::<SceneInfo>(&text[start..=end]) {
                scene.raw_text = text.to_string();
                validate_structure(&scene)?;
                return Ok(scene);
            }
        }
    }
    parse_lines(text)
}

fn parse_lines(text: &str) -> Result<SceneInfo, ParseError> {
    let mut dimensions = None;
    let mut scene_type = None;
    let mut mic = None;
    let mut speaker = None;
    let mut noise_sources = Vec::new();
    let mut recognized = false;

    for raw_line in text.lines() {
        let line = raw_line.trim();
        let Some((key, value)) = line.split_once(':') else {
            continue;
        };
        let value = value.trim();
        match key.trim().to_ascii_lowercase().as_str() {
            "dimensions" => {
                recognized = true;
                dimensions = Some(parse_tuple(value)?);
            }
            "scene" => {
                recognized = true;
                scene_type = Some(value.to_string());
            }
            "microphone" => {
                recognized = true;
                mic = Some(parse_tuple(value)?);
            }
            "speaker" => {
                recognized = true;
                speaker = Some(parse_tuple(value)?);
            }
            "noise" => {
                recognized = true;
                noise_sources.push(parse_noise(value)?);
            }
            _ => {}
        }
    }

    if !recognized {
        return Err(ParseError::Unrecognized);
    }
    let scene = SceneInfo {
        dimensions: dimensions.ok_or(ParseError::MissingField("dimensions"))?,
        scene_type: scene_type.unwrap_or_default(),
        mic_location: mic.ok_or(ParseError::MissingField("microphone"))?,
        speaker_location: speaker.ok_or(ParseError::MissingField("speaker"))?,
        noise_sources,
        raw_text: text.to_string(),
    };
    validate_structure(&scene)?;
    Ok(scene)
}

fn parse_tuple(value: &str) -> Result<Vec3, ParseError> {
    let malformed = || ParseError::MalformedTuple(value.to_string());
    let inner = value
        .strip_prefix('(')
        .and_then(|v| v.strip_suffix(')'))
        .ok_or_else(malformed)?;
    let parts: Vec<&str> = inner.split(',').collect();
    if parts.len() != 3 {
        return Err(malformed());
    }
    let mut coords = [0.0f64; 3];
    for (slot, part) in coords.iter_mut().zip(&parts) {
        *slot = part.trim().parse::<f64>().map_err(|_| malformed())?;
    }
    Ok(Vec3::new(coords[0], coords[1], coords[2]))
}

fn parse_noise(value: &str) -> Result<NoiseSource, ParseError> {
    let malformed = || ParseError::MalformedNoise(value.to_string());
    let rest = value.strip_prefix("type=").ok_or_else(malformed)?;
    // The type is free text and may itself contain "location="; the real
    // location marker is the last one on the line.
    let split_at = rest.rfind(" location=").ok_or_else(malformed)?;
    let noise_type = rest[..split_at].trim().to_string();
    if noise_type.is_empty() {
        return Err(malformed());
    }
    let location = parse_tuple(rest[split_at + " location=".len()..].trim())?;
    Ok(NoiseSource {
        noise_type,
        location,
    })
}

fn validate_structure(scene: &SceneInfo) -> Result<(), ParseError> {
    if !scene.dimensions.is_finite() {
        return Err(ParseError::NonFinite("dimensions"));
    }
    if !scene.mic_location.is_finite() {
        return Err(ParseError::NonFinite("microphone"));
    }
    if !scene.speaker_location.is_finite() {
        return Err(ParseError::NonFinite("speaker"));
    }
    let d = scene.dimensions;
    if !(d.x > 0.0 && d.y > 0.0 && d.z > 0.0) {
        return Err(ParseError::NonPositiveDimensions(d));
    }
    for source in &scene.noise_sources {
        if !source.location.is_finite() {
            return Err(ParseError::NonFinite("noise location"));
        }
        if source.noise_type.trim().is_empty() {
            return Err(ParseError::MalformedNoise(source.noise_type.clone()));
        }
    }
    Ok(())
}

/// Thresholds for the filter checks.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterConfig {
    /// Minimum allowed distance from the microphone to any source, meters.
    pub overlap_epsilon: f64,
    /// Minimum number of distinct noise types a scene must propose.
    pub min_noise_types: usize,
    /// Treat locations exactly on a wall as in bounds (default: strict
    /// interior).
    pub bounds_inclusive: bool,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            overlap_epsilon: 0.1,
            min_noise_types: 2,
            bounds_inclusive: false,
        }
    }
}

#[derive(Debug, Error)]
pub enum FilterConfigError {
    #[error("overlap epsilon must be positive, got {0}")]
    NonPositiveEpsilon(f64),
}

impl FilterConfig {
    pub fn validate(&self) -> Result<(), FilterConfigError> {
        if self.overlap_epsilon <= 0.0 || !self.overlap_epsilon.is_finite() {
            return Err(FilterConfigError::NonPositiveEpsilon(self.overlap_epsilon));
        }
        Ok(())
    }
}

/// True when the microphone sits within `overlap_epsilon` of the speaker or
/// any noise source.
pub fn check_mic_overlap(scene: &SceneInfo, cfg: &FilterConfig) -> bool {
    let mic = &scene.mic_location;
    let mut min_distance = mic.distance(&scene.speaker_location);
    for source in &scene.noise_sources {
        min_distance = min_distance.min(mic.distance(&source.location));
    }
    min_distance < cfg.overlap_epsilon
}

/// True when the microphone, speaker, or any noise source lies outside the
/// room. By default bounds are the open interval `(0, dim)` per axis, so a
/// location exactly on a wall counts as outside.
pub fn check_location_bounds(scene: &SceneInfo, cfg: &FilterConfig) -> bool {
    let d = &scene.dimensions;
    let inside = |p: &Vec3| {
        if cfg.bounds_inclusive {
            (0.0..=d.x).contains(&p.x) && (0.0..=d.y).contains(&p.y) && (0.0..=d.z).contains(&p.z)
        } else {
            p.x > 0.0 && p.x < d.x && p.y > 0.0 && p.y < d.y && p.z > 0.0 && p.z < d.z
        }
    };
    let all_inside = inside(&scene.mic_location)
        && inside(&scene.speaker_location)
        && scene.noise_sources.iter().all(|s| inside(&s.location));
    !all_inside
}

/// True when the scene proposes fewer distinct noise types than
/// `min_noise_types`.
pub fn check_type_count(scene: &SceneInfo, cfg: &FilterConfig) -> bool {
    scene.distinct_type_count() < cfg.min_noise_types
}

/// Outcome of running all four filter checks on one response.
///
/// `passed` is true exactly when every flag is false. A response that fails
/// to parse sets only `response_error`; the remaining checks are not
/// evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterReport {
    pub response_error: bool,
    pub mic_overlaps_source: bool,
    pub location_exceeds_dimensions: bool,
    pub types_less_than_target: bool,
    pub passed: bool,
}

impl FilterReport {
    fn parse_failure() -> Self {
        FilterReport {
            response_error: true,
            mic_overlaps_source: false,
            location_exceeds_dimensions: false,
            types_less_than_target: false,
            passed: false,
        }
    }

    fn from_flags(overlap: bool, bounds: bool, type_count: bool) -> Self {
        FilterReport {
            response_error: false,
            mic_overlaps_source: overlap,
            location_exceeds_dimensions: bounds,
            types_less_than_target: type_count,
            passed: !(overlap || bounds || type_count),
        }
    }
}

/// Run all checks on a raw response, returning the report together with the
/// parsed scene when parsing succeeded.
pub fn evaluate(text: &str, cfg: &FilterConfig) -> (FilterReport, Option<SceneInfo>) {
    match parse_scene_info(text) {
        Err(_) => (FilterReport::parse_failure(), None),
        Ok(scene) => {
            let overlap = check_mic_overlap(&scene, cfg);
            let bounds = check_location_bounds(&scene, cfg);
            let types = check_type_count(&scene, cfg);
            (
                FilterReport::from_flags(overlap, bounds, types),
                Some(scene),
            )
        }
    }
}

/// Run all checks on a raw response.
pub fn validate(text: &str, cfg: &FilterConfig) -> FilterReport {
    evaluate(text, cfg).0
}

/// Count and percentage of responses failing one filter metric.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricStat {
    pub failing: usize,
    /// Percentage of the whole corpus, rounded to one decimal.
    pub percent: f64,
}

/// Per-metric failure statistics over a corpus of raw responses.
///
/// Every metric is denominated over all responses; unparseable responses
/// count toward `response_error` only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusMetrics {
    pub total: usize,
    pub response_error: MetricStat,
    pub mic_overlaps_source: MetricStat,
    pub location_exceeds_dimensions: MetricStat,
    pub types_less_than_target: MetricStat,
}

#[derive(Debug, Error)]
#[error("corpus is empty")]
pub struct EmptyCorpusError;

/// Aggregate the four filter metrics over `responses`.
pub fn corpus_metrics<S: AsRef<str>>(
    responses: &[S],
    cfg: &FilterConfig,
) -> Result<CorpusMetrics, EmptyCorpusError> {
    if responses.is_empty() {
        return Err(EmptyCorpusError);
    }
    let total = responses.len();
    let mut counts = [0usize; 4];
    for response in responses {
        let report = validate(response.as_ref(), cfg);
        counts[0] += usize::from(report.response_error);
        counts[1] += usize::from(report.mic_overlaps_source);
        counts[2] += usize::from(report.location_exceeds_dimensions);
        counts[3] += usize::from(report.types_less_than_target);
    }
    let stat = |failing: usize| MetricStat {
        failing,
        percent: (1000.0 * failing as f64 / total as f64).round() / 10.0,
    };
    Ok(CorpusMetrics {
        total,
        response_error: stat(counts[0]),
        mic_overlaps_source: stat(counts[1]),
        location_exceeds_dimensions: stat(counts[2]),
        types_less_than_target: stat(counts[3]),
    })
}
