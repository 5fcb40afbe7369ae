//! Prompt assembly for scene generation.
//!
//! A prompt has three parts: a background that explains the task and the
//! response format, worked examples (query plus known-good response), and the
//! task query itself. [`BetTemplate`] renders those parts two ways:
//!
//! * [`BetTemplate::render_single`] — one string with labeled sections, for
//!   chat endpoints that take a single prompt parameter;
//! * [`BetTemplate::render_dual`] — a turn history plus a final prompt, for
//!   endpoints that take conversation history separately.
//!
//! Templates can be loaded from TOML files ([`TemplateDoc`]) or taken from
//! the built-in default ([`TemplateDoc::builtin`]).

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scene::{self, NoiseSource, ParseError, SceneInfo, Vec3};

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("{0} must not be empty")]
    EmptyField(&'static str),
    #[error("example {index}: response does not parse: {source}")]
    InvalidExample {
        index: usize,
        #[source]
        source: ParseError,
    },
    #[error("a content line may not equal a section header ({0})")]
    ReservedHeaderLine(&'static str),
    #[error("malformed single-parameter prompt: {0}")]
    MalformedPrompt(&'static str),
    #[error("failed to read template {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("failed to parse template {path}: {source}")]
    Toml {
        path: String,
        #[source]
        source: Box<toml::de::Error>,
    },
}

/// A scene query: an adjective plus a scene type, e.g. "noisy" +
/// "pedestrian street" renders as "Noisy pedestrian street".
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "ScenePromptParts", into = "ScenePromptParts")]
pub struct ScenePrompt {
    adjective: String,
    scene_type: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ScenePromptParts {
    adjective: String,
    #[serde(rename = "scene")]
    scene_type: String,
}

impl TryFrom<ScenePromptParts> for ScenePrompt {
    type Error = PromptError;
    fn try_from(parts: ScenePromptParts) -> Result<Self, PromptError> {
        ScenePrompt::new(&parts.adjective, &parts.scene_type)
    }
}

impl From<ScenePrompt> for ScenePromptParts {
    fn from(prompt: ScenePrompt) -> Self {
        ScenePromptParts {
            adjective: prompt.adjective,
            scene_type: prompt.scene_type,
        }
    }
}

impl ScenePrompt {
    pub fn new(adjective: &str, scene_type: &str) -> Result<Self, PromptError> {
        let adjective = adjective.trim();
        let scene_type = scene_type.trim();
        if adjective.is_empty() {
            return Err(PromptError::EmptyField("adjective"));
        }
        if scene_type.is_empty() {
            return Err(PromptError::EmptyField("scene type"));
        }
        Ok(ScenePrompt {
            adjective: adjective.to_string(),
            scene_type: scene_type.to_string(),
        })
    }

    pub fn adjective(&self) -> &str {
        &self.adjective
    }

    pub fn scene_type(&self) -> &str {
        &self.scene_type
    }

    /// The query text sent to the model: "adjective scene-type", first letter
    /// capitalized.
    pub fn render(&self) -> String {
        let text = format!("{} {}", self.adjective, self.scene_type);
        let mut chars = text.chars();
        match chars.next() {
            Some(first) => first.to_uppercase().collect::<String>() + chars.as_str(),
            None => text,
        }
    }
}

/// One worked query/response pair. The response must parse as a scene, so a
/// template can never teach the model an unusable format.
#[derive(Debug, Clone, PartialEq)]
pub struct FewShotExample {
    query: ScenePrompt,
    response: String,
}

impl FewShotExample {
    /// `index` only labels the error when the response does not parse.
    pub fn new(index: usize, query: ScenePrompt, response: &str) -> Result<Self, PromptError> {
        scene::parse_scene_info(response)
            .map_err(|source| PromptError::InvalidExample { index, source })?;
        Ok(FewShotExample {
            query,
            response: response.trim_end().to_string(),
        })
    }

    pub fn query(&self) -> &ScenePrompt {
        &self.query
    }

    pub fn response(&self) -> &str {
        &self.response
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    User,
    Assistant,
}

/// One turn of conversation history for dual-parameter chat endpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatTurn {
    pub role: Role,
    pub content: String,
}

impl ChatTurn {
    pub fn user(content: impl Into<String>) -> Self {
        ChatTurn {
            role: Role::User,
            content: content.into(),
        }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        ChatTurn {
            role: Role::Assistant,
            content: content.into(),
        }
    }
}

const BACKGROUND_HEADER: &str = "[background]";
const QUERY_HEADER: &str = "[query]";
const RESPONSE_HEADER: &str = "[response]";

/// Background + examples + task, ready to render for either prompt shape.
#[derive(Debug, Clone, PartialEq)]
pub struct BetTemplate {
    background: String,
    examples: Vec<FewShotExample>,
    task: ScenePrompt,
}

impl BetTemplate {
    pub fn new(
        background: &str,
        examples: Vec<FewShotExample>,
        task: ScenePrompt,
    ) -> Result<Self, PromptError> {
        let background = background.trim();
        if background.is_empty() {
            return Err(PromptError::EmptyField("background"));
        }
        check_no_header_lines(background)?;
        for example in &examples {
            check_no_header_lines(example.response())?;
            check_no_header_lines(&example.query().render())?;
        }
        check_no_header_lines(&task.render())?;
        Ok(BetTemplate {
            background: background.to_string(),
            examples,
            task,
        })
    }

    /// The default template with the built-in background and examples.
    pub fn builtin(task: ScenePrompt) -> Self {
        TemplateDoc::builtin()
            .into_template(task)
            .expect("built-in template is valid")
    }

    pub fn background(&self) -> &str {
        &self.background
    }

    pub fn examples(&self) -> &[FewShotExample] {
        &self.examples
    }

    pub fn task(&self) -> &ScenePrompt {
        &self.task
    }

    /// Render as one labeled-section string:
    /// `[background]`, then `[query]`/`[response]` per example, then a final
    /// `[query]` holding the task. [`split_single`] inverts this exactly.
    pub fn render_single(&self) -> String {
        let mut sections = Vec::with_capacity(2 + 2 * self.examples.len());
        sections.push(format!("{BACKGROUND_HEADER}\n{}", self.background));
        for example in &self.examples {
            sections.push(format!("{QUERY_HEADER}\n{}", example.query().render()));
            sections.push(format!("{RESPONSE_HEADER}\n{}", example.response()));
        }
        sections.push(format!("{QUERY_HEADER}\n{}", self.task.render()));
        sections.join("\n\n")
    }

    /// Render as (history, prompt) for dual-parameter endpoints.
    ///
    /// The background is folded into the first user turn so the history
    /// alternates user/assistant strictly; with no examples the background
    /// prefixes the prompt itself and the history is empty.
    pub fn render_dual(&self) -> (Vec<ChatTurn>, String) {
        let task_text = self.task.render();
        if self.examples.is_empty() {
            return (Vec::new(), format!("{}\n\n{}", self.background, task_text));
        }
        let mut turns = Vec::with_capacity(2 * self.examples.len());
        for (i, example) in self.examples.iter().enumerate() {
            let query = example.query().render();
            if i == 0 {
                turns.push(ChatTurn::user(format!("{}\n\n{}", self.background, query)));
            } else {
                turns.push(ChatTurn::user(query));
            }
            turns.push(ChatTurn::assistant(example.response()));
        }
        (turns, task_text)
    }
}

fn check_no_header_lines(content: &str) -> Result<(), PromptError> {
    for line in content.lines() {
        let line = line.trim();
        if line == BACKGROUND_HEADER {
            return Err(PromptError::ReservedHeaderLine(BACKGROUND_HEADER));
        }
        if line == QUERY_HEADER {
            return Err(PromptError::ReservedHeaderLine(QUERY_HEADER));
        }
        if line == RESPONSE_HEADER {
            return Err(PromptError::ReservedHeaderLine(RESPONSE_HEADER));
        }
    }
    Ok(())
}

/// The parts recovered from a single-parameter prompt by [`split_single`].
#[derive(Debug, Clone, PartialEq)]
pub struct SplitPrompt {
    pub background: String,
    /// (query, response) pairs in template order.
    pub exchanges: Vec<(String, String)>,
    pub task: String,
}

/// Invert [`BetTemplate::render_single`].
pub fn split_single(text: &str) -> Result<SplitPrompt, PromptError> {
    #[derive(PartialEq, Clone, Copy)]
    enum Kind {
        Background,
        Query,
        Response,
    }
    let mut sections: Vec<(Kind, Vec<&str>)> = Vec::new();
    for line in text.lines() {
        let kind = match line.trim() {
            BACKGROUND_HEADER => Some(Kind::Background),
            QUERY_HEADER => Some(Kind::Query),
            RESPONSE_HEADER => Some(Kind::Response),
            _ => None,
        };
        match kind {
            Some(kind) => sections.push((kind, Vec::new())),
            None => match sections.last_mut() {
                Some((_, lines)) => lines.push(line),
                None if line.trim().is_empty() => {}
                None => return Err(PromptError::MalformedPrompt("text before first header")),
            },
        }
    }

    let mut parts = sections
        .into_iter()
        .map(|(kind, lines)| (kind, lines.join("\n").trim_end().to_string()));

    let background = match parts.next() {
        Some((Kind::Background, content)) => content,
        _ => return Err(PromptError::MalformedPrompt("first section not background")),
    };
    let mut exchanges = Vec::new();
    let mut pending_query: Option<String> = None;
    for (kind, content) in parts {
        match (kind, pending_query.take()) {
            (Kind::Query, None) => pending_query = Some(content),
            (Kind::Response, Some(query)) => exchanges.push((query, content)),
            (Kind::Query, Some(_)) | (Kind::Response, None) => {
                return Err(PromptError::MalformedPrompt(
                    "queries and responses do not alternate",
                ))
            }
            (Kind::Background, _) => {
                return Err(PromptError::MalformedPrompt("repeated background section"))
            }
        }
    }
    let task = pending_query.ok_or(PromptError::MalformedPrompt("missing final task query"))?;
    Ok(SplitPrompt {
        background,
        exchanges,
        task,
    })
}

/// A reusable background + examples document, loadable from TOML. Combine
/// with a task query via [`TemplateDoc::into_template`].
///
/// TOML shape:
///
/// ```toml
/// background = "..."
///
/// [[example]]
/// adjective = "quiet"
/// scene = "library reading room"
/// response = "dimensions: (8, 3, 6)\n..."
/// ```
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TemplateDoc {
    pub background: String,
    #[serde(default, rename = "example")]
    pub examples: Vec<DocExample>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DocExample {
    pub adjective: String,
    pub scene: String,
    pub response: String,
}

impl TemplateDoc {
    /// The built-in default: a format-focused background and three worked
    /// examples, all of which pass the default filters.
    pub fn builtin() -> Self {
        TemplateDoc {
            background: DEFAULT_BACKGROUND.trim().to_string(),
            examples: builtin_examples(),
        }
    }

    pub fn load(path: &Path) -> Result<Self, PromptError> {
        let display = path.display().to_string();
        let text = std::fs::read_to_string(path).map_err(|source| PromptError::Io {
            path: display.clone(),
            source,
        })?;
        let doc: TemplateDoc = toml::from_str(&text).map_err(|source| PromptError::Toml {
            path: display,
            source: Box::new(source),
        })?;
        Ok(doc)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("template doc serializes")
    }

    /// Validate the document and attach a task query.
    pub fn into_template(self, task: ScenePrompt) -> Result<BetTemplate, PromptError> {
        let mut examples = Vec::with_capacity(self.examples.len());
        for (index, example) in self.examples.into_iter().enumerate() {
            let query = ScenePrompt::new(&example.adjective, &example.scene)?;
            examples.push(FewShotExample::new(index, query, &example.response)?);
        }
        BetTemplate::new(&self.background, examples, task)
    }
}

// House wording, not a quotation from anywhere: replace via a template file
// when a different instruction style works better for a given model.
const DEFAULT_BACKGROUND: &str = "
You design acoustic scenes for a speech simulation pipeline. Given a short
scene query, describe one plausible scene using exactly these labeled lines:

dimensions: (length, width, height)
scene: short scene type
microphone: (x, y, z)
speaker: (x, y, z)
noise: type=short sound description location=(x, y, z)

All values are in meters. Propose at least two noise lines with distinct
types. Every microphone, speaker, and noise location must lie strictly inside
the room dimensions, and no source may sit within 0.1 m of the microphone.
Reply with the labeled lines only.
";

fn builtin_examples() -> Vec<DocExample> {
    let scenes = [
        (
            "quiet",
            "library reading room",
            SceneInfo {
                dimensions: Vec3::new(8.0, 3.0, 6.0),
                scene_type: "library reading room".into(),
                mic_location: Vec3::new(4.0, 1.2, 3.0),
                speaker_location: Vec3::new(2.5, 1.5, 2.0),
                noise_sources: vec![
                    NoiseSource {
                        noise_type: "pages turning".into(),
                        location: Vec3::new(6.0, 1.0, 4.5),
                    },
                    NoiseSource {
                        noise_type: "air conditioning hum".into(),
                        location: Vec3::new(7.0, 2.5, 1.0),
                    },
                ],
                raw_text: String::new(),
            },
        ),
        (
            "busy",
            "hospital waiting area",
            SceneInfo {
                dimensions: Vec3::new(10.0, 3.2, 7.0),
                scene_type: "hospital waiting area".into(),
                mic_location: Vec3::new(5.0, 1.4, 3.5),
                speaker_location: Vec3::new(6.5, 1.6, 3.0),
                noise_sources: vec![
                    NoiseSource {
                        noise_type: "overhead intercom announcements".into(),
                        location: Vec3::new(5.0, 3.0, 3.4),
                    },
                    NoiseSource {
                        noise_type: "rolling cart wheels".into(),
                        location: Vec3::new(2.0, 0.4, 5.0),
                    },
                    NoiseSource {
                        noise_type: "murmuring crowd".into(),
                        location: Vec3::new(8.0, 1.5, 5.5),
                    },
                ],
                raw_text: String::new(),
            },
        ),
        (
            "rainy",
            "street-side cafe",
            SceneInfo {
                dimensions: Vec3::new(6.0, 2.8, 5.0),
                scene_type: "street-side cafe".into(),
                mic_location: Vec3::new(3.0, 1.1, 2.5),
                speaker_location: Vec3::new(4.2, 1.5, 2.0),
                noise_sources: vec![
                    NoiseSource {
                        noise_type: "rain pattering on an awning".into(),
                        location: Vec3::new(3.0, 2.6, 4.5),
                    },
                    NoiseSource {
                        noise_type: "passing car splash".into(),
                        location: Vec3::new(1.0, 0.8, 4.0),
                    },
                ],
                raw_text: String::new(),
            },
        ),
    ];
    scenes
        .into_iter()
        .map(|(adjective, scene, info)| DocExample {
            adjective: adjective.to_string(),
            scene: scene.to_string(),
            response: info.render(),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::FilterConfig;

    fn task() -> ScenePrompt {
        ScenePrompt::new("noisy", "pedestrian street").unwrap()
    }

    #[test]
    fn scene_prompt_renders_capitalized() {
        assert_eq!(task().render(), "Noisy pedestrian street");
    }

    #[test]
    fn scene_prompt_rejects_empty_parts() {
        assert!(matches!(
            ScenePrompt::new("  ", "street"),
            Err(PromptError::EmptyField("adjective"))
        ));
        assert!(matches!(
            ScenePrompt::new("noisy", ""),
            Err(PromptError::EmptyField("scene type"))
        ));
    }

    #[test]
    fn builtin_examples_pass_default_filters() {
        let cfg = FilterConfig::default();
        let doc = TemplateDoc::builtin();
        assert_eq!(doc.examples.len(), 3);
        for example in &doc.examples {
            let report = scene::validate(&example.response, &cfg);
            assert!(report.passed, "example {:?} fails filters", example.scene);
        }
    }

    #[test]
    fn single_round_trip_recovers_all_parts() {
        let template = BetTemplate::builtin(task());
        let prompt = template.render_single();
        let split = split_single(&prompt).unwrap();
        assert_eq!(split.background, template.background());
        assert_eq!(split.exchanges.len(), template.examples().len());
        for (example, (query, response)) in template.examples().iter().zip(&split.exchanges) {
            assert_eq!(query, &example.query().render());
            assert_eq!(response, example.response());
        }
        assert_eq!(split.task, "Noisy pedestrian street");
    }

    #[test]
    fn dual_render_alternates_and_embeds_background_once() {
        let template = BetTemplate::builtin(task());
        let (history, prompt) = template.render_dual();
        assert_eq!(history.len(), 2 * template.examples().len());
        for (i, turn) in history.iter().enumerate() {
            let expected = if i % 2 == 0 {
                Role::User
            } else {
                Role::Assistant
            };
            assert_eq!(turn.role, expected, "turn {i}");
        }
        assert!(history[0].content.starts_with(template.background()));
        let background_mentions = history
            .iter()
            .filter(|t| t.content.contains(template.background()))
            .count();
        assert_eq!(background_mentions, 1);
        assert_eq!(prompt, "Noisy pedestrian street");
    }

    #[test]
    fn dual_render_with_no_examples_prefixes_background() {
        let template = BetTemplate::new("Describe a scene.", Vec::new(), task()).unwrap();
        let (history, prompt) = template.render_dual();
        assert!(history.is_empty());
        assert_eq!(prompt, "Describe a scene.\n\nNoisy pedestrian street");
    }

    #[test]
    fn template_rejects_header_collisions_and_bad_examples() {
        assert!(matches!(
            BetTemplate::new("line one\n[query]\nline two", Vec::new(), task()),
            Err(PromptError::ReservedHeaderLine(_))
        ));
        let bad = FewShotExample::new(0, task(), "not a scene");
        assert!(matches!(
            bad,
            Err(PromptError::InvalidExample { index: 0, .. })
        ));
    }

    #[test]
    fn template_doc_toml_round_trip() {
        let doc = TemplateDoc::builtin();
        let toml_text = doc.to_toml_string();
        let parsed: TemplateDoc = toml::from_str(&toml_text).unwrap();
        assert_eq!(parsed.background, doc.background);
        assert_eq!(parsed.examples.len(), doc.examples.len());
        assert_eq!(parsed.examples[2].response, doc.examples[2].response);
        // And the parsed doc still builds a valid template.
        parsed.into_template(task()).unwrap();
    }

    #[test]
    fn split_single_rejects_malformed_shapes() {
        assert!(split_single("stray text\n[background]\nb").is_err());
        assert!(split_single("[background]\nb\n\n[response]\nr").is_err());
        assert!(split_single("[background]\nb").is_err());
        let two_queries = "[background]\nb\n\n[query]\nq1\n\n[query]\nq2";
        assert!(split_single(two_queries).is_err());
    }
}
