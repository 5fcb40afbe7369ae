//! `scenemix` — command-line front door for the scene-based augmentation
//! pipeline. Every subcommand is a thin adapter over the library; results go
//! to stdout as text or JSON, logs to stderr.
//!
//! Exit codes: 0 success, 1 per-entry failures (summarized on stdout) or
//! runtime errors, 2 usage and configuration errors.

mod config;

use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use scenemix::acoustics::{
    compute_rir, image_contributions, simulate_scene, Environment, KernelKind, RoomModel,
    SceneSimParams, SPEED_OF_SOUND,
};
use scenemix::augment::{augment_dataset, AugmentConfig};
use scenemix::chat::{ChatBackend, ChatBackendKind, ChatClient, FixtureChatCorpus};
use scenemix::prompt::{ScenePrompt, TemplateDoc};
use scenemix::scene::{corpus_metrics, evaluate, FilterConfig, SceneInfo, Vec3};
use scenemix::tta::{synthesize_noise, FixtureTta, HttpTta, NoiseBank, TtaBackend, TtaRequest};
use scenemix::AudioClip;

use config::{FileConfig, TtaKind};

/// Marker attached to errors that should exit 2 instead of 1.
#[derive(Debug)]
struct UsageError;

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("invalid usage or configuration")
    }
}

impl std::error::Error for UsageError {}

pub(crate) fn usage(err: anyhow::Error) -> anyhow::Error {
    err.context(UsageError)
}

const API_KEY_VAR: &str = "SCENEMIX_API_KEY";

#[derive(Parser)]
#[command(
    name = "scenemix",
    version,
    about = "Scene-based noisy speech augmentation"
)]
struct Cli {
    /// TOML config file; flags override its keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render the chat prompt for a scene request.
    PromptBuild(PromptBuildArgs),
    /// Generate validated scene information through the chat backend.
    SceneGenerate(SceneGenerateArgs),
    /// Run the four filter metrics on one response file.
    SceneValidate(SceneValidateArgs),
    /// Aggregate the filter metrics over a directory of responses.
    CorpusMetrics(CorpusMetricsArgs),
    /// Synthesize one noise clip, optionally through the noise bank.
    NoiseSynthesize(NoiseSynthesizeArgs),
    /// Compute a room impulse response and its image-source listing.
    RirCompute(RirComputeArgs),
    /// Render a speech clip inside a scene.
    SceneSimulate(SceneSimulateArgs),
    /// Augment a dataset manifest end to end.
    Augment(AugmentArgs),
}

fn main() {
    // Die quietly when a pipeline consumer closes stdout early (head, jq).
    #[cfg(unix)]
    // SAFETY: restoring the default SIGPIPE disposition has no preconditions.
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => std::process::exit(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            let code = if err.downcast_ref::<UsageError>().is_some() {
                2
            } else {
                1
            };
            std::process::exit(code);
        }
    }
}

fn run(cli: Cli) -> Result<i32> {
    let file = FileConfig::load(cli.config.as_deref())?;
    match cli.command {
        Command::PromptBuild(args) => prompt_build(args, &file),
        Command::SceneGenerate(args) => scene_generate(args, &file),
        Command::SceneValidate(args) => scene_validate(args, &file),
        Command::CorpusMetrics(args) => corpus_metrics_cmd(args, &file),
        Command::NoiseSynthesize(args) => noise_synthesize(args, &file),
        Command::RirCompute(args) => rir_compute(args, &file),
        Command::SceneSimulate(args) => scene_simulate(args, &file),
        Command::Augment(args) => augment(args, &file),
    }
}

// --- shared flag groups and merge helpers ------------------------------------

fn parse_vec3(s: &str) -> Result<Vec3, String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(format!("expected x,y,z, got {s:?}"));
    }
    let mut values = [0.0f64; 3];
    for (slot, part) in values.iter_mut().zip(&parts) {
        *slot = part.parse().map_err(|e| format!("{part:?}: {e}"))?;
    }
    Ok(Vec3::new(values[0], values[1], values[2]))
}

/// Randomized subcommands take their seed from the flag or the config file;
/// there is deliberately no wall-clock fallback.
fn resolve_seed(flag: Option<u64>, file: &FileConfig) -> Result<u64> {
    flag.or(file.seed).ok_or_else(|| {
        usage(anyhow!(
            "a seed is required: pass --seed or set `seed` in the config file"
        ))
    })
}

fn load_template(path: Option<&Path>) -> Result<TemplateDoc> {
    match path {
        None => Ok(TemplateDoc::builtin()),
        Some(p) => TemplateDoc::load(p)
            .with_context(|| format!("loading template {}", p.display()))
            .map_err(usage),
    }
}

fn api_key_from_env() -> Option<String> {
    std::env::var(API_KEY_VAR).ok().filter(|k| !k.is_empty())
}

#[derive(Args, Debug, Clone)]
struct FilterFlags {
    /// Minimum microphone-to-source distance in meters.
    #[arg(long)]
    overlap_epsilon: Option<f64>,
    /// Required number of distinct noise types.
    #[arg(long)]
    min_noise_types: Option<usize>,
    /// Accept locations exactly on the room boundary.
    #[arg(long)]
    bounds_inclusive: bool,
}

impl FilterFlags {
    fn merge(&self, mut cfg: FilterConfig) -> Result<FilterConfig> {
        if let Some(epsilon) = self.overlap_epsilon {
            cfg.overlap_epsilon = epsilon;
        }
        if let Some(count) = self.min_noise_types {
            cfg.min_noise_types = count;
        }
        if self.bounds_inclusive {
            cfg.bounds_inclusive = true;
        }
        cfg.validate().map_err(|e| usage(anyhow!(e)))?;
        Ok(cfg)
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ChatKindArg {
    Fixture,
    HttpSingle,
    HttpDual,
}

impl From<ChatKindArg> for ChatBackendKind {
    fn from(kind: ChatKindArg) -> Self {
        match kind {
            ChatKindArg::Fixture => ChatBackendKind::Fixture,
            ChatKindArg::HttpSingle => ChatBackendKind::HttpSingle,
            ChatKindArg::HttpDual => ChatBackendKind::HttpDual,
        }
    }
}

#[derive(Args, Debug, Clone)]
struct ChatFlags {
    /// Chat backend kind.
    #[arg(long = "chat-backend", value_enum)]
    chat_backend: Option<ChatKindArg>,
    /// Chat service URL (http backend).
    #[arg(long = "chat-endpoint")]
    chat_endpoint: Option<String>,
    /// Model name sent to the chat service.
    #[arg(long)]
    model: Option<String>,
    /// Retries after the first rejected attempt.
    #[arg(long)]
    max_retries: Option<u32>,
    /// Chat request timeout in seconds.
    #[arg(long = "chat-timeout-secs")]
    chat_timeout_secs: Option<f64>,
    /// Scripted fixture responses (JSONL of key/response records).
    #[arg(long)]
    corpus: Option<PathBuf>,
}

impl ChatFlags {
    fn client(&self, file: &FileConfig) -> Result<ChatClient> {
        let mut backend = file.chat.clone().unwrap_or_else(ChatBackend::fixture);
        if let Some(kind) = self.chat_backend {
            backend.kind = kind.into();
        }
        if let Some(endpoint) = &self.chat_endpoint {
            backend.endpoint = endpoint.clone();
        }
        if let Some(model) = &self.model {
            backend.model = model.clone();
        }
        if let Some(retries) = self.max_retries {
            backend.max_retries = retries;
        }
        if let Some(timeout) = self.chat_timeout_secs {
            backend.timeout_secs = timeout;
        }
        if backend.api_key.is_none() {
            backend.api_key = api_key_from_env();
        }
        let corpus = match &self.corpus {
            None => FixtureChatCorpus::new(),
            Some(path) => FixtureChatCorpus::load(path)
                .with_context(|| format!("loading corpus {}", path.display()))
                .map_err(usage)?,
        };
        ChatClient::with_corpus(backend, corpus).map_err(|e| usage(anyhow!(e)))
    }
}

#[derive(Args, Debug, Clone)]
struct TtaFlags {
    /// Noise backend kind.
    #[arg(long = "tta-backend", value_enum)]
    tta_backend: Option<TtaKind>,
    /// Text-to-audio service URL (http backend).
    #[arg(long = "tta-endpoint")]
    tta_endpoint: Option<String>,
    /// Text-to-audio request timeout in seconds.
    #[arg(long = "tta-timeout-secs")]
    tta_timeout_secs: Option<f64>,
    /// Resample service audio that arrives at a different rate.
    #[arg(long = "tta-resample")]
    tta_resample: Option<bool>,
}

impl TtaFlags {
    fn backend(&self, file: &FileConfig) -> Result<Box<dyn TtaBackend>> {
        let cfg = &file.tta;
        let kind = self.tta_backend.unwrap_or(cfg.backend);
        match kind {
            TtaKind::Fixture => Ok(Box::new(FixtureTta)),
            TtaKind::Http => {
                let endpoint = self
                    .tta_endpoint
                    .clone()
                    .unwrap_or_else(|| cfg.endpoint.clone());
                if endpoint.trim().is_empty() {
                    return Err(usage(anyhow!("http tta backend needs --tta-endpoint")));
                }
                let timeout = self.tta_timeout_secs.unwrap_or(cfg.timeout_secs);
                let resample = self.tta_resample.unwrap_or(cfg.resample);
                let tta = HttpTta::new(
                    &endpoint,
                    Duration::from_secs_f64(timeout),
                    api_key_from_env(),
                    cfg.max_in_flight,
                    resample,
                )
                .map_err(|e| usage(anyhow!(e)))?;
                Ok(Box::new(tta))
            }
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum EnvironmentArg {
    Indoor,
    Outdoor,
}

impl From<EnvironmentArg> for Environment {
    fn from(value: EnvironmentArg) -> Self {
        match value {
            EnvironmentArg::Indoor => Environment::Indoor,
            EnvironmentArg::Outdoor => Environment::Outdoor,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum KernelKindArg {
    RaisedCosine,
    WindowedSinc,
}

impl From<KernelKindArg> for KernelKind {
    fn from(value: KernelKindArg) -> Self {
        match value {
            KernelKindArg::RaisedCosine => KernelKind::RaisedCosine,
            KernelKindArg::WindowedSinc => KernelKind::WindowedSinc,
        }
    }
}

/// Room-simulation flags shared by `rir-compute`, `scene-simulate`, and
/// `augment`; unset flags fall back to the `[augment]` config section.
#[derive(Args, Debug, Clone)]
struct SimFlags {
    /// Reverberation time (seconds) driving wall absorption.
    #[arg(long)]
    rt60: Option<f64>,
    /// Maximum reflection order.
    #[arg(long)]
    max_order: Option<u32>,
    /// Simulation sample rate in Hz.
    #[arg(long)]
    sample_rate: Option<u32>,
    /// Outdoor clamps the reflection order to 1; indoor honors --max-order.
    #[arg(long, value_enum)]
    environment: Option<EnvironmentArg>,
    /// Spreading kernel width in taps (odd).
    #[arg(long)]
    kernel_width: Option<u32>,
    /// Fractional-delay spreading kernel.
    #[arg(long, value_enum)]
    kernel_kind: Option<KernelKindArg>,
    /// Peak the output is normalized down to when it clips.
    #[arg(long)]
    normalize_peak: Option<f64>,
}

impl SimFlags {
    fn merge_into(&self, cfg: &mut AugmentConfig) {
        if let Some(rt60) = self.rt60 {
            cfg.rt60 = rt60;
        }
        if let Some(order) = self.max_order {
            cfg.max_order = order;
        }
        if let Some(rate) = self.sample_rate {
            cfg.sample_rate = rate;
        }
        if let Some(environment) = self.environment {
            cfg.environment = environment.into();
        }
        if let Some(width) = self.kernel_width {
            cfg.kernel.width_taps = width;
        }
        if let Some(kind) = self.kernel_kind {
            cfg.kernel.kind = kind.into();
        }
        if let Some(peak) = self.normalize_peak {
            cfg.normalize_peak = peak;
        }
    }

    fn sim_params(&self, file: &FileConfig, seed: u64) -> Result<SceneSimParams> {
        let mut base = file.augment.clone();
        self.merge_into(&mut base);
        let params = SceneSimParams {
            rt60: base.rt60,
            max_order: base.max_order,
            sample_rate: base.sample_rate,
            speed_of_sound: SPEED_OF_SOUND,
            environment: base.environment,
            kernel: base.kernel,
            seed,
            normalize_peak: base.normalize_peak,
        };
        params.validate().map_err(|e| usage(anyhow!(e)))?;
        Ok(params)
    }
}

fn print_json(value: &serde_json::Value) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

// --- subcommands --------------------------------------------------------------

#[derive(Clone, Copy, Debug, ValueEnum)]
enum PromptMode {
    /// One concatenated prompt string.
    Single,
    /// History turns plus the task prompt.
    Dual,
}

#[derive(Args, Debug)]
struct PromptBuildArgs {
    /// Scene adjective, e.g. "noisy".
    #[arg(long)]
    adjective: String,
    /// Scene type, e.g. "pedestrian street".
    #[arg(long)]
    scene: String,
    /// Template document (TOML); defaults to the built-in one.
    #[arg(long)]
    template: Option<PathBuf>,
    /// Single prompt text, or dual prompt with a worked-example history.
    #[arg(long, value_enum, default_value = "single")]
    mode: PromptMode,
}

fn prompt_build(args: PromptBuildArgs, _file: &FileConfig) -> Result<i32> {
    let task = ScenePrompt::new(&args.adjective, &args.scene).map_err(|e| usage(anyhow!(e)))?;
    let doc = load_template(args.template.as_deref())?;
    let template = doc.into_template(task).map_err(|e| usage(anyhow!(e)))?;
    match args.mode {
        PromptMode::Single => println!("{}", template.render_single()),
        PromptMode::Dual => {
            let (history, prompt) = template.render_dual();
            print_json(&json!({ "history": history, "prompt": prompt }))?;
        }
    }
    Ok(0)
}

#[derive(Args, Debug)]
struct SceneGenerateArgs {
    /// Scene prompt adjective (e.g. "noisy").
    #[arg(long)]
    adjective: String,
    /// Scene prompt scene type (e.g. "pedestrian street").
    #[arg(long)]
    scene: String,
    /// Template document (TOML); defaults to the built-in one.
    #[arg(long)]
    template: Option<PathBuf>,
    /// Seed for this generation (falls back to the config `seed`).
    #[arg(long)]
    seed: Option<u64>,
    /// Write the accepted raw response text here.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Emit a JSON record instead of the canonical scene text.
    #[arg(long)]
    json: bool,
    #[command(flatten)]
    filter: FilterFlags,
    #[command(flatten)]
    chat: ChatFlags,
}

fn scene_generate(args: SceneGenerateArgs, file: &FileConfig) -> Result<i32> {
    let seed = resolve_seed(args.seed, file)?;
    let task = ScenePrompt::new(&args.adjective, &args.scene).map_err(|e| usage(anyhow!(e)))?;
    let template = load_template(args.template.as_deref())?
        .into_template(task)
        .map_err(|e| usage(anyhow!(e)))?;
    let filter = args.filter.merge(file.filter.clone())?;
    let client = args.chat.client(file)?;

    let outcome = client.generate_scene_info(&template, &filter, seed)?;
    if let Some(path) = &args.out {
        std::fs::write(path, &outcome.response_text)
            .with_context(|| format!("writing {}", path.display()))?;
    }
    if args.json {
        print_json(&json!({
            "scene": outcome.scene,
            "attempts": outcome.attempts,
            "response": outcome.response_text,
        }))?;
    } else {
        print!("{}", outcome.scene.render());
    }
    eprintln!("accepted after {} attempt(s)", outcome.attempts);
    Ok(0)
}

#[derive(Args, Debug)]
struct SceneValidateArgs {
    /// Response file to check.
    #[arg(long = "in")]
    input: PathBuf,
    #[command(flatten)]
    filter: FilterFlags,
}

fn scene_validate(args: SceneValidateArgs, file: &FileConfig) -> Result<i32> {
    let filter = args.filter.merge(file.filter.clone())?;
    let text = std::fs::read_to_string(&args.input)
        .with_context(|| format!("reading {}", args.input.display()))?;
    let (report, _) = evaluate(&text, &filter);
    print_json(&serde_json::to_value(report)?)?;
    Ok(if report.passed { 0 } else { 1 })
}

#[derive(Args, Debug)]
struct CorpusMetricsArgs {
    /// Directory of response files (one response per file).
    #[arg(long)]
    dir: PathBuf,
    /// Emit JSON instead of the table.
    #[arg(long)]
    json: bool,
    #[command(flatten)]
    filter: FilterFlags,
}

fn corpus_metrics_cmd(args: CorpusMetricsArgs, file: &FileConfig) -> Result<i32> {
    let filter = args.filter.merge(file.filter.clone())?;
    let mut paths: Vec<PathBuf> = std::fs::read_dir(&args.dir)
        .with_context(|| format!("reading {}", args.dir.display()))
        .map_err(usage)?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.is_file())
        .collect();
    paths.sort();
    let mut responses = Vec::with_capacity(paths.len());
    for path in &paths {
        responses.push(
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?,
        );
    }
    let metrics = corpus_metrics(&responses, &filter)
        .map_err(|e| usage(anyhow!(e).context(format!("in {}", args.dir.display()))))?;

    if args.json {
        print_json(&serde_json::to_value(&metrics)?)?;
    } else {
        println!(
            "{:<10} {:>15} {:>20} {:>28} {:>23}",
            "responses",
            "response_error",
            "mic_overlaps_source",
            "location_exceeds_dimensions",
            "types_less_than_target"
        );
        println!(
            "{:<10} {:>15.1} {:>20.1} {:>28.1} {:>23.1}",
            metrics.total,
            metrics.response_error.percent,
            metrics.mic_overlaps_source.percent,
            metrics.location_exceeds_dimensions.percent,
            metrics.types_less_than_target.percent
        );
    }
    Ok(0)
}

#[derive(Args, Debug)]
struct NoiseSynthesizeArgs {
    /// Noise type, used verbatim as the synthesis prompt.
    #[arg(long = "type")]
    noise_type: String,
    /// Synthesis seed (falls back to the config `seed`).
    #[arg(long)]
    seed: Option<u64>,
    /// Clip length in seconds.
    #[arg(long)]
    duration: Option<f64>,
    /// Clip sample rate in Hz.
    #[arg(long)]
    sample_rate: Option<u32>,
    /// Output WAV path.
    #[arg(long)]
    out: PathBuf,
    /// Cache directory; reuses previously synthesized clips.
    #[arg(long)]
    bank: Option<PathBuf>,
    #[command(flatten)]
    tta: TtaFlags,
}

fn noise_synthesize(args: NoiseSynthesizeArgs, file: &FileConfig) -> Result<i32> {
    let seed = resolve_seed(args.seed, file)?;
    let duration = args.duration.unwrap_or(file.tta.duration);
    let sample_rate = args.sample_rate.unwrap_or(file.tta.sample_rate);
    let backend = args.tta.backend(file)?;

    let clip = match &args.bank {
        Some(dir) => {
            let bank = NoiseBank::open(dir, duration, sample_rate)?;
            (*bank.get(&args.noise_type, seed, backend.as_ref())?).clone()
        }
        None => {
            let request = TtaRequest {
                duration,
                sample_rate,
                ..TtaRequest::new(&args.noise_type, seed)
            };
            synthesize_noise(&request, backend.as_ref())?
        }
    };
    clip.write_wav(&args.out)?;
    print_json(&json!({
        "path": args.out,
        "samples": clip.len(),
        "sample_rate": clip.sample_rate(),
        "peak": clip.peak(),
    }))?;
    Ok(0)
}

#[derive(Args, Debug)]
struct RirComputeArgs {
    /// Room dimensions as x,y,z in meters.
    #[arg(long, value_parser = parse_vec3)]
    room: Vec3,
    /// Source position as x,y,z in meters.
    #[arg(long, value_parser = parse_vec3)]
    source: Vec3,
    /// Microphone position as x,y,z in meters.
    #[arg(long, value_parser = parse_vec3)]
    mic: Vec3,
    /// Wall absorption coefficient; overrides the rt60-derived value.
    #[arg(long, conflicts_with = "rt60")]
    absorption: Option<f64>,
    /// Write the impulse response here as JSON {sample_rate, taps}.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    sim: SimFlags,
}

fn rir_compute(args: RirComputeArgs, file: &FileConfig) -> Result<i32> {
    let params = args.sim.sim_params(file, 0)?;
    let absorption = match args.absorption {
        Some(a) => a,
        None => scenemix::acoustics::absorption_from_rt60(params.rt60, args.room)
            .map_err(|e| usage(anyhow!(e)))?,
    };
    let room = RoomModel {
        dimensions: args.room,
        absorption,
        max_order: params.max_order,
        sample_rate: params.sample_rate,
        speed_of_sound: params.speed_of_sound,
        environment: params.environment,
    };
    let images =
        image_contributions(&room, &args.source, &args.mic).map_err(|e| usage(anyhow!(e)))?;
    let rir = compute_rir(&room, &args.source, &args.mic, &params.kernel)
        .map_err(|e| usage(anyhow!(e)))?;

    if let Some(path) = &args.out {
        let body = serde_json::to_string(&json!({
            "sample_rate": rir.sample_rate,
            "taps": rir.taps,
        }))?;
        std::fs::write(path, body).with_context(|| format!("writing {}", path.display()))?;
    }
    print_json(&json!({
        "images": images,
        "image_count": images.len(),
        "absorption": absorption,
        "tap_count": rir.len(),
        "sample_rate": rir.sample_rate,
        "energy": rir.energy(),
    }))?;
    Ok(0)
}

#[derive(Args, Debug)]
struct SceneSimulateArgs {
    /// Scene description file (canonical text or JSON).
    #[arg(long)]
    scene: PathBuf,
    /// Dry speech WAV.
    #[arg(long)]
    speech: PathBuf,
    /// Simulation and synthesis seed (falls back to the config `seed`).
    #[arg(long)]
    seed: Option<u64>,
    /// Output WAV path.
    #[arg(long)]
    out: PathBuf,
    /// Noise clip length in seconds before looping/cropping.
    #[arg(long)]
    duration: Option<f64>,
    /// Cache directory for synthesized noise.
    #[arg(long)]
    bank: Option<PathBuf>,
    #[command(flatten)]
    filter: FilterFlags,
    #[command(flatten)]
    sim: SimFlags,
    #[command(flatten)]
    tta: TtaFlags,
}

fn scene_simulate(args: SceneSimulateArgs, file: &FileConfig) -> Result<i32> {
    let seed = resolve_seed(args.seed, file)?;
    let filter = args.filter.merge(file.filter.clone())?;
    let params = args.sim.sim_params(file, seed)?;
    let text = std::fs::read_to_string(&args.scene)
        .with_context(|| format!("reading {}", args.scene.display()))?;
    let (report, parsed) = evaluate(&text, &filter);
    let scene: SceneInfo = match parsed {
        Some(scene) if report.passed => scene,
        _ => {
            return Err(anyhow!(
                "scene fails validation: {}",
                serde_json::to_string(&report)?
            ))
        }
    };

    let speech = AudioClip::read_wav(&args.speech)?;
    let speech = if speech.sample_rate() == params.sample_rate {
        speech
    } else {
        speech.resampled(params.sample_rate)?
    };

    let duration = args.duration.unwrap_or(file.tta.duration);
    let backend = args.tta.backend(file)?;
    let mut pairs = Vec::with_capacity(scene.noise_sources.len());
    match &args.bank {
        Some(dir) => {
            let bank = NoiseBank::open(dir, duration, params.sample_rate)?;
            for source in &scene.noise_sources {
                let clip = bank.get(&source.noise_type, seed, backend.as_ref())?;
                pairs.push((source.clone(), (*clip).clone()));
            }
        }
        None => {
            for source in &scene.noise_sources {
                let request = TtaRequest {
                    duration,
                    sample_rate: params.sample_rate,
                    ..TtaRequest::new(&source.noise_type, seed)
                };
                pairs.push((
                    source.clone(),
                    synthesize_noise(&request, backend.as_ref())?,
                ));
            }
        }
    }

    let render = simulate_scene(&scene, &speech, &pairs, &params)?;
    render.audio.write_wav(&args.out)?;
    print_json(&json!({
        "output": args.out,
        "samples": render.audio.len(),
        "sample_rate": render.audio.sample_rate(),
        "normalization_gain": render.normalization_gain,
    }))?;
    Ok(0)
}

#[derive(Args, Debug)]
struct AugmentArgs {
    /// Input manifest (JSONL with utterance_id, path, optional transcript).
    #[arg(long)]
    input: PathBuf,
    /// Output directory for audio/, manifest.jsonl, and the noise bank.
    #[arg(long)]
    out: PathBuf,
    /// Master seed for the whole run (falls back to the config `seed`).
    #[arg(long)]
    seed: Option<u64>,
    /// Probability that an utterance is augmented rather than copied.
    #[arg(long)]
    anr: Option<f64>,
    /// Worker threads (0 = one per core).
    #[arg(long)]
    jobs: Option<usize>,
    /// Template document (TOML); defaults to the built-in one.
    #[arg(long)]
    template: Option<PathBuf>,
    /// Scene prompt adjective; requires --scene.
    #[arg(long, requires = "scene")]
    adjective: Option<String>,
    /// Scene prompt scene type; requires --adjective.
    #[arg(long, requires = "adjective")]
    scene: Option<String>,
    /// Distinct generated scenes kept per prompt.
    #[arg(long)]
    scene_pool: Option<usize>,
    /// Synthesized noise clip length in seconds.
    #[arg(long)]
    noise_duration: Option<f64>,
    /// Noise bank directory (defaults to <out>/noise-bank).
    #[arg(long)]
    bank: Option<PathBuf>,
    #[command(flatten)]
    filter: FilterFlags,
    #[command(flatten)]
    sim: SimFlags,
    #[command(flatten)]
    chat: ChatFlags,
    #[command(flatten)]
    tta: TtaFlags,
}

fn augment(args: AugmentArgs, file: &FileConfig) -> Result<i32> {
    let mut cfg = file.augment.clone();
    cfg.seed = resolve_seed(args.seed, file)?;
    args.sim.merge_into(&mut cfg);
    if let Some(anr) = args.anr {
        cfg.anr = anr;
    }
    if let Some(jobs) = args.jobs {
        cfg.jobs = jobs;
    }
    if let Some(pool) = args.scene_pool {
        cfg.scene_pool = pool;
    }
    if let Some(duration) = args.noise_duration {
        cfg.noise_duration = duration;
    }
    if let Some(bank) = &args.bank {
        cfg.bank_dir = Some(bank.clone());
    }
    if let (Some(adjective), Some(scene)) = (&args.adjective, &args.scene) {
        cfg.scene_prompts =
            vec![ScenePrompt::new(adjective, scene).map_err(|e| usage(anyhow!(e)))?];
    }
    cfg.filter = args.filter.merge(file.filter.clone())?;
    cfg.validate().map_err(|e| usage(anyhow!(e)))?;

    let template = load_template(args.template.as_deref())?;
    let chat = args.chat.client(file)?;
    let tta = args.tta.backend(file)?;

    let summary = augment_dataset(&args.input, &args.out, &template, &cfg, &chat, tta.as_ref())?;
    print_json(&serde_json::to_value(&summary)?)?;
    if summary.failed > 0 {
        eprintln!("{} of {} entries failed", summary.failed, summary.total);
        return Ok(1);
    }
    Ok(0)
}
