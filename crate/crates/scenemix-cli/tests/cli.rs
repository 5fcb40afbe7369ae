//! Black-box tests against the built binary. The golden checks run the same
//! inputs through the CLI and the library and require identical artifacts.

use std::process::Command;

use scenemix::acoustics::{simulate_scene, SceneSimParams};
use scenemix::augment::{augment_dataset, AugmentConfig};
use scenemix::chat::{ChatBackend, ChatClient};
use scenemix::fixtures::{balcony_response, write_corpus_dir, write_demo_dataset};
use scenemix::prompt::{BetTemplate, ScenePrompt, TemplateDoc};
use scenemix::scene::{corpus_metrics, parse_scene_info, CorpusMetrics, FilterConfig};
use scenemix::tta::{synthesize_noise, FixtureTta, TtaRequest};

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_scenemix"));
    cmd.env_remove("SCENEMIX_API_KEY");
    cmd
}

struct Output {
    code: i32,
    stdout: String,
    stderr: String,
}

fn run(cmd: &mut Command) -> Output {
    let out = cmd.output().expect("binary runs");
    Output {
        code: out.status.code().expect("exit code"),
        stdout: String::from_utf8(out.stdout).expect("utf-8 stdout"),
        stderr: String::from_utf8(out.stderr).expect("utf-8 stderr"),
    }
}

#[test]
fn no_arguments_prints_usage_and_exits_2() {
    let out = run(&mut bin());
    assert_eq!(out.code, 2);
    assert!(out.stderr.contains("Usage"), "{}", out.stderr);
}

#[test]
fn unknown_flag_exits_2() {
    let out = run(bin().args(["scene-validate", "--no-such-flag"]));
    assert_eq!(out.code, 2);
}

#[test]
fn scene_validate_reference_response_passes() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("response.txt");
    std::fs::write(&path, balcony_response()).unwrap();

    let out = run(bin().args(["scene-validate", "--in", path.to_str().unwrap()]));
    assert_eq!(out.code, 0, "stderr: {}", out.stderr);
    let report: serde_json::Value = serde_json::from_str(&out.stdout).unwrap();
    assert_eq!(report["passed"], serde_json::json!(true));
    assert_eq!(report["response_error"], serde_json::json!(false));
}

#[test]
fn scene_validate_failing_response_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("response.txt");
    std::fs::write(&path, "I cannot help with that request.").unwrap();

    let out = run(bin().args(["scene-validate", "--in", path.to_str().unwrap()]));
    assert_eq!(out.code, 1);
    let report: serde_json::Value = serde_json::from_str(&out.stdout).unwrap();
    assert_eq!(report["passed"], serde_json::json!(false));
    assert_eq!(report["response_error"], serde_json::json!(true));
}

#[test]
fn corpus_metrics_table_and_json_match_library() {
    let dir = tempfile::tempdir().unwrap();
    write_corpus_dir(dir.path()).unwrap();

    let table = run(bin().args(["corpus-metrics", "--dir", dir.path().to_str().unwrap()]));
    assert_eq!(table.code, 0, "stderr: {}", table.stderr);
    let value_row = table.stdout.lines().nth(1).expect("value row");
    assert!(value_row.contains("40"), "{value_row}");
    for expected in ["10.0", "5.0", "20.0", "0.0"] {
        assert!(value_row.contains(expected), "{value_row}");
    }

    let json = run(bin().args([
        "corpus-metrics",
        "--dir",
        dir.path().to_str().unwrap(),
        "--json",
    ]));
    assert_eq!(json.code, 0);
    let via_cli: CorpusMetrics = serde_json::from_str(&json.stdout).unwrap();
    let responses = scenemix::fixtures::engineered_corpus();
    let via_library = corpus_metrics(&responses, &FilterConfig::default()).unwrap();
    assert_eq!(via_cli, via_library);
}

#[test]
fn corpus_metrics_empty_dir_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(bin().args(["corpus-metrics", "--dir", dir.path().to_str().unwrap()]));
    assert_eq!(out.code, 2);
}

#[test]
fn prompt_build_single_matches_library() {
    let out = run(bin().args([
        "prompt-build",
        "--adjective",
        "noisy",
        "--scene",
        "pedestrian street",
    ]));
    assert_eq!(out.code, 0);
    let expected = BetTemplate::builtin(ScenePrompt::new("noisy", "pedestrian street").unwrap())
        .render_single();
    assert_eq!(out.stdout.strip_suffix('\n').unwrap(), expected);
}

#[test]
fn prompt_build_dual_emits_history_and_prompt() {
    let out = run(bin().args([
        "prompt-build",
        "--adjective",
        "noisy",
        "--scene",
        "pedestrian street",
        "--mode",
        "dual",
    ]));
    assert_eq!(out.code, 0);
    let value: serde_json::Value = serde_json::from_str(&out.stdout).unwrap();
    let (history, prompt) =
        BetTemplate::builtin(ScenePrompt::new("noisy", "pedestrian street").unwrap()).render_dual();
    assert_eq!(value["history"], serde_json::to_value(&history).unwrap());
    assert_eq!(value["prompt"], serde_json::json!(prompt));
}

#[test]
fn scene_generate_matches_library_fixture() {
    let out = run(bin().args([
        "scene-generate",
        "--adjective",
        "noisy",
        "--scene",
        "pedestrian street",
        "--seed",
        "7",
    ]));
    assert_eq!(out.code, 0, "stderr: {}", out.stderr);

    let template = BetTemplate::builtin(ScenePrompt::new("noisy", "pedestrian street").unwrap());
    let client = ChatClient::new(ChatBackend::fixture()).unwrap();
    let expected = client
        .generate_scene_info(&template, &FilterConfig::default(), 7)
        .unwrap();
    assert_eq!(out.stdout, expected.scene.render());
}

#[test]
fn seed_is_required_unless_configured() {
    let out = run(bin().args([
        "scene-generate",
        "--adjective",
        "noisy",
        "--scene",
        "pedestrian street",
    ]));
    assert_eq!(out.code, 2);
    assert!(out.stderr.contains("seed"), "{}", out.stderr);

    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("config.toml");
    std::fs::write(&config, "seed = 7\n").unwrap();
    let out = run(bin().args([
        "--config",
        config.to_str().unwrap(),
        "scene-generate",
        "--adjective",
        "noisy",
        "--scene",
        "pedestrian street",
    ]));
    assert_eq!(out.code, 0, "stderr: {}", out.stderr);
}

#[test]
fn config_file_keys_apply_and_flags_override_them() {
    let dir = tempfile::tempdir().unwrap();
    let response = dir.path().join("response.txt");
    std::fs::write(&response, balcony_response()).unwrap();
    let config = dir.path().join("config.toml");
    std::fs::write(&config, "[filter]\nmin_noise_types = 3\n").unwrap();

    // The reference scene has two types: the config makes it fail...
    let strict = run(bin().args([
        "--config",
        config.to_str().unwrap(),
        "scene-validate",
        "--in",
        response.to_str().unwrap(),
    ]));
    assert_eq!(strict.code, 1);
    let report: serde_json::Value = serde_json::from_str(&strict.stdout).unwrap();
    assert_eq!(report["types_less_than_target"], serde_json::json!(true));

    // ...and the flag wins over the config.
    let relaxed = run(bin().args([
        "--config",
        config.to_str().unwrap(),
        "scene-validate",
        "--in",
        response.to_str().unwrap(),
        "--min-noise-types",
        "2",
    ]));
    assert_eq!(relaxed.code, 0);
}

#[test]
fn bad_config_file_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("config.toml");
    std::fs::write(&config, "no_such_key = 1\n").unwrap();
    let out = run(bin().args([
        "--config",
        config.to_str().unwrap(),
        "scene-validate",
        "--in",
        "whatever.txt",
    ]));
    assert_eq!(out.code, 2, "stderr: {}", out.stderr);
}

#[test]
fn noise_synthesize_matches_library_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("noise.wav");
    let out = run(bin().args([
        "noise-synthesize",
        "--type",
        "running water",
        "--seed",
        "3",
        "--duration",
        "1.0",
        "--out",
        out_path.to_str().unwrap(),
    ]));
    assert_eq!(out.code, 0, "stderr: {}", out.stderr);
    let info: serde_json::Value = serde_json::from_str(&out.stdout).unwrap();
    assert_eq!(info["samples"], serde_json::json!(16_000));
    assert_eq!(info["sample_rate"], serde_json::json!(16_000));

    let request = TtaRequest {
        duration: 1.0,
        ..TtaRequest::new("running water", 3)
    };
    let expected = synthesize_noise(&request, &FixtureTta).unwrap();
    let library_path = dir.path().join("library.wav");
    expected.write_wav(&library_path).unwrap();
    assert_eq!(
        std::fs::read(&out_path).unwrap(),
        std::fs::read(&library_path).unwrap(),
        "CLI and library clips differ"
    );
}

#[test]
fn rir_compute_lists_the_seven_reference_images() {
    let dir = tempfile::tempdir().unwrap();
    let rir_path = dir.path().join("rir.json");
    let out = run(bin().args([
        "rir-compute",
        "--room",
        "4,2.5,4",
        "--source",
        "2,1.5,1.6",
        "--mic",
        "3.5,0.5,1.2",
        "--out",
        rir_path.to_str().unwrap(),
    ]));
    assert_eq!(out.code, 0, "stderr: {}", out.stderr);
    let value: serde_json::Value = serde_json::from_str(&out.stdout).unwrap();
    assert_eq!(value["image_count"], serde_json::json!(7));
    let images = value["images"].as_array().unwrap();
    let direct = images.iter().filter(|i| i["order"] == 0).count();
    let mirrored = images.iter().filter(|i| i["order"] == 1).count();
    assert_eq!((direct, mirrored), (1, 6));

    let rir: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&rir_path).unwrap()).unwrap();
    assert_eq!(
        rir["taps"].as_array().unwrap().len(),
        value["tap_count"].as_u64().unwrap() as usize
    );
}

#[test]
fn scene_simulate_matches_library() {
    let dir = tempfile::tempdir().unwrap();
    let scene_path = dir.path().join("scene.txt");
    std::fs::write(&scene_path, balcony_response()).unwrap();
    let speech_path = dir.path().join("speech.wav");
    let speech = scenemix::fixtures::demo_speech(2, 1.0, 16_000);
    speech.write_wav(&speech_path).unwrap();
    let out_path = dir.path().join("mix.wav");

    let out = run(bin().args([
        "scene-simulate",
        "--scene",
        scene_path.to_str().unwrap(),
        "--speech",
        speech_path.to_str().unwrap(),
        "--seed",
        "5",
        "--duration",
        "0.6",
        "--out",
        out_path.to_str().unwrap(),
    ]));
    assert_eq!(out.code, 0, "stderr: {}", out.stderr);

    // Same inputs through the library.
    let scene = parse_scene_info(&balcony_response()).unwrap();
    let params = SceneSimParams {
        seed: 5,
        ..SceneSimParams::default()
    };
    let mut pairs = Vec::new();
    for source in &scene.noise_sources {
        let request = TtaRequest {
            duration: 0.6,
            sample_rate: params.sample_rate,
            ..TtaRequest::new(&source.noise_type, 5)
        };
        pairs.push((
            source.clone(),
            synthesize_noise(&request, &FixtureTta).unwrap(),
        ));
    }
    // The CLI reads the speech back from its own WAV, so quantize the same
    // way before simulating.
    let expected = simulate_scene(&scene, &speech.quantized(), &pairs, &params).unwrap();
    let library_path = dir.path().join("library.wav");
    expected.audio.write_wav(&library_path).unwrap();
    assert_eq!(
        std::fs::read(&out_path).unwrap(),
        std::fs::read(&library_path).unwrap(),
        "CLI and library mixes differ"
    );
}

#[test]
fn augment_matches_library_and_reports_summary() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = write_demo_dataset(&dir.path().join("data"), 3, 16_000, 31).unwrap();
    let cli_out = dir.path().join("out-cli");
    let lib_out = dir.path().join("out-lib");

    let out = run(bin().args([
        "augment",
        "--input",
        manifest.to_str().unwrap(),
        "--out",
        cli_out.to_str().unwrap(),
        "--seed",
        "42",
        "--anr",
        "1.0",
        "--jobs",
        "1",
    ]));
    assert_eq!(out.code, 0, "stderr: {}", out.stderr);
    let summary: serde_json::Value = serde_json::from_str(&out.stdout).unwrap();
    assert_eq!(summary["total"], serde_json::json!(3));
    assert_eq!(summary["augmented"], serde_json::json!(3));
    assert_eq!(summary["failed"], serde_json::json!(0));

    let cfg = AugmentConfig {
        anr: 1.0,
        seed: 42,
        jobs: 1,
        ..AugmentConfig::default()
    };
    let chat = ChatClient::new(ChatBackend::fixture()).unwrap();
    augment_dataset(
        &manifest,
        &lib_out,
        &TemplateDoc::builtin(),
        &cfg,
        &chat,
        &FixtureTta,
    )
    .unwrap();

    assert_eq!(
        std::fs::read(cli_out.join("manifest.jsonl")).unwrap(),
        std::fs::read(lib_out.join("manifest.jsonl")).unwrap(),
        "CLI and library manifests differ"
    );
    for entry in std::fs::read_dir(cli_out.join("audio")).unwrap() {
        let name = entry.unwrap().file_name();
        assert_eq!(
            std::fs::read(cli_out.join("audio").join(&name)).unwrap(),
            std::fs::read(lib_out.join("audio").join(&name)).unwrap(),
            "{name:?} differs"
        );
    }
}

#[test]
fn augment_reports_per_entry_failures_with_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = write_demo_dataset(&dir.path().join("data"), 2, 16_000, 33).unwrap();
    std::fs::remove_file(dir.path().join("data").join("speech").join("utt-001.wav")).unwrap();

    let out = run(bin().args([
        "augment",
        "--input",
        manifest.to_str().unwrap(),
        "--out",
        dir.path().join("out").to_str().unwrap(),
        "--seed",
        "1",
        "--anr",
        "0.0",
    ]));
    assert_eq!(out.code, 1, "stderr: {}", out.stderr);
    let summary: serde_json::Value = serde_json::from_str(&out.stdout).unwrap();
    assert_eq!(summary["failed"], serde_json::json!(1));
    assert_eq!(summary["copied"], serde_json::json!(1));
}

#[test]
fn scene_simulate_rejects_invalid_scene() {
    let dir = tempfile::tempdir().unwrap();
    let scene_path = dir.path().join("scene.txt");
    // Microphone placed on a noise source: fails the overlap metric.
    let mut scene = parse_scene_info(&balcony_response()).unwrap();
    scene.mic_location = scene.noise_sources[0].location;
    std::fs::write(&scene_path, scene.render()).unwrap();
    let speech_path = dir.path().join("speech.wav");
    scenemix::fixtures::demo_speech(2, 0.2, 16_000)
        .write_wav(&speech_path)
        .unwrap();

    let out = run(bin().args([
        "scene-simulate",
        "--scene",
        scene_path.to_str().unwrap(),
        "--speech",
        speech_path.to_str().unwrap(),
        "--seed",
        "5",
        "--out",
        dir.path().join("mix.wav").to_str().unwrap(),
    ]));
    assert_eq!(out.code, 1);
    assert!(out.stderr.contains("validation"), "{}", out.stderr);
}
