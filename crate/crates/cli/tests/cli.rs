use std::path::Path;
use std::process::{Command, Output};

fn fgl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fgl"))
        .args(args)
        .env_remove("FGL_RUN_DIR")
        .output()
        .expect("run fgl")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn small_config(dir: &Path) -> String {
    let p = dir.join("small.json");
    let cfg = serde_json::json!({
        "image_size": 32,
        "patch_size": 8,
        "embed_dim": 16,
        "key_dim": 16,
        "encoder_depth": 2,
        "tap_blocks": [1, 2],
        "token_dim": 16,
        "decoder_width": 8
    });
    std::fs::write(&p, cfg.to_string()).unwrap();
    p.to_string_lossy().into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn no_arguments_prints_usage_and_fails() {
    let o = fgl(&[]);
    assert_eq!(o.status.code(), Some(1));
    let text = String::from_utf8_lossy(&o.stderr).to_string() + &stdout(&o);
    assert!(text.contains("Usage"), "{text}");
}

#[test]
fn unknown_command_fails_with_usage_code() {
    assert_eq!(fgl(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(fgl(&["--help"]).status.code(), Some(0));
}

#[test]
fn synth_then_validate() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let data = dir.path().join("data");
    let o = fgl(&[
        "--config",
        &cfg,
        "--seed",
        "3",
        "synth",
        "--out",
        s(&data),
        "--forged",
        "4",
        "--authentic",
        "2",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let manifest = data.join("manifest.json");
    let o = fgl(&["validate", "--manifest", s(&manifest)]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("0 violations"));

    // Same seed, same files.
    let again = dir.path().join("again");
    fgl(&[
        "--config",
        &cfg,
        "--seed",
        "3",
        "synth",
        "--out",
        s(&again),
        "--forged",
        "4",
        "--authentic",
        "2",
    ]);
    for id in ["forged-0000", "forged-0003", "authentic-0001"] {
        let f = format!("images/{id}.png");
        assert_eq!(
            std::fs::read(data.join(&f)).unwrap(),
            std::fs::read(again.join(&f)).unwrap()
        );
    }

    // A forged entry whose mask is replaced by an empty one is a violation.
    let mask = data.join("masks/forged-0000.png");
    std::fs::copy(data.join("masks/authentic-0000.png"), &mask).unwrap();
    let o = fgl(&["validate", "--manifest", s(&manifest)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("forged-0000: forged-needs-positive-mask"));
}

#[test]
fn bad_forgery_type_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = fgl(&[
        "synth",
        "--out",
        s(&dir.path().join("d")),
        "--types",
        "none",
    ]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn missing_files_are_io_errors() {
    let dir = tempfile::tempdir().unwrap();
    let o = fgl(&["validate", "--manifest", s(&dir.path().join("nope.json"))]);
    assert_eq!(o.status.code(), Some(2));
    let o = fgl(&[
        "localize",
        "--checkpoint",
        s(&dir.path().join("x.ckpt")),
        "--image",
        "y.png",
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn gradcheck_reports_pass() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let o = fgl(&["--config", &cfg, "gradcheck"]);
    assert!(o.status.success());
    let out = stdout(&o);
    assert!(out.contains("expert:") && out.contains("bridge:"), "{out}");
    assert_eq!(out.matches("PASS").count(), 2, "{out}");
}

#[test]
fn train_and_evaluate_in_a_run_dir() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let run = dir.path().join("run");
    let data = dir.path().join("data");
    let base = ["--config", &cfg, "--run-dir", s(&run)];
    let go = |extra: &[&str]| {
        let args: Vec<&str> = base.iter().copied().chain(extra.iter().copied()).collect();
        let o = fgl(&args);
        assert!(
            o.status.success(),
            "{extra:?}: {}",
            String::from_utf8_lossy(&o.stderr)
        );
        stdout(&o)
    };
    go(&[
        "synth",
        "--out",
        s(&data),
        "--forged",
        "2",
        "--authentic",
        "2",
    ]);
    let manifest = data.join("manifest.json");
    let m = s(&manifest);
    go(&[
        "train-flexpert",
        "--manifest",
        m,
        "--epochs",
        "2",
        "--batch-size",
        "2",
    ]);
    let expert = run.join("checkpoints/flexpert.ckpt");
    assert!(
        expert.is_file(),
        "{:?}",
        std::fs::read_dir(run.join("checkpoints"))
            .unwrap()
            .collect::<Vec<_>>()
    );
    go(&[
        "train-bridge",
        "--manifest",
        m,
        "--expert",
        s(&expert),
        "--epochs",
        "2",
        "--batch-size",
        "4",
    ]);
    let bridge = run.join("checkpoints/bridge.ckpt");
    assert!(bridge.is_file());

    let image = data.join("images/forged-0000.png");
    go(&[
        "localize",
        "--checkpoint",
        s(&expert),
        "--image",
        s(&image),
        "--out",
        s(&dir.path().join("map.png")),
    ]);
    assert!(dir.path().join("map.png").is_file());
    let det = go(&["detect", "--checkpoint", s(&bridge), "--image", s(&image)]);
    assert!(det.contains("authentic") || det.contains("forged"), "{det}");
    go(&[
        "explain",
        "--checkpoint",
        s(&bridge),
        "--image",
        s(&image),
        "--type",
        "splicing",
    ]);
    go(&["eval-loc", "--checkpoint", s(&expert), "--manifest", m]);
    let acc = go(&[
        "eval-det",
        "--checkpoint",
        s(&bridge),
        "--manifest",
        m,
        "--mask-source",
        "ground-truth",
    ]);
    assert!(acc.contains("accuracy"));
    go(&["eval-explain", "--checkpoint", s(&bridge), "--manifest", m]);

    assert!(run.join("config.json").is_file());
    let log = std::fs::read_to_string(run.join("log.txt")).unwrap();
    assert!(!log.is_empty());
    let outputs: Vec<_> = std::fs::read_dir(run.join("outputs"))
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    assert!(outputs.iter().any(|n| n.ends_with(".csv")), "{outputs:?}");
}

#[test]
fn training_without_a_destination_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let data = dir.path().join("data");
    fgl(&[
        "--config",
        &cfg,
        "synth",
        "--out",
        s(&data),
        "--forged",
        "2",
        "--authentic",
        "0",
    ]);
    let o = fgl(&[
        "--config",
        &cfg,
        "train-flexpert",
        "--manifest",
        s(&data.join("manifest.json")),
        "--epochs",
        "1",
    ]);
    assert_eq!(o.status.code(), Some(1));
}
