use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sha2::{Digest, Sha256};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_cattleact"));
    c.env_remove("CATTLEACT_SEED");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn cfg(name: &str) -> String {
    configs().join(name).display().to_string()
}

// File path (relative to `root`) -> sha256, skipping run.json.
fn tree_digest(root: &Path) -> BTreeMap<String, String> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in std::fs::read_dir(&dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if p.file_name().unwrap() != "run.json" {
                let rel = p.strip_prefix(root).unwrap().display().to_string();
                out.insert(rel, hex::encode(Sha256::digest(std::fs::read(&p).unwrap())));
            }
        }
    }
    out
}

fn write_spec(dir: &Path, body: &str) -> String {
    let p = dir.join("spec.json");
    std::fs::write(&p, body).unwrap();
    p.display().to_string()
}

const TINY_SPEC: &str = r#"{"n_action_samples": 40, "n_interaction_samples": 40, "seed": 3}"#;

#[test]
fn synth_generate_writes_layout_and_is_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), TINY_SPEC);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = run(&["synth-generate", "--spec", &spec, "--out-dir", out.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for f in ["manifest.jsonl", "run.json", "gps/gps.csv", "gps/tracklets.jsonl", "gps/correspondences.csv", "gps/truth.json"] {
        assert!(a.join(f).is_file(), "missing {f}");
    }
    let da = tree_digest(&a);
    assert!(da.len() > 80);
    assert_eq!(da, tree_digest(&b));
}

#[test]
fn malformed_spec_exits_2_naming_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), r#"{"n_cattle": 5, "n_catle": 4}"#);
    let o = run(&["synth-generate", "--spec", &spec, "--out-dir", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("n_catle"));

    let spec = write_spec(dir.path(), r#"{"n_cattle": 5,"#);
    let o = run(&["synth-generate", "--spec", &spec, "--out-dir", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));

    let spec = write_spec(dir.path(), r#"{"split_fractions": [0.5, 0.5, 0.5]}"#);
    let o = run(&["synth-generate", "--spec", &spec, "--out-dir", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("split_fractions"));
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(run(&["no-such-command"]).status.code(), Some(2));
    let o = run(&["pretrain", "--config", "/nonexistent.json", "--manifest", "/nonexistent.jsonl", "--out-dir", "/tmp/x"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("missing file"));
}

#[test]
fn train_joint_without_checkpoint_is_a_stage_order_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&[
        "train-joint",
        "--config",
        &cfg("joint.json"),
        "--manifest",
        "/unused.jsonl",
        "--out-dir",
        dir.path().join("j").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("stage ordering"));
}

#[test]
fn help_lists_flags_and_formats() {
    for sub in ["synth-generate", "pretrain", "train-joint", "evaluate", "reid-match", "occlusion-map", "augment-preview", "embed-export"] {
        let o = run(&[sub, "--help"]);
        assert_eq!(o.status.code(), Some(0));
        let text = String::from_utf8_lossy(&o.stdout);
        assert!(text.contains("--out-dir") && text.contains("FILE FORMATS") && text.contains("CATTLEACT_SEED"), "{sub}");
    }
    let text = String::from_utf8_lossy(&run(&["train-joint", "--help"]).stdout).to_string();
    for flag in ["--no-pretrain", "--standard-cutout", "--no-alignment", "--from-scratch", "--action-checkpoint"] {
        assert!(text.contains(flag), "{flag}");
    }
}

#[test]
fn reid_match_recovers_truth_and_reports_runtime_failures() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), TINY_SPEC);
    let data = dir.path().join("d");
    assert!(run(&["synth-generate", "--spec", &spec, "--out-dir", data.to_str().unwrap()]).status.success());
    let gps = data.join("gps");
    let p = |f: &str| gps.join(f).display().to_string();
    let out = dir.path().join("r");
    let o = run(&[
        "reid-match",
        "--tracklets",
        &p("tracklets.jsonl"),
        "--gps",
        &p("gps.csv"),
        "--correspondences",
        &p("correspondences.csv"),
        "--out-dir",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let got: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("assignment.json")).unwrap()).unwrap();
    let truth: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(gps.join("truth.json")).unwrap()).unwrap();
    assert_eq!(got["assignment"]["matching"], truth);

    // GPS shifted far past the video: no overlap is a runtime failure
    let shifted = dir.path().join("late.csv");
    let text = std::fs::read_to_string(gps.join("gps.csv")).unwrap();
    let mut lines = text.lines();
    let mut body = format!("{}\n", lines.next().unwrap());
    for l in lines {
        let mut f: Vec<String> = l.split(',').map(str::to_string).collect();
        f[1] = (f[1].parse::<f64>().unwrap() + 1e5).to_string();
        body.push_str(&f.join(","));
        body.push('\n');
    }
    std::fs::write(&shifted, body).unwrap();
    let o = run(&[
        "reid-match",
        "--tracklets",
        &p("tracklets.jsonl"),
        "--gps",
        shifted.to_str().unwrap(),
        "--correspondences",
        &p("correspondences.csv"),
        "--out-dir",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn full_pipeline_on_the_bundled_spec() {
    let dir = tempfile::tempdir().unwrap();
    let d = |s: &str| dir.path().join(s).display().to_string();
    let ok = |args: &[&str]| {
        let o = bin().args(args).env("CATTLEACT_SEED", "2").output().unwrap();
        assert_eq!(o.status.code(), Some(0), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
        String::from_utf8_lossy(&o.stdout).to_string()
    };
    ok(&["synth-generate", "--spec", &cfg("synth_small.json"), "--out-dir", &d("data")]);
    let manifest = d("data/manifest.jsonl");
    let before = tree_digest(&dir.path().join("data"));
    ok(&["pretrain", "--config", &cfg("pretrain.json"), "--manifest", &manifest, "--out-dir", &d("pre")]);
    ok(&[
        "train-joint",
        "--config",
        &cfg("joint.json"),
        "--manifest",
        &manifest,
        "--action-checkpoint",
        &d("pre/action.ckpt"),
        "--out-dir",
        &d("joint"),
    ]);
    let table = ok(&["evaluate", "--checkpoint", &d("joint/joint_best.ckpt"), "--manifest", &manifest, "--out-dir", &d("eval")]);
    assert!(table.contains("macro-F1"));
    let metrics: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d("eval/metrics.json")).unwrap()).unwrap();
    let f1 = metrics["report"]["macro_f1"].as_f64().unwrap();
    // same bar as the end-to-end acceptance criterion
    assert!(f1 >= 0.85, "macro-F1 {f1}");
    assert!(dir.path().join("eval/predictions.csv").is_file());

    let id = std::fs::read_to_string(&manifest)
        .unwrap()
        .lines()
        .find(|l| l.contains("\"mount\"") && l.contains("\"interaction\""))
        .map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap()["id"].as_str().unwrap().to_string())
        .unwrap();
    ok(&["occlusion-map", "--checkpoint", &d("joint/joint_best.ckpt"), "--manifest", &manifest, "--sample-id", &id, "--out-dir", &d("occ")]);
    ok(&["augment-preview", "--manifest", &manifest, "--sample-id", &id, "--out-dir", &d("aug")]);
    ok(&["embed-export", "--checkpoint", &d("pre/action.ckpt"), "--manifest", &manifest, "--out-dir", &d("emb")]);
    for f in ["occ/occlusion.json", "occ/occlusion.png", "aug/augmented.png", "aug/masks.json", "emb/embeddings.caem", "emb/pca.csv"] {
        assert!(dir.path().join(f).is_file(), "missing {f}");
    }

    // inputs untouched, seed echoed
    assert_eq!(before, tree_digest(&dir.path().join("data")));
    let run: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d("pre/run.json")).unwrap()).unwrap();
    assert_eq!(run["seed"], 2);
    assert_eq!(run["config"]["encoder"]["seed"], 2);
    assert_eq!(run["input_sha256"].as_object().unwrap().len(), 2);

    // same seed, same training artifacts
    ok(&["pretrain", "--config", &cfg("pretrain.json"), "--manifest", &manifest, "--out-dir", &d("pre2")]);
    assert_eq!(tree_digest(&dir.path().join("pre")), tree_digest(&dir.path().join("pre2")));
}
